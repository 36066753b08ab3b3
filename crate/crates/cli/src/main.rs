use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use geoscene::pipeline::{run_stages, BundleManifest, PipelineConfig, Stage, StageStatus};
use geoscene::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "geoscene", version, about = "Deterministic multi-scale scene generation")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Pipeline config JSON. Defaults to the bundle's config.json when present.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Bundle directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker cap; does not change any output.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Anchor image and the scale cascade.
    Generate,
    /// Height map and coarse mesh for the central block.
    Lift,
    /// Coarse views along the camera trajectory.
    Render,
    /// Joint multi-view lateral inpainting.
    Inpaint,
    /// Texture baking into a chart atlas.
    Bake,
    /// Metric report.
    Metrics,
    /// Spatial-reasoning QA records.
    Qa,
    /// Textured mesh export.
    Export,
    /// Every stage in order, or a single one with --stage.
    Pipeline {
        #[arg(long)]
        stage: Option<String>,
    },
}

enum Failure {
    Config(anyhow::Error),
    Stage(anyhow::Error),
}

fn load_config(c: &Common) -> anyhow::Result<PipelineConfig> {
    let path = c.config.clone().or_else(|| {
        let p = c.out.as_ref()?.join(geoscene::pipeline::CONFIG_FILE);
        p.exists().then_some(p)
    });
    let mut cfg = match path {
        Some(p) => PipelineConfig::from_file(&p).with_context(|| format!("reading {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = Some(s);
    }
    if let Some(o) = &c.out {
        cfg.out = Some(o.clone());
    }
    cfg.validate()?;
    anyhow::ensure!(cfg.out.is_some(), "no output directory (set `out` in the config or pass --out)");
    Ok(cfg)
}

fn stages_for(cmd: &Command) -> anyhow::Result<Vec<Stage>> {
    Ok(match cmd {
        Command::Generate => vec![Stage::Anchor, Stage::Cascade],
        Command::Lift => vec![Stage::Lift],
        Command::Render => vec![Stage::Render],
        Command::Inpaint => vec![Stage::Inpaint],
        Command::Bake => vec![Stage::Bake],
        Command::Metrics => vec![Stage::Metrics],
        Command::Qa => vec![Stage::Qa],
        Command::Export => vec![Stage::Export],
        Command::Pipeline { stage: None } => Stage::ALL.to_vec(),
        Command::Pipeline { stage: Some(s) } => vec![s.parse()?],
    })
}

fn report(m: &BundleManifest, ran: &[Stage]) {
    for r in m.stages.iter().filter(|r| ran.contains(&r.name)) {
        let status = match r.status {
            StageStatus::Done => "done",
            StageStatus::Failed => "FAILED",
            StageStatus::Skipped => "skipped",
            StageStatus::Pending => "pending",
        };
        match &r.hash {
            Some(h) => eprintln!("{:<8} {:<7} {:>7.2}s  {}", r.name, status, r.seconds, &h[..16]),
            None => eprintln!("{:<8} {status}", r.name),
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let common = cli.common.clone();
    let stages = stages_for(&cli.command).map_err(Failure::Config)?;
    let cfg = load_config(&common).map_err(Failure::Config)?;
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Failure::Config(e.into()))?;
    }
    let out = cfg.out.clone().expect("validated");
    match run_stages(&cfg, &stages) {
        Ok(m) => {
            report(&m, &stages);
            println!("{}", out.join(geoscene::pipeline::MANIFEST_FILE).display());
            Ok(())
        }
        Err(e @ Error::Stage { .. }) => {
            if let Ok(m) = geoscene::io::read_json::<BundleManifest>(&out.join(geoscene::pipeline::MANIFEST_FILE)) {
                report(&m, &stages);
            }
            Err(Failure::Stage(e.into()))
        }
        Err(e @ Error::Config(_)) => Err(Failure::Config(e.into())),
        Err(e) => Err(Failure::Stage(e.into())),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Stage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
