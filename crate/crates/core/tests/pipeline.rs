use geoscene::pipeline::{run_pipeline, run_stages, AnchorSpec, BundleManifest, PipelineConfig, Stage, StageStatus};
use geoscene::cascade::ScaleLadder;
use geoscene::scenes::AnchorClass;
use geoscene::Error;
use std::path::Path;

fn small(out: &Path) -> PipelineConfig {
    let mut c = PipelineConfig {
        seed: Some(11),
        anchor: AnchorSpec::Procedural { class: AnchorClass::Urban, size: 64 },
        ladder: ScaleLadder { levels: vec![4.0, 1.0], factor: 4, patch: 64 },
        out: Some(out.to_path_buf()),
        ..PipelineConfig::default()
    };
    c.sampling.steps = 8;
    c.sampling.inpaint_steps = 5;
    c.lift.block = 64;
    c.trajectory.image_size = 96;
    c.bake.atlas_size = 256;
    c
}

fn hashes(m: &BundleManifest) -> Vec<(Stage, Option<String>)> {
    m.stages.iter().map(|r| (r.name, r.hash.clone())).collect()
}

#[test]
fn repeated_runs_and_thread_counts_agree() {
    let d = tempfile::tempdir().unwrap();
    let a = run_pipeline(&small(&d.path().join("a"))).unwrap();
    assert!(a.stages.iter().all(|r| r.status == StageStatus::Done));
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let b = pool.install(|| run_pipeline(&small(&d.path().join("b")))).unwrap();
    assert_eq!(hashes(&a), hashes(&b));
    let read = |p: &str| std::fs::read(d.path().join(p).join("manifest.json")).unwrap();
    assert_eq!(read("a"), read("b"));
}

#[test]
fn single_stage_rerun_matches_full_run() {
    let d = tempfile::tempdir().unwrap();
    let cfg = small(d.path());
    let full = run_pipeline(&cfg).unwrap();
    for s in [Stage::Inpaint, Stage::Bake, Stage::Export] {
        std::fs::remove_dir_all(d.path().join(s.name())).unwrap();
        let m = run_stages(&cfg, &[s]).unwrap();
        assert_eq!(m.stage(s).hash, full.stage(s).hash, "{s}");
        assert_eq!(m.stage(s).files, full.stage(s).files, "{s}");
    }
}

#[test]
fn bake_off_ends_the_bundle_at_the_inpainted_views() {
    let d = tempfile::tempdir().unwrap();
    let mut cfg = small(d.path());
    cfg.stages.insert(Stage::Bake, false);
    let m = run_pipeline(&cfg).unwrap();
    for s in [Stage::Anchor, Stage::Cascade, Stage::Lift, Stage::Render, Stage::Inpaint] {
        assert_eq!(m.stage(s).status, StageStatus::Done, "{s}");
    }
    for s in [Stage::Bake, Stage::Metrics, Stage::Qa, Stage::Export] {
        assert_eq!(m.stage(s).status, StageStatus::Skipped, "{s}");
        assert!(!d.path().join(s.name()).exists());
    }
    assert!(d.path().join("inpaint/view_00_rgb.png").exists());
}

#[test]
fn missing_upstream_records_a_failure_manifest() {
    let d = tempfile::tempdir().unwrap();
    let cfg = small(d.path());
    let err = run_stages(&cfg, &[Stage::Render, Stage::Inpaint]).unwrap_err();
    assert!(matches!(err, Error::Stage { ref stage, .. } if stage == "render"), "{err}");
    let m: BundleManifest = geoscene::io::read_json(&d.path().join("manifest.json")).unwrap();
    assert_eq!(m.stage(Stage::Render).status, StageStatus::Failed);
    assert!(m.stage(Stage::Render).error.is_some());
    assert_eq!(m.stage(Stage::Inpaint).status, StageStatus::Skipped);
}

#[test]
fn config_errors() {
    let d = tempfile::tempdir().unwrap();
    let mut cfg = small(d.path());
    cfg.seed = None;
    assert!(matches!(run_pipeline(&cfg), Err(Error::Config(_))));
    let mut cfg = small(d.path());
    cfg.backends.refine = "no-such-model".into();
    assert!(matches!(run_pipeline(&cfg), Err(Error::Config(_))));
    let mut cfg = small(d.path());
    cfg.backends.refine = "latent-height".into();
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    assert!(serde_json::from_str::<PipelineConfig>(r#"{"seed": 1, "stages": {"nope": false}}"#).is_err());
}

#[test]
fn config_json_defaults() {
    let c: PipelineConfig = serde_json::from_str(r#"{"seed": 5}"#).unwrap();
    assert_eq!(c.ladder.levels, vec![64.0, 16.0, 4.0, 1.0]);
    assert_eq!(c.backends.refine, "fractal-refiner");
    assert!(c.enabled(Stage::Qa));
    let back: PipelineConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
    assert_eq!(back, c);
}
