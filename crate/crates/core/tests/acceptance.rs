//! Acceptance checks. Each criterion prints one PASS/FAIL line. With
//! `ACCEPTANCE_STRICT=1` the process exits non-zero when any criterion fails;
//! otherwise failures are reported but do not fail the test run.

use geoscene::bake::{bake, classify_faces, BakeConfig, TexelStatus, Visibility};
use geoscene::camera::{circular_trajectory, Intrinsics, Trajectory};
use geoscene::cascade::{anchoring_correlation, assemble_condition, refine_once, run_cascade, CascadeOptions, ScaleLadder};
use geoscene::geom::Vec3;
use geoscene::grid::RasterGrid;
use geoscene::lift::{dequantize_height, height_to_mesh, infer_height, quantize_height, HeightMap, HeightPrompt};
use geoscene::mesh::FaceClass;
use geoscene::metrics::{
    fid, fid_gaussian, interior_gradient, lcs_len, msg, psnr, rerender_consistency, rouge_l, ssim, FeatureSet, SeamSpec,
    SSIM_WINDOW,
};
use geoscene::multiview::{cross_view_local_attention, Tokens};
use geoscene::noise::NoiseField;
use geoscene::pipeline::{run_pipeline, BundleManifest, PipelineConfig};
use geoscene::qa::{derive_qa, extract_ground_truth, verify_record, Task, DEFAULT_OBJECT_THRESHOLD};
use geoscene::render::{rasterize, CameraView};
use geoscene::sampler::registry::create_for;
use geoscene::sampler::{
    ddim_timesteps, generalized_step, sample, AnalyticDenoiser, BlockDctCodec, Condition, Denoiser, FractalRefiner,
    LatentAdapter, NoiseSchedule, Shape,
};
use geoscene::scenes::{box_scene, procedural_anchor, AnchorClass, BoxSceneSpec, QaScene};
use geoscene::tiler::{generate_unbounded_latent, plan_windows, NoiseMode, TileOptions};
use nalgebra::{DMatrix, DVector};
use std::collections::HashMap;
use std::time::Instant;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Counter-based uniform draws.
struct Draws {
    field: NoiseField,
    n: i64,
}

impl Draws {
    fn new(seed: u64) -> Self {
        Draws { field: NoiseField::new(seed), n: 0 }
    }

    fn uniform(&mut self) -> f64 {
        self.n += 1;
        self.field.uniform(0, 0, self.n, 0, 0)
    }

    fn normal(&mut self) -> f64 {
        self.n += 1;
        self.field.draw(0, 0, self.n, 0, 0)
    }

    fn normals(&mut self, k: usize) -> Vec<f64> {
        (0..k).map(|_| self.normal()).collect()
    }

    fn below(&mut self, k: usize) -> usize {
        ((self.uniform() * k as f64) as usize).min(k - 1)
    }
}

fn sched() -> NoiseSchedule {
    NoiseSchedule::linear(50, 1e-4, 2e-2).unwrap()
}

fn noise_raster(seed: u64, w: usize, h: usize, c: usize) -> RasterGrid {
    RasterGrid::image(w, h, c, Draws::new(seed).normals(w * h * c)).unwrap()
}

fn tiler_exactness() -> Check {
    let start = Instant::now();
    let r = 8;
    let be = FractalRefiner::with_radius(r);
    let s = sched();
    let steps = ddim_timesteps(50, 40).map_err(|e| e.to_string())?;
    let anchor = procedural_anchor(AnchorClass::Urban, 3, 32, 4.0, [0, 0]).map_err(|e| e.to_string())?;
    let cond = assemble_condition(&anchor, 1.0, 4, None).map_err(|e| e.to_string())?.raster;
    let noise = NoiseField::new(11);
    let mut tpl = Condition::new(noise);
    tpl.level = 1;
    tpl.target_gsd = Some(1.0);
    // two adjacent windows, sampled on their own
    let window = |x0: i64| {
        let crop = cond.crop_clamped(geoscene::grid::PixelRect::new(x0, 0, 64, 64));
        let init = crop.with_data(3, noise.fill(1, 50, [x0, 0], 64, 64, 3)).unwrap();
        sample(&be, &tpl.clone().with_raster(crop).with_origin([x0, 0]), &init, &steps, &s).unwrap()
    };
    let (a, b) = (window(0), window(32));
    let mut compared = 0;
    let mut overlap_ok = true;
    for y in 0..64 {
        for x in (32 + r)..(64 - r) {
            for c in 0..3 {
                overlap_ok &= a.get(x, y, c).to_bits() == b.get(x - 32, y, c).to_bits();
                compared += 1;
            }
        }
    }
    // sub-extent against the full 128x128 run
    let opts = CascadeOptions { tile: TileOptions::default(), crop_limit: 1024, steps: steps.clone() };
    let full = refine_once(&anchor, 1.0, 4, None, 1, &be, &noise, &s, &opts).map_err(|e| e.to_string())?;
    let region = geoscene::grid::PixelRect::new(32, 32, 64, 64);
    let sub = refine_once(&anchor, 1.0, 4, Some(region), 1, &be, &noise, &s, &opts).map_err(|e| e.to_string())?;
    let mut sub_ok = true;
    let mut sub_px = 0;
    for y in r..64 - r {
        for x in r..64 - r {
            for c in 0..3 {
                sub_ok &= sub.get(x, y, c).to_bits() == full.get(x + 32, y + 32, c).to_bits();
            }
            sub_px += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(
        overlap_ok && sub_ok && secs < 10.0,
        format!(
            "overlap interior {compared} values bit-identical: {overlap_ok}; sub-extent interior {sub_px} px bit-exact: {sub_ok}; {secs:.2} s (limit 10 s)"
        ),
    )
}

struct SeamStats {
    wins: usize,
    worst_ratio: f64,
    pooled_ratio: f64,
    /// Largest difference between the shared-noise tiling and one window covering everything.
    untiled_diff: f64,
    pairs: Vec<String>,
}

fn seam_stats(run: &dyn Fn(u64, NoiseMode, usize) -> RasterGrid) -> SeamStats {
    let seams = SeamSpec::from_plan(&plan_windows([128, 128], 64).unwrap());
    let mut st = SeamStats { wins: 0, worst_ratio: 0.0, pooled_ratio: 0.0, untiled_diff: 0.0, pairs: Vec::new() };
    let (mut sum_msg, mut sum_ig) = (0.0, 0.0);
    for seed in 0..10 {
        let shared = run(seed, NoiseMode::Shared, 64);
        let indep = run(seed, NoiseMode::Independent, 64);
        let single = run(seed, NoiseMode::Shared, 128);
        let (ms, mi) = (msg(&shared, &seams).unwrap(), msg(&indep, &seams).unwrap());
        let ig = interior_gradient(&shared, &seams).unwrap();
        if ms < mi {
            st.wins += 1;
        }
        st.worst_ratio = st.worst_ratio.max(ms / ig);
        sum_msg += ms;
        sum_ig += ig;
        st.untiled_diff = shared.data().iter().zip(single.data()).map(|(a, b)| (a - b).abs()).fold(st.untiled_diff, f64::max);
        st.pairs.push(format!("{ms:.4}/{mi:.4}"));
    }
    st.pooled_ratio = sum_msg / sum_ig;
    st
}

fn seam_ablation() -> Check {
    let s = sched();
    let steps = ddim_timesteps(50, 40).unwrap();
    let pixel = |seed: u64, mode: NoiseMode, window: usize| {
        let anchor = procedural_anchor(AnchorClass::Urban, seed, 32, 4.0, [0, 0]).unwrap();
        let tile = TileOptions { noise: mode, window, ..TileOptions::default() };
        let opts = CascadeOptions { tile, crop_limit: 1024, steps: steps.clone() };
        refine_once(&anchor, 1.0, 4, None, 1, &FractalRefiner::with_radius(8), &NoiseField::new(seed), &s, &opts).unwrap()
    };
    let codec = BlockDctCodec::new(4).unwrap();
    let latent_be = LatentAdapter::new(FractalRefiner::with_radius(8), BlockDctCodec::new(4).unwrap());
    let latent = |seed: u64, mode: NoiseMode, window: usize| {
        let anchor = procedural_anchor(AnchorClass::Urban, seed, 32, 4.0, [0, 0]).unwrap();
        let cond = assemble_condition(&anchor, 1.0, 4, None).unwrap().raster;
        let mut tpl = Condition::new(NoiseField::new(seed));
        tpl.level = 1;
        tpl.target_gsd = Some(1.0);
        let opts = TileOptions { noise: mode, window, ..TileOptions::default() };
        generate_unbounded_latent(&cond, &tpl, &codec, &latent_be, &steps, &s, &opts).unwrap()
    };
    let p = seam_stats(&pixel);
    let l = seam_stats(&latent);
    ensure(
        p.wins >= 9 && l.wins >= 9 && p.worst_ratio <= 1.05 && l.worst_ratio <= 1.05,
        format!(
            "shared < independent MSG on {}/10 (pixel) and {}/10 (latent) seeds, need 9; worst shared MSG / interior gradient {:.3} (pixel), {:.3} (latent), limit 1.05; pooled over seeds {:.3} / {:.3}; shared tiling vs one 128 px window max diff {:.1e} / {:.1e}; MSG shared/independent pixel [{}] latent [{}]",
            p.wins,
            l.wins,
            p.worst_ratio,
            l.worst_ratio,
            p.pooled_ratio,
            l.pooled_ratio,
            p.untiled_diff,
            l.untiled_diff,
            p.pairs.join(" "),
            l.pairs.join(" ")
        ),
    )
}

fn sampler_oracles() -> Check {
    let s = sched();
    let steps = ddim_timesteps(50, 40).unwrap();
    let x0 = noise_raster(500, 6, 5, 3).map(|v| 0.5 + 0.2 * v);
    let pm = AnalyticDenoiser::point_mass(x0.data().to_vec());
    let c = Condition::new(NoiseField::new(0));
    let mut worst_pm: f64 = 0.0;
    for k in 0..20 {
        let out = sample(&pm, &c, &noise_raster(1000 + k, 6, 5, 3), &steps, &s).unwrap();
        for (a, b) in out.data().iter().zip(x0.data()) {
            worst_pm = worst_pm.max((a - b).abs());
        }
    }
    // eta = 0 member of the ancestral family stepped t -> t-1 against DDIM on the same full list
    let gauss = AnalyticDenoiser::constant(0.3, 0.05);
    let init = noise_raster(7, 8, 8, 2);
    let full: Vec<usize> = (0..=50).rev().collect();
    let ddim = sample(&gauss, &c, &init, &full, &s).unwrap();
    let bound = gauss.bind(&c, Shape::of(&init)).unwrap();
    let mut x = init.clone();
    for t in (1..=50).rev() {
        let eps = x.with_data(2, bound.predict(x.data(), t, s.alpha_bar(t)).unwrap()).unwrap();
        let z = noise_raster(9000 + t as u64, 8, 8, 2);
        x = generalized_step(&x, &eps, t, t - 1, &s, 0.0, &z).unwrap();
    }
    let worst_eta: f64 = x.data().iter().zip(ddim.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let again = sample(&gauss, &c, &init, &full, &s).unwrap();
    let bit_equal = again.data().iter().zip(ddim.data()).all(|(a, b)| a.to_bits() == b.to_bits());
    ensure(
        worst_pm <= 1e-5 && worst_eta <= 1e-6 && bit_equal,
        format!("point mass max error {worst_pm:.2e} (limit 1e-5, 20 noises); sigma=0 vs DDIM {worst_eta:.2e} (limit 1e-6); repeat bit-equal: {bit_equal}"),
    )
}

fn masked_global(q: &[Tokens], k: &[Tokens], v: &[Tokens], allowed: &dyn Fn(usize, usize) -> bool) -> Vec<Tokens> {
    let n = q.len();
    let d = q[0].width as f64;
    (0..n)
        .map(|i| {
            let mut out = Vec::new();
            for r in 0..q[i].rows {
                let mut scores = Vec::new();
                let mut vals = Vec::new();
                for j in 0..n {
                    for s in 0..k[j].rows {
                        let score = if allowed(i, j) {
                            q[i].row(r).iter().zip(k[j].row(s)).map(|(a, b)| a * b).sum::<f64>() / d.sqrt()
                        } else {
                            f64::NEG_INFINITY
                        };
                        scores.push(score);
                        vals.push(v[j].row(s));
                    }
                }
                let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let w: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
                let z: f64 = w.iter().sum();
                for c in 0..v[0].width {
                    out.push(w.iter().zip(&vals).map(|(w, row)| w * row[c]).sum::<f64>() / z);
                }
            }
            Tokens::new(q[i].rows, v[0].width, out).unwrap()
        })
        .collect()
}

fn attention_oracle() -> Check {
    let mut g = Draws::new(42);
    let (rows, d, vw) = (5, 8, 3);
    let mut batch = |n: usize, w: usize| -> Vec<Tokens> { (0..n).map(|_| Tokens::new(rows, w, g.normals(rows * w)).unwrap()).collect() };
    let mut worst_band: f64 = 0.0;
    let mut worst_stoch: f64 = 0.0;
    for _ in 0..100 {
        let (q, k, v) = (batch(8, d), batch(8, d), batch(8, vw));
        let local = cross_view_local_attention(&q, &k, &v, 1).unwrap();
        let band = |i: usize, j: usize| {
            let dist = (i + 8 - j) % 8;
            dist <= 1 || dist == 7
        };
        let oracle = masked_global(&q, &k, &v, &band);
        for (a, b) in local.iter().zip(&oracle) {
            for (x, y) in a.data.iter().zip(&b.data) {
                worst_band = worst_band.max((x - y).abs());
            }
        }
        let ones: Vec<Tokens> = (0..8).map(|_| Tokens::new(rows, 1, vec![1.0; rows]).unwrap()).collect();
        for t in cross_view_local_attention(&q, &k, &ones, 1).unwrap() {
            for s in t.data {
                worst_stoch = worst_stoch.max((s - 1.0).abs());
            }
        }
    }
    let (q, k, v) = (batch(3, d), batch(3, d), batch(3, vw));
    let local = cross_view_local_attention(&q, &k, &v, 1).unwrap();
    let global = cross_view_local_attention(&q, &k, &v, 3).unwrap();
    let exact = local == global;
    let oracle = masked_global(&q, &k, &v, &|_, _| true);
    let worst3: f64 = local.iter().zip(&oracle).flat_map(|(a, b)| a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs())).fold(0.0, f64::max);
    ensure(
        worst_band <= 1e-6 && worst_stoch <= 1e-6 && exact && worst3 <= 1e-6,
        format!(
            "banded global oracle max diff {worst_band:.2e} over 100 N=8 batches (limit 1e-6); N=3 equals global attention exactly: {exact} (oracle diff {worst3:.2e}); row sums off by {worst_stoch:.2e}"
        ),
    )
}

fn bake_correctness() -> Check {
    let s = box_scene(&BoxSceneSpec::default()).unwrap();
    let views: Vec<CameraView> = s.cameras.iter().map(|c| rasterize(&s.textured, c, [0.0; 3], [0.0; 3]).unwrap()).collect();
    let cfg = BakeConfig { atlas_size: s.layout.atlas_size, texel_density: s.layout.texel_density, ..BakeConfig::default() };
    let baked = bake(&s.coarse, &views, &cfg).unwrap();
    let vis = Visibility::new(&s.coarse, &views, cfg.epsilon(), cfg.min_cosine);
    let mut mismatches = 0;
    let mut used: HashMap<usize, usize> = HashMap::new();
    for t in &baked.records {
        let p = Vec3::new(t.world[0], t.world[1], t.world[2]);
        let n = Vec3::new(t.normal[0], t.normal[1], t.normal[2]);
        let plane = &baked.layout.charts[t.chart].plane;
        let mut best: Option<(usize, f64)> = None;
        for (k, v) in views.iter().enumerate() {
            if vis.visible(k, &p, Some(plane)).is_none() {
                continue;
            }
            let cos = n.dot(&(v.camera.position() - p).normalize());
            if cos >= cfg.min_cosine && best.is_none_or(|(_, b)| cos > b) {
                best = Some((k, cos));
            }
        }
        let want = best.map(|b| b.0);
        if want != t.view || (want.is_some() != (t.status == TexelStatus::Baked)) {
            mismatches += 1;
        }
        if let Some(k) = t.view {
            *used.entry(k).or_default() += 1;
        }
    }
    let clean = rerender_consistency(&baked.mesh, &views, baked.unseen_fraction).unwrap();
    // corrupt the most used source view and compare the re-render with the clean views
    let worst_view = used.iter().max_by_key(|(k, c)| (**c, std::cmp::Reverse(**k))).map(|(k, _)| *k).unwrap_or(0);
    let mut corrupted = views.clone();
    corrupted[worst_view].rgb = corrupted[worst_view].rgb.map(|v| 1.0 - v);
    let bad = bake(&s.coarse, &corrupted, &cfg).unwrap();
    let degraded = rerender_consistency(&bad.mesh, &views, bad.unseen_fraction).unwrap();
    ensure(
        mismatches == 0 && clean.psnr >= 30.0 && clean.ssim >= 0.95 && degraded.psnr < clean.psnr && degraded.ssim < clean.ssim,
        format!(
            "{} texels, {mismatches} view-selection mismatches; re-render PSNR {:.2} dB (>= 30), SSIM {:.4} (>= 0.95); view {worst_view} corrupted: PSNR {:.2} dB, SSIM {:.4}",
            baked.records.len(),
            clean.psnr,
            clean.ssim,
            degraded.psnr,
            degraded.ssim
        ),
    )
}

fn metric_oracles() -> Check {
    let mut g = Draws::new(77);
    let mut fid_self: f64 = 0.0;
    let mut fid_diag: f64 = 0.0;
    for _ in 0..100 {
        let d = 1 + g.below(6);
        let a = FeatureSet::new(20, d, g.normals(20 * d)).unwrap();
        fid_self = fid_self.max(fid(&a, &a).unwrap().abs());
        let m1 = g.normals(d);
        let m2 = g.normals(d);
        let s1: Vec<f64> = (0..d).map(|_| 0.01 + 4.0 * g.uniform()).collect();
        let s2: Vec<f64> = (0..d).map(|_| 0.01 + 4.0 * g.uniform()).collect();
        let got = fid_gaussian(
            &DVector::from_vec(m1.clone()),
            &DMatrix::from_diagonal(&DVector::from_vec(s1.clone())),
            &DVector::from_vec(m2.clone()),
            &DMatrix::from_diagonal(&DVector::from_vec(s2.clone())),
        )
        .unwrap();
        let want: f64 = (0..d).map(|i| (m1[i] - m2[i]).powi(2) + s1[i] + s2[i] - 2.0 * (s1[i] * s2[i]).sqrt()).sum();
        fid_diag = fid_diag.max((got - want).abs());
    }
    let base: Vec<f64> = (0..8 * 8 * 3).map(|i| (i % 200) as f64).collect();
    let a = RasterGrid::image(8, 8, 3, base.clone()).unwrap();
    let b = a.map(|v| v + 1.0);
    let p = psnr(&a, &b, 255.0, None).unwrap();
    let img = RasterGrid::image(16, 16, 3, g.normals(16 * 16 * 3).iter().map(|v| 0.5 + 0.1 * v).collect()).unwrap();
    let s_self = ssim(&img, &img, 1.0, SSIM_WINDOW, None).unwrap();
    // every pair of binary sequences up to length 8
    let seqs: Vec<Vec<u8>> = (0..=8usize).flat_map(|len| (0..1u32 << len).map(move |m| (0..len).map(|i| (m >> i & 1) as u8).collect())).collect();
    let mut lcs_bad = 0;
    for x in &seqs {
        for y in &seqs {
            if lcs_len(x, y) != brute_lcs(x, y) {
                lcs_bad += 1;
            }
        }
    }
    let hand = rouge_l(&["a", "b", "c", "d", "e", "f"], &["a", "c", "d", "f"], 1.0).unwrap();
    ensure(
        fid_self <= 1e-8 && fid_diag < 1e-6 && (p - 48.1308).abs() <= 1e-3 && (s_self - 1.0).abs() <= 1e-9 && lcs_bad == 0 && hand.f == 0.8,
        format!(
            "fid(A,A) max {fid_self:.1e}; diagonal closed form max diff {fid_diag:.1e}; PSNR {p:.4} dB; ssim(a,a)-1 = {:.1e}; LCS mismatches {lcs_bad} of {} pairs; hand ROUGE-L F = {}",
            s_self - 1.0,
            seqs.len() * seqs.len(),
            hand.f
        ),
    )
}

fn brute_lcs(a: &[u8], b: &[u8]) -> usize {
    let mut best = 0;
    for mask in 0u32..(1 << a.len()) {
        let len = mask.count_ones() as usize;
        if len <= best {
            continue;
        }
        let mut it = b.iter();
        if (0..a.len()).filter(|i| mask >> i & 1 == 1).all(|i| it.any(|y| *y == a[i])) {
            best = len;
        }
    }
    best
}

fn spike_oracle() -> Result<(), String> {
    let mut h = vec![0.0; 9];
    h[4] = 10.0;
    let raster = RasterGrid::from_data(3, 3, 1, 1.0, [0.0, 3.0], h.clone()).unwrap();
    let ortho = RasterGrid::from_data(3, 3, 3, 1.0, [0.0, 3.0], vec![0.5; 27]).unwrap();
    let mesh = height_to_mesh(&HeightMap::from_raster(raster).unwrap(), &ortho, 3.0, 0.3).map_err(|e| e.to_string())?;
    for j in 0..3 {
        for i in 0..3 {
            let want = [i as f64 + 0.5, 2.5 - j as f64, h[j * 3 + i]];
            if mesh.vertices[j * 3 + i] != want {
                return Err(format!("vertex ({i},{j}) {:?} != {want:?}", mesh.vertices[j * 3 + i]));
            }
        }
    }
    if mesh.vertices.len() != 9 || mesh.faces.len() != 8 {
        return Err(format!("{} vertices, {} faces", mesh.vertices.len(), mesh.faces.len()));
    }
    // every cell touches the spike, so every cell is split along the diagonal avoiding it
    let mut want: Vec<[u32; 3]> = Vec::new();
    for (ci, cj) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
        let v = |i: usize, j: usize| (j * 3 + i) as u32;
        let corners = [v(ci, cj), v(ci + 1, cj), v(ci + 1, cj + 1), v(ci, cj + 1)];
        let k = corners.iter().position(|c| *c == 4).unwrap();
        let (c0, c1, c2, c3) = (corners[k], corners[(k + 1) % 4], corners[(k + 2) % 4], corners[(k + 3) % 4]);
        for t in [[c0, c1, c3], [c1, c2, c3]] {
            let mut t = t;
            t.sort();
            want.push(t);
        }
    }
    let mut got: Vec<[u32; 3]> = mesh.faces.iter().map(|f| {
        let mut f = *f;
        f.sort();
        f
    }).collect();
    want.sort();
    got.sort();
    if got != want {
        return Err(format!("faces {got:?} != {want:?}"));
    }
    for (f, face) in mesh.faces.iter().enumerate() {
        let p = |k: usize| Vec3::from(mesh.vertices[face[k] as usize]);
        let n = (p(1) - p(0)).cross(&(p(2) - p(0))).normalize();
        if n.z <= 0.0 {
            return Err(format!("face {f} faces down"));
        }
        let spike = face.contains(&4);
        let class = if n.z.abs() < 0.3 { FaceClass::Vertical } else { FaceClass::Horizontal };
        if mesh.face_class[f] != class || spike != (class == FaceClass::Vertical) {
            return Err(format!("face {f} classified {:?}", mesh.face_class[f]));
        }
    }
    let part = classify_faces(&mesh, 0.3);
    if part.vertical.len() != 4 || part.horizontal.len() != 4 {
        return Err("partition is not 4 + 4".into());
    }
    Ok(())
}

fn lift_mesh() -> Check {
    let spike = spike_oracle();
    let mut g = Draws::new(5);
    let mut worst_excess = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let (w, h) = (1 + g.below(16), 1 + g.below(16));
        let lo = g.uniform() * 20.0;
        let span = 0.01 + g.uniform() * 300.0;
        let data: Vec<f64> = (0..w * h).map(|_| lo + g.uniform() * span).collect();
        let r = RasterGrid::image(w, h, 1, data).unwrap();
        let q = quantize_height(&r, (lo, lo + span)).unwrap();
        let back = dequantize_height(&q, (lo, lo + span), &r).unwrap();
        for (a, b) in r.data().iter().zip(back.data()) {
            worst_excess = worst_excess.max((a - b).abs() - span / 510.0);
        }
    }
    // seam criterion on inferred 128x128 height maps
    let s = sched();
    let steps = ddim_timesteps(50, 40).unwrap();
    let backend = create_for("latent-height", geoscene::sampler::Task::Height, None).unwrap();
    let codec = BlockDctCodec::new(4).unwrap();
    let height = |seed: u64, mode: NoiseMode, window: usize| {
        let ortho = procedural_anchor(AnchorClass::Urban, seed, 128, 1.0, [0, 0]).unwrap();
        let opts = TileOptions { noise: mode, window, ..TileOptions::default() };
        infer_height(&ortho, backend.as_ref(), &codec, &HeightPrompt::default(), &NoiseField::new(seed), &steps, &s, &opts, 40.0)
            .unwrap()
            .raster
    };
    let h = seam_stats(&height);
    ensure(
        spike.is_ok() && worst_excess <= 1e-9 && h.wins >= 9 && h.worst_ratio <= 1.05,
        format!(
            "3x3 spike oracle: {}; quantization worst error minus range/510 = {worst_excess:.2e} over 1000 maps; height MSG shared < independent on {}/10, worst shared MSG / interior gradient {:.3} (limit 1.05), pooled {:.3}; shared tiling vs one 128 px window max diff {:.1e}; [{}]",
            spike.map(|_| "match".to_string()).unwrap_or_else(|e| e),
            h.wins,
            h.worst_ratio,
            h.pooled_ratio,
            h.untiled_diff,
            h.pairs.join(" ")
        ),
    )
}

fn qa_closed_loop() -> Check {
    let cams = circular_trajectory(
        &Trajectory { center: [0.0, 0.0, 0.0], radius: 90.0, views: 8, elevation_deg: 30.0 },
        Intrinsics::from_fov(128, 60.0),
    )
    .unwrap();
    let mut records = 0;
    let mut mismatches = 0;
    let mut bad_images = 0;
    for scene in QaScene::ALL {
        let h = scene.heights().unwrap();
        let gt = extract_ground_truth(&h, &cams, DEFAULT_OBJECT_THRESHOLD).unwrap();
        let fresh = extract_ground_truth(&h, &cams, DEFAULT_OBJECT_THRESHOLD).unwrap();
        for v in 0..cams.len() {
            let recs = derive_qa(&gt, &format!("{}/view_{v:02}.png", scene.name()), v, 2024).unwrap();
            let mut tasks: Vec<Task> = recs.iter().map(|r| r.task).collect();
            tasks.sort();
            tasks.dedup();
            if recs.len() != 5 || tasks.len() != Task::ALL.len() {
                bad_images += 1;
            }
            for r in &recs {
                records += 1;
                if !verify_record(r, &fresh) {
                    mismatches += 1;
                }
            }
        }
    }
    ensure(
        mismatches == 0 && bad_images == 0,
        format!("5 scenes x 8 views, {records} records, {mismatches} answer mismatches, {bad_images} images without exactly one record per task"),
    )
}

fn stage_hashes(m: &BundleManifest) -> Vec<(String, Option<String>)> {
    m.stages.iter().map(|s| (s.name.to_string(), s.hash.clone())).collect()
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = |name: &str| PipelineConfig { seed: Some(7), out: Some(dir.path().join(name)), ..PipelineConfig::default() };
    let pool = |n: usize| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
    let start = Instant::now();
    let first = run_pipeline(&cfg("a")).map_err(|e| format!("{e:#}"))?;
    let secs = start.elapsed().as_secs_f64();
    let second = run_pipeline(&cfg("b")).map_err(|e| e.to_string())?;
    let one = pool(1).install(|| run_pipeline(&cfg("t1"))).map_err(|e| e.to_string())?;
    let eight = pool(8).install(|| run_pipeline(&cfg("t8"))).map_err(|e| e.to_string())?;
    let bytes = |n: &str| std::fs::read(dir.path().join(n).join("manifest.json")).unwrap();
    let h = stage_hashes(&first);
    let all_done = h.iter().all(|(_, x)| x.is_some());
    let same = [&second, &one, &eight].iter().all(|m| stage_hashes(m) == h) && ["b", "t1", "t8"].iter().all(|n| bytes(n) == bytes("a"));
    ensure(
        all_done && same && secs < 600.0,
        format!("{} stages hashed, identical across 2 runs and threads 1/8: {same}; one run took {secs:.1} s (limit 600 s)", h.len()),
    )
}

fn cascade_anchoring() -> Check {
    let s = sched();
    let ladder = ScaleLadder::default();
    let opts = CascadeOptions { tile: TileOptions::default(), crop_limit: 256, steps: ddim_timesteps(50, 40).unwrap() };
    let be = FractalRefiner::default();
    let mut worst = f64::INFINITY;
    let mut per_seed = Vec::new();
    for seed in 0..10 {
        let class = if seed % 2 == 0 { AnchorClass::Urban } else { AnchorClass::Natural };
        let anchor = procedural_anchor(class, seed, 64, ladder.levels[0], [0, 0]).unwrap();
        let levels = run_cascade(&anchor, &ladder, &be, seed, &s, &opts).unwrap();
        let rs: Vec<f64> = levels.windows(2).map(|w| anchoring_correlation(&w[0], &w[1], ladder.factor).unwrap()).collect();
        let m = rs.iter().copied().fold(f64::INFINITY, f64::min);
        worst = worst.min(m);
        per_seed.push(format!("{m:.3}"));
    }
    ensure(worst >= 0.9, format!("min Pearson r over 3 refinements x 10 seeds = {worst:.4} (limit 0.9); per-seed min [{}]", per_seed.join(" ")))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("tiler exactness", tiler_exactness),
        ("seam ablation", seam_ablation),
        ("sampler oracles", sampler_oracles),
        ("attention oracle", attention_oracle),
        ("bake correctness", bake_correctness),
        ("metric oracles", metric_oracles),
        ("lift and mesh", lift_mesh),
        ("qa closed loop", qa_closed_loop),
        ("end-to-end determinism", determinism),
        ("cascade anchoring", cascade_anchoring),
    ];
    // optional criterion numbers on the command line restrict the run
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.contains(&(i + 1)) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS {:>2} {name} ({secs:.1} s): {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({secs:.1} s): {d}", i + 1)
            }
        }
    }
    println!("{} of {ran} criteria passed", ran - failed);
    if failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
