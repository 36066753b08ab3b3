//! Evaluation metrics: FID, mean seam gradient, PSNR, SSIM, answer accuracy,
//! ROUGE-L and re-render consistency.

use crate::bake::{bake, BakeConfig, BakeResult};
use crate::error::{Error, Result};
use crate::grid::RasterGrid;
use crate::mesh::TexturedMesh;
use crate::render::{rasterize, CameraView};
use crate::tiler::WindowPlan;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Eigenvalues below `-PSD_TOL * max(1, largest)` are an error; smaller
/// negatives are treated as zero.
pub const PSD_TOL: f64 = 1e-6;

/// Feature vectors with their mean and sample covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub n: usize,
    pub d: usize,
    pub rows: Vec<f64>,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl FeatureSet {
    pub fn new(n: usize, d: usize, rows: Vec<f64>) -> Result<Self> {
        if n < 2 || d == 0 {
            return Err(Error::Contract(format!("feature set needs n >= 2 and d >= 1, got n={n}, d={d}")));
        }
        if rows.len() != n * d {
            return Err(Error::Contract(format!("feature data length {} != {n}x{d}", rows.len())));
        }
        let x = DMatrix::from_row_slice(n, d, &rows);
        let mean = DVector::from_iterator(d, (0..d).map(|j| x.column(j).sum() / n as f64));
        let mut centered = x.clone();
        for j in 0..d {
            centered.column_mut(j).add_scalar_mut(-mean[j]);
        }
        let mut cov = centered.transpose() * &centered / (n - 1) as f64;
        cov = (&cov + cov.transpose()) * 0.5;
        Ok(FeatureSet { n, d, rows, mean, cov })
    }
}

fn psd_eigen(m: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let mut e = SymmetricEigen::new(m.clone());
    let top = e.eigenvalues.iter().copied().fold(0.0f64, f64::max).max(1.0);
    for v in e.eigenvalues.iter_mut() {
        if *v < -PSD_TOL * top {
            return Err(Error::NotPsd(*v));
        }
        *v = v.max(0.0);
    }
    Ok(e)
}

fn sqrt_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let e = psd_eigen(m)?;
    let s = DMatrix::from_diagonal(&e.eigenvalues.map(f64::sqrt));
    Ok(&e.eigenvectors * s * e.eigenvectors.transpose())
}

/// Fréchet distance between two Gaussians. The cross term uses
/// `Tr sqrt(S_r^{1/2} S_g S_r^{1/2})`, which is symmetric and PSD.
pub fn fid_gaussian(mu_r: &DVector<f64>, cov_r: &DMatrix<f64>, mu_g: &DVector<f64>, cov_g: &DMatrix<f64>) -> Result<f64> {
    let d = mu_r.len();
    if mu_g.len() != d || cov_r.shape() != (d, d) || cov_g.shape() != (d, d) {
        return Err(Error::Contract("feature widths differ".into()));
    }
    let root_r = sqrt_psd(cov_r)?;
    psd_eigen(cov_g)?;
    let mut m = &root_r * cov_g * &root_r;
    m = (&m + m.transpose()) * 0.5;
    let cross: f64 = psd_eigen(&m)?.eigenvalues.iter().map(|v| v.sqrt()).sum();
    let diff = mu_r - mu_g;
    Ok(diff.dot(&diff) + cov_r.trace() + cov_g.trace() - 2.0 * cross)
}

pub fn fid(r: &FeatureSet, g: &FeatureSet) -> Result<f64> {
    if r.d != g.d {
        return Err(Error::Contract(format!("feature widths differ: {} vs {}", r.d, g.d)));
    }
    fid_gaussian(&r.mean, &r.cov, &g.mean, &g.cov)
}

/// Seam positions: a column `c` is the boundary between pixels `c - 1` and
/// `c`; likewise for rows.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SeamSpec {
    pub columns: Vec<i64>,
    pub rows: Vec<i64>,
}

impl SeamSpec {
    pub fn from_plan(plan: &WindowPlan) -> Self {
        SeamSpec { columns: plan.seam_columns(), rows: plan.seam_rows() }
    }

    pub fn validate(&self, r: &RasterGrid) -> Result<()> {
        if self.columns.is_empty() && self.rows.is_empty() {
            return Err(Error::UndefinedMetric("no seams to measure".into()));
        }
        let bad_c = self.columns.iter().any(|c| *c < 1 || *c >= r.width() as i64);
        let bad_r = self.rows.iter().any(|c| *c < 1 || *c >= r.height() as i64);
        if bad_c || bad_r {
            return Err(Error::Contract("seam outside the raster".into()));
        }
        Ok(())
    }
}

fn col_diff(r: &RasterGrid, x: usize, y: usize) -> f64 {
    let c = r.channels();
    (0..c).map(|k| (r.get(x, y, k) - r.get(x - 1, y, k)).abs()).sum::<f64>() / c as f64
}

fn row_diff(r: &RasterGrid, x: usize, y: usize) -> f64 {
    let c = r.channels();
    (0..c).map(|k| (r.get(x, y, k) - r.get(x, y - 1, k)).abs()).sum::<f64>() / c as f64
}

/// Mean seam gradient: mean absolute across-seam difference over all seam
/// pixels (channel-averaged).
pub fn msg(r: &RasterGrid, seams: &SeamSpec) -> Result<f64> {
    seams.validate(r)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for &c in &seams.columns {
        for y in 0..r.height() {
            sum += col_diff(r, c as usize, y);
            n += 1;
        }
    }
    for &row in &seams.rows {
        for x in 0..r.width() {
            sum += row_diff(r, x, row as usize);
            n += 1;
        }
    }
    Ok(sum / n as f64)
}

/// Mean absolute neighbor difference over all pairs that do not straddle a seam.
pub fn interior_gradient(r: &RasterGrid, seams: &SeamSpec) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for y in 0..r.height() {
        for x in 1..r.width() {
            if !seams.columns.contains(&(x as i64)) {
                sum += col_diff(r, x, y);
                n += 1;
            }
        }
    }
    for y in 1..r.height() {
        if seams.rows.contains(&(y as i64)) {
            continue;
        }
        for x in 0..r.width() {
            sum += row_diff(r, x, y);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::UndefinedMetric("no interior pixel pairs".into()));
    }
    Ok(sum / n as f64)
}

fn check_pair(a: &RasterGrid, b: &RasterGrid, mask: Option<&RasterGrid>) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() || a.channels() != b.channels() {
        return Err(Error::Contract("compared rasters differ in shape".into()));
    }
    if let Some(m) = mask {
        if m.width() != a.width() || m.height() != a.height() || m.channels() != 1 {
            return Err(Error::Contract("mask must be single channel and match the images".into()));
        }
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB over the masked pixels (all pixels
/// without a mask). Identical inputs give `+inf`.
pub fn psnr(a: &RasterGrid, b: &RasterGrid, max_i: f64, mask: Option<&RasterGrid>) -> Result<f64> {
    check_pair(a, b, mask)?;
    let c = a.channels();
    let mut se = 0.0;
    let mut n = 0usize;
    for p in 0..a.pixel_count() {
        if mask.is_some_and(|m| m.data()[p] <= 0.5) {
            continue;
        }
        for k in 0..c {
            let d = a.data()[p * c + k] - b.data()[p * c + k];
            se += d * d;
        }
        n += c;
    }
    if n == 0 {
        return Err(Error::UndefinedMetric("empty pixel set".into()));
    }
    let mse = se / n as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { 10.0 * (max_i * max_i / mse).log10() })
}

pub const SSIM_WINDOW: usize = 8;

/// Summed-area table with one extra leading row and column.
fn integral(w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> Vec<f64> {
    let mut s = vec![0.0; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += f(x, y);
            s[(y + 1) * (w + 1) + x + 1] = s[y * (w + 1) + x + 1] + row;
        }
    }
    s
}

fn box_sum(s: &[f64], w: usize, x: usize, y: usize, k: usize) -> f64 {
    let w1 = w + 1;
    s[(y + k) * w1 + x + k] - s[y * w1 + x + k] - s[(y + k) * w1 + x] + s[y * w1 + x]
}

/// Mean SSIM over all `window x window` windows (stride 1, uniform weights),
/// averaged over channels. With a mask only windows whose center pixel
/// `(x + window/2, y + window/2)` is masked count.
pub fn ssim(a: &RasterGrid, b: &RasterGrid, max_i: f64, window: usize, mask: Option<&RasterGrid>) -> Result<f64> {
    check_pair(a, b, mask)?;
    let (w, h) = (a.width(), a.height());
    if window == 0 || w < window || h < window {
        return Err(Error::Contract(format!("raster {w}x{h} smaller than the {window}x{window} window")));
    }
    let c1 = (0.01 * max_i).powi(2);
    let c2 = (0.03 * max_i).powi(2);
    let n = (window * window) as f64;
    let half = window / 2;
    let positions: Vec<(usize, usize)> = (0..=h - window)
        .flat_map(|y| (0..=w - window).map(move |x| (x, y)))
        .filter(|(x, y)| mask.is_none_or(|m| m.get(x + half, y + half, 0) > 0.5))
        .collect();
    if positions.is_empty() {
        return Err(Error::UndefinedMetric("no SSIM window in the mask".into()));
    }
    let per_channel: Vec<f64> = (0..a.channels())
        .into_par_iter()
        .map(|k| {
            let sa = integral(w, h, |x, y| a.get(x, y, k));
            let sb = integral(w, h, |x, y| b.get(x, y, k));
            let saa = integral(w, h, |x, y| a.get(x, y, k).powi(2));
            let sbb = integral(w, h, |x, y| b.get(x, y, k).powi(2));
            let sab = integral(w, h, |x, y| a.get(x, y, k) * b.get(x, y, k));
            let total: f64 = positions
                .iter()
                .map(|&(x, y)| {
                    let ma = box_sum(&sa, w, x, y, window) / n;
                    let mb = box_sum(&sb, w, x, y, window) / n;
                    let va = box_sum(&saa, w, x, y, window) / n - ma * ma;
                    let vb = box_sum(&sbb, w, x, y, window) / n - mb * mb;
                    let cov = box_sum(&sab, w, x, y, window) / n - ma * mb;
                    ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
                })
                .sum();
            total / positions.len() as f64
        })
        .collect();
    Ok(per_channel.iter().sum::<f64>() / per_channel.len() as f64)
}

/// Case- and whitespace-folded answer; numbers are canonicalized.
pub fn normalize_answer(s: &str) -> String {
    let folded = s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    match folded.parse::<f64>() {
        Ok(v) if v.is_finite() => format!("{v}"),
        _ => folded,
    }
}

pub fn accuracy(predictions: &[String], labels: &[String]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::Contract(format!("{} predictions for {} labels", predictions.len(), labels.len())));
    }
    if labels.is_empty() {
        return Err(Error::UndefinedMetric("no answers".into()));
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| normalize_answer(p) == normalize_answer(l)).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Lowercased tokens split on anything that is not alphanumeric.
pub fn tokenize(s: &str) -> Vec<String> {
    s.to_lowercase().split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_owned).collect()
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeL {
    pub recall: f64,
    pub precision: f64,
    pub f: f64,
}

pub fn rouge_l<T: PartialEq>(reference: &[T], candidate: &[T], beta: f64) -> Result<RougeL> {
    if reference.is_empty() || candidate.is_empty() {
        return Err(Error::UndefinedMetric("ROUGE-L needs non-empty token lists".into()));
    }
    let l = lcs_len(reference, candidate) as f64;
    let recall = l / reference.len() as f64;
    let precision = l / candidate.len() as f64;
    let b2 = beta * beta;
    let f = if recall == 0.0 && precision == 0.0 { 0.0 } else { (1.0 + b2) * recall * precision / (recall + b2 * precision) };
    Ok(RougeL { recall, precision, f })
}

pub const DESCRIPTOR_DIM: usize = 64;

/// Hand-crafted 64-D image descriptor: 16-bin histograms of the first three
/// channels, then 8 gradient-orientation and 8 gradient-magnitude bins.
/// Only meaningful for comparing runs of this pipeline with each other.
pub fn descriptor(img: &RasterGrid) -> Vec<f64> {
    let mut d = vec![0.0; DESCRIPTOR_DIM];
    let (w, h) = (img.width(), img.height());
    let c = img.channels();
    let n = (w * h) as f64;
    for y in 0..h {
        for x in 0..w {
            for k in 0..3 {
                let v = img.get(x, y, k.min(c - 1)).clamp(0.0, 1.0);
                d[k * 16 + ((v * 16.0) as usize).min(15)] += 1.0 / n;
            }
        }
    }
    let lum = img.channel_mean();
    let mut grads = 0usize;
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let gx = 0.5 * (lum.get(x + 1, y, 0) - lum.get(x - 1, y, 0));
            let gy = 0.5 * (lum.get(x, y + 1, 0) - lum.get(x, y - 1, 0));
            let m = (gx * gx + gy * gy).sqrt();
            let ang = gy.atan2(gx).rem_euclid(std::f64::consts::PI);
            d[48 + ((ang / std::f64::consts::PI * 8.0) as usize).min(7)] += m;
            d[56 + ((m * 32.0) as usize).min(7)] += 1.0;
            grads += 1;
        }
    }
    if grads > 0 {
        let total: f64 = d[48..56].iter().sum();
        if total > 0.0 {
            d[48..56].iter_mut().for_each(|v| *v /= total);
        }
        d[56..64].iter_mut().for_each(|v| *v /= grads as f64);
    }
    d
}

/// Descriptors of all non-overlapping `patch x patch` tiles.
pub fn patch_features(img: &RasterGrid, patch: usize) -> Result<FeatureSet> {
    let (nx, ny) = (img.width() / patch.max(1), img.height() / patch.max(1));
    let mut rows = Vec::with_capacity(nx * ny * DESCRIPTOR_DIM);
    for j in 0..ny {
        for i in 0..nx {
            let tile = img.crop_clamped(crate::grid::PixelRect::new((i * patch) as i64, (j * patch) as i64, patch, patch));
            rows.extend(descriptor(&tile));
        }
    }
    FeatureSet::new(nx * ny, DESCRIPTOR_DIM, rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ConsistencyReport {
    pub psnr: f64,
    pub ssim: f64,
    pub per_view_psnr: Vec<f64>,
    pub per_view_ssim: Vec<f64>,
    pub unseen_fraction: f64,
    /// How the compared pixel set was chosen.
    pub pixel_set: String,
}

/// Bakes `views` onto `mesh`, re-renders from the same poses and compares
/// with the views over their lateral masks (mean over views).
pub fn reprojection_consistency(mesh: &TexturedMesh, views: &[CameraView], cfg: &BakeConfig) -> Result<(ConsistencyReport, BakeResult)> {
    if views.is_empty() {
        return Err(Error::UndefinedMetric("no views".into()));
    }
    let baked = bake(mesh, views, cfg)?;
    let report = rerender_consistency(&baked.mesh, views, baked.unseen_fraction)?;
    Ok((report, baked))
}

/// Re-render half of [`reprojection_consistency`] for an already baked mesh.
/// Views without lateral pixels are reported as `NaN` and left out of the
/// means.
pub fn rerender_consistency(baked: &TexturedMesh, views: &[CameraView], unseen_fraction: f64) -> Result<ConsistencyReport> {
    let pairs: Vec<(f64, f64)> = views
        .par_iter()
        .map(|v| {
            if !v.lateral_mask.data().iter().any(|m| *m > 0.5) {
                return Ok((f64::NAN, f64::NAN));
            }
            let re = rasterize(baked, &v.camera, [0.0; 3], [0.0; 3])?;
            Ok((psnr(&re.rgb, &v.rgb, 1.0, Some(&v.lateral_mask))?, ssim(&re.rgb, &v.rgb, 1.0, SSIM_WINDOW, Some(&v.lateral_mask))?))
        })
        .collect::<Result<_>>()?;
    let used: Vec<&(f64, f64)> = pairs.iter().filter(|p| !p.0.is_nan()).collect();
    if used.is_empty() {
        return Err(Error::UndefinedMetric("no view has lateral pixels".into()));
    }
    let n = used.len() as f64;
    Ok(ConsistencyReport {
        psnr: used.iter().map(|p| p.0).sum::<f64>() / n,
        ssim: used.iter().map(|p| p.1).sum::<f64>() / n,
        per_view_psnr: pairs.iter().map(|p| p.0).collect(),
        per_view_ssim: pairs.iter().map(|p| p.1).collect(),
        unseen_fraction,
        pixel_set: "lateral mask of each source view".into(),
    })
}

/// Agreement of adjacent views `(i, i + 1 mod N)`: every lateral pixel of
/// view `i` is unprojected with its depth, projected into view `i + 1` and,
/// when it lands on a lateral pixel there at matching depth (within `eps`),
/// compared with the bilinear color of image `i + 1`. Returns one PSNR per
/// pair; pairs without overlap give `NaN`.
pub fn adjacent_view_psnr(views: &[CameraView], images: &[RasterGrid], eps: f64) -> Result<Vec<f64>> {
    if views.len() != images.len() {
        return Err(Error::Contract("one image per view required".into()));
    }
    let n = views.len();
    if n < 2 {
        return Ok(Vec::new());
    }
    (0..n)
        .into_par_iter()
        .map(|i| {
            let (a, b) = (&views[i], &views[(i + 1) % n]);
            let (ia, ib) = (&images[i], &images[(i + 1) % n]);
            let (w, h) = (a.rgb.width(), a.rgb.height());
            let (bw, bh) = (b.rgb.width() as f64, b.rgb.height() as f64);
            let mut se = 0.0;
            let mut cnt = 0usize;
            let mut px = vec![0.0; ia.channels()];
            for y in 0..h {
                for x in 0..w {
                    let d = a.depth.get(x, y, 0);
                    if a.lateral_mask.get(x, y, 0) < 0.5 || !d.is_finite() {
                        continue;
                    }
                    let p = crate::multiview::unproject(&a.camera, x as f64, y as f64, d);
                    let crate::camera::Projection::Front { x: u, y: v, depth } = crate::camera::project_point(&p, &b.camera)
                    else {
                        continue;
                    };
                    if !(u >= 0.0 && v >= 0.0 && u <= bw - 1.0 && v <= bh - 1.0) {
                        continue;
                    }
                    let (nu, nv) = (u.round() as usize, v.round() as usize);
                    if b.lateral_mask.get(nu, nv, 0) < 0.5 || (b.depth.get(nu, nv, 0) - depth).abs() > eps {
                        continue;
                    }
                    ib.sample_clamped(u, v, &mut px);
                    for (k, q) in px.iter().enumerate() {
                        let e = ia.get(x, y, k) - q;
                        se += e * e;
                    }
                    cnt += px.len();
                }
            }
            Ok(if cnt == 0 {
                f64::NAN
            } else if se == 0.0 {
                f64::INFINITY
            } else {
                10.0 * (1.0 / (se / cnt as f64)).log10()
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(w: usize, h: usize, c: usize, f: impl Fn(usize) -> f64) -> RasterGrid {
        RasterGrid::image(w, h, c, (0..w * h * c).map(f).collect()).unwrap()
    }

    #[test]
    fn fid_closed_forms() {
        let v = |x: &[f64]| DVector::from_row_slice(x);
        let one = DMatrix::from_element(1, 1, 1.0);
        assert!((fid_gaussian(&v(&[0.0]), &one, &v(&[1.0]), &one).unwrap() - 1.0).abs() < 1e-12);
        let a = DMatrix::from_diagonal(&v(&[1.0, 4.0]));
        let b = DMatrix::from_diagonal(&v(&[4.0, 1.0]));
        assert!((fid_gaussian(&v(&[0.0, 0.0]), &a, &v(&[0.0, 0.0]), &b).unwrap() - 2.0).abs() < 1e-12);
        let neg = DMatrix::from_diagonal(&v(&[1.0, -1.0]));
        assert!(matches!(fid_gaussian(&v(&[0.0, 0.0]), &neg, &v(&[0.0, 0.0]), &a), Err(Error::NotPsd(_))));
        let s = FeatureSet::new(3, 2, vec![0.0, 1.0, 2.0, 0.5, 1.0, 3.0]).unwrap();
        assert!(fid(&s, &s).unwrap().abs() < 1e-8);
        assert!(FeatureSet::new(1, 2, vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn msg_examples() {
        let seams = SeamSpec { columns: vec![2], rows: vec![] };
        let c = img(4, 3, 1, |_| 0.3);
        assert_eq!(msg(&c, &seams).unwrap(), 0.0);
        let step = img(4, 3, 1, |i| if i % 4 >= 2 { 1.0 } else { 0.0 });
        assert_eq!(msg(&step, &seams).unwrap(), 1.0);
        assert!(matches!(msg(&c, &SeamSpec::default()), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn psnr_examples() {
        let a = img(4, 4, 1, |i| i as f64);
        assert_eq!(psnr(&a, &a, 255.0, None).unwrap(), f64::INFINITY);
        let b = a.map(|v| v + 1.0);
        assert!((psnr(&a, &b, 255.0, None).unwrap() - 48.130803608679106).abs() < 1e-9);
        let c = a.map(|v| v + 0.1);
        assert!((psnr(&a, &c, 1.0, None).unwrap() - 20.0).abs() < 1e-9);
        let empty = img(4, 4, 1, |_| 0.0);
        assert!(psnr(&a, &b, 1.0, Some(&empty)).is_err());
    }

    #[test]
    fn ssim_examples() {
        let a = img(10, 9, 3, |i| ((i * 37) % 11) as f64 / 10.0);
        assert!((ssim(&a, &a, 1.0, 8, None).unwrap() - 1.0).abs() < 1e-9);
        let (ca, cb) = (0.4, 0.5);
        let s = ssim(&img(8, 8, 1, |_| ca), &img(8, 8, 1, |_| cb), 1.0, 8, None).unwrap();
        let c1 = 1e-4;
        let want = (2.0 * ca * cb + c1) / (ca * ca + cb * cb + c1);
        assert!((s - want).abs() < 1e-12);
        let anti = a.map(|v| 1.0 - v);
        assert!(ssim(&a, &anti, 1.0, 8, None).unwrap() < 0.0);
        assert!(ssim(&img(4, 4, 1, |_| 0.0), &img(4, 4, 1, |_| 0.0), 1.0, 8, None).is_err());
    }

    #[test]
    fn accuracy_and_rouge() {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        assert_eq!(accuracy(&s(&["a", "b", "c", "d"]), &s(&["a", "b", "c", "x"])).unwrap(), 0.75);
        assert_eq!(accuracy(&s(&["Region A "]), &s(&["region a"])).unwrap(), 1.0);
        assert_eq!(accuracy(&s(&["3.0"]), &s(&["3"])).unwrap(), 1.0);
        let r = rouge_l(&tokenize("the cat sat on the mat"), &tokenize("the cat on mat"), 1.0).unwrap();
        assert_eq!(r.f, 0.8);
        assert!((r.recall - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.precision, 1.0);
        let z = rouge_l(&tokenize("a b"), &tokenize("c d"), 1.0).unwrap();
        assert_eq!((z.recall, z.precision, z.f), (0.0, 0.0, 0.0));
    }

    #[test]
    fn descriptor_is_normalized() {
        let a = img(16, 16, 3, |i| ((i * 13) % 7) as f64 / 7.0);
        let d = descriptor(&a);
        assert_eq!(d.len(), DESCRIPTOR_DIM);
        for k in 0..3 {
            assert!((d[k * 16..k * 16 + 16].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
