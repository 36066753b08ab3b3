use super::backend::{Condition, Denoiser, Shape};
use super::schedule::{validate_step_list, NoiseSchedule};
use crate::error::{Error, Result};
use crate::grid::RasterGrid;
use crate::noise::{stream, NoiseField};

fn check_shapes(a: &RasterGrid, b: &RasterGrid, what: &str) -> Result<()> {
    a.ensure_same_shape(b, what)
}

/// Closed-form marginal `x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps`.
pub fn forward_diffuse(x0: &RasterGrid, t: usize, eps: &RasterGrid, sched: &NoiseSchedule) -> Result<RasterGrid> {
    sched.check_t(t)?;
    check_shapes(x0, eps, "forward_diffuse")?;
    let a = sched.alpha_bar(t);
    let (sa, sn) = (a.sqrt(), (1.0 - a).sqrt());
    let data = x0.data().iter().zip(eps.data()).map(|(x, e)| sa * x + sn * e).collect();
    x0.with_data(x0.channels(), data)
}

/// Ancestral DDPM step `t -> t-1`:
/// `mu = (x_t - beta_t / sqrt(1 - abar_t) eps) / sqrt(1 - beta_t)`, plus
/// `sigma_t * noise` when `t > 1`.
pub fn ddpm_step(
    x_t: &RasterGrid,
    eps_pred: &RasterGrid,
    t: usize,
    sched: &NoiseSchedule,
    noise: &RasterGrid,
) -> Result<RasterGrid> {
    sched.check_t(t)?;
    check_shapes(x_t, eps_pred, "ddpm_step")?;
    check_shapes(x_t, noise, "ddpm_step noise")?;
    let data = ddpm_update(x_t.data(), eps_pred.data(), t, sched, noise.data());
    x_t.with_data(x_t.channels(), data)
}

fn ddpm_update(x: &[f64], eps: &[f64], t: usize, sched: &NoiseSchedule, noise: &[f64]) -> Vec<f64> {
    let beta = sched.beta(t);
    let coef = beta / (1.0 - sched.alpha_bar(t)).sqrt();
    let inv = 1.0 / (1.0 - beta).sqrt();
    let sigma = if t > 1 { sched.sigma(t) } else { 0.0 };
    x.iter()
        .zip(eps)
        .zip(noise)
        .map(|((x, e), z)| {
            let mu = (x - coef * e) * inv;
            if t > 1 {
                mu + sigma * z
            } else {
                mu
            }
        })
        .collect()
}

/// Deterministic DDIM step `t -> t_prev` (`eta = 0`).
pub fn ddim_step(
    x_t: &RasterGrid,
    eps_pred: &RasterGrid,
    t: usize,
    t_prev: usize,
    sched: &NoiseSchedule,
) -> Result<RasterGrid> {
    check_shapes(x_t, eps_pred, "ddim_step")?;
    if t_prev == t {
        return Ok(x_t.clone());
    }
    let data = ddim_update(x_t.data(), eps_pred.data(), t, t_prev, sched)?;
    x_t.with_data(x_t.channels(), data)
}

pub(crate) fn ddim_update(x: &[f64], eps: &[f64], t: usize, t_prev: usize, sched: &NoiseSchedule) -> Result<Vec<f64>> {
    if t_prev > t {
        return Err(Error::Contract(format!("ddim step needs t_prev < t, got {t_prev} >= {t}")));
    }
    sched.check_t(t)?;
    let a = sched.alpha_bar(t);
    if !(a > 0.0) {
        return Err(Error::Domain(format!("alpha_bar({t}) = 0, cannot recover x0")));
    }
    let ap = sched.alpha_bar(t_prev);
    let (sa, sn) = (a.sqrt(), (1.0 - a).sqrt());
    let (sap, snp) = (ap.sqrt(), (1.0 - ap).sqrt());
    Ok(x
        .iter()
        .zip(eps)
        .map(|(x, e)| {
            let x0 = (x - sn * e) / sa;
            sap * x0 + snp * e
        })
        .collect())
}

/// Member of the DDIM family with stochasticity `eta`:
/// `sigma = eta * sqrt((1 - abar_p) / (1 - abar_t)) * sqrt(1 - abar_t / abar_p)`,
/// `x_p = sqrt(abar_p) x0_hat + sqrt(1 - abar_p - sigma^2) eps + sigma * noise`.
/// `eta = 0` is [`ddim_step`]; `eta = 1` with `t_prev = t - 1` has the DDPM
/// posterior mean.
pub fn generalized_step(
    x_t: &RasterGrid,
    eps_pred: &RasterGrid,
    t: usize,
    t_prev: usize,
    sched: &NoiseSchedule,
    eta: f64,
    noise: &RasterGrid,
) -> Result<RasterGrid> {
    check_shapes(x_t, eps_pred, "generalized_step")?;
    check_shapes(x_t, noise, "generalized_step noise")?;
    if t_prev >= t {
        return Err(Error::Contract(format!("step needs t_prev < t, got {t_prev} >= {t}")));
    }
    sched.check_t(t)?;
    let a = sched.alpha_bar(t);
    let ap = sched.alpha_bar(t_prev);
    let sigma = eta * ((1.0 - ap) / (1.0 - a)).sqrt() * (1.0 - a / ap).sqrt();
    let dir = (1.0 - ap - sigma * sigma).max(0.0).sqrt();
    let (sa, sn, sap) = (a.sqrt(), (1.0 - a).sqrt(), ap.sqrt());
    let data = x_t
        .data()
        .iter()
        .zip(eps_pred.data())
        .zip(noise.data())
        .map(|((x, e), z)| {
            let x0 = (x - sn * e) / sa;
            sap * x0 + dir * e + sigma * z
        })
        .collect();
    x_t.with_data(x_t.channels(), data)
}

/// Mean squared error between true and predicted noise.
pub fn epsilon_loss(eps: &RasterGrid, eps_pred: &RasterGrid) -> Result<f64> {
    check_shapes(eps, eps_pred, "epsilon_loss")?;
    if eps.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = eps.data().iter().zip(eps_pred.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / eps.len() as f64)
}

/// Which reverse process to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerKind {
    /// Deterministic probability-flow (DDIM, eta = 0).
    Ddim,
    /// Ancestral DDPM.
    Ddpm,
}

/// Iterated DDIM from `x_T = init_noise` along `steps` (strictly decreasing,
/// ending at 0). The result depends only on the backend, condition, initial
/// noise and step list.
pub fn sample(
    backend: &dyn Denoiser,
    cond: &Condition,
    init_noise: &RasterGrid,
    steps: &[usize],
    sched: &NoiseSchedule,
) -> Result<RasterGrid> {
    validate_step_list(steps, sched.len())?;
    let bound = backend.bind(cond, Shape::of(init_noise))?;
    let mut x = init_noise.data().to_vec();
    for (k, w) in steps.windows(2).enumerate() {
        let (t, t_prev) = (w[0], w[1]);
        let eps = bound
            .predict(&x, t, sched.alpha_bar(t))
            .map_err(|e| Error::Backend { step: k, t, source: Box::new(e) })?;
        if eps.len() != x.len() {
            return Err(Error::Backend {
                step: k,
                t,
                source: Box::new(Error::Contract("prediction shape differs from state".into())),
            });
        }
        x = ddim_update(&x, &eps, t, t_prev, sched)?;
    }
    init_noise.with_data(init_noise.channels(), x)
}

/// Ancestral sampling over every timestep `T..1`, drawing the per-step noise
/// from `noise` at the condition's world coordinates.
pub fn sample_ddpm(
    backend: &dyn Denoiser,
    cond: &Condition,
    init_noise: &RasterGrid,
    sched: &NoiseSchedule,
    noise: &NoiseField,
) -> Result<RasterGrid> {
    let shape = Shape::of(init_noise);
    let bound = backend.bind(cond, shape)?;
    let mut x = init_noise.data().to_vec();
    for (k, t) in (1..=sched.len()).rev().enumerate() {
        let eps = bound
            .predict(&x, t, sched.alpha_bar(t))
            .map_err(|e| Error::Backend { step: k, t, source: Box::new(e) })?;
        let z = noise.fork(stream::DDPM as u64).fill(cond.level, t as u32, cond.origin_px, shape.width, shape.height, shape.channels);
        x = ddpm_update(&x, &eps, t, sched, &z);
    }
    init_noise.with_data(init_noise.channels(), x)
}
