use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Linear,
}

/// On-disk form of a noise schedule: `{"kind": "linear", "T": 50, "beta_start": .., "beta_end": ..}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub kind: ScheduleKind,
    #[serde(rename = "T")]
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig { kind: ScheduleKind::Linear, steps: 50, beta_start: 1e-4, beta_end: 2e-2 }
    }
}

/// Variance schedule over timesteps `1..=T`.
///
/// `alpha_bar(0)` is 1 (clean data); `alpha_bar(1) = 1 - beta(1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    pub fn from_config(cfg: &ScheduleConfig) -> Result<Self> {
        if cfg.steps == 0 {
            return Err(Error::Config("schedule needs T >= 1".into()));
        }
        let betas = match cfg.kind {
            ScheduleKind::Linear => (0..cfg.steps)
                .map(|i| {
                    if cfg.steps == 1 {
                        cfg.beta_start
                    } else {
                        cfg.beta_start + (cfg.beta_end - cfg.beta_start) * i as f64 / (cfg.steps - 1) as f64
                    }
                })
                .collect(),
        };
        Self::from_betas(betas)
    }

    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        Self::from_config(&ScheduleConfig { kind: ScheduleKind::Linear, steps, beta_start, beta_end })
    }

    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::Config("schedule needs at least one beta".into()));
        }
        if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(Error::Config(format!("beta must lie in (0, 1), got {b}")));
        }
        let mut alpha_bar = Vec::with_capacity(betas.len() + 1);
        alpha_bar.push(1.0);
        let mut acc = 1.0;
        for b in &betas {
            acc *= 1.0 - b;
            alpha_bar.push(acc);
        }
        Ok(NoiseSchedule { betas, alpha_bar })
    }

    /// Schedule with `T = 1` whose single step has the given `alpha_bar`.
    pub fn single_step(alpha_bar: f64) -> Result<Self> {
        Self::from_betas(vec![1.0 - alpha_bar])
    }

    /// Number of diffusion timesteps `T`.
    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    /// Fixed reverse-process standard deviation, `sqrt(beta_t)`.
    pub fn sigma(&self, t: usize) -> f64 {
        self.beta(t).sqrt()
    }

    pub(crate) fn check_t(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.len() {
            Err(Error::Contract(format!("timestep {t} outside 1..={}", self.len())))
        } else {
            Ok(())
        }
    }
}

/// Strictly decreasing list of `steps + 1` timesteps from `T` down to 0.
pub fn ddim_timesteps(total: usize, steps: usize) -> Result<Vec<usize>> {
    if steps == 0 || steps > total {
        return Err(Error::Config(format!("step count {steps} must lie in 1..={total}")));
    }
    let list: Vec<usize> =
        (0..=steps).rev().map(|k| ((k as f64) * total as f64 / steps as f64).round() as usize).collect();
    Ok(list)
}

pub fn validate_step_list(list: &[usize], total: usize) -> Result<()> {
    if list.len() < 2 {
        return Err(Error::Contract("step list needs at least one transition".into()));
    }
    if list[0] > total {
        return Err(Error::Contract(format!("step list starts at {} > T = {total}", list[0])));
    }
    if *list.last().unwrap() != 0 {
        return Err(Error::Contract("step list must end at 0".into()));
    }
    if list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Contract("step list must be strictly decreasing".into()));
    }
    Ok(())
}
