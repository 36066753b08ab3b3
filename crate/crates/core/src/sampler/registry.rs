//! Backend lookup by name.

use super::backend::{AnalyticDenoiser, Denoiser, Task};
use super::codec::BlockDctCodec;
use super::procedural::{FractalRefiner, LatentAdapter, ProceduralHeight};
use crate::error::{Error, Result};

pub const NAMES: &[&str] = &["analytic-identity", "fractal-refiner", "procedural-height", "latent-height"];

/// Creates a registered backend. `radius` overrides the receptive radius of
/// backends that have one.
pub fn create(name: &str, radius: Option<usize>) -> Result<Box<dyn Denoiser>> {
    Ok(match name {
        "analytic-identity" => Box::new(AnalyticDenoiser::follow_condition()),
        "fractal-refiner" => Box::new(FractalRefiner::with_radius(radius.unwrap_or(8))),
        "procedural-height" => {
            Box::new(ProceduralHeight { radius: radius.unwrap_or(2), ..ProceduralHeight::default() })
        }
        "latent-height" => Box::new(LatentAdapter::new(
            ProceduralHeight { radius: radius.unwrap_or(2), ..ProceduralHeight::default() },
            BlockDctCodec::new(4)?,
        )),
        _ => return Err(Error::Registry(name.to_string())),
    })
}

/// Like [`create`], but also checks that the backend was built for `task`.
pub fn create_for(name: &str, task: Task, radius: Option<usize>) -> Result<Box<dyn Denoiser>> {
    let b = create(name, radius)?;
    if b.task() != task {
        return Err(Error::Registry(format!("{name} (built for {:?}, requested {task:?})", b.task())));
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_name_resolves() {
        for n in NAMES {
            assert!(create(n, None).is_ok(), "{n}");
        }
        assert!(matches!(create("nope", None), Err(Error::Registry(_))));
    }

    #[test]
    fn task_mismatch_is_a_registry_error() {
        assert!(create_for("fractal-refiner", Task::Height, None).is_err());
        assert!(create_for("procedural-height", Task::Height, None).is_ok());
    }
}
