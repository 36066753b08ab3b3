//! Diffusion sampling: schedules, forward/reverse steps, the denoiser
//! contract and the shipped backends.

pub mod backend;
pub mod codec;
pub mod procedural;
pub mod registry;
pub mod schedule;
pub mod steps;

pub use backend::{
    AnalyticDenoiser, BoundDenoiser, Condition, Denoiser, GaussianPrior, MeanSource, PriorModel, ReceptiveField,
    Shape, Task,
};
pub use codec::{BlockDctCodec, LatentCodec};
pub use procedural::{FractalRefiner, LatentAdapter, ProceduralHeight};
pub use schedule::{ddim_timesteps, validate_step_list, NoiseSchedule, ScheduleConfig, ScheduleKind};
pub use steps::{
    ddim_step, ddpm_step, epsilon_loss, forward_diffuse, generalized_step, sample, sample_ddpm, SamplerKind,
};
