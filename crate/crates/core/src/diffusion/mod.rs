//! Noise schedule, forward process, v-parameterized training objective,
//! conditional denoiser and reverse sampler.

pub mod denoiser;
pub mod process;
pub mod sampler;
pub mod schedule;
pub mod train;

pub use denoiser::{Denoiser, DenoiserArch};
pub use process::{forward_sample, recover_z0, recover_z0_from_noise, velocity_target};
pub use sampler::{reverse_sample, sample_standardized, sample_with};
pub use schedule::{build_schedule, NoiseSchedule, ScheduleKind};
pub use train::{train_diffusion, DiffusionModel, DiffusionTrace, DiffusionTrainConfig, Parameterization};
