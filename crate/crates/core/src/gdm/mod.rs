//! Diffusion-policy solver: a denoiser conditioned on the game state turns
//! Gaussian noise into a price by reverse diffusion, and a critic trained on
//! observed rewards supplies the gradient that shapes the denoiser.

mod critic;
mod policy;
mod schedule;
mod train;

pub use critic::{Critic, Experience, ReplayBuffer};
pub use policy::{
    sample_with, time_embedding, ChainNoise, ChainTrace, DiffusionPolicy, TIME_EMBED_DIM,
};
pub use schedule::{DiffusionSchedule, ReverseVariance, MAX_TERMINAL_ALPHA_BAR};
pub use train::{actor_gradient, GdmAgent, GdmConfig};
