//! Lane-following agents with a residual image/tracking fusion encoder,
//! trained by SAC or DDPG in a deterministic 2D driving simulator.

pub mod action;
pub mod agents;
pub mod drivesim;
pub mod error;
pub mod evalkit;
pub mod fusion;
pub mod geometry;
pub mod observation;
pub mod train;
pub mod verify;

pub use action::Action;
pub use error::{CoreError, Result};
pub use observation::{Observation, TRACKING_LEN};
pub use train::RunConfig;
