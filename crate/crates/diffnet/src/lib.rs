//! A deliberately small reverse-mode network core in 64-bit arithmetic.
//!
//! Networks are fixed stacks of [`LayerSpec`]s (dense, same-padded 2D
//! convolution, relu, tanh, flatten, residual blocks with a projection
//! shortcut, and branch-wise concatenation). Parameters live in a
//! [`ParamStore`] with one gradient slot each; [`adam_step`] consumes those
//! gradients and [`finite_difference_check`] verifies them.

mod adam;
mod checkpoint;
mod error;
mod gradcheck;
mod kernels;
mod layers;
mod net;
mod params;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, BLOB_FILE, FORMAT_VERSION, MANIFEST_FILE};
pub use error::{DiffnetError, Result};
pub use gradcheck::{
    central_difference, difference_resolution, finite_difference_check, finite_difference_report, relative_error,
    resolved_error, GradCheckReport,
};
pub use layers::{BranchSpec, GradFault, LayerSpec};
pub use net::Net;
pub use params::{Param, ParamStore};
pub use tensor::Tensor;
