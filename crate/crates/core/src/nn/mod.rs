//! Minimal differentiable tensor networks: layer specs, parameters, reverse-mode
//! gradients, Adam and finite-difference checking.

pub mod adam;
mod conv;
pub mod gradcheck;
pub mod net;
pub mod params;
pub mod spec;

pub use adam::{adam_step, AdamConfig};
pub use gradcheck::{finite_difference, grad_check, input_grad_check, max_relative_error};
pub use net::{backward, forward, forward_tape, Tape};
pub use params::{Param, ParamSet};
pub use spec::{Layer, NetSpec};
