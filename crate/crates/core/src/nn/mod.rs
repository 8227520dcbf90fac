//! A small dense-network engine: forward/backward passes with inverted
//! dropout, Adam, He initialization and finite-difference gradient checks.
//!
//! Everything runs in `f64`. Matrices are `(rows = examples, cols = features)`.

mod adam;
mod gradcheck;
mod net;

pub use adam::{adam_step, AdamConfig, OptimizerState, VectorAdam};
pub use gradcheck::{
    grad_check, max_relative_error, numeric_gradient, piecewise_relative_error, squared_loss_and_grad, FD_STEP,
    SCALE_FLOOR,
};
pub use net::{Activation, DenseLayer, ForwardCache, LayerGrads, MlpNet, Mode, NetGrads};
