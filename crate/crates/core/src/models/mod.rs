//! CATE estimators: S- and T-learners, the single-block Robinson models
//! (R-NN, R-NAM) and the two-block targeted models (TCNN, ICNN).
//!
//! The Robinson family models the outcome as `y = μ(x) + τ(x)·a + ε`, so the
//! CATE `τ(x)` is a network output rather than a difference of two fits.

mod config;
mod model;
mod scores;
mod train;

pub use config::{ModelKind, TrainConfig};
pub use model::{
    robinson_loss_grad, CausalModel, Components, IcnnOutput, ModelGrads, RobinsonPrediction, RobinsonStep,
};
pub use scores::{linspace, score_functions, Effect, ScoreFunction};
pub use train::{fit, model_grad_check};
