//! Neural estimators of conditional average treatment effects (CATE).
//!
//! Six estimators share one training engine:
//!
//! * `snn`, `tnn`: single- and two-model meta-learners.
//! * `rnn`, `rnam`: a two-output network and an additive model trained on
//!   the Robinson objective `(μ(x) + τ(x)·a − y)²`.
//! * `tcnn`: separate prognostic and effect blocks on the same objective.
//! * `icnn`: the additive version of `tcnn`, with one subnetwork per feature
//!   and effect, so each feature's contribution can be plotted.
//!
//! Uncertainty comes from MC dropout. [`dgp`] simulates benchmark data with
//! known effects and [`evaluation`] scores estimators by root-PEHE.
//!
//! ```no_run
//! use tcnn::{dgp, fit, ModelKind, TrainConfig};
//!
//! let data = dgp::simulate(&dgp::DgpConfig::default()).unwrap();
//! let model = fit(ModelKind::Icnn, &data, &TrainConfig::for_kind(ModelKind::Icnn)).unwrap();
//! let tau = model.predict_cate(data.x()).unwrap();
//! # let _ = tau;
//! ```

pub mod cli;
pub mod data;
pub mod dgp;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod models;
pub mod nn;
pub mod normal;
pub mod uncertainty;

pub use data::{Dataset, FeatureKind, Standardization, Truth};
pub use error::{Error, Result};
pub use evaluation::{pehe, run_benchmark, BenchmarkConfig, BenchmarkReport, DataSource};
pub use models::{fit, CausalModel, Effect, ModelKind, ScoreFunction, TrainConfig};
pub use uncertainty::{credible_band, posterior_cate, score_bands, CredibleBand, PosteriorDraws};
