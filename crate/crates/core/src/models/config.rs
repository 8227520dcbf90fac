use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The six CATE estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// S-learner: one network on `(X, A)`.
    Snn,
    /// T-learner: one network per treatment arm.
    Tnn,
    /// One fully connected network with a `(μ, τ)` head, Robinson loss.
    Rnn,
    /// One additive model whose per-feature subnets emit `(μ_j, τ_j)`.
    Rnam,
    /// Separate μ and τ networks joined by the Robinson loss.
    Tcnn,
    /// Separate additive μ and τ models joined by the Robinson loss.
    Icnn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Snn,
        ModelKind::Tnn,
        ModelKind::Rnn,
        ModelKind::Rnam,
        ModelKind::Tcnn,
        ModelKind::Icnn,
    ];

    /// Kinds whose outcome model is `μ(x) + τ(x)·a`.
    pub fn is_robinson(self) -> bool {
        matches!(
            self,
            ModelKind::Rnn | ModelKind::Rnam | ModelKind::Tcnn | ModelKind::Icnn
        )
    }

    /// Kinds with separately configurable μ and τ blocks.
    pub fn has_tau_block(self) -> bool {
        matches!(self, ModelKind::Tcnn | ModelKind::Icnn)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Snn => "snn",
            ModelKind::Tnn => "tnn",
            ModelKind::Rnn => "rnn",
            ModelKind::Rnam => "rnam",
            ModelKind::Tcnn => "tcnn",
            ModelKind::Icnn => "icnn",
        }
    }

    /// Display label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Snn => "S-NN",
            ModelKind::Tnn => "T-NN",
            ModelKind::Rnn => "R-NN",
            ModelKind::Rnam => "R-NAM",
            ModelKind::Tcnn => "TCNN",
            ModelKind::Icnn => "ICNN",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s) || k.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown model kind `{s}`")))
    }
}

/// Training hyper-parameters.
///
/// Single-block kinds (snn, tnn, rnn, rnam) read only the `mu_*` fields; for
/// rnam and icnn the layer widths describe each per-feature subnet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub mu_layers: Vec<usize>,
    pub tau_layers: Vec<usize>,
    pub mu_dropout: f64,
    pub tau_dropout: f64,
    pub l2_mu: f64,
    pub l2_tau: f64,
    pub seed: u64,
}

impl TrainConfig {
    /// Default architecture and budget for `kind`.
    pub fn for_kind(kind: ModelKind) -> Self {
        let (mu_layers, tau_layers) = match kind {
            ModelKind::Snn | ModelKind::Tnn | ModelKind::Rnn => (vec![50, 50], vec![]),
            ModelKind::Rnam => (vec![20, 20], vec![]),
            ModelKind::Tcnn => (vec![50, 50], vec![20]),
            ModelKind::Icnn => (vec![20, 20], vec![50]),
        };
        TrainConfig {
            epochs: 500,
            batch_size: 128,
            learning_rate: 1e-3,
            mu_layers,
            tau_layers,
            mu_dropout: 0.1,
            tau_dropout: 0.1,
            l2_mu: 0.0,
            // Weight decay on the effect block only.
            l2_tau: if kind.has_tau_block() { 1e-3 } else { 0.0 },
            seed: 0,
        }
    }

    pub fn validate(&self, kind: ModelKind) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.mu_layers.is_empty() || self.mu_layers.contains(&0) {
            return Err(Error::Config(format!(
                "mu layers must be a nonempty list of positive widths, got {:?}",
                self.mu_layers
            )));
        }
        if kind.has_tau_block() && (self.tau_layers.is_empty() || self.tau_layers.contains(&0)) {
            return Err(Error::Config(format!(
                "tau layers must be a nonempty list of positive widths, got {:?}",
                self.tau_layers
            )));
        }
        for (name, p) in [("mu_dropout", self.mu_dropout), ("tau_dropout", self.tau_dropout)] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {p}")));
            }
        }
        for (name, l2) in [("l2_mu", self.l2_mu), ("l2_tau", self.l2_tau)] {
            if !(l2 >= 0.0 && l2.is_finite()) {
                return Err(Error::Config(format!("{name} must be nonnegative, got {l2}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_kinds() {
        for k in ModelKind::ALL {
            assert_eq!(k.as_str().parse::<ModelKind>().unwrap(), k);
            assert_eq!(k.label().parse::<ModelKind>().unwrap(), k);
        }
        assert!("forest".parse::<ModelKind>().is_err());
    }

    #[test]
    fn default_architectures() {
        assert_eq!(TrainConfig::for_kind(ModelKind::Tcnn).mu_layers, vec![50, 50]);
        assert_eq!(TrainConfig::for_kind(ModelKind::Tcnn).tau_layers, vec![20]);
        assert_eq!(TrainConfig::for_kind(ModelKind::Icnn).mu_layers, vec![20, 20]);
        assert_eq!(TrainConfig::for_kind(ModelKind::Icnn).tau_layers, vec![50]);
        assert_eq!(TrainConfig::for_kind(ModelKind::Rnam).mu_layers, vec![20, 20]);
        for k in ModelKind::ALL {
            TrainConfig::for_kind(k).validate(k).unwrap();
        }
    }

    #[test]
    fn tau_layers_required_for_targeted_kinds() {
        let mut c = TrainConfig::for_kind(ModelKind::Tcnn);
        c.tau_layers.clear();
        assert!(c.validate(ModelKind::Tcnn).is_err());
        assert!(c.validate(ModelKind::Rnn).is_ok());
    }
}
