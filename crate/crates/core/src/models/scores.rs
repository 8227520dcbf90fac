use std::fmt;
use std::str::FromStr;

use ndarray::{concatenate, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::{CausalModel, Components};
use crate::error::{Error, Result};
use crate::nn::{MlpNet, Mode};
use crate::uncertainty::CredibleBand;

/// Which half of the outcome model a score function describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Effect {
    /// Prognostic contribution `μ_j(x_j)`.
    Mu,
    /// Moderating contribution `τ_j(x_j)`.
    Tau,
}

impl Effect {
    pub fn as_str(self) -> &'static str {
        match self {
            Effect::Mu => "mu",
            Effect::Tau => "tau",
        }
    }
}

impl fmt::Display for Effect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Effect {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mu" => Ok(Effect::Mu),
            "tau" => Ok(Effect::Tau),
            other => Err(Error::Input(format!("unknown effect `{other}`, expected mu or tau"))),
        }
    }
}

/// One feature's additive contribution evaluated on a grid, in outcome units
/// and centered to mean zero over the training marginal of that feature.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreFunction {
    pub feature: usize,
    pub effect: Effect,
    /// Grid in original covariate units.
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// MC-dropout credible band, when computed.
    pub band: Option<CredibleBand>,
}

impl CausalModel {
    pub(crate) fn subnet(&self, effect: Effect, feature: usize) -> Result<&MlpNet> {
        let Components::Icnn {
            mu_subnets,
            tau_subnets,
            ..
        } = &self.components
        else {
            return Err(Error::Unsupported(format!(
                "score functions require icnn, got {}",
                self.kind()
            )));
        };
        let nets = match effect {
            Effect::Mu => mu_subnets,
            Effect::Tau => tau_subnets,
        };
        nets.get(feature).ok_or_else(|| {
            Error::Input(format!(
                "feature index {feature} out of range for {} features",
                nets.len()
            ))
        })
    }

    /// Centered subnet curve on `grid` for one forward pass in `mode`.
    ///
    /// Grid and training marginal go through the subnet in a single batch, so
    /// under [`Mode::McSample`] both see the same sampled network.
    pub(crate) fn centered_curve<R: Rng + ?Sized>(
        &self,
        effect: Effect,
        feature: usize,
        grid: &[f64],
        mode: Mode,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let net = self.subnet(effect, feature)?;
        if self.reference.nrows() == 0 {
            return Err(Error::State(
                "model has no training covariates to center score functions".into(),
            ));
        }
        if grid.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("score grid contains non-finite values".into()));
        }
        let st = &self.standardization;
        let grid_std = Array2::from_shape_fn((grid.len(), 1), |(i, _)| st.transform_feature(feature, grid[i]));
        let reference = self.reference.column(feature).insert_axis(Axis(1));
        let input = concatenate(Axis(0), &[grid_std.view(), reference]).expect("single column");
        let (out, _) = net.forward(input.view(), mode, rng)?;
        let out = out.column(0);
        let marginal = out.slice(ndarray::s![grid.len()..]);
        let center = marginal.sum() / marginal.len() as f64;
        Ok(out.iter().take(grid.len()).map(|v| (v - center) * st.y_sd).collect())
    }

    /// Evenly spaced grids spanning each feature's training range.
    pub fn default_grids(&self, points: usize) -> Result<Vec<Vec<f64>>> {
        if self.reference.nrows() == 0 {
            return Err(Error::State("model has no training covariates".into()));
        }
        let st = &self.standardization;
        Ok((0..self.p())
            .map(|j| {
                let col = self.reference.column(j);
                let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let back = |v: f64| v * st.x_sd[j] + st.x_mean[j];
                linspace(back(lo), back(hi), points)
            })
            .collect())
    }
}

/// `points` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..points)
            .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
            .collect(),
    }
}

/// Deterministic, centered `(μ_j, τ_j)` score functions of an ICNN, one pair
/// per feature, evaluated on `grids[j]`.
pub fn score_functions(model: &CausalModel, grids: &[Vec<f64>]) -> Result<Vec<(ScoreFunction, ScoreFunction)>> {
    model.require_fitted()?;
    if model.kind() != super::ModelKind::Icnn {
        return Err(Error::Unsupported(format!(
            "score functions require icnn, got {}",
            model.kind()
        )));
    }
    if grids.len() != model.p() {
        return Err(Error::Shape(format!(
            "{} grids for {} features",
            grids.len(),
            model.p()
        )));
    }
    grids
        .iter()
        .enumerate()
        .map(|(j, grid)| {
            let curve = |effect| -> Result<ScoreFunction> {
                Ok(ScoreFunction {
                    feature: j,
                    effect,
                    grid: grid.clone(),
                    values: model.centered_curve(effect, j, grid, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0))?,
                    band: None,
                })
            };
            Ok((curve(Effect::Mu)?, curve(Effect::Tau)?))
        })
        .collect()
}
