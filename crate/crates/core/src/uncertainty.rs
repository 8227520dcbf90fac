//! MC-dropout posterior draws and credible bands.
//!
//! Each draw is one forward pass with dropout kept on, sharing a single mask
//! per layer across all query points, so a draw is one sampled function.
//! Draw `d` uses the generator stream `(seed, d)`; results do not depend on
//! evaluation order.

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::models::{CausalModel, Effect, ModelKind, ScoreFunction};
use crate::nn::Mode;

/// What a set of draws describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrawTarget {
    Cate,
    Mu,
    /// Arm-specific outcome surface of the T-learner (`true` = treated).
    Arm(bool),
    Score(Effect, usize),
}

/// `S × N` matrix of posterior samples at `N` query points.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub samples: Array2<f64>,
    pub target: DrawTarget,
}

impl PosteriorDraws {
    pub fn draws(&self) -> usize {
        self.samples.nrows()
    }

    pub fn points(&self) -> usize {
        self.samples.ncols()
    }
}

/// Pointwise sample mean and empirical quantile bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct CredibleBand {
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub level: f64,
}

impl CredibleBand {
    pub fn widths(&self) -> impl Iterator<Item = f64> + '_ {
        self.upper.iter().zip(&self.lower).map(|(u, l)| u - l)
    }

    pub fn contains(&self, i: usize, value: f64) -> bool {
        self.lower[i] <= value && value <= self.upper[i]
    }
}

pub(crate) fn draw_rng(seed: u64, draw: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(draw as u64);
    rng
}

fn check_draws(draws: usize) -> Result<()> {
    if draws < 2 {
        return Err(Error::Config(format!("need at least 2 posterior draws, got {draws}")));
    }
    Ok(())
}

/// `draws` MC-dropout samples of `τ̂(x)` in outcome units.
///
/// Both blocks of a Robinson model, and both arm networks of a T-learner,
/// are resampled together within each draw.
pub fn posterior_cate(model: &CausalModel, x: ArrayView2<f64>, draws: usize, seed: u64) -> Result<PosteriorDraws> {
    model.require_fitted()?;
    check_draws(draws)?;
    let st = model.standardization();
    let xs = st.transform_x(x)?;
    let mut samples = Array2::zeros((draws, x.nrows()));
    for (d, mut row) in samples.rows_mut().into_iter().enumerate() {
        let tau = model
            .components()
            .cate_standardized(xs.view(), Mode::McSample, &mut draw_rng(seed, d))?;
        row.assign(&(tau * st.y_sd));
    }
    Ok(PosteriorDraws {
        samples,
        target: DrawTarget::Cate,
    })
}

/// MC-dropout samples of the prognostic function `μ̂(x)` (Robinson family).
pub fn posterior_mu(model: &CausalModel, x: ArrayView2<f64>, draws: usize, seed: u64) -> Result<PosteriorDraws> {
    model.require_fitted()?;
    check_draws(draws)?;
    let st = model.standardization();
    let xs = st.transform_x(x)?;
    let mut samples = Array2::zeros((draws, x.nrows()));
    for (d, mut row) in samples.rows_mut().into_iter().enumerate() {
        let pass = model
            .components()
            .robinson_pass(xs.view(), Mode::McSample, &mut draw_rng(seed, d))?;
        row.assign(&pass.mu.mapv(|m| st.y_mean + st.y_sd * m));
    }
    Ok(PosteriorDraws {
        samples,
        target: DrawTarget::Mu,
    })
}

/// Joint MC-dropout samples of the T-learner's arm surfaces `(f̂_1, f̂_0)`.
///
/// Uses the same per-draw generators as [`posterior_cate`], so the
/// difference of the two is exactly the CATE draws.
pub fn posterior_arms(
    model: &CausalModel,
    x: ArrayView2<f64>,
    draws: usize,
    seed: u64,
) -> Result<(PosteriorDraws, PosteriorDraws)> {
    model.require_fitted()?;
    check_draws(draws)?;
    if model.kind() != ModelKind::Tnn {
        return Err(Error::Unsupported(format!(
            "{} has no arm-specific networks",
            model.kind()
        )));
    }
    let st = model.standardization();
    let xs = st.transform_x(x)?;
    let mut treated = Array2::zeros((draws, x.nrows()));
    let mut control = Array2::zeros((draws, x.nrows()));
    for d in 0..draws {
        let (f1, f0) = model
            .components()
            .arm_predictions(xs.view(), Mode::McSample, &mut draw_rng(seed, d))?;
        treated.row_mut(d).assign(&f1.mapv(|v| st.y_mean + st.y_sd * v));
        control.row_mut(d).assign(&f0.mapv(|v| st.y_mean + st.y_sd * v));
    }
    Ok((
        PosteriorDraws {
            samples: treated,
            target: DrawTarget::Arm(true),
        },
        PosteriorDraws {
            samples: control,
            target: DrawTarget::Arm(false),
        },
    ))
}

/// Type-7 (linear interpolation) quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

/// Mean computed as `x₀ + Σ(xᵢ − x₀)/n`, exact when all values coincide.
pub(crate) fn shifted_mean(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let mut it = values.clone();
    let Some(first) = it.next() else {
        return f64::NAN;
    };
    let n = values.clone().count() as f64;
    first + values.map(|v| v - first).sum::<f64>() / n
}

/// Pointwise `[(1−level)/2, (1+level)/2]` quantile band of the draws.
pub fn credible_band(draws: &PosteriorDraws, level: f64) -> Result<CredibleBand> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("credible level must lie in (0, 1), got {level}")));
    }
    if draws.draws() == 0 {
        return Err(Error::Input("no draws".into()));
    }
    let (q_lo, q_hi) = ((1.0 - level) / 2.0, (1.0 + level) / 2.0);
    let mut band = CredibleBand {
        mean: Vec::with_capacity(draws.points()),
        lower: Vec::with_capacity(draws.points()),
        upper: Vec::with_capacity(draws.points()),
        level,
    };
    let mut buf = Vec::with_capacity(draws.draws());
    for col in draws.samples.columns() {
        buf.clear();
        buf.extend(col.iter().copied());
        if buf.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("posterior draws contain non-finite values".into()));
        }
        band.mean.push(shifted_mean(buf.iter().copied()));
        buf.sort_by(f64::total_cmp);
        band.lower.push(quantile_sorted(&buf, q_lo));
        band.upper.push(quantile_sorted(&buf, q_hi));
    }
    Ok(band)
}

/// MC-dropout draws of one centered ICNN score function on `grid`.
///
/// Every draw is centered by its own mean over the training marginal, so the
/// band reflects uncertainty in shape rather than in level.
pub fn score_draws(
    model: &CausalModel,
    effect: Effect,
    feature: usize,
    grid: &[f64],
    draws: usize,
    seed: u64,
) -> Result<PosteriorDraws> {
    model.require_fitted()?;
    check_draws(draws)?;
    let mut samples = Array2::zeros((draws, grid.len()));
    for (d, mut row) in samples.rows_mut().into_iter().enumerate() {
        let curve = model.centered_curve(effect, feature, grid, Mode::McSample, &mut draw_rng(seed, d))?;
        row.assign(&ndarray::ArrayView1::from(&curve));
    }
    Ok(PosteriorDraws {
        samples,
        target: DrawTarget::Score(effect, feature),
    })
}

/// Score function with its MC-dropout credible band; `values` holds the band
/// mean.
pub fn score_bands(
    model: &CausalModel,
    feature: usize,
    effect: Effect,
    grid: &[f64],
    draws: usize,
    level: f64,
    seed: u64,
) -> Result<ScoreFunction> {
    let samples = score_draws(model, effect, feature, grid, draws, seed)?;
    let band = credible_band(&samples, level)?;
    Ok(ScoreFunction {
        feature,
        effect,
        grid: grid.to_vec(),
        values: band.mean.clone(),
        band: Some(band),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn draws_of(samples: Array2<f64>) -> PosteriorDraws {
        PosteriorDraws {
            samples,
            target: DrawTarget::Cate,
        }
    }

    #[test]
    fn hand_quantiles() {
        let d = draws_of(array![[1.0], [2.0], [3.0], [4.0], [5.0]]);
        let band = credible_band(&d, 0.5).unwrap();
        assert_eq!(band.lower, vec![2.0]);
        assert_eq!(band.upper, vec![4.0]);
        assert_eq!(band.mean, vec![3.0]);
    }

    #[test]
    fn constant_draws_collapse() {
        let d = draws_of(Array2::from_elem((7, 3), 0.1));
        let band = credible_band(&d, 0.95).unwrap();
        assert_eq!(band.lower, vec![0.1; 3]);
        assert_eq!(band.mean, vec![0.1; 3]);
        assert_eq!(band.upper, vec![0.1; 3]);
    }

    #[test]
    fn degenerate_levels_rejected() {
        let d = draws_of(Array2::zeros((3, 1)));
        for level in [0.0, 1.0, -0.2, f64::NAN] {
            assert!(matches!(credible_band(&d, level), Err(Error::Config(_))));
        }
    }

    #[test]
    fn too_few_draws() {
        assert!(matches!(check_draws(1), Err(Error::Config(_))));
    }

    #[test]
    fn quantile_edges() {
        let s = [1.0, 2.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.0), 1.0);
        assert_eq!(quantile_sorted(&s, 1.0), 4.0);
        assert_eq!(quantile_sorted(&s, 0.75), 3.0);
    }
}
