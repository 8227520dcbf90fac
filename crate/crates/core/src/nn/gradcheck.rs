use ndarray::ArrayView2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::net::{MlpNet, Mode};
use crate::error::{Error, Result};

/// Finite-difference step used by every gradient check.
pub const FD_STEP: f64 = 1e-6;

/// Denominator floor for near-zero coordinates, as a fraction of the largest
/// analytic gradient entry.
pub const SCALE_FLOOR: f64 = 1e-4;

/// `|a − n| / max(|a|, |n|, 1e-8)`, maximized over all coordinates.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

/// Central finite differences of `loss_at` around `params`.
pub fn numeric_gradient(params: &[f64], h: f64, mut loss_at: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = params.to_vec();
    (0..params.len())
        .map(|i| {
            probe[i] = params[i] + h;
            let up = loss_at(&probe);
            probe[i] = params[i] - h;
            let down = loss_at(&probe);
            probe[i] = params[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Worst per-coordinate relative error of `analytic` against finite
/// differences of a piecewise smooth loss.
///
/// Each coordinate is compared with the closest of the central, forward and
/// backward differences. Where the loss is smooth within `h` the three agree,
/// so this only matters when a ReLU kink falls inside the step: the analytic
/// gradient is then the one-sided derivative on the kink-free side. The
/// denominator is `max(|a|, |n|, SCALE_FLOOR·max(1, ‖a‖∞))` so roundoff on
/// near-zero entries does not dominate.
pub fn piecewise_relative_error(
    analytic: &[f64],
    params: &[f64],
    h: f64,
    mut loss_at: impl FnMut(&[f64]) -> f64,
) -> f64 {
    let scale = analytic.iter().fold(1.0f64, |m, g| m.max(g.abs()));
    let floor = SCALE_FLOOR * scale;
    let base = loss_at(params);
    let mut probe = params.to_vec();
    let mut worst = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        probe[i] = params[i] + h;
        let up = loss_at(&probe);
        probe[i] = params[i] - h;
        let down = loss_at(&probe);
        probe[i] = params[i];
        let err = [(up - down) / (2.0 * h), (up - base) / h, (base - down) / h]
            .iter()
            .map(|&n| (a - n).abs() / a.abs().max(n.abs()).max(floor))
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(err);
    }
    worst
}

/// Squared-error loss `mean((net(x) − y)²) + l2/2·Σ‖W‖²` and its gradient.
/// `y` has the same shape as the net output.
pub fn squared_loss_and_grad(net: &MlpNet, x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<(f64, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (out, cache) = net.forward(x, Mode::Train, &mut rng)?;
    if out.dim() != y.dim() {
        return Err(Error::Shape(format!(
            "target is {:?}, output is {:?}",
            y.dim(),
            out.dim()
        )));
    }
    let resid = &out - &y;
    let count = resid.len() as f64;
    let loss = resid.iter().map(|r| r * r).sum::<f64>() / count + net.penalty();
    let upstream = resid * (2.0 / count);
    let (grads, _) = net.backward(cache.as_ref().expect("train mode caches"), upstream.view())?;
    let mut flat = Vec::with_capacity(net.param_count());
    grads.flatten_into(&mut flat);
    Ok((loss, flat))
}

/// Compares backpropagated gradients of the squared loss against finite
/// differences and returns the worst relative error, as measured by
/// [`piecewise_relative_error`].
///
/// Dropout is switched off for the check so the loss is a deterministic
/// function of the parameters.
pub fn grad_check(net: &MlpNet, x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<f64> {
    let mut net = net.clone();
    net.set_dropout_rate(0.0)?;
    let (_, analytic) = squared_loss_and_grad(&net, x, y)?;
    let params = net.flat_params();
    let mut probe = net.clone();
    Ok(piecewise_relative_error(&analytic, &params, FD_STEP, |p| {
        probe.assign_flat(p).expect("same parameter count");
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (out, _) = probe.forward(x, Mode::Eval, &mut rng).expect("validated shapes");
        let count = out.len() as f64;
        (&out - &y).iter().map(|r| r * r).sum::<f64>() / count + probe.penalty()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::net::{Activation, DenseLayer};
    use ndarray::Array2;
    use rand::Rng;

    fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.5..1.5))
    }

    #[test]
    fn linear_net_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let layer = DenseLayer {
            weights: random_matrix(2, 3, &mut rng),
            biases: ndarray::array![0.1, -0.2],
            activation: Activation::Identity,
        };
        let net = MlpNet::from_layers(vec![layer], 0.0, 0.0).unwrap();
        let x = random_matrix(6, 3, &mut rng);
        let y = random_matrix(6, 2, &mut rng);
        let err = grad_check(&net, x.view(), y.view()).unwrap();
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn relu_net_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = MlpNet::init(&[4, 12, 12, 1], 0.0, 0.05, &mut rng).unwrap();
        let x = random_matrix(16, 4, &mut rng);
        let y = random_matrix(16, 1, &mut rng);
        let err = grad_check(&net, x.view(), y.view()).unwrap();
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn dropout_is_disabled_during_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let net = MlpNet::init(&[3, 10, 1], 0.5, 0.0, &mut rng).unwrap();
        let x = random_matrix(8, 3, &mut rng);
        let y = random_matrix(8, 1, &mut rng);
        let err = grad_check(&net, x.view(), y.view()).unwrap();
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn wrong_gradient_is_caught_at_a_kink() {
        // |p| near 0: the kink lies inside the step.
        let loss = |p: &[f64]| p[0].abs() + p[1] * p[1];
        let params = [3e-7, 0.5];
        let good = piecewise_relative_error(&[1.0, 1.0], &params, FD_STEP, loss);
        assert!(good < 1e-6, "{good}");
        let bad = piecewise_relative_error(&[-1.0, 1.0], &params, FD_STEP, loss);
        assert!(bad > 0.5, "{bad}");
        let off = piecewise_relative_error(&[1.0, 1.01], &params, FD_STEP, loss);
        assert!(off > 1e-3, "{off}");
    }
}
