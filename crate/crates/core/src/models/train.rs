use ndarray::{ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ModelKind, TrainConfig};
use super::model::{CausalModel, Components, ModelGrads};
use crate::data::{Dataset, Standardization};
use crate::error::{Error, Result};
use crate::nn::{adam_step, piecewise_relative_error, AdamConfig, OptimizerState, VectorAdam, FD_STEP};

/// Adam state for every parameter group of a model.
struct ModelOptimizer {
    nets: Vec<OptimizerState>,
    biases: Option<VectorAdam>,
}

impl ModelOptimizer {
    fn new(components: &Components, config: AdamConfig) -> Self {
        ModelOptimizer {
            nets: components
                .nets()
                .into_iter()
                .map(|n| OptimizerState::new(n, config))
                .collect(),
            biases: components.global_biases().map(|b| VectorAdam::new(b.len(), config)),
        }
    }

    fn step(&mut self, components: &mut Components, grads: &ModelGrads) -> Result<()> {
        for ((net, g), state) in components.nets_mut().into_iter().zip(&grads.nets).zip(&mut self.nets) {
            if let Some(g) = g {
                adam_step(net, g, state)?;
            }
        }
        if let (Some(opt), Some(g), Some(mut b)) = (&mut self.biases, grads.biases, components.global_biases()) {
            opt.step(&mut b, &g)?;
            components.set_global_biases(b);
        }
        Ok(())
    }
}

/// Fits a model of `kind` by minibatch Adam on the standardized data.
///
/// The S-learner minimizes squared error on `(X, A)` inputs, the T-learner
/// fits each arm's network on that arm's rows only, and the Robinson family
/// minimizes `mean (μ(x) + τ(x)·a − y)²` jointly over both blocks.
pub fn fit(kind: ModelKind, data: &Dataset, config: &TrainConfig) -> Result<CausalModel> {
    config.validate(kind)?;
    if data.n() == 0 {
        return Err(Error::Input("cannot fit on an empty dataset".into()));
    }
    let (n_control, n_treated) = data.arm_counts();
    if kind == ModelKind::Tnn && (n_control == 0 || n_treated == 0) {
        return Err(Error::Estimation(format!(
            "the T-learner needs both arms, got {n_control} control and {n_treated} treated rows"
        )));
    }

    let standardization = Standardization::fit(data);
    let xs = standardization.transform_x(data.x())?;
    let ys = standardization.transform_y(data.outcome());
    let a = data.treatment().to_owned();

    let mut model = CausalModel::init(kind, data.p(), config)?;
    let adam = AdamConfig {
        learning_rate: config.learning_rate,
        ..AdamConfig::default()
    };
    let mut optimizer = ModelOptimizer::new(&model.components, adam);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);

    let mut trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let batches = epoch_batches(kind, a.view(), config.batch_size, &mut rng);
        let mut total = 0.0;
        for idx in &batches {
            let xb = xs.select(Axis(0), idx);
            let ab = a.select(Axis(0), idx);
            let yb = ys.select(Axis(0), idx);
            let (loss, grads) = model
                .components
                .loss_and_grads(xb.view(), ab.view(), yb.view(), &mut rng)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            total += loss * idx.len() as f64;
            optimizer.step(&mut model.components, &grads)?;
        }
        trace.push(total / data.n() as f64);
    }

    model.standardization = standardization;
    model.reference = xs;
    model.fitted = true;
    model.loss_trace = trace;
    Ok(model)
}

/// Shuffled minibatch indices for one epoch. T-learner batches never mix arms.
fn epoch_batches(kind: ModelKind, a: ArrayView1<f64>, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let chunk = |mut idx: Vec<usize>, rng: &mut ChaCha8Rng| -> Vec<Vec<usize>> {
        idx.shuffle(rng);
        idx.chunks(batch_size).map(<[usize]>::to_vec).collect()
    };
    if kind == ModelKind::Tnn {
        let (treated, control): (Vec<usize>, Vec<usize>) = (0..a.len()).partition(|&i| a[i] == 1.0);
        let mut batches = chunk(treated, rng);
        batches.extend(chunk(control, rng));
        batches.shuffle(rng);
        batches
    } else {
        chunk((0..a.len()).collect(), rng)
    }
}

/// Worst relative error between backpropagated gradients of the full
/// training loss (data term plus L2 penalties) and finite differences, over
/// every parameter of the model. See [`piecewise_relative_error`].
///
/// Dropout is disabled. `x` and `y` are used as given (no standardization).
pub fn model_grad_check(
    model: &CausalModel,
    x: ArrayView2<f64>,
    a: ArrayView1<f64>,
    y: ArrayView1<f64>,
) -> Result<f64> {
    let mut components = model.components.clone();
    components.set_dropout(0.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (_, grads) = components.loss_and_grads(x, a, y, &mut rng)?;
    let analytic = grads.flatten(&components);
    let params = components.flat_params();
    let mut probe = components.clone();
    Ok(piecewise_relative_error(&analytic, &params, FD_STEP, |p| {
        probe.assign_flat(p).expect("same parameter count");
        probe.loss_and_grads(x, a, y, &mut rng).expect("validated shapes").0
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array1, Array2};
    use rand::Rng;

    fn small_config(kind: ModelKind, epochs: usize) -> TrainConfig {
        let mut cfg = TrainConfig::for_kind(kind);
        cfg.epochs = epochs;
        cfg.mu_layers = vec![8];
        cfg.tau_layers = vec![4];
        cfg.mu_dropout = 0.0;
        cfg.tau_dropout = 0.0;
        cfg
    }

    fn noise_data(n: usize, p: usize, seed: u64, outcome: impl Fn(f64, &mut ChaCha8Rng) -> f64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_simple_fn((n, p), || rng.random_range(-1.0..1.0));
        let a = Array1::from_shape_fn(n, |i| (i % 2) as f64);
        let y = a.mapv(|ai| outcome(ai, &mut rng));
        Dataset::new(x, a, y).unwrap()
    }

    #[test]
    fn tnn_requires_both_arms() {
        let x = Array2::from_shape_fn((6, 2), |(i, j)| (i + j) as f64);
        let d = Dataset::new(x, Array1::ones(6), Array1::zeros(6)).unwrap();
        let err = fit(ModelKind::Tnn, &d, &small_config(ModelKind::Tnn, 1)).unwrap_err();
        assert!(matches!(err, Error::Estimation(_)));
    }

    #[test]
    fn constant_outcome_tcnn() {
        let d = noise_data(200, 3, 1, |_, _| 7.5);
        let mut cfg = small_config(ModelKind::Tcnn, 1500);
        cfg.batch_size = 200;
        cfg.learning_rate = 1e-2;
        let model = fit(ModelKind::Tcnn, &d, &cfg).unwrap();
        let pred = model.robinson_predict(d.x(), d.treatment()).unwrap();
        assert!(pred.mu.iter().all(|&m| (m - 7.5).abs() < 0.05), "{:?}", pred.mu);
        assert!(pred.tau.iter().all(|&t| t.abs() < 0.05), "{:?}", pred.tau);
    }

    #[test]
    fn tnn_recovers_difference_in_means() {
        let delta = 2.0;
        let d = noise_data(400, 2, 2, |a, rng| 1.0 + delta * a + 0.1 * rng.random_range(-1.0..1.0));
        let mut cfg = small_config(ModelKind::Tnn, 60);
        cfg.batch_size = 64;
        cfg.learning_rate = 1e-2;
        let model = fit(ModelKind::Tnn, &d, &cfg).unwrap();
        let tau = model.predict_cate(d.x()).unwrap();
        let mean_tau = tau.mean().unwrap();
        assert!((mean_tau - delta).abs() < 0.1, "{mean_tau}");
    }

    #[test]
    fn fit_is_deterministic() {
        let d = noise_data(100, 2, 3, |a, rng| a + rng.random::<f64>());
        let mut cfg = small_config(ModelKind::Icnn, 3);
        cfg.mu_dropout = 0.2;
        cfg.tau_dropout = 0.2;
        let m1 = fit(ModelKind::Icnn, &d, &cfg).unwrap();
        let m2 = fit(ModelKind::Icnn, &d, &cfg).unwrap();
        assert_eq!(m1.components().flat_params(), m2.components().flat_params());
        assert_eq!(m1.loss_trace(), m2.loss_trace());
        assert_eq!(m1.loss_trace().len(), 3);
    }

    #[test]
    fn divergence_names_epoch() {
        let d = noise_data(50, 2, 4, |a, _| a * 1e200);
        let mut cfg = small_config(ModelKind::Rnn, 5);
        cfg.learning_rate = 1e3;
        // Standardization keeps the outcome finite; a huge learning rate with
        // an enormous l2 penalty still blows up quickly.
        cfg.l2_mu = 1e300;
        let err = fit(ModelKind::Rnn, &d, &cfg).unwrap_err();
        assert!(matches!(err, Error::Divergence { epoch: 0 }), "{err:?}");
    }

    #[test]
    fn grad_check_each_kind() {
        let d = noise_data(12, 3, 5, |a, rng| a + rng.random_range(-1.0..1.0));
        for kind in ModelKind::ALL {
            let mut cfg = small_config(kind, 1);
            cfg.l2_mu = 0.01;
            cfg.l2_tau = 0.02;
            let model = CausalModel::init(kind, 3, &cfg).unwrap();
            let err = model_grad_check(&model, d.x(), d.treatment(), d.outcome()).unwrap();
            assert!(err < 1e-5, "{kind}: {err}");
        }
    }
}
