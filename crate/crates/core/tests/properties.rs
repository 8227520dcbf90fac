use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tcnn::data::Standardization;
use tcnn::dgp::{simulate, DgpConfig};
use tcnn::models::Components;
use tcnn::nn::Mode;
use tcnn::uncertainty::{credible_band, posterior_arms, posterior_cate, quantile_sorted, DrawTarget, PosteriorDraws};
use tcnn::{fit, pehe, CausalModel, ModelKind, TrainConfig};

fn naive_pehe(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]) * (a[i] - b[i]);
    }
    (s / a.len() as f64).sqrt()
}

fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..60).prop_flat_map(|n| {
        (
            prop::collection::vec(-50.0f64..50.0, n),
            prop::collection::vec(-50.0f64..50.0, n),
        )
    })
}

/// A randomly initialized model of `kind` that counts as fitted.
fn random_model(kind: ModelKind, p: usize, dropout: f64, seed: u64) -> CausalModel {
    let mut cfg = TrainConfig::for_kind(kind);
    cfg.mu_layers = vec![6, 5];
    cfg.tau_layers = vec![4];
    cfg.mu_dropout = dropout;
    cfg.tau_dropout = dropout;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut components = Components::init(kind, p, &cfg, &mut rng).unwrap();
    if components.global_biases().is_some() {
        components.set_global_biases([rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
    }
    let x = Array2::from_shape_fn((30, p), |_| rng.random_range(-2.0..2.0));
    let st = Standardization {
        y_mean: 1.5,
        y_sd: 2.0,
        x_mean: vec![0.0; p],
        x_sd: vec![1.0; p],
    };
    CausalModel::from_components(components, st)
        .unwrap()
        .with_reference(x.view())
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pehe_matches_naive_loop((a, b) in pair()) {
        let fast = pehe(Array1::from(a.clone()).view(), Array1::from(b.clone()).view()).unwrap();
        prop_assert!((fast - naive_pehe(&a, &b)).abs() <= 1e-12 * (1.0 + fast));
    }

    #[test]
    fn pehe_symmetric_and_shift_invariant((a, b) in pair(), c in -100.0f64..100.0) {
        let (va, vb) = (Array1::from(a), Array1::from(b));
        let ab = pehe(va.view(), vb.view()).unwrap();
        prop_assert_eq!(ab, pehe(vb.view(), va.view()).unwrap());
        let shifted = pehe((&va + c).view(), (&vb + c).view()).unwrap();
        prop_assert!((shifted - ab).abs() <= 1e-9 * (1.0 + ab));
    }

    #[test]
    fn pehe_permutation_invariant((a, b) in pair(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut idx: Vec<usize> = (0..a.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let pa: Vec<f64> = idx.iter().map(|&i| a[i]).collect();
        let pb: Vec<f64> = idx.iter().map(|&i| b[i]).collect();
        let base = pehe(Array1::from(a).view(), Array1::from(b).view()).unwrap();
        let perm = pehe(Array1::from(pa).view(), Array1::from(pb).view()).unwrap();
        prop_assert!((base - perm).abs() <= 1e-12 * (1.0 + base));
    }

    #[test]
    fn bands_nest(values in prop::collection::vec(-10.0f64..10.0, 2..80), l1 in 0.05f64..0.9, dl in 0.01f64..0.09) {
        let s = values.len();
        let draws = PosteriorDraws { samples: Array2::from_shape_vec((s, 1), values).unwrap(), target: DrawTarget::Cate };
        let inner = credible_band(&draws, l1).unwrap();
        let outer = credible_band(&draws, l1 + dl).unwrap();
        prop_assert!(outer.lower[0] <= inner.lower[0] && inner.upper[0] <= outer.upper[0]);
        prop_assert!(inner.lower[0] <= inner.upper[0]);
    }

    #[test]
    fn quantile_within_range(mut values in prop::collection::vec(-1e3f64..1e3, 1..50), q in 0.0f64..=1.0) {
        values.sort_by(f64::total_cmp);
        let v = quantile_sorted(&values, q);
        prop_assert!(values[0] <= v && v <= values[values.len() - 1]);
    }

    #[test]
    fn robinson_consistency(kind_idx in 0usize..4, seed in any::<u64>()) {
        let kind = [ModelKind::Rnn, ModelKind::Rnam, ModelKind::Tcnn, ModelKind::Icnn][kind_idx];
        let model = random_model(kind, 3, 0.0, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let x = Array2::from_shape_fn((12, 3), |_| rng.random_range(-3.0..3.0));
        let ones = model.robinson_predict(x.view(), Array1::ones(12).view()).unwrap();
        let zeros = model.robinson_predict(x.view(), Array1::zeros(12).view()).unwrap();
        let cate = model.predict_cate(x.view()).unwrap();
        for i in 0..12 {
            let diff = ones.y_hat[i] - zeros.y_hat[i];
            prop_assert!((diff - cate[i]).abs() <= 4.0 * f64::EPSILON * (1.0 + ones.y_hat[i].abs()));
            prop_assert_eq!(zeros.y_hat[i], zeros.mu[i]);
        }
    }

    #[test]
    fn icnn_additive_consistency(seed in any::<u64>(), p in 1usize..5) {
        let model = random_model(ModelKind::Icnn, p, 0.0, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        let x = Array2::from_shape_fn((9, p), |_| rng.random_range(-3.0..3.0));
        let a = Array1::from_shape_fn(9, |i| (i % 2) as f64);
        let out = model.icnn_forward(x.view(), a.view(), Mode::Eval, &mut rng).unwrap();
        for i in 0..9 {
            let tau: f64 = out.tau_bias + out.tau_parts.row(i).sum();
            let mu: f64 = out.mu_bias + out.mu_parts.row(i).sum();
            prop_assert!((tau - out.tau[i]).abs() <= 1e-12 * (1.0 + tau.abs()));
            prop_assert!((mu - out.mu[i]).abs() <= 1e-12 * (1.0 + mu.abs()));
        }
    }
}

#[test]
fn zero_dropout_bands_collapse() {
    for kind in ModelKind::ALL {
        let model = random_model(kind, 3, 0.0, 5);
        let x = Array2::from_shape_fn((7, 3), |(i, j)| (i as f64 - 3.0) * 0.4 + j as f64 * 0.1);
        let band = credible_band(&posterior_cate(&model, x.view(), 5, 9).unwrap(), 0.9).unwrap();
        let point = model.predict_cate(x.view()).unwrap();
        for i in 0..7 {
            assert_eq!(band.lower[i], band.upper[i], "{kind}");
            assert_eq!(band.mean[i], point[i], "{kind}");
        }
    }
}

#[test]
fn tau_dropout_produces_spread() {
    let data = simulate(&DgpConfig {
        n: 300,
        seed: 4,
        ..DgpConfig::default()
    })
    .unwrap();
    let mut cfg = TrainConfig::for_kind(ModelKind::Tcnn);
    cfg.epochs = 20;
    cfg.tau_dropout = 0.2;
    let model = fit(ModelKind::Tcnn, &data, &cfg).unwrap();
    let draws = posterior_cate(&model, data.x().slice(ndarray::s![..20, ..]), 50, 1).unwrap();
    for col in draws.samples.columns() {
        let mean = col.mean().unwrap();
        let sd = col.mapv(|v| (v - mean).powi(2)).mean().unwrap().sqrt();
        assert!(sd > 0.0);
    }
}

#[test]
fn tnn_variance_identity() {
    let data = simulate(&DgpConfig {
        n: 400,
        seed: 8,
        ..DgpConfig::default()
    })
    .unwrap();
    let mut cfg = TrainConfig::for_kind(ModelKind::Tnn);
    cfg.epochs = 15;
    cfg.mu_dropout = 0.2;
    let model = fit(ModelKind::Tnn, &data, &cfg).unwrap();
    let x = data.x().slice(ndarray::s![..25, ..]).to_owned();
    let s = 400;
    let cate = posterior_cate(&model, x.view(), s, 3).unwrap();
    let (f1, f0) = posterior_arms(&model, x.view(), s, 3).unwrap();
    let var = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
    };
    for j in 0..x.nrows() {
        let a: Vec<f64> = f1.samples.column(j).to_vec();
        let b: Vec<f64> = f0.samples.column(j).to_vec();
        let d: Vec<f64> = cate.samples.column(j).to_vec();
        // The CATE draws are the arm differences of the same sampled networks.
        for k in 0..s {
            assert!((d[k] - (a[k] - b[k])).abs() <= 1e-9 * (1.0 + a[k].abs()));
        }
        let ma = a.iter().sum::<f64>() / s as f64;
        let mb = b.iter().sum::<f64>() / s as f64;
        let cov = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (s - 1) as f64;
        let lhs = var(&d);
        let rhs = var(&a) + var(&b) - 2.0 * cov;
        // Exact for sample moments; the tolerance covers rounding only, far
        // inside the MC sampling error sqrt(2/S)·Var.
        assert!((lhs - rhs).abs() <= 1e-8 * (1.0 + lhs), "{lhs} vs {rhs}");
        assert!(lhs > 0.0);
    }
}
