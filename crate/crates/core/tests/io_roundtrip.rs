use ndarray::{Array1, Array2};
use proptest::prelude::*;

use tcnn::dgp::{simulate, DgpConfig};
use tcnn::io::{self, CsvSchema};
use tcnn::models::linspace;
use tcnn::uncertainty::score_bands;
use tcnn::{fit, Dataset, Effect, FeatureKind, ModelKind, TrainConfig, Truth};

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e6f64..1e6,
        any::<f64>().prop_filter("finite", |v| v.is_finite()),
        Just(0.0),
        Just(-0.0),
        Just(f64::MIN_POSITIVE),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dataset_csv_roundtrip_is_bit_exact(
        n in 1usize..20,
        p in 1usize..5,
        seed in any::<u64>(),
        cells in prop::collection::vec(finite(), 200),
        with_truth in any::<bool>(),
    ) {
        let take = |k: usize| cells[(k.wrapping_mul(31).wrapping_add(seed as usize)) % cells.len()];
        let x = Array2::from_shape_fn((n, p), |(i, j)| take(i * p + j));
        let a = Array1::from_shape_fn(n, |i| ((seed >> (i % 64)) & 1) as f64);
        let y = Array1::from_shape_fn(n, |i| take(100 + i));
        let kinds = vec![FeatureKind::Continuous; p];
        let mut d = Dataset::with_kinds(x, a, y, kinds).unwrap();
        if with_truth {
            d = d.with_truth(Truth {
                mu: Array1::from_shape_fn(n, |i| take(150 + i)),
                tau: Array1::from_shape_fn(n, |i| take(170 + i)),
                pi: Array1::from_shape_fn(n, |i| take(190 + i)),
            }).unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        io::save_dataset_csv(&d, &path, Some("round trip")).unwrap();
        let header = io::read_header(&path).unwrap();
        let mut schema = CsvSchema::infer(&header, "a", "y").unwrap();
        schema.kinds = Some(vec![FeatureKind::Continuous; p]);
        let back = io::load_csv(&path, &schema).unwrap();
        for (u, v) in d.x().iter().zip(back.x().iter()) {
            prop_assert_eq!(u.to_bits(), v.to_bits());
        }
        for (u, v) in d.outcome().iter().zip(back.outcome().iter()) {
            prop_assert_eq!(u.to_bits(), v.to_bits());
        }
        prop_assert_eq!(d.treatment(), back.treatment());
        prop_assert_eq!(d.truth(), back.truth());
    }
}

#[test]
fn simulated_dataset_roundtrip() {
    let d = simulate(&DgpConfig {
        n: 100,
        seed: 3,
        ..DgpConfig::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sim.csv");
    io::save_dataset_csv(&d, &path, None).unwrap();
    assert_eq!(io::load_dataset_csv(&path).unwrap(), d);
}

fn small_icnn(data: &Dataset, dropout: f64) -> tcnn::CausalModel {
    let mut cfg = TrainConfig::for_kind(ModelKind::Icnn);
    cfg.epochs = 3;
    cfg.mu_layers = vec![5];
    cfg.tau_layers = vec![5];
    cfg.mu_dropout = dropout;
    cfg.tau_dropout = dropout;
    fit(ModelKind::Icnn, data, &cfg).unwrap()
}

#[test]
fn scores_csv_structure_and_collapse() {
    let d = simulate(&DgpConfig {
        n: 120,
        p: 4,
        n_continuous: 2,
        seed: 1,
        ..DgpConfig::default()
    })
    .unwrap();
    let model = small_icnn(&d, 0.0);
    let grids: Vec<Vec<f64>> = vec![
        linspace(-1.0, 1.0, 7),
        linspace(-2.0, 2.0, 3),
        linspace(0.0, 1.0, 2),
        linspace(0.0, 1.0, 4),
    ];
    let mut scores = Vec::new();
    for effect in [Effect::Mu, Effect::Tau] {
        for (j, g) in grids.iter().enumerate() {
            scores.push(score_bands(&model, j, effect, g, 4, 0.95, 0).unwrap());
        }
    }
    let text = io::scores_to_csv(&scores, d.feature_names(), None).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("feature,kind,grid,mean,lower,upper"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2 * (7 + 3 + 2 + 4));
    for row in rows {
        let f: Vec<&str> = row.split(',').collect();
        assert!(f[1] == "mu" || f[1] == "tau");
        assert_eq!(f[3], f[4]);
        assert_eq!(f[4], f[5]);
    }
}

#[test]
fn model_file_roundtrip() {
    let d = simulate(&DgpConfig {
        n: 150,
        seed: 2,
        ..DgpConfig::default()
    })
    .unwrap();
    let model = small_icnn(&d, 0.1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.tcnn");
    io::save_model(&model, d.feature_names(), &path, Some("test")).unwrap();
    let (back, names) = io::load_model(&path).unwrap();
    assert_eq!(names, d.feature_names());
    assert_eq!(back.components().flat_params(), model.components().flat_params());
    assert_eq!(back.predict_cate(d.x()).unwrap(), model.predict_cate(d.x()).unwrap());
    assert_eq!(back.reference(), model.reference());
}

#[test]
fn actg_schema_loads_twelve_covariates() {
    let schema = CsvSchema::actg175("treat", "cd4_change");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("actg.csv");
    let mut text = String::from("pidnum,");
    text.push_str(&schema.covariates.join(","));
    text.push_str(",treat,cd4_change\n");
    for i in 0..6 {
        let bin = |k: usize| ((i + k) % 2).to_string();
        let row = [
            format!("{}", 100 + i),
            format!("{}", 30 + i),
            format!("{}", 70.5 + i as f64),
            bin(0),
            bin(1),
            bin(2),
            bin(3),
            bin(4),
            format!("{}", 100 * i),
            bin(5),
            bin(6),
            bin(7),
            bin(8),
            bin(9),
            format!("{}", -20.0 + 7.5 * i as f64),
        ];
        text.push_str(&row.join(","));
        text.push('\n');
    }
    std::fs::write(&path, text).unwrap();
    let d = io::load_csv(&path, &schema).unwrap();
    assert_eq!((d.n(), d.p()), (6, 12));
    assert_eq!(d.feature_names()[11], "karnof_hi");
    assert_eq!(d.feature_kinds()[7], FeatureKind::Continuous);
    assert_eq!(d.feature_kinds()[2], FeatureKind::Binary);
    let (c, t) = d.arm_counts();
    assert!(c > 0 && t > 0);
}
