//! Root-PEHE, train/test splitting and the replicated benchmark harness.

use std::fmt::Write as _;

use ndarray::ArrayView1;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::Dataset;
use crate::dgp::{simulate, DgpConfig};
use crate::error::{Error, Result};
use crate::models::{fit, CausalModel, ModelKind, TrainConfig};
use crate::uncertainty::{credible_band, posterior_cate, CredibleBand};

/// `sqrt(mean((τ̂ − τ)²))`.
pub fn pehe(tau_hat: ArrayView1<f64>, tau_true: ArrayView1<f64>) -> Result<f64> {
    if tau_hat.len() != tau_true.len() {
        return Err(Error::Input(format!(
            "{} estimates for {} true effects",
            tau_hat.len(),
            tau_true.len()
        )));
    }
    if tau_hat.is_empty() {
        return Err(Error::Input("pehe of an empty vector".into()));
    }
    let diff = &tau_hat - &tau_true;
    Ok((diff.dot(&diff) / diff.len() as f64).sqrt())
}

/// Uniformly permutes rows and cuts at `round(train_frac · N)`. Permutations
/// leaving an arm empty in the training part are redrawn (up to 100 times).
pub fn split<R: rand::Rng + ?Sized>(data: &Dataset, train_frac: f64, rng: &mut R) -> Result<(Dataset, Dataset)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must lie in (0, 1), got {train_frac}"
        )));
    }
    let n = data.n();
    let n_train = (train_frac * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::Estimation(format!(
            "a {train_frac} split of {n} rows leaves one side empty"
        )));
    }
    let a = data.treatment();
    let mut idx: Vec<usize> = (0..n).collect();
    for _ in 0..100 {
        idx.shuffle(rng);
        let treated = idx[..n_train].iter().filter(|&&i| a[i] == 1.0).count();
        if treated > 0 && treated < n_train {
            return Ok((data.select(&idx[..n_train]), data.select(&idx[n_train..])));
        }
    }
    Err(Error::Estimation(
        "could not draw a training split containing both treatment arms".into(),
    ))
}

/// Anything the benchmark can score: fits on `train` and returns CATE
/// estimates for the training and test rows.
pub trait CateEstimator: Sync {
    fn name(&self) -> String;

    fn fit_predict(&self, train: &Dataset, test: &Dataset, seed: u64) -> Result<(Vec<f64>, Vec<f64>)>;
}

/// One of the neural models with its training configuration. The
/// configuration's seed is replaced by the replication's seed.
#[derive(Debug, Clone)]
pub struct NeuralEstimator {
    pub kind: ModelKind,
    pub config: TrainConfig,
}

impl NeuralEstimator {
    pub fn new(kind: ModelKind) -> Self {
        NeuralEstimator {
            kind,
            config: TrainConfig::for_kind(kind),
        }
    }
}

impl CateEstimator for NeuralEstimator {
    fn name(&self) -> String {
        self.kind.label().to_string()
    }

    fn fit_predict(&self, train: &Dataset, test: &Dataset, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
        let config = TrainConfig {
            seed,
            ..self.config.clone()
        };
        let model = fit(self.kind, train, &config)?;
        Ok((
            model.predict_cate(train.x())?.to_vec(),
            model.predict_cate(test.x())?.to_vec(),
        ))
    }
}

/// Where each replication's data comes from.
#[derive(Debug, Clone)]
pub enum DataSource {
    /// A fresh simulated dataset per replication (the config's seed is
    /// replaced by the replication seed).
    Simulate(DgpConfig),
    /// A fixed dataset with truth, re-split per replication.
    Fixed(Dataset),
}

#[derive(Debug, Clone)]
pub struct BenchmarkConfig {
    pub reps: usize,
    pub base_seed: u64,
    pub train_frac: f64,
    /// Use the same seed for every replication (harness self-checks).
    pub fixed_seed: bool,
    /// Run replications on the rayon pool.
    pub parallel: bool,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            reps: 20,
            base_seed: 0,
            train_frac: 0.7,
            fixed_seed: false,
            parallel: true,
        }
    }
}

/// Per-model summary over replications.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSummary {
    pub name: String,
    pub train_pehe: Vec<f64>,
    pub test_pehe: Vec<f64>,
    pub train_mean: f64,
    pub train_mcerr: f64,
    pub test_mean: f64,
    pub test_mcerr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub reps: usize,
    pub models: Vec<ModelSummary>,
    pub digest: String,
    /// Divergences that were recovered by resampling: `(model, seed)`.
    pub resampled: Vec<(String, u64)>,
}

impl BenchmarkReport {
    pub fn model(&self, name: &str) -> Option<&ModelSummary> {
        self.models.iter().find(|m| m.name == name)
    }

    /// Aligned plain-text table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<8} {:>20} {:>20}",
            "model", "train sqrt(PEHE)", "test sqrt(PEHE)"
        );
        for m in &self.models {
            let _ = writeln!(
                out,
                "{:<8} {:>11.3} ± {:<6.3} {:>11.3} ± {:<6.3}",
                m.name, m.train_mean, m.train_mcerr, m.test_mean, m.test_mcerr
            );
        }
        let _ = writeln!(out, "replications: {}  config: {}", self.reps, self.digest);
        out
    }

    /// CSV with header `model,split,mean,mcerr`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,split,mean,mcerr\n");
        for m in &self.models {
            let _ = writeln!(out, "{},train,{:?},{:?}", m.name, m.train_mean, m.train_mcerr);
            let _ = writeln!(out, "{},test,{:?},{:?}", m.name, m.test_mean, m.test_mcerr);
        }
        out
    }
}

/// Mean and `1.96 · sd / √B` of per-replication values.
pub fn mean_and_mcerr(values: &[f64]) -> (f64, f64) {
    let b = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = crate::uncertainty::shifted_mean(values.iter().copied());
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b - 1.0);
    (mean, 1.96 * var.sqrt() / b.sqrt())
}

/// SplitMix64 finalizer; decorrelates consecutive seeds.
pub fn mix_seed(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Replication {
    train: Vec<f64>,
    test: Vec<f64>,
    resampled: Vec<(String, u64)>,
}

fn run_replication(
    estimators: &[&dyn CateEstimator],
    source: &DataSource,
    train_frac: f64,
    seed: u64,
) -> Result<Replication> {
    let attempt = |seed: u64| -> Result<Result<(Vec<f64>, Vec<f64>), (String, Error)>> {
        let data = match source {
            DataSource::Simulate(cfg) => simulate(&DgpConfig { seed, ..cfg.clone() })?,
            DataSource::Fixed(d) => d.clone(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed ^ 0x5711));
        let (train, test) = split(&data, train_frac, &mut rng)?;
        let (Some(train_truth), Some(test_truth)) = (train.truth(), test.truth()) else {
            return Err(Error::Input("benchmark data has no ground-truth CATE".into()));
        };
        let mut tr = Vec::with_capacity(estimators.len());
        let mut te = Vec::with_capacity(estimators.len());
        for (k, est) in estimators.iter().enumerate() {
            let model_seed = mix_seed(seed.wrapping_add(k as u64 + 1));
            match est.fit_predict(&train, &test, model_seed) {
                Ok((tau_train, tau_test)) => {
                    tr.push(pehe(ArrayView1::from(&tau_train), train_truth.tau.view())?);
                    te.push(pehe(ArrayView1::from(&tau_test), test_truth.tau.view())?);
                }
                Err(e @ Error::Divergence { .. }) => return Ok(Err((est.name(), e))),
                Err(e) => return Err(e),
            }
        }
        Ok(Ok((tr, te)))
    };

    match attempt(seed)? {
        Ok((train, test)) => Ok(Replication {
            train,
            test,
            resampled: Vec::new(),
        }),
        Err((model, _)) => {
            let retry = mix_seed(seed ^ 0xD1CE);
            match attempt(retry)? {
                Ok((train, test)) => Ok(Replication {
                    train,
                    test,
                    resampled: vec![(model, seed)],
                }),
                Err((model, source)) => Err(Error::Benchmark {
                    model,
                    seed: retry,
                    source: Box::new(source),
                }),
            }
        }
    }
}

/// Runs `reps` replications: draw data, split, fit every estimator on the
/// training part and score root-PEHE on both parts. Within a replication all
/// estimators see the same data.
pub fn run_benchmark_with(
    estimators: &[&dyn CateEstimator],
    source: &DataSource,
    config: &BenchmarkConfig,
) -> Result<BenchmarkReport> {
    if config.reps < 2 {
        return Err(Error::Config(format!(
            "need at least 2 replications, got {}",
            config.reps
        )));
    }
    if estimators.is_empty() {
        return Err(Error::Config("no estimators to benchmark".into()));
    }
    let seed_of = |b: usize| {
        if config.fixed_seed {
            mix_seed(config.base_seed)
        } else {
            mix_seed(config.base_seed.wrapping_add(b as u64))
        }
    };
    let run = |b: usize| run_replication(estimators, source, config.train_frac, seed_of(b));
    let reps: Vec<Replication> = if config.parallel {
        (0..config.reps).into_par_iter().map(run).collect::<Result<_>>()?
    } else {
        (0..config.reps).map(run).collect::<Result<_>>()?
    };

    let models = estimators
        .iter()
        .enumerate()
        .map(|(k, est)| {
            let train_pehe: Vec<f64> = reps.iter().map(|r| r.train[k]).collect();
            let test_pehe: Vec<f64> = reps.iter().map(|r| r.test[k]).collect();
            let (train_mean, train_mcerr) = mean_and_mcerr(&train_pehe);
            let (test_mean, test_mcerr) = mean_and_mcerr(&test_pehe);
            ModelSummary {
                name: est.name(),
                train_pehe,
                test_pehe,
                train_mean,
                train_mcerr,
                test_mean,
                test_mcerr,
            }
        })
        .collect();

    let digest_src = format!(
        "{:?}|{}|{}|{}|{}|{:?}",
        estimators.iter().map(|e| e.name()).collect::<Vec<_>>(),
        config.reps,
        config.base_seed,
        config.train_frac,
        config.fixed_seed,
        match source {
            DataSource::Simulate(c) => format!("{c:?}"),
            DataSource::Fixed(d) => format!("fixed n={} p={}", d.n(), d.p()),
        }
    );
    Ok(BenchmarkReport {
        reps: config.reps,
        models,
        digest: format!("{:016x}", fnv1a(digest_src.as_bytes())),
        resampled: reps.into_iter().flat_map(|r| r.resampled).collect(),
    })
}

/// Benchmark of the neural model kinds with their given configurations.
pub fn run_benchmark(
    kinds: &[(ModelKind, TrainConfig)],
    source: &DataSource,
    config: &BenchmarkConfig,
) -> Result<BenchmarkReport> {
    let estimators: Vec<NeuralEstimator> = kinds
        .iter()
        .map(|(kind, cfg)| NeuralEstimator {
            kind: *kind,
            config: cfg.clone(),
        })
        .collect();
    let refs: Vec<&dyn CateEstimator> = estimators.iter().map(|e| e as &dyn CateEstimator).collect();
    run_benchmark_with(&refs, source, config)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Fraction of true CATE values inside their credible interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coverage {
    pub coverage: f64,
    pub mean_width: f64,
}

pub fn band_coverage(band: &CredibleBand, truth: ArrayView1<f64>) -> Result<Coverage> {
    if band.lower.len() != truth.len() || truth.is_empty() {
        return Err(Error::Input("band and truth lengths differ or are empty".into()));
    }
    let hits = truth.iter().enumerate().filter(|&(i, &t)| band.contains(i, t)).count();
    let n = truth.len() as f64;
    Ok(Coverage {
        coverage: hits as f64 / n,
        mean_width: band.widths().sum::<f64>() / n,
    })
}

/// MC-dropout coverage of the true CATE on `data`.
pub fn coverage_report(model: &CausalModel, data: &Dataset, level: f64, draws: usize, seed: u64) -> Result<Coverage> {
    let truth = data
        .truth()
        .ok_or_else(|| Error::Input("coverage needs a dataset with ground truth".into()))?;
    let posterior = posterior_cate(model, data.x(), draws, seed)?;
    let band = credible_band(&posterior, level)?;
    band_coverage(&band, truth.tau.view())
}
