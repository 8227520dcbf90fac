//! The `tcnn` command line.
//!
//! Settings come from an optional `key=value` file (`--config`) overridden by
//! flags. Every file the tool writes starts with a `#` line echoing the
//! effective settings.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::data::Dataset;
use crate::dgp::{simulate, DgpConfig};
use crate::error::{Error, Result};
use crate::evaluation::{run_benchmark, BenchmarkConfig, DataSource};
use crate::io::{self, CsvSchema};
use crate::models::{fit, linspace, Effect, ModelKind, ScoreFunction, TrainConfig};
use crate::uncertainty::{credible_band, posterior_cate, score_bands};

#[derive(Debug, Parser)]
#[command(
    name = "tcnn",
    version,
    about = "Neural CATE estimation with targeted and interpretable causal networks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic dataset with known effects.
    Simulate(SimulateArgs),
    /// Fit one model and save it.
    Train(TrainArgs),
    /// Replicated root-PEHE comparison of model kinds.
    Benchmark(BenchmarkArgs),
    /// Export ICNN score functions with MC-dropout bands.
    Scores(ScoresArgs),
    /// Predict CATE for new covariates.
    Predict(PredictArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub n_continuous: Option<usize>,
    #[arg(long)]
    pub noise_var: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Training hyper-parameters shared by `train` and `benchmark`.
#[derive(Debug, Args, Default)]
pub struct TrainFlags {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Comma-separated hidden widths, e.g. `50,50`.
    #[arg(long)]
    pub mu_layers: Option<String>,
    #[arg(long)]
    pub tau_layers: Option<String>,
    #[arg(long)]
    pub mu_dropout: Option<f64>,
    #[arg(long)]
    pub tau_dropout: Option<f64>,
    #[arg(long)]
    pub l2_mu: Option<f64>,
    #[arg(long)]
    pub l2_tau: Option<f64>,
}

impl TrainFlags {
    fn entries(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let mut put = |k: &'static str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k, v));
            }
        };
        put("epochs", self.epochs.map(|v| v.to_string()));
        put("batch_size", self.batch_size.map(|v| v.to_string()));
        put("learning_rate", self.learning_rate.map(|v| v.to_string()));
        put("mu_layers", self.mu_layers.clone());
        put("tau_layers", self.tau_layers.clone());
        put("mu_dropout", self.mu_dropout.map(|v| v.to_string()));
        put("tau_dropout", self.tau_dropout.map(|v| v.to_string()));
        put("l2_mu", self.l2_mu.map(|v| v.to_string()));
        put("l2_tau", self.l2_tau.map(|v| v.to_string()));
        out
    }
}

/// How to read a dataset file.
#[derive(Debug, Args)]
pub struct DataFlags {
    /// Column layout: `auto` (covariates = all other columns) or `actg175`.
    #[arg(long, default_value = "auto")]
    pub schema: String,
    #[arg(long, default_value = io::TREATMENT_COLUMN)]
    pub treatment_col: String,
    #[arg(long, default_value = io::OUTCOME_COLUMN)]
    pub outcome_col: String,
}

impl DataFlags {
    pub fn load(&self, path: &Path) -> Result<Dataset> {
        let schema = match self.schema.as_str() {
            "auto" => CsvSchema::infer(&io::read_header(path)?, &self.treatment_col, &self.outcome_col)?,
            "actg175" => CsvSchema::actg175(&self.treatment_col, &self.outcome_col),
            other => {
                return Err(Error::Config(format!(
                    "unknown schema `{other}` (expected auto or actg175)"
                )))
            }
        };
        io::load_csv(path, &schema)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub model: ModelKind,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_model: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub train: TrainFlags,
    #[command(flatten)]
    pub data_flags: DataFlags,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// CSV report (`model,split,mean,mcerr`); the table goes to stdout.
    #[arg(long)]
    pub out_report: PathBuf,
    /// Benchmark on a fixed dataset with truth columns instead of simulating.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Comma-separated model kinds; all six by default.
    #[arg(long)]
    pub models: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub train_frac: Option<f64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Debug, Args)]
pub struct ScoresArgs {
    #[arg(long)]
    pub model_file: PathBuf,
    /// Shared grid bounds; by default each feature spans its training range.
    #[arg(long, requires = "grid_max", allow_negative_numbers = true)]
    pub grid_min: Option<f64>,
    #[arg(long, requires = "grid_min", allow_negative_numbers = true)]
    pub grid_max: Option<f64>,
    #[arg(long, default_value_t = 100)]
    pub grid_points: usize,
    #[arg(long, default_value_t = 200)]
    pub draws: usize,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model_file: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// With at least 2 draws, adds MC-dropout `lower`/`upper` columns.
    #[arg(long, default_value_t = 0)]
    pub draws: usize,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code: 0 on success, 2 on usage errors, 1 otherwise.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn execute(command: &Command) -> Result<()> {
    match command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Train(args) => cmd_train(args),
        Command::Benchmark(args) => cmd_benchmark(args),
        Command::Scores(args) => cmd_scores(args),
        Command::Predict(args) => cmd_predict(args),
    }
}

fn settings(config: Option<&Path>, flags: Vec<(&str, String)>) -> Result<BTreeMap<String, String>> {
    let mut map = match config {
        Some(path) => io::load_config(path)?,
        None => BTreeMap::new(),
    };
    for (k, v) in flags {
        map.insert(k.to_string(), v);
    }
    Ok(map)
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_layers(key: &str, value: &str) -> Result<Vec<usize>> {
    value.split(',').map(|w| parse_value(key, w.trim())).collect()
}

const TRAIN_KEYS: [&str; 10] = [
    "epochs",
    "batch_size",
    "learning_rate",
    "mu_layers",
    "tau_layers",
    "mu_dropout",
    "tau_dropout",
    "l2_mu",
    "l2_tau",
    "seed",
];

/// Applies the training keys of `map` to `config`.
pub fn apply_train_settings(config: &mut TrainConfig, map: &BTreeMap<String, String>) -> Result<()> {
    for (key, value) in map {
        match key.as_str() {
            "epochs" => config.epochs = parse_value(key, value)?,
            "batch_size" => config.batch_size = parse_value(key, value)?,
            "learning_rate" => config.learning_rate = parse_value(key, value)?,
            "mu_layers" => config.mu_layers = parse_layers(key, value)?,
            "tau_layers" => config.tau_layers = parse_layers(key, value)?,
            "mu_dropout" => config.mu_dropout = parse_value(key, value)?,
            "tau_dropout" => config.tau_dropout = parse_value(key, value)?,
            "l2_mu" => config.l2_mu = parse_value(key, value)?,
            "l2_tau" => config.l2_tau = parse_value(key, value)?,
            "seed" => config.seed = parse_value(key, value)?,
            _ => {}
        }
    }
    Ok(())
}

fn reject_unknown(map: &BTreeMap<String, String>, allowed: &[&str]) -> Result<()> {
    match map.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(Error::Config(format!("unknown setting `{k}`"))),
        None => Ok(()),
    }
}

fn join_layers(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn describe_train(kind: ModelKind, c: &TrainConfig) -> String {
    format!(
        "model={kind} epochs={} batch_size={} learning_rate={} mu_layers={} tau_layers={} mu_dropout={} tau_dropout={} l2_mu={} l2_tau={} seed={}",
        c.epochs,
        c.batch_size,
        c.learning_rate,
        join_layers(&c.mu_layers),
        join_layers(&c.tau_layers),
        c.mu_dropout,
        c.tau_dropout,
        c.l2_mu,
        c.l2_tau,
        c.seed
    )
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let mut flags = Vec::new();
    if let Some(v) = args.n {
        flags.push(("n", v.to_string()));
    }
    if let Some(v) = args.p {
        flags.push(("p", v.to_string()));
    }
    if let Some(v) = args.n_continuous {
        flags.push(("n_continuous", v.to_string()));
    }
    if let Some(v) = args.noise_var {
        flags.push(("noise_var", v.to_string()));
    }
    if let Some(v) = args.seed {
        flags.push(("seed", v.to_string()));
    }
    let map = settings(args.config.as_deref(), flags)?;
    reject_unknown(&map, &["n", "p", "n_continuous", "noise_var", "seed"])?;
    let config = dgp_config(&map)?;
    let data = simulate(&config)?;
    let comment = format!(
        "tcnn simulate n={} p={} n_continuous={} noise_var={} seed={}",
        config.n, config.p, config.n_continuous, config.noise_var, config.seed
    );
    io::save_dataset_csv(&data, &args.out, Some(&comment))
}

fn dgp_config(map: &BTreeMap<String, String>) -> Result<DgpConfig> {
    let mut c = DgpConfig::default();
    for (key, value) in map {
        match key.as_str() {
            "n" => c.n = parse_value(key, value)?,
            "p" => c.p = parse_value(key, value)?,
            "n_continuous" => c.n_continuous = parse_value(key, value)?,
            "noise_var" => c.noise_var = parse_value(key, value)?,
            "seed" => c.seed = parse_value(key, value)?,
            _ => {}
        }
    }
    // Keep the continuous/binary split proportional when only p is given.
    if !map.contains_key("n_continuous") && map.contains_key("p") {
        c.n_continuous = c.p / 2;
    }
    c.validate()?;
    Ok(c)
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let mut flags = args.train.entries();
    if let Some(seed) = args.seed {
        flags.push(("seed", seed.to_string()));
    }
    let map = settings(args.config.as_deref(), flags)?;
    reject_unknown(&map, &TRAIN_KEYS)?;
    let mut config = TrainConfig::for_kind(args.model);
    apply_train_settings(&mut config, &map)?;

    let data = args.data_flags.load(&args.data)?;
    let model = fit(args.model, &data, &config)?;
    let comment = format!("tcnn train {}", describe_train(args.model, &config));
    io::save_model(&model, data.feature_names(), &args.out_model, Some(&comment))
}

fn cmd_benchmark(args: &BenchmarkArgs) -> Result<()> {
    let mut flags = args.train.entries();
    for (key, value) in [
        ("reps", args.reps.map(|v| v.to_string())),
        ("seed", args.seed.map(|v| v.to_string())),
        ("models", args.models.clone()),
        ("n", args.n.map(|v| v.to_string())),
        ("p", args.p.map(|v| v.to_string())),
        ("train_frac", args.train_frac.map(|v| v.to_string())),
    ] {
        if let Some(v) = value {
            flags.push((key, v));
        }
    }
    let map = settings(args.config.as_deref(), flags)?;
    let mut allowed = TRAIN_KEYS.to_vec();
    allowed.extend(["reps", "models", "n", "p", "n_continuous", "noise_var", "train_frac"]);
    reject_unknown(&map, &allowed)?;

    let mut bench = BenchmarkConfig::default();
    if let Some(v) = map.get("reps") {
        bench.reps = parse_value("reps", v)?;
    }
    if let Some(v) = map.get("seed") {
        bench.base_seed = parse_value("seed", v)?;
    }
    if let Some(v) = map.get("train_frac") {
        bench.train_frac = parse_value("train_frac", v)?;
    }
    let kinds: Vec<ModelKind> = match map.get("models") {
        Some(list) => list.split(',').map(|k| k.trim().parse()).collect::<Result<_>>()?,
        None => ModelKind::ALL.to_vec(),
    };
    // The replication seed replaces `seed` for each fit.
    let mut train_map = map.clone();
    train_map.remove("seed");
    let configs = kinds
        .iter()
        .map(|&k| {
            let mut c = TrainConfig::for_kind(k);
            apply_train_settings(&mut c, &train_map)?;
            c.validate(k)?;
            Ok((k, c))
        })
        .collect::<Result<Vec<_>>>()?;

    let source = match &args.data {
        Some(path) => {
            let data = io::load_dataset_csv(path)?;
            if data.truth().is_none() {
                return Err(Error::Input(format!(
                    "{} has no truth columns; benchmarking needs mu_true, tau_true, pi_true",
                    path.display()
                )));
            }
            DataSource::Fixed(data)
        }
        None => {
            let mut dgp_map = map.clone();
            dgp_map.retain(|k, _| ["n", "p", "n_continuous", "noise_var"].contains(&k.as_str()));
            DataSource::Simulate(dgp_config(&dgp_map)?)
        }
    };

    let report = run_benchmark(&configs, &source, &bench)?;
    print!("{}", report.to_table());
    for (model, seed) in &report.resampled {
        eprintln!("note: {model} diverged at seed {seed}; replication resampled");
    }
    let settings_line = map
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(" ");
    let text = format!(
        "# tcnn benchmark reps={} seed={} train_frac={} digest={} {settings_line}\n{}",
        bench.reps,
        bench.base_seed,
        bench.train_frac,
        report.digest,
        report.to_csv()
    );
    std::fs::write(&args.out_report, text).map_err(|e| Error::io(&args.out_report, e))
}

fn cmd_scores(args: &ScoresArgs) -> Result<()> {
    let (model, names) = io::load_model(&args.model_file)?;
    if model.kind() != ModelKind::Icnn {
        return Err(Error::Unsupported(format!(
            "score functions require icnn, got {}",
            model.kind()
        )));
    }
    if args.grid_points < 2 {
        return Err(Error::Config("grid needs at least 2 points".into()));
    }
    let grids = match (args.grid_min, args.grid_max) {
        (Some(lo), Some(hi)) => {
            if !(lo < hi) {
                return Err(Error::Config(format!("grid_min ({lo}) must be below grid_max ({hi})")));
            }
            vec![linspace(lo, hi, args.grid_points); model.p()]
        }
        _ => model.default_grids(args.grid_points)?,
    };
    let mut scores: Vec<ScoreFunction> = Vec::with_capacity(2 * model.p());
    for effect in [Effect::Mu, Effect::Tau] {
        for (j, grid) in grids.iter().enumerate() {
            let seed = args
                .seed
                .wrapping_add(((effect == Effect::Tau) as u64) << 32 | j as u64);
            scores.push(score_bands(&model, j, effect, grid, args.draws, args.level, seed)?);
        }
    }
    let comment = format!(
        "tcnn scores model={} grid_points={} draws={} level={} seed={}{}",
        args.model_file.display(),
        args.grid_points,
        args.draws,
        args.level,
        args.seed,
        match (args.grid_min, args.grid_max) {
            (Some(lo), Some(hi)) => format!(" grid_min={lo} grid_max={hi}"),
            _ => " grid=training-range".into(),
        }
    );
    io::save_scores_csv(&scores, &names, &args.out, Some(&comment))
}

fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let (model, names) = io::load_model(&args.model_file)?;
    let x = io::load_features(&args.data, &names)?;
    let tau = model.predict_cate(x.view())?.to_vec();
    let comment = format!(
        "tcnn predict model={} kind={} draws={} level={} seed={}",
        args.model_file.display(),
        model.kind(),
        args.draws,
        args.level,
        args.seed
    );
    if args.draws == 0 {
        return io::save_columns_csv(&args.out, &[("tau_hat", &tau)], Some(&comment));
    }
    let posterior = posterior_cate(&model, x.view(), args.draws, args.seed)?;
    let band = credible_band(&posterior, args.level)?;
    io::save_columns_csv(
        &args.out,
        &[
            ("tau_hat", &tau),
            ("mean", &band.mean),
            ("lower", &band.lower),
            ("upper", &band.upper),
        ],
        Some(&comment),
    )
}
