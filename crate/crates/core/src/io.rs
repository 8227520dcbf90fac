//! CSV datasets, score-function export, model files and `key=value` configs.
//!
//! Dataset files have a header row; lines starting with `#` are comments.
//! Numbers are written with Rust's shortest round-trip formatting, so a
//! save/load cycle reproduces every value bit for bit.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::data::{Dataset, FeatureKind, Truth};
use crate::error::{Error, Result};
use crate::models::{CausalModel, ScoreFunction};

pub const TREATMENT_COLUMN: &str = "a";
pub const OUTCOME_COLUMN: &str = "y";
pub const TRUTH_COLUMNS: [&str; 3] = ["mu_true", "tau_true", "pi_true"];

/// Column layout of a dataset file.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvSchema {
    pub covariates: Vec<String>,
    /// Per-covariate kind; `None` infers it from the values.
    pub kinds: Option<Vec<FeatureKind>>,
    pub treatment: String,
    pub outcome: String,
    /// `(mu, tau, pi)` truth columns, read when all three are present.
    pub truth: Option<[String; 3]>,
}

impl CsvSchema {
    /// Schema implied by a header: the treatment and outcome columns by name,
    /// truth columns if all three are present, everything else a covariate.
    pub fn infer(header: &[String], treatment: &str, outcome: &str) -> Result<Self> {
        for required in [treatment, outcome] {
            if !header.iter().any(|h| h == required) {
                return Err(Error::Parse {
                    row: 1,
                    column: required.to_string(),
                    message: "column missing from header".into(),
                });
            }
        }
        let has_truth = TRUTH_COLUMNS.iter().all(|t| header.iter().any(|h| h == t));
        let covariates = header
            .iter()
            .filter(|h| *h != treatment && *h != outcome && !(has_truth && TRUTH_COLUMNS.contains(&h.as_str())))
            .cloned()
            .collect();
        Ok(CsvSchema {
            covariates,
            kinds: None,
            treatment: treatment.to_string(),
            outcome: outcome.to_string(),
            truth: has_truth.then(|| TRUTH_COLUMNS.map(String::from)),
        })
    }

    /// The twelve ACTG-175 covariates. `age`, `wtkg` and `preanti` are
    /// continuous, the rest binary. The outcome is the precomputed CD4 change.
    pub fn actg175(treatment: &str, outcome: &str) -> Self {
        let cols = [
            ("age", FeatureKind::Continuous),
            ("wtkg", FeatureKind::Continuous),
            ("hemo", FeatureKind::Binary),
            ("homo", FeatureKind::Binary),
            ("drugs", FeatureKind::Binary),
            ("oprior", FeatureKind::Binary),
            ("z30", FeatureKind::Binary),
            ("preanti", FeatureKind::Continuous),
            ("race", FeatureKind::Binary),
            ("gender", FeatureKind::Binary),
            ("str2", FeatureKind::Binary),
            ("karnof_hi", FeatureKind::Binary),
        ];
        CsvSchema {
            covariates: cols.iter().map(|(n, _)| n.to_string()).collect(),
            kinds: Some(cols.iter().map(|(_, k)| *k).collect()),
            treatment: treatment.to_string(),
            outcome: outcome.to_string(),
            truth: None,
        }
    }

    fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        let truth = self.truth.iter().flatten();
        for name in self
            .covariates
            .iter()
            .chain([&self.treatment, &self.outcome])
            .chain(truth)
        {
            if !seen.insert(name.as_str()) {
                return Err(Error::Config(format!("column `{name}` appears twice in the schema")));
            }
        }
        if let Some(kinds) = &self.kinds {
            if kinds.len() != self.covariates.len() {
                return Err(Error::Config(format!(
                    "{} kinds for {} covariates",
                    kinds.len(),
                    self.covariates.len()
                )));
            }
        }
        if self.covariates.is_empty() {
            return Err(Error::Config("schema has no covariates".into()));
        }
        Ok(())
    }
}

fn reader_for(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Reads the header of a CSV file.
pub fn read_header(path: &Path) -> Result<Vec<String>> {
    let mut reader = reader_for(path)?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?;
    Ok(header.iter().map(str::to_string).collect())
}

/// Columns of `schema` read as numbers; rows are 1-based data line numbers
/// counted after the header.
fn read_columns(path: &Path, names: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut reader = reader_for(path)?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let positions = names
        .iter()
        .map(|name| {
            header.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
                row: 0,
                column: name.to_string(),
                message: "column missing from header".into(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut columns = vec![Vec::new(); names.len()];
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let row = i + 1;
        for ((col, &pos), name) in columns.iter_mut().zip(&positions).zip(names) {
            let cell = record.get(pos).ok_or_else(|| Error::Parse {
                row,
                column: name.to_string(),
                message: "missing cell".into(),
            })?;
            let value: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column: name.to_string(),
                message: format!("`{cell}` is not a number"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: name.to_string(),
                    message: format!("`{cell}` is not finite"),
                });
            }
            col.push(value);
        }
    }
    Ok(columns)
}

fn check_binary(values: &[f64], column: &str) -> Result<()> {
    match values.iter().position(|&v| v != 0.0 && v != 1.0) {
        Some(i) => Err(Error::Parse {
            row: i + 1,
            column: column.to_string(),
            message: format!("expected 0 or 1, found {}", values[i]),
        }),
        None => Ok(()),
    }
}

/// Loads a dataset laid out according to `schema`.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    schema.validate()?;
    let mut names: Vec<&str> = schema.covariates.iter().map(String::as_str).collect();
    names.push(&schema.treatment);
    names.push(&schema.outcome);
    if let Some(truth) = &schema.truth {
        names.extend(truth.iter().map(String::as_str));
    }
    let mut columns = read_columns(path, &names)?;
    let n = columns[0].len();
    if n == 0 {
        return Err(Error::Input(format!("{} has no data rows", path.display())));
    }
    let p = schema.covariates.len();

    check_binary(&columns[p], &schema.treatment)?;
    if let Some(kinds) = &schema.kinds {
        for (j, kind) in kinds.iter().enumerate() {
            if *kind == FeatureKind::Binary {
                check_binary(&columns[j], &schema.covariates[j])?;
            }
        }
    }

    let truth = schema.truth.as_ref().map(|_| {
        let pi = Array1::from(columns.pop().expect("truth column"));
        let tau = Array1::from(columns.pop().expect("truth column"));
        let mu = Array1::from(columns.pop().expect("truth column"));
        Truth { mu, tau, pi }
    });
    let y = Array1::from(columns.pop().expect("outcome column"));
    let a = Array1::from(columns.pop().expect("treatment column"));
    let mut x = Array2::zeros((n, p));
    for (j, col) in columns.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            x[[i, j]] = v;
        }
    }
    let data = match &schema.kinds {
        Some(kinds) => Dataset::with_kinds(x, a, y, kinds.clone())?,
        None => Dataset::new(x, a, y)?,
    };
    let data = data.with_feature_names(schema.covariates.clone())?;
    match truth {
        Some(t) => data.with_truth(t),
        None => Ok(data),
    }
}

/// Loads covariates only (for prediction). Columns are taken in the order
/// of `names`.
pub fn load_features(path: &Path, names: &[String]) -> Result<Array2<f64>> {
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let columns = read_columns(path, &refs)?;
    let n = columns.first().map_or(0, Vec::len);
    Ok(Array2::from_shape_fn((n, names.len()), |(i, j)| columns[j][i]))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(contents.as_bytes()).map_err(|e| Error::io(path, e))
}

fn comment_lines(comment: Option<&str>) -> String {
    comment
        .map(|c| c.lines().map(|l| format!("# {l}\n")).collect())
        .unwrap_or_default()
}

/// Serializes a dataset as CSV: covariates by name, `a`, `y`, then truth
/// columns when present.
pub fn dataset_to_csv(data: &Dataset, comment: Option<&str>) -> String {
    let mut out = comment_lines(comment);
    let mut header: Vec<&str> = data.feature_names().iter().map(String::as_str).collect();
    header.extend([TREATMENT_COLUMN, OUTCOME_COLUMN]);
    if data.truth().is_some() {
        header.extend(TRUTH_COLUMNS);
    }
    out.push_str(&header.join(","));
    out.push('\n');
    let mut cells = Vec::with_capacity(header.len());
    for i in 0..data.n() {
        cells.clear();
        cells.extend(data.x().row(i).iter().map(|v| format!("{v:?}")));
        cells.push(format!("{:?}", data.treatment()[i]));
        cells.push(format!("{:?}", data.outcome()[i]));
        if let Some(t) = data.truth() {
            cells.extend([t.mu[i], t.tau[i], t.pi[i]].iter().map(|v| format!("{v:?}")));
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn save_dataset_csv(data: &Dataset, path: &Path, comment: Option<&str>) -> Result<()> {
    write_file(path, &dataset_to_csv(data, comment))
}

/// Reads a file written by [`save_dataset_csv`].
pub fn load_dataset_csv(path: &Path) -> Result<Dataset> {
    let header = read_header(path)?;
    load_csv(path, &CsvSchema::infer(&header, TREATMENT_COLUMN, OUTCOME_COLUMN)?)
}

/// Score functions as rows `feature,kind,grid,mean,lower,upper`. Without a
/// band, `lower` and `upper` repeat the point value.
pub fn scores_to_csv(scores: &[ScoreFunction], names: &[String], comment: Option<&str>) -> Result<String> {
    let mut out = comment_lines(comment);
    out.push_str("feature,kind,grid,mean,lower,upper\n");
    for s in scores {
        let name = names
            .get(s.feature)
            .ok_or_else(|| Error::Input(format!("no name for feature {}", s.feature)))?;
        for (k, g) in s.grid.iter().enumerate() {
            let (mean, lower, upper) = match &s.band {
                Some(b) => (b.mean[k], b.lower[k], b.upper[k]),
                None => (s.values[k], s.values[k], s.values[k]),
            };
            out.push_str(&format!("{name},{},{g:?},{mean:?},{lower:?},{upper:?}\n", s.effect));
        }
    }
    Ok(out)
}

pub fn save_scores_csv(scores: &[ScoreFunction], names: &[String], path: &Path, comment: Option<&str>) -> Result<()> {
    write_file(path, &scores_to_csv(scores, names, comment)?)
}

/// Writes `name,tau_hat` style prediction columns.
pub fn save_columns_csv(path: &Path, columns: &[(&str, &[f64])], comment: Option<&str>) -> Result<()> {
    let mut out = comment_lines(comment);
    out.push_str(&columns.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(","));
    out.push('\n');
    let n = columns.first().map_or(0, |(_, v)| v.len());
    for i in 0..n {
        let row: Vec<String> = columns.iter().map(|(_, v)| format!("{:?}", v[i])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    write_file(path, &out)
}

pub const MODEL_MAGIC: &str = "TCNN-MODEL";
pub const MODEL_VERSION: u32 = 1;

/// A model file: `TCNN-MODEL <version>`, `#` comment lines, then the model
/// as JSON.
pub fn model_to_string(model: &CausalModel, feature_names: &[String], comment: Option<&str>) -> Result<String> {
    #[derive(serde::Serialize)]
    struct Body<'a> {
        feature_names: &'a [String],
        model: &'a CausalModel,
    }
    let body = serde_json::to_string(&Body { feature_names, model })
        .map_err(|e| Error::State(format!("cannot serialize model: {e}")))?;
    Ok(format!(
        "{MODEL_MAGIC} {MODEL_VERSION}\n{}{body}\n",
        comment_lines(comment)
    ))
}

pub fn save_model(model: &CausalModel, feature_names: &[String], path: &Path, comment: Option<&str>) -> Result<()> {
    write_file(path, &model_to_string(model, feature_names, comment)?)
}

/// Parses a model file; returns the model and its feature names.
pub fn model_from_str(text: &str, path: &Path) -> Result<(CausalModel, Vec<String>)> {
    #[derive(serde::Deserialize)]
    struct Body {
        feature_names: Vec<String>,
        model: CausalModel,
    }
    let format_err = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    let mut lines = text.lines();
    let first = lines.next().unwrap_or_default();
    let version = first
        .strip_prefix(MODEL_MAGIC)
        .map(str::trim)
        .ok_or_else(|| format_err("not a model file (bad magic)".into()))?;
    if version != MODEL_VERSION.to_string() {
        return Err(format_err(format!("unsupported model version `{version}`")));
    }
    let body: String = lines.filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n");
    let parsed: Body = serde_json::from_str(&body).map_err(|e| format_err(e.to_string()))?;
    parsed.model.components().validate()?;
    if parsed.feature_names.len() != parsed.model.p() {
        return Err(format_err(format!(
            "{} feature names for a model with {} inputs",
            parsed.feature_names.len(),
            parsed.model.p()
        )));
    }
    Ok((parsed.model, parsed.feature_names))
}

pub fn load_model(path: &Path) -> Result<(CausalModel, Vec<String>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_str(&text, path)
}

/// Parses a flat `key = value` file. Blank lines and `#` comments are
/// skipped; later keys override earlier ones.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            row: i + 1,
            column: "config".into(),
            message: format!("expected key=value, got `{line}`"),
        })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

pub fn load_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}
