//! Observational data `(X, A, Y)` plus optional simulation ground truth.
//!
//! Identification of the CATE from such data rests on two assumptions the
//! library cannot check: no unobserved confounders (conditioning on `X`
//! blocks every back-door path from `A` to `Y`) and common support
//! (`0 < P(A = 1 | X = x) < 1`).

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Continuous,
    Binary,
}

/// Ground-truth functions evaluated at each observation (simulated data only).
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub mu: Array1<f64>,
    pub tau: Array1<f64>,
    pub pi: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Array2<f64>,
    treatment: Array1<f64>,
    outcome: Array1<f64>,
    feature_names: Vec<String>,
    feature_kinds: Vec<FeatureKind>,
    truth: Option<Truth>,
}

impl Dataset {
    /// Builds a dataset, inferring feature kinds: a column whose values are
    /// all 0 or 1 is binary, anything else continuous.
    pub fn new(x: Array2<f64>, treatment: Array1<f64>, outcome: Array1<f64>) -> Result<Self> {
        let kinds = infer_kinds(x.view());
        Self::with_kinds(x, treatment, outcome, kinds)
    }

    pub fn with_kinds(
        x: Array2<f64>,
        treatment: Array1<f64>,
        outcome: Array1<f64>,
        feature_kinds: Vec<FeatureKind>,
    ) -> Result<Self> {
        let n = x.nrows();
        if treatment.len() != n || outcome.len() != n {
            return Err(Error::Shape(format!(
                "{n} covariate rows but {} treatments and {} outcomes",
                treatment.len(),
                outcome.len()
            )));
        }
        if feature_kinds.len() != x.ncols() {
            return Err(Error::Shape(format!(
                "{} feature kinds for {} columns",
                feature_kinds.len(),
                x.ncols()
            )));
        }
        if let Some((i, _)) = treatment.iter().enumerate().find(|(_, &a)| a != 0.0 && a != 1.0) {
            return Err(Error::Input(format!("treatment at row {i} is not 0 or 1")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("covariates contain non-finite values".into()));
        }
        if let Some(i) = outcome.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("outcome at row {i} is not finite")));
        }
        for (j, kind) in feature_kinds.iter().enumerate() {
            if *kind == FeatureKind::Binary && x.column(j).iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::Input(format!("binary column {j} holds values other than 0/1")));
            }
        }
        let feature_names = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
        Ok(Dataset {
            x,
            treatment,
            outcome,
            feature_names,
            feature_kinds,
            truth: None,
        })
    }

    pub fn with_truth(mut self, truth: Truth) -> Result<Self> {
        let n = self.n();
        if truth.mu.len() != n || truth.tau.len() != n || truth.pi.len() != n {
            return Err(Error::Shape("truth vectors must have one entry per row".into()));
        }
        self.truth = Some(truth);
        Ok(self)
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.p() {
            return Err(Error::Shape(format!("{} names for {} features", names.len(), self.p())));
        }
        self.feature_names = names;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    /// Treatment indicators as `0.0` / `1.0`.
    pub fn treatment(&self) -> ArrayView1<'_, f64> {
        self.treatment.view()
    }

    pub fn outcome(&self) -> ArrayView1<'_, f64> {
        self.outcome.view()
    }

    pub fn truth(&self) -> Option<&Truth> {
        self.truth.as_ref()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_kinds(&self) -> &[FeatureKind] {
        &self.feature_kinds
    }

    /// `(control count, treated count)`.
    pub fn arm_counts(&self) -> (usize, usize) {
        let treated = self.treatment.iter().filter(|&&a| a == 1.0).count();
        (self.n() - treated, treated)
    }

    /// Rows at `indices`, in that order, truth included.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(Axis(0), indices),
            treatment: self.treatment.select(Axis(0), indices),
            outcome: self.outcome.select(Axis(0), indices),
            feature_names: self.feature_names.clone(),
            feature_kinds: self.feature_kinds.clone(),
            truth: self.truth.as_ref().map(|t| Truth {
                mu: t.mu.select(Axis(0), indices),
                tau: t.tau.select(Axis(0), indices),
                pi: t.pi.select(Axis(0), indices),
            }),
        }
    }
}

fn infer_kinds(x: ArrayView2<f64>) -> Vec<FeatureKind> {
    x.columns()
        .into_iter()
        .map(|c| {
            if c.len() > 0 && c.iter().all(|&v| v == 0.0 || v == 1.0) {
                FeatureKind::Binary
            } else {
                FeatureKind::Continuous
            }
        })
        .collect()
}

/// z-scoring of the outcome and of continuous covariates, fitted on training
/// data. Binary columns pass through unchanged; zero-variance columns get a
/// unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub y_mean: f64,
    pub y_sd: f64,
    pub x_mean: Vec<f64>,
    pub x_sd: Vec<f64>,
}

impl Standardization {
    pub fn identity(p: usize) -> Self {
        Standardization {
            y_mean: 0.0,
            y_sd: 1.0,
            x_mean: vec![0.0; p],
            x_sd: vec![1.0; p],
        }
    }

    pub fn fit(data: &Dataset) -> Self {
        let (y_mean, y_sd) = mean_sd(data.outcome().iter().copied());
        let (x_mean, x_sd) = data
            .x()
            .columns()
            .into_iter()
            .zip(data.feature_kinds())
            .map(|(c, kind)| match kind {
                FeatureKind::Binary => (0.0, 1.0),
                FeatureKind::Continuous => mean_sd(c.iter().copied()),
            })
            .unzip();
        Standardization {
            y_mean,
            y_sd,
            x_mean,
            x_sd,
        }
    }

    pub fn p(&self) -> usize {
        self.x_mean.len()
    }

    pub fn transform_x(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.p() {
            return Err(Error::Shape(format!(
                "model was fitted on {} covariates, got {}",
                self.p(),
                x.ncols()
            )));
        }
        let mut out = x.to_owned();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            let (m, s) = (self.x_mean[j], self.x_sd[j]);
            col.mapv_inplace(|v| (v - m) / s);
        }
        Ok(out)
    }

    pub fn transform_feature(&self, j: usize, v: f64) -> f64 {
        (v - self.x_mean[j]) / self.x_sd[j]
    }

    pub fn transform_y(&self, y: ArrayView1<f64>) -> Array1<f64> {
        y.mapv(|v| (v - self.y_mean) / self.y_sd)
    }
}

/// Sample mean and (n−1) standard deviation; the sd falls back to 1 when it
/// is zero or undefined.
fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (0.0, 1.0);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    (mean, if sd > 0.0 && sd.is_finite() { sd } else { 1.0 })
}
