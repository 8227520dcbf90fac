use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ModelKind, TrainConfig};
use crate::data::Standardization;
use crate::error::{Error, Result};
use crate::nn::{ForwardCache, MlpNet, Mode, NetGrads};

/// Learned parameters, one variant per estimator family.
///
/// All networks operate in standardized units: covariates as transformed by
/// the model's [`Standardization`] and outcome z-scores.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Components {
    Snn {
        /// Input is `[x, a]`.
        net: MlpNet,
    },
    Tnn {
        treated: MlpNet,
        control: MlpNet,
    },
    Rnn {
        /// Two outputs: `(μ, τ)`.
        net: MlpNet,
    },
    Rnam {
        /// One single-input subnet per feature with outputs `(μ_j, τ_j)`.
        subnets: Vec<MlpNet>,
        mu_bias: f64,
        tau_bias: f64,
    },
    Tcnn {
        mu_block: MlpNet,
        tau_block: MlpNet,
    },
    Icnn {
        mu_subnets: Vec<MlpNet>,
        tau_subnets: Vec<MlpNet>,
        mu_bias: f64,
        tau_bias: f64,
    },
}

impl Components {
    /// Fresh He-initialized components for `p` covariates.
    pub fn init<R: Rng + ?Sized>(kind: ModelKind, p: usize, config: &TrainConfig, rng: &mut R) -> Result<Self> {
        if p == 0 {
            return Err(Error::Config("need at least one covariate".into()));
        }
        let sizes = |input: usize, hidden: &[usize], output: usize| {
            let mut v = Vec::with_capacity(hidden.len() + 2);
            v.push(input);
            v.extend_from_slice(hidden);
            v.push(output);
            v
        };
        let (mu_h, tau_h) = (&config.mu_layers, &config.tau_layers);
        let (mu_p, tau_p) = (config.mu_dropout, config.tau_dropout);
        let (mu_l2, tau_l2) = (config.l2_mu, config.l2_tau);
        Ok(match kind {
            ModelKind::Snn => Components::Snn {
                net: MlpNet::init(&sizes(p + 1, mu_h, 1), mu_p, mu_l2, rng)?,
            },
            ModelKind::Tnn => Components::Tnn {
                treated: MlpNet::init(&sizes(p, mu_h, 1), mu_p, mu_l2, rng)?,
                control: MlpNet::init(&sizes(p, mu_h, 1), mu_p, mu_l2, rng)?,
            },
            ModelKind::Rnn => Components::Rnn {
                net: MlpNet::init(&sizes(p, mu_h, 2), mu_p, mu_l2, rng)?,
            },
            ModelKind::Rnam => Components::Rnam {
                subnets: (0..p)
                    .map(|_| MlpNet::init(&sizes(1, mu_h, 2), mu_p, mu_l2, rng))
                    .collect::<Result<_>>()?,
                mu_bias: 0.0,
                tau_bias: 0.0,
            },
            ModelKind::Tcnn => Components::Tcnn {
                mu_block: MlpNet::init(&sizes(p, mu_h, 1), mu_p, mu_l2, rng)?,
                tau_block: MlpNet::init(&sizes(p, tau_h, 1), tau_p, tau_l2, rng)?,
            },
            ModelKind::Icnn => Components::Icnn {
                mu_subnets: (0..p)
                    .map(|_| MlpNet::init(&sizes(1, mu_h, 1), mu_p, mu_l2, rng))
                    .collect::<Result<_>>()?,
                tau_subnets: (0..p)
                    .map(|_| MlpNet::init(&sizes(1, tau_h, 1), tau_p, tau_l2, rng))
                    .collect::<Result<_>>()?,
                mu_bias: 0.0,
                tau_bias: 0.0,
            },
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Components::Snn { .. } => ModelKind::Snn,
            Components::Tnn { .. } => ModelKind::Tnn,
            Components::Rnn { .. } => ModelKind::Rnn,
            Components::Rnam { .. } => ModelKind::Rnam,
            Components::Tcnn { .. } => ModelKind::Tcnn,
            Components::Icnn { .. } => ModelKind::Icnn,
        }
    }

    /// Number of covariates the components expect.
    pub fn input_dim(&self) -> usize {
        match self {
            Components::Snn { net } => net.fan_in() - 1,
            Components::Tnn { treated, .. } => treated.fan_in(),
            Components::Rnn { net } => net.fan_in(),
            Components::Rnam { subnets, .. } => subnets.len(),
            Components::Tcnn { mu_block, .. } => mu_block.fan_in(),
            Components::Icnn { mu_subnets, .. } => mu_subnets.len(),
        }
    }

    /// All networks in a fixed order (the order used by gradients and
    /// parameter flattening).
    pub fn nets(&self) -> Vec<&MlpNet> {
        match self {
            Components::Snn { net } | Components::Rnn { net } => vec![net],
            Components::Tnn { treated, control } => vec![treated, control],
            Components::Rnam { subnets, .. } => subnets.iter().collect(),
            Components::Tcnn { mu_block, tau_block } => vec![mu_block, tau_block],
            Components::Icnn {
                mu_subnets,
                tau_subnets,
                ..
            } => mu_subnets.iter().chain(tau_subnets.iter()).collect(),
        }
    }

    pub fn nets_mut(&mut self) -> Vec<&mut MlpNet> {
        match self {
            Components::Snn { net } | Components::Rnn { net } => vec![net],
            Components::Tnn { treated, control } => vec![treated, control],
            Components::Rnam { subnets, .. } => subnets.iter_mut().collect(),
            Components::Tcnn { mu_block, tau_block } => vec![mu_block, tau_block],
            Components::Icnn {
                mu_subnets,
                tau_subnets,
                ..
            } => mu_subnets.iter_mut().chain(tau_subnets.iter_mut()).collect(),
        }
    }

    /// Global output biases `(b_μ, b_τ)` of the additive kinds.
    pub fn global_biases(&self) -> Option<[f64; 2]> {
        match self {
            Components::Rnam { mu_bias, tau_bias, .. } | Components::Icnn { mu_bias, tau_bias, .. } => {
                Some([*mu_bias, *tau_bias])
            }
            _ => None,
        }
    }

    pub fn set_global_biases(&mut self, values: [f64; 2]) {
        if let Components::Rnam { mu_bias, tau_bias, .. } | Components::Icnn { mu_bias, tau_bias, .. } = self {
            *mu_bias = values[0];
            *tau_bias = values[1];
        }
    }

    pub fn param_count(&self) -> usize {
        self.nets().iter().map(|n| n.param_count()).sum::<usize>() + self.global_biases().map_or(0, |b| b.len())
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for net in self.nets() {
            net.flatten_into(&mut out);
        }
        if let Some(b) = self.global_biases() {
            out.extend(b);
        }
        out
    }

    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "need {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let mut pos = 0;
        for net in self.nets_mut() {
            pos += net.assign_flat(&flat[pos..])?;
        }
        if self.global_biases().is_some() {
            self.set_global_biases([flat[pos], flat[pos + 1]]);
        }
        Ok(())
    }

    /// Sets every network's dropout rate.
    pub fn set_dropout(&mut self, p: f64) -> Result<()> {
        for net in self.nets_mut() {
            net.set_dropout_rate(p)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.input_dim();
        for net in self.nets() {
            net.validate()?;
        }
        let check = |net: &MlpNet, fan_in: usize, fan_out: usize, what: &str| {
            if net.fan_in() != fan_in || net.fan_out() != fan_out {
                Err(Error::Shape(format!(
                    "{what} must map {fan_in} inputs to {fan_out} outputs, has {} -> {}",
                    net.fan_in(),
                    net.fan_out()
                )))
            } else {
                Ok(())
            }
        };
        match self {
            Components::Snn { net } => check(net, p + 1, 1, "s-learner net"),
            Components::Tnn { treated, control } => {
                check(treated, p, 1, "treated-arm net")?;
                check(control, p, 1, "control-arm net")
            }
            Components::Rnn { net } => check(net, p, 2, "robinson net"),
            Components::Rnam { subnets, .. } => subnets.iter().try_for_each(|n| check(n, 1, 2, "additive subnet")),
            Components::Tcnn { mu_block, tau_block } => {
                check(mu_block, p, 1, "mu block")?;
                check(tau_block, p, 1, "tau block")
            }
            Components::Icnn {
                mu_subnets,
                tau_subnets,
                ..
            } => {
                if tau_subnets.len() != mu_subnets.len() {
                    return Err(Error::Shape("icnn needs one mu and one tau subnet per feature".into()));
                }
                mu_subnets
                    .iter()
                    .chain(tau_subnets)
                    .try_for_each(|n| check(n, 1, 1, "additive subnet"))
            }
        }
    }

    /// Robinson-family forward pass in standardized units.
    pub(crate) fn robinson_pass<R: Rng + ?Sized>(
        &self,
        xs: ArrayView2<f64>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<RobinsonPass> {
        let n = xs.nrows();
        let column = |j: usize| xs.slice_move(s![.., j..j + 1]);
        match self {
            Components::Rnn { net } => {
                let (out, cache) = net.forward(xs, mode, rng)?;
                Ok(RobinsonPass {
                    mu: out.column(0).to_owned(),
                    tau: out.column(1).to_owned(),
                    mu_parts: None,
                    tau_parts: None,
                    caches: vec![cache],
                })
            }
            Components::Tcnn { mu_block, tau_block } => {
                let (mu, mu_cache) = mu_block.forward(xs, mode, rng)?;
                let (tau, tau_cache) = tau_block.forward(xs, mode, rng)?;
                Ok(RobinsonPass {
                    mu: mu.column(0).to_owned(),
                    tau: tau.column(0).to_owned(),
                    mu_parts: None,
                    tau_parts: None,
                    caches: vec![mu_cache, tau_cache],
                })
            }
            Components::Rnam {
                subnets,
                mu_bias,
                tau_bias,
            } => {
                check_cols(xs, subnets.len())?;
                let mut mu_parts = Array2::zeros((n, subnets.len()));
                let mut tau_parts = Array2::zeros((n, subnets.len()));
                let mut caches = Vec::with_capacity(subnets.len());
                for (j, net) in subnets.iter().enumerate() {
                    let (out, cache) = net.forward(column(j), mode, rng)?;
                    mu_parts.column_mut(j).assign(&out.column(0));
                    tau_parts.column_mut(j).assign(&out.column(1));
                    caches.push(cache);
                }
                Ok(RobinsonPass {
                    mu: mu_parts.sum_axis(Axis(1)) + *mu_bias,
                    tau: tau_parts.sum_axis(Axis(1)) + *tau_bias,
                    mu_parts: Some(mu_parts),
                    tau_parts: Some(tau_parts),
                    caches,
                })
            }
            Components::Icnn {
                mu_subnets,
                tau_subnets,
                mu_bias,
                tau_bias,
            } => {
                check_cols(xs, mu_subnets.len())?;
                let p = mu_subnets.len();
                let mut mu_parts = Array2::zeros((n, p));
                let mut tau_parts = Array2::zeros((n, p));
                let mut caches = Vec::with_capacity(2 * p);
                for (j, net) in mu_subnets.iter().enumerate() {
                    let (out, cache) = net.forward(column(j), mode, rng)?;
                    mu_parts.column_mut(j).assign(&out.column(0));
                    caches.push(cache);
                }
                for (j, net) in tau_subnets.iter().enumerate() {
                    let (out, cache) = net.forward(column(j), mode, rng)?;
                    tau_parts.column_mut(j).assign(&out.column(0));
                    caches.push(cache);
                }
                Ok(RobinsonPass {
                    mu: mu_parts.sum_axis(Axis(1)) + *mu_bias,
                    tau: tau_parts.sum_axis(Axis(1)) + *tau_bias,
                    mu_parts: Some(mu_parts),
                    tau_parts: Some(tau_parts),
                    caches,
                })
            }
            Components::Snn { .. } | Components::Tnn { .. } => Err(Error::Unsupported(format!(
                "{} does not use the Robinson parametrization",
                self.kind()
            ))),
        }
    }

    /// CATE in standardized outcome units.
    pub(crate) fn cate_standardized<R: Rng + ?Sized>(
        &self,
        xs: ArrayView2<f64>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Array1<f64>> {
        match self {
            Components::Snn { net } => {
                // Both counterfactual passes share one dropout draw.
                let seed: u64 = rng.random();
                let treated = with_treatment_column(xs, 1.0);
                let control = with_treatment_column(xs, 0.0);
                let (f1, _) = net.forward(treated.view(), mode, &mut ChaCha8Rng::seed_from_u64(seed))?;
                let (f0, _) = net.forward(control.view(), mode, &mut ChaCha8Rng::seed_from_u64(seed))?;
                Ok(&f1.column(0) - &f0.column(0))
            }
            Components::Tnn { treated, control } => {
                let (f1, _) = treated.forward(xs, mode, rng)?;
                let (f0, _) = control.forward(xs, mode, rng)?;
                Ok(&f1.column(0) - &f0.column(0))
            }
            _ => Ok(self.robinson_pass(xs, mode, rng)?.tau),
        }
    }

    /// Per-arm predictions `(f̂_1(x), f̂_0(x))` of the T-learner in
    /// standardized units.
    pub(crate) fn arm_predictions<R: Rng + ?Sized>(
        &self,
        xs: ArrayView2<f64>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Array1<f64>, Array1<f64>)> {
        match self {
            Components::Tnn { treated, control } => {
                let (f1, _) = treated.forward(xs, mode, rng)?;
                let (f0, _) = control.forward(xs, mode, rng)?;
                Ok((f1.column(0).to_owned(), f0.column(0).to_owned()))
            }
            _ => Err(Error::Unsupported(format!(
                "{} has no arm-specific networks",
                self.kind()
            ))),
        }
    }

    /// Full training loss (data term plus every network's L2 penalty) on a
    /// standardized batch, and its exact gradient.
    ///
    /// Dropout follows each network's configured rate.
    pub fn loss_and_grads<R: Rng + ?Sized>(
        &self,
        xs: ArrayView2<f64>,
        a: ArrayView1<f64>,
        ys: ArrayView1<f64>,
        rng: &mut R,
    ) -> Result<(f64, ModelGrads)> {
        let n = xs.nrows();
        if n == 0 {
            return Err(Error::Input("empty batch".into()));
        }
        if a.len() != n || ys.len() != n {
            return Err(Error::Shape("batch arrays have different lengths".into()));
        }
        let penalty: f64 = self.nets().iter().map(|n| n.penalty()).sum();

        let (data_loss, grads) = match self {
            Components::Snn { net } => {
                let input =
                    concatenate(Axis(1), &[xs, a.insert_axis(Axis(1))]).map_err(|e| Error::Shape(e.to_string()))?;
                let (loss, g) = mse_step(net, input.view(), ys, rng)?;
                (loss, ModelGrads::new(vec![Some(g)], None))
            }
            Components::Tnn { treated, control } => {
                let (arm1, arm0): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| a[i] == 1.0);
                let mut loss = 0.0;
                let mut grads = Vec::with_capacity(2);
                for (net, idx) in [(treated, &arm1), (control, &arm0)] {
                    if idx.is_empty() {
                        grads.push(None);
                        continue;
                    }
                    let x_arm = xs.select(Axis(0), idx);
                    let y_arm = ys.select(Axis(0), idx);
                    let (l, g) = mse_step(net, x_arm.view(), y_arm.view(), rng)?;
                    loss += l;
                    grads.push(Some(g));
                }
                (loss, ModelGrads::new(grads, None))
            }
            _ => {
                let pass = self.robinson_pass(xs, Mode::Train, rng)?;
                let y_hat = &pass.mu + &(&pass.tau * &a);
                let step = robinson_loss_grad(y_hat.view(), ys, a)?;
                let d_mu = step.d_mu.view().insert_axis(Axis(1));
                let d_tau = step.d_tau.view().insert_axis(Axis(1));
                let caches = &pass.caches;
                let back = |net: &MlpNet, cache: &Option<ForwardCache>, upstream: ArrayView2<f64>| {
                    net.backward(cache.as_ref().expect("train mode caches"), upstream)
                        .map(|(g, _)| Some(g))
                };
                let grads = match self {
                    Components::Rnn { net } => {
                        let upstream = concatenate(Axis(1), &[d_mu, d_tau]).expect("equal rows");
                        ModelGrads::new(vec![back(net, &caches[0], upstream.view())?], None)
                    }
                    Components::Tcnn { mu_block, tau_block } => ModelGrads::new(
                        vec![back(mu_block, &caches[0], d_mu)?, back(tau_block, &caches[1], d_tau)?],
                        None,
                    ),
                    Components::Rnam { subnets, .. } => {
                        let upstream = concatenate(Axis(1), &[d_mu, d_tau]).expect("equal rows");
                        let g = subnets
                            .iter()
                            .zip(caches)
                            .map(|(net, c)| back(net, c, upstream.view()))
                            .collect::<Result<_>>()?;
                        ModelGrads::new(g, Some([step.d_mu.sum(), step.d_tau.sum()]))
                    }
                    Components::Icnn {
                        mu_subnets,
                        tau_subnets,
                        ..
                    } => {
                        let p = mu_subnets.len();
                        let mut g = Vec::with_capacity(2 * p);
                        for (net, c) in mu_subnets.iter().zip(&caches[..p]) {
                            g.push(back(net, c, d_mu)?);
                        }
                        for (net, c) in tau_subnets.iter().zip(&caches[p..]) {
                            g.push(back(net, c, d_tau)?);
                        }
                        ModelGrads::new(g, Some([step.d_mu.sum(), step.d_tau.sum()]))
                    }
                    Components::Snn { .. } | Components::Tnn { .. } => unreachable!(),
                };
                (step.loss, grads)
            }
        };
        Ok((data_loss + penalty, grads))
    }
}

fn check_cols(xs: ArrayView2<f64>, p: usize) -> Result<()> {
    if xs.ncols() != p {
        Err(Error::Shape(format!(
            "expected {p} covariate columns, got {}",
            xs.ncols()
        )))
    } else {
        Ok(())
    }
}

fn with_treatment_column(xs: ArrayView2<f64>, a: f64) -> Array2<f64> {
    let mut out = Array2::from_elem((xs.nrows(), xs.ncols() + 1), a);
    out.slice_mut(s![.., ..xs.ncols()]).assign(&xs);
    out
}

/// Mean squared error of a single-output net and its parameter gradient.
fn mse_step<R: Rng + ?Sized>(
    net: &MlpNet,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    rng: &mut R,
) -> Result<(f64, NetGrads)> {
    let (out, cache) = net.forward(x, Mode::Train, rng)?;
    let resid = &out.column(0) - &y;
    let n = resid.len() as f64;
    let loss = resid.dot(&resid) / n;
    let upstream = (resid * (2.0 / n)).insert_axis(Axis(1));
    let (g, _) = net.backward(cache.as_ref().expect("train mode caches"), upstream.view())?;
    Ok((loss, g))
}

/// Output of a Robinson-family forward pass, standardized units.
#[derive(Debug, Clone)]
pub(crate) struct RobinsonPass {
    pub mu: Array1<f64>,
    pub tau: Array1<f64>,
    /// Per-feature contributions for the additive kinds (`N × P`).
    pub mu_parts: Option<Array2<f64>>,
    pub tau_parts: Option<Array2<f64>>,
    pub caches: Vec<Option<ForwardCache>>,
}

/// Gradients for every network of a model (aligned with
/// [`Components::nets`]) plus the global biases. `None` marks a network that
/// received no signal from the batch.
#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub nets: Vec<Option<NetGrads>>,
    pub biases: Option<[f64; 2]>,
}

impl ModelGrads {
    fn new(nets: Vec<Option<NetGrads>>, biases: Option<[f64; 2]>) -> Self {
        ModelGrads { nets, biases }
    }

    /// Flattened in parameter order; absent gradients are zeros.
    pub fn flatten(&self, components: &Components) -> Vec<f64> {
        let mut out = Vec::with_capacity(components.param_count());
        for (g, net) in self.nets.iter().zip(components.nets()) {
            match g {
                Some(g) => g.flatten_into(&mut out),
                None => out.extend(std::iter::repeat_n(0.0, net.param_count())),
            }
        }
        if let Some(b) = self.biases {
            out.extend(b);
        }
        out
    }
}

/// Loss and gradients of the Robinson squared-error objective.
#[derive(Debug, Clone, PartialEq)]
pub struct RobinsonStep {
    pub loss: f64,
    /// `∂loss/∂μ̂_i`.
    pub d_mu: Array1<f64>,
    /// `∂loss/∂τ̂_i`.
    pub d_tau: Array1<f64>,
}

/// `loss = mean (ŷ − y)²` for `ŷ = μ̂ + τ̂·a`, with `∂/∂μ̂_i = 2(ŷ_i − y_i)/N`
/// and `∂/∂τ̂_i = a_i · ∂/∂μ̂_i`.
pub fn robinson_loss_grad(y_hat: ArrayView1<f64>, y: ArrayView1<f64>, a: ArrayView1<f64>) -> Result<RobinsonStep> {
    let n = y_hat.len();
    if n == 0 {
        return Err(Error::Input("empty batch".into()));
    }
    if y.len() != n || a.len() != n {
        return Err(Error::Shape("y_hat, y and a must have equal lengths".into()));
    }
    let resid = &y_hat - &y;
    let loss = resid.dot(&resid) / n as f64;
    let d_mu = resid * (2.0 / n as f64);
    let d_tau = &d_mu * &a;
    Ok(RobinsonStep { loss, d_mu, d_tau })
}

/// A CATE model: parameters, the standardization they were fitted under, and
/// the standardized training covariates (the marginals used to center score
/// functions).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CausalModel {
    pub(crate) components: Components,
    pub(crate) standardization: Standardization,
    pub(crate) reference: Array2<f64>,
    pub(crate) config: TrainConfig,
    pub(crate) fitted: bool,
    pub(crate) loss_trace: Vec<f64>,
}

/// `(μ̂, τ̂, ŷ)` in outcome units.
#[derive(Debug, Clone, PartialEq)]
pub struct RobinsonPrediction {
    pub mu: Array1<f64>,
    pub tau: Array1<f64>,
    pub y_hat: Array1<f64>,
}

/// Additive decomposition produced by an ICNN forward pass, outcome units.
///
/// `mu = mu_bias + Σ_j mu_parts[:, j]` and likewise for `tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct IcnnOutput {
    pub mu: Array1<f64>,
    pub tau: Array1<f64>,
    pub y_hat: Array1<f64>,
    pub mu_parts: Array2<f64>,
    pub tau_parts: Array2<f64>,
    pub mu_bias: f64,
    pub tau_bias: f64,
}

impl CausalModel {
    /// A freshly initialized, unfitted model with identity standardization.
    pub fn init(kind: ModelKind, p: usize, config: &TrainConfig) -> Result<Self> {
        config.validate(kind)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(CausalModel {
            components: Components::init(kind, p, config, &mut rng)?,
            standardization: Standardization::identity(p),
            reference: Array2::zeros((0, p)),
            config: config.clone(),
            fitted: false,
            loss_trace: Vec::new(),
        })
    }

    /// Wraps explicitly supplied parameters. The result counts as fitted.
    pub fn from_components(components: Components, standardization: Standardization) -> Result<Self> {
        components.validate()?;
        let p = components.input_dim();
        if standardization.p() != p {
            return Err(Error::Shape(format!(
                "standardization covers {} features, components expect {p}",
                standardization.p()
            )));
        }
        let config = TrainConfig::for_kind(components.kind());
        Ok(CausalModel {
            components,
            standardization,
            reference: Array2::zeros((0, p)),
            config,
            fitted: true,
            loss_trace: Vec::new(),
        })
    }

    /// Sets the training covariates (original units) used to center score
    /// functions.
    pub fn with_reference(mut self, x: ArrayView2<f64>) -> Result<Self> {
        self.reference = self.standardization.transform_x(x)?;
        Ok(self)
    }

    pub fn kind(&self) -> ModelKind {
        self.components.kind()
    }

    pub fn p(&self) -> usize {
        self.components.input_dim()
    }

    pub fn components(&self) -> &Components {
        &self.components
    }

    pub fn components_mut(&mut self) -> &mut Components {
        &mut self.components
    }

    pub fn standardization(&self) -> &Standardization {
        &self.standardization
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted
    }

    /// Mean training loss per epoch (standardized units, penalty included).
    pub fn loss_trace(&self) -> &[f64] {
        &self.loss_trace
    }

    /// Standardized training covariates.
    pub fn reference(&self) -> ArrayView2<'_, f64> {
        self.reference.view()
    }

    pub(crate) fn require_fitted(&self) -> Result<()> {
        if self.fitted {
            Ok(())
        } else {
            Err(Error::State("model has not been fitted".into()))
        }
    }

    /// `τ̂(x)` in outcome units, deterministic (no dropout).
    pub fn predict_cate(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.require_fitted()?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        self.cate_with_mode(x, Mode::Eval, &mut rng)
    }

    /// `τ̂(x)` in outcome units under the given dropout mode.
    pub(crate) fn cate_with_mode<R: Rng + ?Sized>(
        &self,
        x: ArrayView2<f64>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Array1<f64>> {
        let xs = self.standardization.transform_x(x)?;
        let tau = self.components.cate_standardized(xs.view(), mode, rng)?;
        Ok(tau * self.standardization.y_sd)
    }

    /// `μ̂`, `τ̂` and `ŷ = μ̂ + τ̂·a` for the Robinson family, without dropout.
    pub fn robinson_predict(&self, x: ArrayView2<f64>, a: ArrayView1<f64>) -> Result<RobinsonPrediction> {
        if !self.kind().is_robinson() {
            return Err(Error::Unsupported(format!(
                "{} does not use the Robinson parametrization",
                self.kind()
            )));
        }
        if a.len() != x.nrows() {
            return Err(Error::Shape("treatment length differs from covariate rows".into()));
        }
        let xs = self.standardization.transform_x(x)?;
        let pass = self
            .components
            .robinson_pass(xs.view(), Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0))?;
        let st = &self.standardization;
        let mu = pass.mu.mapv(|m| st.y_mean + st.y_sd * m);
        let tau = pass.tau * st.y_sd;
        let y_hat = &mu + &(&tau * &a);
        Ok(RobinsonPrediction { mu, tau, y_hat })
    }

    /// ICNN forward pass with per-feature contributions, outcome units.
    pub fn icnn_forward<R: Rng + ?Sized>(
        &self,
        x: ArrayView2<f64>,
        a: ArrayView1<f64>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<IcnnOutput> {
        let Components::Icnn { mu_bias, tau_bias, .. } = &self.components else {
            return Err(Error::Unsupported(format!(
                "icnn_forward requires icnn, got {}",
                self.kind()
            )));
        };
        if a.len() != x.nrows() {
            return Err(Error::Shape("treatment length differs from covariate rows".into()));
        }
        let xs = self.standardization.transform_x(x)?;
        let pass = self.components.robinson_pass(xs.view(), mode, rng)?;
        let st = &self.standardization;
        let mu = pass.mu.mapv(|m| st.y_mean + st.y_sd * m);
        let tau = pass.tau * st.y_sd;
        let y_hat = &mu + &(&tau * &a);
        Ok(IcnnOutput {
            mu,
            tau,
            y_hat,
            mu_parts: pass.mu_parts.expect("additive kind") * st.y_sd,
            tau_parts: pass.tau_parts.expect("additive kind") * st.y_sd,
            mu_bias: st.y_mean + st.y_sd * mu_bias,
            tau_bias: st.y_sd * tau_bias,
        })
    }
}
