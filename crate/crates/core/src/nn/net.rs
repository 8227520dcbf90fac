use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

/// How dropout behaves during a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Independent inverted-dropout masks per row; the pass is cached for
    /// [`MlpNet::backward`].
    Train,
    /// No dropout.
    Eval,
    /// One inverted-dropout mask per layer, shared by every row of the batch.
    /// Each call therefore evaluates a single thinned network, i.e. one
    /// sample of the function from the approximate posterior.
    McSample,
}

/// A fully connected layer computing `activation(x Wᵀ + b)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseLayer {
    /// `fan_out × fan_in`.
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn fan_in(&self) -> usize {
        self.weights.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

/// Gradients for one layer, shaped like its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

/// Gradients for a whole [`MlpNet`], one entry per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NetGrads {
    pub layers: Vec<LayerGrads>,
}

impl NetGrads {
    pub fn zeros_like(net: &MlpNet) -> Self {
        NetGrads {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrads {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    biases: Array1::zeros(l.biases.raw_dim()),
                })
                .collect(),
        }
    }

    /// Row-major flattening in the same order as [`MlpNet::flat_params`].
    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.biases.iter());
        }
    }
}

/// Everything [`MlpNet::backward`] needs from a train-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `activations[l]` is the input fed to layer `l` (after the previous
    /// layer's activation and dropout); the final entry is the net output.
    pub activations: Vec<Array2<f64>>,
    pub pre_activations: Vec<Array2<f64>>,
    /// Scaled keep-masks (`0` or `1/(1-p)`), present only where dropout ran.
    pub masks: Vec<Option<Array2<f64>>>,
    generation: u64,
}

impl ForwardCache {
    pub fn depth(&self) -> usize {
        self.pre_activations.len()
    }
}

/// A dense feed-forward regression network with relu hidden layers and an
/// identity head.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpNet {
    layers: Vec<DenseLayer>,
    dropout_rate: f64,
    l2_penalty: f64,
    /// Bumped on every parameter update so stale caches can be detected.
    #[serde(skip)]
    generation: u64,
}

impl MlpNet {
    /// He-normal initialization (`sd = sqrt(2 / fan_in)`), zero biases.
    pub fn init<R: Rng + ?Sized>(
        layer_sizes: &[usize],
        dropout_rate: f64,
        l2_penalty: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Config(format!(
                "a network needs at least an input and an output size, got {layer_sizes:?}"
            )));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::Config(format!(
                "layer sizes must be positive, got {layer_sizes:?}"
            )));
        }
        check_dropout(dropout_rate)?;
        if !(l2_penalty >= 0.0 && l2_penalty.is_finite()) {
            return Err(Error::Config(format!(
                "l2 penalty must be a nonnegative real, got {l2_penalty}"
            )));
        }

        let last = layer_sizes.len() - 2;
        let layers = layer_sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let sd = (2.0 / fan_in as f64).sqrt();
                let weights = Array2::from_shape_simple_fn((fan_out, fan_in), || {
                    let z: f64 = StandardNormal.sample(rng);
                    sd * z
                });
                DenseLayer {
                    weights,
                    biases: Array1::zeros(fan_out),
                    activation: if i == last {
                        Activation::Identity
                    } else {
                        Activation::Relu
                    },
                }
            })
            .collect();

        Ok(MlpNet {
            layers,
            dropout_rate,
            l2_penalty,
            generation: 0,
        })
    }

    /// Builds a net from explicit layers. Hidden layers may use any
    /// activation but the head must be the identity.
    pub fn from_layers(layers: Vec<DenseLayer>, dropout_rate: f64, l2_penalty: f64) -> Result<Self> {
        let net = MlpNet {
            layers,
            dropout_rate,
            l2_penalty,
            generation: 0,
        };
        net.validate()?;
        Ok(net)
    }

    /// Checks the structural invariants; used after deserialization.
    pub fn validate(&self) -> Result<()> {
        let Some(head) = self.layers.last() else {
            return Err(Error::Config("network has no layers".into()));
        };
        if head.activation != Activation::Identity {
            return Err(Error::Config("network head must use the identity activation".into()));
        }
        check_dropout(self.dropout_rate)?;
        if !(self.l2_penalty >= 0.0 && self.l2_penalty.is_finite()) {
            return Err(Error::Config("l2 penalty must be nonnegative".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.biases.len() != l.fan_out() {
                return Err(Error::Shape(format!(
                    "layer {i}: {} biases for {} outputs",
                    l.biases.len(),
                    l.fan_out()
                )));
            }
            if i > 0 && self.layers[i - 1].fan_out() != l.fan_in() {
                return Err(Error::Shape(format!(
                    "layer {i} expects {} inputs but layer {} produces {}",
                    l.fan_in(),
                    i - 1,
                    self.layers[i - 1].fan_out()
                )));
            }
            if l.weights.iter().chain(l.biases.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Input(format!("layer {i} has non-finite parameters")));
            }
        }
        Ok(())
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    /// Mutable access to the layers. Counts as a parameter update.
    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        self.generation += 1;
        &mut self.layers
    }

    pub fn fan_in(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn fan_out(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out()
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn set_dropout_rate(&mut self, p: f64) -> Result<()> {
        check_dropout(p)?;
        self.dropout_rate = p;
        Ok(())
    }

    pub fn l2_penalty(&self) -> f64 {
        self.l2_penalty
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.fan_in())
            .chain(self.layers.iter().map(DenseLayer::fan_out))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    /// `l2/2 · Σ‖W‖²` over weight matrices (biases are not penalized).
    pub fn penalty(&self) -> f64 {
        if self.l2_penalty == 0.0 {
            return 0.0;
        }
        let sq: f64 = self
            .layers
            .iter()
            .map(|l| l.weights.iter().map(|w| w * w).sum::<f64>())
            .sum();
        0.5 * self.l2_penalty * sq
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.flatten_into(&mut out);
        out
    }

    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.biases.iter());
        }
    }

    /// Overwrites parameters from `flat` and returns the number consumed.
    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<usize> {
        if flat.len() < self.param_count() {
            return Err(Error::Shape(format!(
                "need {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let mut pos = 0;
        for l in self.layers_mut() {
            for w in l.weights.iter_mut().chain(l.biases.iter_mut()) {
                *w = flat[pos];
                pos += 1;
            }
        }
        Ok(pos)
    }

    /// Runs the network on `x` (`N × fan_in`). A cache is returned only in
    /// [`Mode::Train`].
    pub fn forward<R: Rng + ?Sized>(
        &self,
        x: ArrayView2<f64>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Array2<f64>, Option<ForwardCache>)> {
        if x.ncols() != self.fan_in() {
            return Err(Error::Shape(format!(
                "network expects {} input columns, got {}",
                self.fan_in(),
                x.ncols()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite network input".into()));
        }

        let keep = 1.0 - self.dropout_rate;
        let use_dropout = self.dropout_rate > 0.0 && mode != Mode::Eval;
        let train = mode == Mode::Train;
        let last = self.layers.len() - 1;

        let mut cache = train.then(|| ForwardCache {
            activations: Vec::with_capacity(self.layers.len() + 1),
            pre_activations: Vec::with_capacity(self.layers.len()),
            masks: Vec::with_capacity(self.layers.len()),
            generation: self.generation,
        });

        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weights.t());
            z += &layer.biases;

            let mut out = match layer.activation {
                Activation::Identity => z.clone(),
                Activation::Relu => z.mapv(|v| v.max(0.0)),
            };

            let mut mask = None;
            if use_dropout && i < last {
                let scale = 1.0 / keep;
                match mode {
                    Mode::Train => {
                        let m = Array2::from_shape_simple_fn(out.raw_dim(), || {
                            if rng.random::<f64>() < keep {
                                scale
                            } else {
                                0.0
                            }
                        });
                        out *= &m;
                        mask = Some(m);
                    }
                    Mode::McSample => {
                        let m = Array1::from_shape_simple_fn(out.ncols(), || {
                            if rng.random::<f64>() < keep {
                                scale
                            } else {
                                0.0
                            }
                        });
                        out *= &m;
                    }
                    Mode::Eval => unreachable!(),
                }
            }

            if let Some(c) = cache.as_mut() {
                c.activations.push(h);
                c.pre_activations.push(z);
                c.masks.push(mask);
            }
            h = out;
        }

        if let Some(c) = cache.as_mut() {
            c.activations.push(h.clone());
        }
        Ok((h, cache))
    }

    /// Exact gradients of `loss + l2/2 · Σ‖W‖²`, given `output_grad = ∂loss/∂output`
    /// and the cache from a train-mode forward on this same, unmodified net.
    pub fn backward(&self, cache: &ForwardCache, output_grad: ArrayView2<f64>) -> Result<(NetGrads, Array2<f64>)> {
        if cache.generation != self.generation || cache.depth() != self.layers.len() {
            return Err(Error::State(
                "forward cache does not belong to the current network parameters".into(),
            ));
        }
        let n = cache.activations[0].nrows();
        if output_grad.dim() != (n, self.fan_out()) {
            return Err(Error::Shape(format!(
                "output gradient is {:?}, expected {:?}",
                output_grad.dim(),
                (n, self.fan_out())
            )));
        }

        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = output_grad.to_owned();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            if let Some(mask) = &cache.masks[i] {
                delta *= mask;
            }
            if layer.activation == Activation::Relu {
                Zip::from(&mut delta).and(&cache.pre_activations[i]).for_each(|d, &z| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            let mut dw = delta.t().dot(&cache.activations[i]);
            if self.l2_penalty != 0.0 {
                dw.scaled_add(self.l2_penalty, &layer.weights);
            }
            let db = delta.sum_axis(Axis(0));
            grads.push(LayerGrads {
                weights: dw,
                biases: db,
            });
            delta = delta.dot(&layer.weights);
        }
        grads.reverse();
        Ok((NetGrads { layers: grads }, delta))
    }
}

fn check_dropout(p: f64) -> Result<()> {
    if (0.0..1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Config(format!("dropout rate must lie in [0, 1), got {p}")))
    }
}
