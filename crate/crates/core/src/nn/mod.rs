//! Networks built from fixed-width blocks, with per-block feature capture.
//!
//! Two families are provided. `build_mlp(l, h, ..)` stacks `l` blocks of
//! `Linear(h) -> BatchNorm -> ReLU` before the output layer. `build_conv`
//! starts with a downsampling stem (two stride-2 2x2 convolutions, each
//! batch-normalized, then one ReLU) that forms block 1, follows it with
//! `l - 1` blocks of `Conv3x3 -> BatchNorm -> ReLU`, and flattens before the
//! output layer.
//!
//! A [`ForwardTrace`] records the output of every block (flattened to
//! `n x features`, channel-major) plus the logits, which is what the collapse
//! metrics consume. Metric code always requests eval mode so traces are
//! normalized with running statistics.

mod checkpoint;
mod grad;
pub(crate) mod kernels;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
pub use grad::{gradient_check, GradCheckReport, Gradients, LayerGrads};
pub(crate) use grad::{grad_tensor, param_tensor_mut};

use crate::rng::SeededRng;
use crate::tensor::{Tensor, TensorError};
use kernels::Cache;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("invalid network construction: {0}")]
    Construction(String),
    #[error("batch shape {got:?} does not match expected per-sample shape {expected:?}")]
    BatchShape { expected: Vec<usize>, got: Vec<usize> },
    #[error("train-mode forward needs at least 2 samples, got {0}")]
    SmallBatch(usize),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// One layer of a [`Network`]. Linear weights are stored `in x out`; conv
/// weights `out_c x in_c x kh x kw`.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Linear {
        w: Tensor,
        b: Tensor,
    },
    Conv {
        w: Tensor,
        b: Tensor,
        stride: usize,
        pad: usize,
    },
    BatchNorm {
        gamma: Tensor,
        beta: Tensor,
        running_mean: Tensor,
        running_var: Tensor,
        eps: f64,
        momentum: f64,
    },
    Relu,
    Flatten,
}

impl Layer {
    pub(crate) fn kind_name(&self) -> &'static str {
        match self {
            Layer::Linear { .. } => "linear",
            Layer::Conv { .. } => "conv",
            Layer::BatchNorm { .. } => "batchnorm",
            Layer::Relu => "relu",
            Layer::Flatten => "flatten",
        }
    }

    /// Trainable parameter count (running statistics excluded).
    fn param_count(&self) -> usize {
        match self {
            Layer::Linear { w, b } | Layer::Conv { w, b, .. } => w.len() + b.len(),
            Layer::BatchNorm { gamma, beta, .. } => gamma.len() + beta.len(),
            Layer::Relu | Layer::Flatten => 0,
        }
    }
}

/// Forward mode: `Train` normalizes with batch statistics and updates the
/// running estimates, `Eval` uses the stored running statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-block features (each `n x p_i`, channel-major flattened) and logits.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub features: Vec<Tensor>,
    pub logits: Tensor,
}

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// A sequential network with `depth()` feature blocks and an output linear
/// head. `block_boundaries[i]` is the index of the last layer of block `i+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    block_boundaries: Vec<usize>,
    head_index: usize,
    input_shape: Vec<usize>,
    classes: usize,
}

fn bn_layer(features: usize) -> Layer {
    Layer::BatchNorm {
        gamma: Tensor::filled(&[features], 1.0),
        beta: Tensor::zeros(&[features]),
        running_mean: Tensor::zeros(&[features]),
        running_var: Tensor::filled(&[features], 1.0),
        eps: BN_EPS,
        momentum: BN_MOMENTUM,
    }
}

/// Kaiming fan-in initialization: `N(0, 2/fan_in)`, biases zero. Elements are
/// drawn in row-major order so a given seed fixes every parameter bit.
fn init_linear(rng: &mut SeededRng, fan_in: usize, fan_out: usize) -> Layer {
    let std = (2.0 / fan_in as f64).sqrt();
    let mut w = rng.gaussian(&[fan_in, fan_out]);
    for v in w.data_mut() {
        *v *= std;
    }
    Layer::Linear { w, b: Tensor::zeros(&[fan_out]) }
}

fn init_conv(rng: &mut SeededRng, in_c: usize, out_c: usize, k: usize, stride: usize, pad: usize) -> Layer {
    let fan_in = in_c * k * k;
    let std = (2.0 / fan_in as f64).sqrt();
    let mut w = rng.gaussian(&[out_c, in_c, k, k]);
    for v in w.data_mut() {
        *v *= std;
    }
    Layer::Conv { w, b: Tensor::zeros(&[out_c]), stride, pad }
}

/// Builds an MLP with `depth` blocks of width `width` over `input_dim`-dim
/// inputs and a `classes`-way output head.
pub fn build_mlp(
    depth: usize,
    width: usize,
    input_dim: usize,
    classes: usize,
    rng: &mut SeededRng,
) -> Result<Network, NnError> {
    if depth == 0 || width == 0 || input_dim == 0 || classes == 0 {
        return Err(NnError::Construction(format!(
            "mlp dimensions must be positive (depth {depth}, width {width}, input {input_dim}, classes {classes})"
        )));
    }
    let mut layers = Vec::new();
    let mut boundaries = Vec::new();
    let mut fan_in = input_dim;
    for _ in 0..depth {
        layers.push(init_linear(rng, fan_in, width));
        layers.push(bn_layer(width));
        layers.push(Layer::Relu);
        boundaries.push(layers.len() - 1);
        fan_in = width;
    }
    layers.push(init_linear(rng, fan_in, classes));
    let head_index = layers.len() - 1;
    Ok(Network {
        layers,
        block_boundaries: boundaries,
        head_index,
        input_shape: vec![input_dim],
        classes,
    })
}

/// Builds a conv net over `(channels, height, width)` inputs: a stride-2 stem
/// (block 1), `depth - 1` width-preserving 3x3 blocks, flatten, output head.
pub fn build_conv(
    depth: usize,
    width: usize,
    input_shape: (usize, usize, usize),
    classes: usize,
    rng: &mut SeededRng,
) -> Result<Network, NnError> {
    let (in_c, h, w) = input_shape;
    if depth == 0 || width == 0 || in_c == 0 || classes == 0 {
        return Err(NnError::Construction(format!(
            "conv dimensions must be positive (depth {depth}, width {width}, channels {in_c}, classes {classes})"
        )));
    }
    if h < 4 || w < 4 {
        return Err(NnError::Construction(format!(
            "conv input spatial extent must be at least 4x4, got {h}x{w}"
        )));
    }
    let mut layers = Vec::new();
    let mut boundaries = Vec::new();
    layers.push(init_conv(rng, in_c, width, 2, 2, 0));
    layers.push(bn_layer(width));
    layers.push(init_conv(rng, width, width, 2, 2, 0));
    layers.push(bn_layer(width));
    layers.push(Layer::Relu);
    boundaries.push(layers.len() - 1);
    for _ in 1..depth {
        layers.push(init_conv(rng, width, width, 3, 1, 1));
        layers.push(bn_layer(width));
        layers.push(Layer::Relu);
        boundaries.push(layers.len() - 1);
    }
    layers.push(Layer::Flatten);
    let sh = kernels::conv_out_extent(kernels::conv_out_extent(h, 2, 2, 0).unwrap(), 2, 2, 0);
    let sw = kernels::conv_out_extent(kernels::conv_out_extent(w, 2, 2, 0).unwrap(), 2, 2, 0);
    let (sh, sw) = match (sh, sw) {
        (Some(a), Some(b)) if a > 0 && b > 0 => (a, b),
        _ => {
            return Err(NnError::Construction(format!(
                "input {h}x{w} collapses to nothing after the stride-2 stem"
            )))
        }
    };
    layers.push(init_linear(rng, width * sh * sw, classes));
    let head_index = layers.len() - 1;
    Ok(Network {
        layers,
        block_boundaries: boundaries,
        head_index,
        input_shape: vec![in_c, h, w],
        classes,
    })
}

/// Architecture family selector shared by sweeps and run configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Mlp,
    Conv,
}

/// Builds a network of the given family for samples of `sample_shape`:
/// `[d]` flat vectors for the MLP family, `[c, h, w]` images for conv.
/// Image data destined for an MLP must be flattened by the caller first.
pub fn build_network(
    family: Family,
    depth: usize,
    width: usize,
    sample_shape: &[usize],
    classes: usize,
    rng: &mut SeededRng,
) -> Result<Network, NnError> {
    match (family, sample_shape) {
        (Family::Mlp, [d]) => build_mlp(depth, width, *d, classes, rng),
        (Family::Conv, [c, h, w]) => build_conv(depth, width, (*c, *h, *w), classes, rng),
        (Family::Mlp, other) => Err(NnError::Construction(format!(
            "mlp family needs flat [d] samples, got {other:?}"
        ))),
        (Family::Conv, other) => Err(NnError::Construction(format!(
            "conv family needs [channels, height, width] samples, got {other:?}"
        ))),
    }
}

/// Zero-initialized bare linear classifier; the auxiliary-probe model.
pub(crate) fn linear_classifier(input_dim: usize, classes: usize) -> Network {
    Network {
        layers: vec![Layer::Linear {
            w: Tensor::zeros(&[input_dim, classes]),
            b: Tensor::zeros(&[classes]),
        }],
        block_boundaries: Vec::new(),
        head_index: 0,
        input_shape: vec![input_dim],
        classes,
    }
}

struct LayerOut {
    y: Tensor,
    cache: Option<Cache>,
    running_update: Option<(Vec<f64>, Vec<f64>)>,
}

impl Network {
    /// Number of feature blocks (network depth L).
    pub fn depth(&self) -> usize {
        self.block_boundaries.len()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Total trainable parameter count.
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    fn check_batch(&self, batch: &Tensor) -> Result<usize, NnError> {
        let shape = batch.shape();
        if shape.len() != self.input_shape.len() + 1 || &shape[1..] != self.input_shape.as_slice() {
            return Err(NnError::BatchShape {
                expected: self.input_shape.clone(),
                got: shape.to_vec(),
            });
        }
        Ok(shape[0])
    }

    fn run_layer(
        &self,
        index: usize,
        x: &Tensor,
        batch_stats: bool,
        want_cache: bool,
    ) -> Result<LayerOut, NnError> {
        let layer = &self.layers[index];
        let out = match layer {
            Layer::Linear { w, b } => LayerOut {
                y: kernels::linear_forward(x, w, b)?,
                cache: want_cache.then(|| Cache::Linear { input: x.clone() }),
                running_update: None,
            },
            Layer::Conv { w, b, stride, pad } => LayerOut {
                y: kernels::conv_forward(x, w, b, *stride, *pad)?,
                cache: want_cache.then(|| Cache::Conv { input: x.clone() }),
                running_update: None,
            },
            Layer::BatchNorm { gamma, beta, running_mean, running_var, eps, .. } => {
                if batch_stats {
                    let out = kernels::bn_forward_train(x, gamma, beta, *eps)?;
                    LayerOut {
                        y: out.y,
                        cache: want_cache
                            .then(|| Cache::BatchNorm { x_hat: out.x_hat, inv_std: out.inv_std }),
                        running_update: Some((out.batch_mean, out.batch_var)),
                    }
                } else {
                    LayerOut {
                        y: kernels::bn_forward_eval(x, gamma, beta, running_mean, running_var, *eps)?,
                        cache: None,
                        running_update: None,
                    }
                }
            }
            Layer::Relu => {
                let (y, active) = kernels::relu_forward(x);
                LayerOut {
                    y,
                    cache: want_cache.then_some(Cache::Relu { active }),
                    running_update: None,
                }
            }
            Layer::Flatten => LayerOut {
                y: kernels::flatten_forward(x)?,
                cache: want_cache.then(|| Cache::Flatten { input_shape: x.shape().to_vec() }),
                running_update: None,
            },
        };
        Ok(out)
    }

    fn capture(features: &mut Vec<Tensor>, y: &Tensor) -> Result<(), NnError> {
        let n = y.shape()[0];
        let rest: usize = y.shape()[1..].iter().product();
        features.push(y.reshape(&[n, rest])?);
        Ok(())
    }

    /// Runs the batch through the network. Train mode uses batch statistics
    /// and folds them into the running estimates; eval mode is read-only and
    /// is what every metric path uses.
    pub fn forward(&mut self, batch: &Tensor, mode: Mode) -> Result<ForwardTrace, NnError> {
        match mode {
            Mode::Eval => self.eval_trace(batch),
            Mode::Train => {
                let n = self.check_batch(batch)?;
                if n < 2 {
                    return Err(NnError::SmallBatch(n));
                }
                let mut x = batch.clone();
                let mut features = Vec::with_capacity(self.depth());
                let mut updates = Vec::new();
                for i in 0..self.layers.len() {
                    let out = self.run_layer(i, &x, true, false)?;
                    x = out.y;
                    if let Some(u) = out.running_update {
                        updates.push((i, u));
                    }
                    if self.block_boundaries.contains(&i) {
                        Self::capture(&mut features, &x)?;
                    }
                }
                self.apply_running_updates(updates);
                Ok(ForwardTrace { features, logits: x })
            }
        }
    }

    /// Eval-mode forward with per-block capture; does not mutate the network.
    pub fn eval_trace(&self, batch: &Tensor) -> Result<ForwardTrace, NnError> {
        self.check_batch(batch)?;
        let mut x = batch.clone();
        let mut features = Vec::with_capacity(self.depth());
        for i in 0..self.layers.len() {
            x = self.run_layer(i, &x, false, false)?.y;
            if self.block_boundaries.contains(&i) {
                Self::capture(&mut features, &x)?;
            }
        }
        Ok(ForwardTrace { features, logits: x })
    }

    /// Eval-mode logits without feature capture.
    pub fn eval_logits(&self, batch: &Tensor) -> Result<Tensor, NnError> {
        self.check_batch(batch)?;
        let mut x = batch.clone();
        for i in 0..self.layers.len() {
            x = self.run_layer(i, &x, false, false)?.y;
        }
        Ok(x)
    }

    fn apply_running_updates(&mut self, updates: Vec<(usize, (Vec<f64>, Vec<f64>))>) {
        for (i, (mean, var)) in updates {
            if let Layer::BatchNorm { running_mean, running_var, momentum, .. } = &mut self.layers[i]
            {
                let m = *momentum;
                for (r, &b) in running_mean.data_mut().iter_mut().zip(&mean) {
                    *r = (1.0 - m) * *r + m * b;
                }
                for (r, &b) in running_var.data_mut().iter_mut().zip(&var) {
                    *r = (1.0 - m) * *r + m * b;
                }
            }
        }
    }

    /// Train-mode forward keeping backward caches. Does not touch running
    /// statistics; the caller applies the returned updates if this pass is a
    /// real training step.
    #[allow(clippy::type_complexity)]
    fn forward_cached(
        &self,
        batch: &Tensor,
    ) -> Result<(Tensor, Vec<Option<Cache>>, Vec<(usize, (Vec<f64>, Vec<f64>))>), NnError> {
        let n = self.check_batch(batch)?;
        if n < 2 {
            return Err(NnError::SmallBatch(n));
        }
        let mut x = batch.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut updates = Vec::new();
        for i in 0..self.layers.len() {
            let out = self.run_layer(i, &x, true, true)?;
            x = out.y;
            caches.push(out.cache);
            if let Some(u) = out.running_update {
                updates.push((i, u));
            }
        }
        Ok((x, caches, updates))
    }
}

/// One-hot encodes labels against `classes` columns.
pub fn one_hot(labels: &[usize], classes: usize) -> Result<Tensor, NnError> {
    let mut t = Tensor::zeros(&[labels.len(), classes]);
    for (i, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(NnError::Construction(format!(
                "label {y} out of range for {classes} classes"
            )));
        }
        t.data_mut()[i * classes + y] = 1.0;
    }
    Ok(t)
}
