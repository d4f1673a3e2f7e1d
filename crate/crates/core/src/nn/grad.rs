//! Backpropagation through the fused softmax cross-entropy head, plus a
//! finite-difference gradient checker.

use super::kernels::{self, Cache};
use super::{Layer, Network, NnError};
use crate::tensor::Tensor;

/// Gradient (or velocity) slot for one layer, aligned with `Network::layers`.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerGrads {
    /// Linear or conv: weight and bias gradients.
    Dense { dw: Tensor, db: Tensor },
    BatchNorm { dgamma: Tensor, dbeta: Tensor },
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        let layers = net
            .layers()
            .iter()
            .map(|l| match l {
                Layer::Linear { w, b } | Layer::Conv { w, b, .. } => LayerGrads::Dense {
                    dw: Tensor::zeros(w.shape()),
                    db: Tensor::zeros(b.shape()),
                },
                Layer::BatchNorm { gamma, beta, .. } => LayerGrads::BatchNorm {
                    dgamma: Tensor::zeros(gamma.shape()),
                    dbeta: Tensor::zeros(beta.shape()),
                },
                Layer::Relu | Layer::Flatten => LayerGrads::None,
            })
            .collect();
        Gradients { layers }
    }
}

/// Mutable view of one parameter tensor: field 0 is weights/gamma, field 1 is
/// bias/beta. Used by the optimizer and the gradient checker to walk
/// parameters in a fixed order.
pub(crate) fn param_tensor_mut(layer: &mut Layer, field: usize) -> Option<&mut Tensor> {
    match (layer, field) {
        (Layer::Linear { w, .. }, 0) | (Layer::Conv { w, .. }, 0) => Some(w),
        (Layer::Linear { b, .. }, 1) | (Layer::Conv { b, .. }, 1) => Some(b),
        (Layer::BatchNorm { gamma, .. }, 0) => Some(gamma),
        (Layer::BatchNorm { beta, .. }, 1) => Some(beta),
        _ => None,
    }
}

pub(crate) fn grad_tensor(grads: &Gradients, layer: usize, field: usize) -> Option<&Tensor> {
    match (&grads.layers[layer], field) {
        (LayerGrads::Dense { dw, .. }, 0) => Some(dw),
        (LayerGrads::Dense { db, .. }, 1) => Some(db),
        (LayerGrads::BatchNorm { dgamma, .. }, 0) => Some(dgamma),
        (LayerGrads::BatchNorm { dbeta, .. }, 1) => Some(dbeta),
        _ => None,
    }
}

/// Everything a train-mode backward pass produces before any state is
/// committed: gradients, mean loss, the train-mode logits, and the pending
/// running-statistic updates.
pub(crate) struct BackwardPass {
    pub grads: Gradients,
    pub loss: f64,
    pub logits: Tensor,
    pub updates: Vec<(usize, (Vec<f64>, Vec<f64>))>,
}

impl Network {
    /// Train-mode forward plus backward pass. Returns the parameter gradients
    /// of the mean cross-entropy and the loss itself, and folds the batch
    /// statistics into the running estimates (this is a real training pass).
    pub fn backward(&mut self, batch: &Tensor, one_hot: &Tensor) -> Result<(Gradients, f64), NnError> {
        let pass = self.backward_frozen(batch, one_hot)?;
        self.apply_running_updates(pass.updates);
        Ok((pass.grads, pass.loss))
    }

    /// Like [`Network::backward`] but also hands back the train-mode logits,
    /// so the training loop can count batch errors without a second forward.
    pub(crate) fn train_step(
        &mut self,
        batch: &Tensor,
        one_hot: &Tensor,
    ) -> Result<(Gradients, f64, Tensor), NnError> {
        let pass = self.backward_frozen(batch, one_hot)?;
        self.apply_running_updates(pass.updates);
        Ok((pass.grads, pass.loss, pass.logits))
    }

    /// Backward pass that leaves running statistics untouched (used by the
    /// gradient checker, whose finite differences must not perturb state).
    pub(crate) fn backward_frozen(
        &self,
        batch: &Tensor,
        one_hot: &Tensor,
    ) -> Result<BackwardPass, NnError> {
        let (logits, caches, updates) = self.forward_cached(batch)?;
        let (loss, mut dx) = kernels::softmax_ce(&logits, one_hot)?;
        let mut out = Gradients { layers: vec![LayerGrads::None; self.layers().len()] };
        for i in (0..self.layers().len()).rev() {
            match (&self.layers()[i], &caches[i]) {
                (Layer::Linear { w, .. }, Some(Cache::Linear { input })) => {
                    let (dxi, dw, db) = kernels::linear_backward(&dx, input, w)?;
                    out.layers[i] = LayerGrads::Dense { dw, db };
                    dx = dxi;
                }
                (Layer::Conv { w, stride, pad, .. }, Some(Cache::Conv { input })) => {
                    let (dxi, dw, db) = kernels::conv_backward(&dx, input, w, *stride, *pad)?;
                    out.layers[i] = LayerGrads::Dense { dw, db };
                    dx = dxi;
                }
                (Layer::BatchNorm { gamma, .. }, Some(Cache::BatchNorm { x_hat, inv_std })) => {
                    let (dxi, dgamma, dbeta) = kernels::bn_backward(&dx, x_hat, inv_std, gamma)?;
                    out.layers[i] = LayerGrads::BatchNorm { dgamma, dbeta };
                    dx = dxi;
                }
                (Layer::Relu, Some(Cache::Relu { active })) => {
                    dx = kernels::relu_backward(&dx, active);
                }
                (Layer::Flatten, Some(Cache::Flatten { input_shape })) => {
                    dx = dx.reshape(input_shape)?;
                }
                _ => unreachable!("cache/layer mismatch at layer {i}"),
            }
        }
        Ok(BackwardPass { grads: out, loss, logits, updates })
    }

    /// Mean cross-entropy under batch statistics, without touching running
    /// estimates or allocating backward caches.
    pub(crate) fn loss_train_frozen(&self, batch: &Tensor, one_hot: &Tensor) -> Result<f64, NnError> {
        let (logits, _, _) = self.forward_cached(batch)?;
        let (loss, _) = kernels::softmax_ce(&logits, one_hot)?;
        Ok(loss)
    }
}

#[derive(Debug, Clone)]
pub struct LayerCheck {
    pub layer: usize,
    pub name: String,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub per_layer: Vec<LayerCheck>,
    pub max_rel_err: f64,
    pub pass: bool,
}

/// Compares analytic gradients against central finite differences for every
/// parameter. The relative error of a pair `(a, n)` is
/// `|a - n| / max(1, |a|, |n|)`. Intended for small nets; cost grows with the
/// parameter count times the forward cost.
pub fn gradient_check(
    net: &Network,
    batch: &Tensor,
    one_hot: &Tensor,
    step: f64,
    tol: f64,
) -> Result<GradCheckReport, NnError> {
    let grads = net.backward_frozen(batch, one_hot)?.grads;
    let mut work = net.clone();
    let mut per_layer = Vec::new();
    let mut max_rel = 0.0f64;
    for li in 0..net.layers().len() {
        let mut layer_max = 0.0f64;
        let mut has_params = false;
        for field in 0..2 {
            let len = match param_tensor_mut(&mut work.layers_mut()[li], field) {
                Some(t) => t.len(),
                None => continue,
            };
            has_params = true;
            let analytic = grad_tensor(&grads, li, field).expect("grad slot for param field");
            for e in 0..len {
                let orig = param_tensor_mut(&mut work.layers_mut()[li], field).unwrap().data()[e];
                param_tensor_mut(&mut work.layers_mut()[li], field).unwrap().data_mut()[e] =
                    orig + step;
                let plus = work.loss_train_frozen(batch, one_hot)?;
                param_tensor_mut(&mut work.layers_mut()[li], field).unwrap().data_mut()[e] =
                    orig - step;
                let minus = work.loss_train_frozen(batch, one_hot)?;
                param_tensor_mut(&mut work.layers_mut()[li], field).unwrap().data_mut()[e] = orig;

                let numeric = (plus - minus) / (2.0 * step);
                let a = analytic.data()[e];
                let rel = (a - numeric).abs() / 1.0f64.max(a.abs()).max(numeric.abs());
                layer_max = layer_max.max(rel);
            }
        }
        if has_params {
            max_rel = max_rel.max(layer_max);
            per_layer.push(LayerCheck {
                layer: li,
                name: net.layers()[li].kind_name().to_string(),
                max_rel_err: layer_max,
            });
        }
    }
    Ok(GradCheckReport { per_layer, max_rel_err: max_rel, pass: max_rel <= tol })
}
