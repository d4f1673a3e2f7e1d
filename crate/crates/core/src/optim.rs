//! SGD with momentum, L2 regularization, and a step decay schedule.
//!
//! The regularizer is `lambda * ||theta||^2`, so each gradient picks up a
//! `2 * lambda * theta` term; it applies to every trainable parameter
//! including batch-norm scale and shift. Velocity follows
//! `v <- momentum * v + g'` and parameters move by `-lr * v`.

use serde::{Deserialize, Serialize};

use crate::nn::{grad_tensor, param_tensor_mut, Gradients, Network, NnError};
use crate::rng::SeededRng;
use crate::tensor::{gather_rows, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgdConfig {
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs at which the learning rate is multiplied by `decay_factor`; the
    /// new rate applies from that epoch on (epochs are 0-based).
    pub decay_epochs: Vec<usize>,
    pub decay_factor: f64,
    /// Drives the per-epoch shuffle streams; everything else that varies per
    /// run (initialization) is seeded by the caller.
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            base_lr: 0.1,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 128,
            epochs: 200,
            decay_epochs: vec![60, 120, 160],
            decay_factor: 0.1,
            seed: 0,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<(), OptimError> {
        if !(self.base_lr > 0.0) {
            return Err(OptimError::InvalidConfig("base_lr must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(OptimError::InvalidConfig("momentum must be in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(OptimError::InvalidConfig("weight_decay must be non-negative"));
        }
        if self.decay_epochs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(OptimError::InvalidConfig("decay_epochs must be strictly increasing"));
        }
        Ok(())
    }
}

/// Learning rate in effect at a 0-based epoch.
pub fn lr_at(cfg: &SgdConfig, epoch: usize) -> f64 {
    let steps = cfg.decay_epochs.iter().filter(|&&d| d <= epoch).count();
    cfg.base_lr * cfg.decay_factor.powi(steps as i32)
}

#[derive(Debug, thiserror::Error)]
pub enum OptimError {
    #[error("invalid config: {0}")]
    InvalidConfig(&'static str),
    #[error("non-finite gradient in {layer} at epoch {epoch}")]
    NonFiniteGradient { layer: String, epoch: usize },
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("labels length {labels} does not match batch count {samples}")]
    LabelMismatch { labels: usize, samples: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// One per-epoch summary row. Loss and error are running statistics over the
/// epoch's batches, computed from each batch's pre-update forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_err: f64,
}

/// Applies one SGD step in place. Fails without touching the network if any
/// regularized gradient is non-finite.
pub fn sgd_step(
    net: &mut Network,
    grads: &Gradients,
    velocity: &mut Gradients,
    lr: f64,
    cfg: &SgdConfig,
) -> Result<(), OptimError> {
    sgd_step_at(net, grads, velocity, lr, cfg, 0)
}

fn sgd_step_at(
    net: &mut Network,
    grads: &Gradients,
    velocity: &mut Gradients,
    lr: f64,
    cfg: &SgdConfig,
    epoch: usize,
) -> Result<(), OptimError> {
    // Validate first so a poisoned step leaves the previous parameters intact.
    for li in 0..net.layers().len() {
        for field in 0..2 {
            let Some(g) = grad_tensor(grads, li, field) else { continue };
            let w = param_tensor_mut(&mut net.layers_mut()[li], field)
                .expect("gradient slot without parameter");
            let bad = g
                .data()
                .iter()
                .zip(w.data())
                .any(|(&gv, &wv)| !(gv + 2.0 * cfg.weight_decay * wv).is_finite());
            if bad {
                return Err(OptimError::NonFiniteGradient {
                    layer: format!("layer {li} ({})", net.layers()[li].kind_name()),
                    epoch,
                });
            }
        }
    }
    for li in 0..net.layers().len() {
        for field in 0..2 {
            let Some(g) = grad_tensor(grads, li, field) else { continue };
            let g = g.clone();
            let v = grad_tensor_mut(velocity, li, field).expect("velocity slot");
            let w = param_tensor_mut(&mut net.layers_mut()[li], field).unwrap();
            for ((wv, vv), &gv) in w.data_mut().iter_mut().zip(v).zip(g.data()) {
                let reg = gv + 2.0 * cfg.weight_decay * *wv;
                *vv = cfg.momentum * *vv + reg;
                *wv -= lr * *vv;
            }
        }
    }
    Ok(())
}

fn grad_tensor_mut<'a>(
    grads: &'a mut Gradients,
    layer: usize,
    field: usize,
) -> Option<&'a mut [f64]> {
    use crate::nn::LayerGrads;
    match (&mut grads.layers[layer], field) {
        (LayerGrads::Dense { dw, .. }, 0) => Some(dw.data_mut()),
        (LayerGrads::Dense { db, .. }, 1) => Some(db.data_mut()),
        (LayerGrads::BatchNorm { dgamma, .. }, 0) => Some(dgamma.data_mut()),
        (LayerGrads::BatchNorm { dbeta, .. }, 1) => Some(dbeta.data_mut()),
        _ => None,
    }
}

fn argmax_row(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Trains in place for `cfg.epochs` epochs. Each epoch reshuffles with the
/// child stream `shuffle-{epoch}` of `cfg.seed`, so the order depends only on
/// the seed and the epoch number. The trailing partial batch is kept; if it
/// would hold a single sample it is merged into the previous batch, since
/// batch statistics need at least two samples.
///
/// On a non-finite loss or gradient the epoch's step is not applied and the
/// error reports where training diverged; the network keeps the last good
/// parameters.
pub fn train(
    net: &mut Network,
    x: &Tensor,
    labels: &[usize],
    cfg: &SgdConfig,
) -> Result<Vec<TrainRecord>, OptimError> {
    let mut velocity = Gradients::zeros_like(net);
    train_range(net, x, labels, cfg, 0..cfg.epochs, &mut velocity)
}

/// Runs the epochs in `epochs` only, against the absolute schedule (learning
/// rate decay and shuffle streams use the global epoch number) and a caller
/// owned velocity. Splitting `0..cfg.epochs` into consecutive ranges with a
/// shared velocity reproduces [`train`] bit for bit, which is how callers
/// interleave metric snapshots with training.
pub fn train_range(
    net: &mut Network,
    x: &Tensor,
    labels: &[usize],
    cfg: &SgdConfig,
    epochs: std::ops::Range<usize>,
    velocity: &mut Gradients,
) -> Result<Vec<TrainRecord>, OptimError> {
    cfg.validate()?;
    let m = x.shape()[0];
    if m == 0 {
        return Err(OptimError::EmptyTrainingSet);
    }
    if labels.len() != m {
        return Err(OptimError::LabelMismatch { labels: labels.len(), samples: m });
    }
    let rng = SeededRng::new(cfg.seed);
    let classes = net.classes();
    let mut records = Vec::with_capacity(epochs.len());
    for epoch in epochs {
        let lr = lr_at(cfg, epoch);
        let mut order: Vec<usize> = (0..m).collect();
        rng.split(&format!("shuffle-{epoch}")).shuffle(&mut order);

        let mut ranges = Vec::new();
        let mut start = 0;
        while start < m {
            let end = (start + cfg.batch_size).min(m);
            ranges.push(start..end);
            start = end;
        }
        if ranges.len() > 1 && ranges.last().unwrap().len() == 1 {
            let last = ranges.pop().unwrap();
            let prev = ranges.pop().unwrap();
            ranges.push(prev.start..last.end);
        }

        let mut loss_sum = 0.0;
        let mut errors = 0usize;
        for range in ranges {
            let idx = &order[range];
            let batch = gather_rows(x, idx);
            let batch_labels: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            let one_hot = crate::nn::one_hot(&batch_labels, classes)?;
            let (grads, loss, logits) = net.train_step(&batch, &one_hot)?;
            if !loss.is_finite() {
                return Err(OptimError::NonFiniteLoss { epoch });
            }
            loss_sum += loss * idx.len() as f64;
            for (row, &y) in (0..idx.len()).map(|i| logits.row(i)).zip(&batch_labels) {
                if argmax_row(row) != y {
                    errors += 1;
                }
            }
            sgd_step_at(net, &grads, velocity, lr, cfg, epoch)?;
        }
        records.push(TrainRecord {
            epoch,
            lr,
            train_loss: loss_sum / m as f64,
            train_err: errors as f64 / m as f64,
        });
    }
    Ok(records)
}
