//! Collapse metrics: class-distance normalized variance (CDNV), nearest
//! class-center classification, effective depth, per-layer reports, and a
//! linear probe.
//!
//! For finite sets the CDNV of classes `a` and `b` at a feature map is
//!
//! ```text
//! V(a, b) = (Var(a) + Var(b)) / (2 ||mu_a - mu_b||^2)
//! ```
//!
//! where `mu_c` is the class mean of the mapped samples and `Var(c)` is the
//! population variance `E ||x - mu_c||^2`. Values in a report are computed on
//! eval-mode traces.

use crate::data::Dataset;
use crate::exec;
use crate::nn::{Network, NnError};
use crate::tensor::{gather_rows, reduce_mean_var, Tensor, TensorError};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("class {class} has no samples")]
    EmptyClass { class: usize },
    #[error("labels length {labels} does not match feature rows {rows}")]
    LengthMismatch { labels: usize, rows: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelRange { label: usize, classes: usize },
    #[error("feature width {left} does not match means width {right}")]
    WidthMismatch { left: usize, right: usize },
    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("every class pair has coincident means; the average CDNV is undefined")]
    AllPairsDegenerate,
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Optim(Box<crate::optim::OptimError>),
}

impl From<crate::optim::OptimError> for MetricsError {
    fn from(e: crate::optim::OptimError) -> Self {
        MetricsError::Optim(Box::new(e))
    }
}

/// Below this squared distance between class means a CDNV pair is treated as
/// degenerate (reported as +inf and excluded from averages).
pub const DEGENERATE_DIST_SQ: f64 = 1e-24;

/// Per-class means and population variances of a feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassStats {
    /// `classes x p` matrix of class means.
    pub means: Tensor,
    /// `Var(c) = (1/n_c) sum ||x - mu_c||^2` per class.
    pub vars: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Computes [`ClassStats`] for `features` (`n x p`) under `labels`.
/// Every class in `0..classes` must appear at least once.
pub fn class_stats(
    features: &Tensor,
    labels: &[usize],
    classes: usize,
) -> Result<ClassStats, MetricsError> {
    let (n, p) = features.dims2()?;
    if labels.len() != n {
        return Err(MetricsError::LengthMismatch { labels: labels.len(), rows: n });
    }
    let mut index: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(MetricsError::LabelRange { label: y, classes });
        }
        index[y].push(i);
    }
    let mut means = Vec::with_capacity(classes * p);
    let mut vars = Vec::with_capacity(classes);
    let mut counts = Vec::with_capacity(classes);
    for (c, idx) in index.iter().enumerate() {
        if idx.is_empty() {
            return Err(MetricsError::EmptyClass { class: c });
        }
        let rows = gather_rows(features, idx);
        let (mean, var) = reduce_mean_var(&rows)?;
        means.extend_from_slice(mean.data());
        vars.push(var);
        counts.push(idx.len());
    }
    Ok(ClassStats {
        means: Tensor::from_vec(&[classes, p], means)?,
        vars,
        counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdnvValue {
    pub value: f64,
    pub degenerate: bool,
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

/// CDNV of one unordered class pair.
pub fn cdnv(stats: &ClassStats, a: usize, b: usize) -> CdnvValue {
    let d2 = dist_sq(stats.means.row(a), stats.means.row(b));
    if d2 < DEGENERATE_DIST_SQ {
        return CdnvValue { value: f64::INFINITY, degenerate: true };
    }
    CdnvValue { value: (stats.vars[a] + stats.vars[b]) / (2.0 * d2), degenerate: false }
}

/// All pairwise CDNV values. The diagonal is NaN; the matrix is symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct CdnvMatrix {
    pub classes: usize,
    values: Vec<f64>,
    degenerate: Vec<bool>,
}

impl CdnvMatrix {
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.classes + b]
    }

    pub fn is_degenerate(&self, a: usize, b: usize) -> bool {
        self.degenerate[a * self.classes + b]
    }

    /// Mean over unordered pairs, skipping degenerate ones. Returns the mean
    /// (`None` when every pair is degenerate) and the number skipped.
    pub fn average(&self) -> (Option<f64>, usize) {
        let mut sum = 0.0;
        let mut kept = 0usize;
        let mut skipped = 0usize;
        for a in 0..self.classes {
            for b in (a + 1)..self.classes {
                if self.is_degenerate(a, b) {
                    skipped += 1;
                } else {
                    sum += self.get(a, b);
                    kept += 1;
                }
            }
        }
        if kept == 0 {
            (None, skipped)
        } else {
            (Some(sum / kept as f64), skipped)
        }
    }

    /// Nested rows for serialization: `None` on the diagonal and for
    /// degenerate pairs, the finite CDNV value otherwise.
    pub fn to_rows(&self) -> Vec<Vec<Option<f64>>> {
        (0..self.classes)
            .map(|a| {
                (0..self.classes)
                    .map(|b| {
                        if a == b || self.is_degenerate(a, b) {
                            None
                        } else {
                            Some(self.get(a, b))
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

pub fn cdnv_matrix(stats: &ClassStats) -> Result<CdnvMatrix, MetricsError> {
    let classes = stats.vars.len();
    if classes < 2 {
        return Err(MetricsError::TooFewClasses(classes));
    }
    let mut values = vec![f64::NAN; classes * classes];
    let mut degenerate = vec![false; classes * classes];
    for a in 0..classes {
        for b in (a + 1)..classes {
            let v = cdnv(stats, a, b);
            values[a * classes + b] = v.value;
            values[b * classes + a] = v.value;
            degenerate[a * classes + b] = v.degenerate;
            degenerate[b * classes + a] = v.degenerate;
        }
    }
    Ok(CdnvMatrix { classes, values, degenerate })
}

/// Mean CDNV over unordered class pairs of a feature matrix, together with
/// the full pairwise matrix. Degenerate pairs are excluded from the average;
/// if every pair is degenerate this is an error.
pub fn avg_cdnv(
    features: &Tensor,
    labels: &[usize],
    classes: usize,
) -> Result<(f64, CdnvMatrix), MetricsError> {
    let stats = class_stats(features, labels, classes)?;
    let matrix = cdnv_matrix(&stats)?;
    match matrix.average().0 {
        Some(avg) => Ok((avg, matrix)),
        None => Err(MetricsError::AllPairsDegenerate),
    }
}

/// Nearest class-center predictions. Ties go to the smallest class index.
pub fn ncc_predict(features: &Tensor, means: &Tensor) -> Result<Vec<usize>, MetricsError> {
    let (n, p) = features.dims2()?;
    let (classes, pm) = means.dims2()?;
    if p != pm {
        return Err(MetricsError::WidthMismatch { left: p, right: pm });
    }
    let out = exec::map_indexed(n, |i| {
        let row = features.row(i);
        let mut best = 0usize;
        let mut best_d = dist_sq(row, means.row(0));
        for c in 1..classes {
            let d = dist_sq(row, means.row(c));
            if d < best_d {
                best = c;
                best_d = d;
            }
        }
        best
    });
    Ok(out)
}

/// Fraction of samples misclassified by the nearest class-center rule.
pub fn ncc_error(
    features: &Tensor,
    labels: &[usize],
    means: &Tensor,
) -> Result<f64, MetricsError> {
    let preds = ncc_predict(features, means)?;
    if preds.len() != labels.len() {
        return Err(MetricsError::LengthMismatch { labels: labels.len(), rows: preds.len() });
    }
    let wrong = preds.iter().zip(labels).filter(|(p, y)| p != y).count();
    Ok(wrong as f64 / labels.len() as f64)
}

/// Smallest 1-based depth whose NCC training error is at most `epsilon`;
/// falls back to the last depth when none qualifies.
pub fn effective_depth(ncc_train_errs: &[f64], epsilon: f64) -> usize {
    for (i, &e) in ncc_train_errs.iter().enumerate() {
        if e <= epsilon {
            return i + 1;
        }
    }
    ncc_train_errs.len()
}

/// Fraction of samples whose argmax logit (ties to the smallest index)
/// disagrees with the label.
pub fn model_error(logits: &Tensor, labels: &[usize]) -> Result<f64, MetricsError> {
    let (n, _) = logits.dims2()?;
    if labels.len() != n {
        return Err(MetricsError::LengthMismatch { labels: labels.len(), rows: n });
    }
    let mut wrong = 0usize;
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        let mut best = 0usize;
        for (c, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = c;
            }
        }
        if best != y {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / n as f64)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LayerReport {
    /// 1-based block index.
    pub index: usize,
    /// Mean CDNV over non-degenerate pairs; `None` when every pair is
    /// degenerate.
    pub cdnv_train_avg: Option<f64>,
    pub cdnv_test_avg: Option<f64>,
    /// Full pairwise matrices with `None` on the diagonal and for degenerate
    /// pairs.
    pub cdnv_train_matrix: Vec<Vec<Option<f64>>>,
    pub cdnv_test_matrix: Vec<Vec<Option<f64>>>,
    pub ncc_train_err: f64,
    pub ncc_test_err: f64,
    /// Whether the NCC rule classifies the training split perfectly here.
    pub ncc_separable: bool,
    /// Degenerate train-split pairs excluded from `cdnv_train_avg`.
    pub degenerate_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CollapseReport {
    pub epsilon: f64,
    pub layers: Vec<LayerReport>,
    pub model_train_err: f64,
    pub model_test_err: f64,
    pub effective_depth: usize,
}

/// Evaluates collapse metrics at every block of `net`.
///
/// NCC test error classifies test features against the training class means;
/// set `recompute_test_means` to diagnose with the test split's own means
/// instead. Layers are processed through the crate's parallel map.
pub fn collapse_report(
    net: &Network,
    train: &Dataset,
    test: &Dataset,
    epsilon: f64,
    recompute_test_means: bool,
) -> Result<CollapseReport, MetricsError> {
    let train_trace = net.eval_trace(&train.x)?;
    let test_trace = net.eval_trace(&test.x)?;
    let classes = train.classes;
    let depth = train_trace.features.len();

    let per_layer: Vec<Result<LayerReport, MetricsError>> = exec::map_indexed(depth, |i| {
        let ft = &train_trace.features[i];
        let fs = &test_trace.features[i];
        let train_stats = class_stats(ft, &train.labels, classes)?;
        let test_stats = class_stats(fs, &test.labels, classes)?;
        let train_matrix = cdnv_matrix(&train_stats)?;
        let test_matrix = cdnv_matrix(&test_stats)?;
        let (cdnv_train_avg, degenerate_pairs) = train_matrix.average();
        let (cdnv_test_avg, _) = test_matrix.average();
        let ncc_train_err = ncc_error(ft, &train.labels, &train_stats.means)?;
        let test_means = if recompute_test_means { &test_stats.means } else { &train_stats.means };
        let ncc_test_err = ncc_error(fs, &test.labels, test_means)?;
        Ok(LayerReport {
            index: i + 1,
            cdnv_train_avg,
            cdnv_test_avg,
            cdnv_train_matrix: train_matrix.to_rows(),
            cdnv_test_matrix: test_matrix.to_rows(),
            ncc_train_err,
            ncc_test_err,
            ncc_separable: ncc_train_err == 0.0,
            degenerate_pairs,
        })
    });
    let layers = per_layer.into_iter().collect::<Result<Vec<_>, _>>()?;

    let train_errs: Vec<f64> = layers.iter().map(|l| l.ncc_train_err).collect();
    Ok(CollapseReport {
        epsilon,
        effective_depth: effective_depth(&train_errs, epsilon),
        model_train_err: model_error(&train_trace.logits, &train.labels)?,
        model_test_err: model_error(&test_trace.logits, &test.labels)?,
        layers,
    })
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Seed for the probe's epoch shuffles.
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { epochs: 60, batch_size: 128, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub train_err: f64,
    pub test_err: f64,
}

/// Trains a zero-initialized softmax linear classifier on frozen features
/// with the standard SGD recipe (lr 0.1, momentum 0.9, weight decay 5e-4,
/// constant schedule) and reports both split errors.
pub fn linear_probe(
    train_features: &Tensor,
    train_labels: &[usize],
    test_features: &Tensor,
    test_labels: &[usize],
    classes: usize,
    cfg: &ProbeConfig,
) -> Result<ProbeReport, MetricsError> {
    let (m, p) = train_features.dims2()?;
    if train_labels.len() != m {
        return Err(MetricsError::LengthMismatch { labels: train_labels.len(), rows: m });
    }
    let mut probe = crate::nn::linear_classifier(p, classes);
    let sgd = crate::optim::SgdConfig {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        decay_epochs: Vec::new(),
        seed: cfg.seed,
        ..crate::optim::SgdConfig::default()
    };
    crate::optim::train(&mut probe, train_features, train_labels, &sgd)?;
    Ok(ProbeReport {
        train_err: model_error(&probe.eval_logits(train_features)?, train_labels)?,
        test_err: model_error(&probe.eval_logits(test_features)?, test_labels)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_mixture;
    use crate::nn::build_mlp;
    use crate::optim::{train, SgdConfig};
    use crate::rng::SeededRng;

    fn feats(rows: Vec<Vec<f64>>) -> Tensor {
        let n = rows.len();
        let p = rows[0].len();
        Tensor::from_vec(&[n, p], rows.into_iter().flatten().collect()).unwrap()
    }

    #[test]
    fn cdnv_hand_value() {
        // Class 0: (0,0), (2,0) -> mean (1,0), var 1.
        // Class 1: (5,0), (5,2) -> mean (5,1), var 1.
        // ||mu0 - mu1||^2 = 16 + 1 = 17, so V = 2 / 34 = 1/17.
        let f = feats(vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![5.0, 0.0], vec![5.0, 2.0]]);
        let stats = class_stats(&f, &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(stats.counts, vec![2, 2]);
        assert!((stats.vars[0] - 1.0).abs() < 1e-15);
        assert!((stats.vars[1] - 1.0).abs() < 1e-15);
        let v = cdnv(&stats, 0, 1);
        assert!(!v.degenerate);
        assert!((v.value - 1.0 / 17.0).abs() < 1e-16);
    }

    #[test]
    fn class_stats_matches_compensated_oracle() {
        let rng = SeededRng::new(80);
        let ds = synth_mixture(4, 30, 6, 3.0, 0.7, &rng).unwrap();
        let stats = class_stats(&ds.x, &ds.labels, 4).unwrap();
        for c in 0..4 {
            let idx = ds.class_indices(c);
            // Neumaier-compensated mean and variance, a different summation
            // path from the implementation.
            let mut mean = vec![0.0f64; 6];
            for j in 0..6 {
                let (mut s, mut comp) = (0.0f64, 0.0f64);
                for &i in idx {
                    let v = ds.x.data()[i * 6 + j];
                    let t = s + v;
                    comp += if s.abs() >= v.abs() { (s - t) + v } else { (v - t) + s };
                    s = t;
                }
                mean[j] = (s + comp) / idx.len() as f64;
            }
            let (mut s, mut comp) = (0.0f64, 0.0f64);
            for &i in idx {
                let mut sq = 0.0;
                for j in 0..6 {
                    let d = ds.x.data()[i * 6 + j] - mean[j];
                    sq += d * d;
                }
                let t = s + sq;
                comp += if s.abs() >= sq.abs() { (s - t) + sq } else { (sq - t) + s };
                s = t;
            }
            let var = (s + comp) / idx.len() as f64;
            for j in 0..6 {
                assert!((stats.means.row(c)[j] - mean[j]).abs() < 1e-12);
            }
            assert!((stats.vars[c] - var).abs() / var.max(1.0) < 1e-12);
        }
    }

    #[test]
    fn degenerate_pair_is_flagged_and_excluded() {
        // Classes 0 and 1 share a mean; only pairs with class 2 count.
        let f = feats(vec![
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
            vec![0.5, 0.5],
            vec![-0.5, -0.5],
            vec![4.0, 4.0],
            vec![6.0, 6.0],
        ]);
        let stats = class_stats(&f, &[0, 0, 1, 1, 2, 2], 3).unwrap();
        let v01 = cdnv(&stats, 0, 1);
        assert!(v01.degenerate);
        assert!(v01.value.is_infinite());
        let matrix = cdnv_matrix(&stats).unwrap();
        let (avg, skipped) = matrix.average();
        assert_eq!(skipped, 1);
        let expect = (matrix.get(0, 2) + matrix.get(1, 2)) / 2.0;
        assert!((avg.unwrap() - expect).abs() < 1e-15);
        assert!(matrix.get(0, 0).is_nan());
    }

    #[test]
    fn avg_cdnv_errors_when_every_pair_is_degenerate() {
        // Both classes have mean (0, 0).
        let f = feats(vec![
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
            vec![0.5, 0.5],
            vec![-0.5, -0.5],
        ]);
        let err = avg_cdnv(&f, &[0, 0, 1, 1], 2).unwrap_err();
        assert!(matches!(err, MetricsError::AllPairsDegenerate));
    }

    #[test]
    fn degenerate_entries_serialize_as_null() {
        let f = feats(vec![
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
            vec![0.5, 0.5],
            vec![-0.5, -0.5],
            vec![4.0, 4.0],
            vec![6.0, 6.0],
        ]);
        let stats = class_stats(&f, &[0, 0, 1, 1, 2, 2], 3).unwrap();
        let rows = cdnv_matrix(&stats).unwrap().to_rows();
        assert!(rows[0][0].is_none());
        assert!(rows[0][1].is_none() && rows[1][0].is_none());
        assert!(rows[0][2].is_some() && rows[2][0] == rows[0][2]);
        let json = serde_json::to_string(&rows).unwrap();
        assert!(json.starts_with("[[null,null,"));
    }

    #[test]
    fn cdnv_is_invariant_to_scale_translation_rotation() {
        let rng = SeededRng::new(81);
        let ds = synth_mixture(3, 20, 5, 2.0, 0.5, &rng).unwrap();
        let (base, _) = avg_cdnv(&ds.x, &ds.labels, 3).unwrap();

        // Scale + translate.
        let mut moved = ds.x.clone();
        for row in 0..ds.len() {
            for (j, v) in moved.row_mut(row).iter_mut().enumerate() {
                *v = 3.5 * *v + j as f64;
            }
        }
        let (scaled, _) = avg_cdnv(&moved, &ds.labels, 3).unwrap();
        assert!((scaled - base).abs() / base < 1e-12);

        // Rotate by a composition of two Householder reflections.
        let mut rot_rng = SeededRng::new(82);
        let v1: Vec<f64> = (0..5).map(|_| rot_rng.standard_normal()).collect();
        let v2: Vec<f64> = (0..5).map(|_| rot_rng.standard_normal()).collect();
        let reflect = |x: &mut [f64], v: &[f64]| {
            let vv: f64 = v.iter().map(|a| a * a).sum();
            let vx: f64 = v.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
            for (xi, &vi) in x.iter_mut().zip(v) {
                *xi -= 2.0 * vi * vx / vv;
            }
        };
        let mut rotated = ds.x.clone();
        for row in 0..ds.len() {
            reflect(rotated.row_mut(row), &v1);
            reflect(rotated.row_mut(row), &v2);
        }
        let (rot, _) = avg_cdnv(&rotated, &ds.labels, 3).unwrap();
        assert!((rot - base).abs() / base < 1e-9);
    }

    #[test]
    fn ncc_matches_brute_force_oracle() {
        let rng = SeededRng::new(83);
        let ds = synth_mixture(4, 25, 3, 2.0, 1.5, &rng).unwrap();
        let stats = class_stats(&ds.x, &ds.labels, 4).unwrap();
        let preds = ncc_predict(&ds.x, &stats.means).unwrap();
        for i in 0..ds.len() {
            let mut dists: Vec<f64> = (0..4)
                .map(|c| {
                    // Reversed accumulation order from the implementation.
                    let mut acc = 0.0;
                    for j in (0..3).rev() {
                        let d = ds.x.row(i)[j] - stats.means.row(c)[j];
                        acc += d * d;
                    }
                    acc
                })
                .collect();
            let mut best = 0;
            for c in 1..4 {
                if dists[c] < dists[best] {
                    best = c;
                }
            }
            dists.clear();
            assert_eq!(preds[i], best, "sample {i}");
        }
    }

    #[test]
    fn ncc_tie_goes_to_smallest_class() {
        let means = feats(vec![vec![1.0, 0.0], vec![-1.0, 0.0]]);
        let x = feats(vec![vec![0.0, 0.0]]);
        assert_eq!(ncc_predict(&x, &means).unwrap(), vec![0]);
        let means3 = feats(vec![vec![5.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]]);
        assert_eq!(ncc_predict(&x, &means3).unwrap(), vec![1]);
    }

    #[test]
    fn ncc_predictions_survive_twenty_random_rotations() {
        let rng = SeededRng::new(90);
        let ds = synth_mixture(4, 15, 6, 3.0, 1.0, &rng).unwrap();
        let stats = class_stats(&ds.x, &ds.labels, 4).unwrap();
        let base = ncc_predict(&ds.x, &stats.means).unwrap();
        let reflect = |x: &mut [f64], v: &[f64]| {
            let vv: f64 = v.iter().map(|a| a * a).sum();
            let vx: f64 = v.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
            for (xi, &vi) in x.iter_mut().zip(v) {
                *xi -= 2.0 * vi * vx / vv;
            }
        };
        for trial in 0..20 {
            // Two Householder reflections compose to a rotation.
            let mut rot = rng.split(&format!("rotation-{trial}"));
            let v1: Vec<f64> = (0..6).map(|_| rot.standard_normal()).collect();
            let v2: Vec<f64> = (0..6).map(|_| rot.standard_normal()).collect();
            let mut x = ds.x.clone();
            let mut means = stats.means.clone();
            for i in 0..ds.len() {
                reflect(x.row_mut(i), &v1);
                reflect(x.row_mut(i), &v2);
            }
            for c in 0..4 {
                reflect(means.row_mut(c), &v1);
                reflect(means.row_mut(c), &v2);
            }
            assert_eq!(ncc_predict(&x, &means).unwrap(), base, "rotation {trial}");
        }
    }

    #[test]
    fn ncc_error_counts_mismatches() {
        let means = feats(vec![vec![0.0], vec![10.0]]);
        let x = feats(vec![vec![1.0], vec![9.0], vec![2.0], vec![8.0]]);
        let err = ncc_error(&x, &[0, 1, 1, 1], &means).unwrap();
        assert!((err - 0.25).abs() < 1e-15);
    }

    #[test]
    fn effective_depth_picks_first_qualifier() {
        let errs = [0.5, 0.2, 0.005, 0.001];
        assert_eq!(effective_depth(&errs, 0.01), 3);
        assert_eq!(effective_depth(&errs, 0.2), 2);
        assert_eq!(effective_depth(&errs, 1e-9), 4);
        assert_eq!(effective_depth(&[0.4, 0.3], 0.01), 2);
    }

    #[test]
    fn effective_depth_is_monotone_in_epsilon() {
        let errs = [0.9, 0.4, 0.2, 0.05, 0.01, 0.0];
        let mut last = usize::MAX;
        for eps in [0.0, 0.001, 0.01, 0.05, 0.2, 0.5, 1.0] {
            let d = effective_depth(&errs, eps);
            assert!(d <= last);
            last = d;
        }
    }

    #[test]
    fn model_error_tie_breaks_to_smallest_index() {
        let logits = feats(vec![vec![0.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(model_error(&logits, &[0, 1]).unwrap(), 0.0);
        assert_eq!(model_error(&logits, &[1, 1]).unwrap(), 0.5);
    }

    fn trained_setup() -> (crate::nn::Network, Dataset, Dataset) {
        let rng = SeededRng::new(84);
        let full = synth_mixture(3, 40, 6, 3.0, 0.4, &rng).unwrap();
        let (train_ds, test_ds) = full.split_pair(60, &rng.split("split")).unwrap();
        let mut net = build_mlp(3, 12, 6, 3, &mut rng.split("init")).unwrap();
        let cfg = SgdConfig {
            epochs: 25,
            batch_size: 20,
            decay_epochs: vec![15],
            seed: rng.split("train").seed(),
            ..SgdConfig::default()
        };
        train(&mut net, &train_ds.x, &train_ds.labels, &cfg).unwrap();
        (net, train_ds, test_ds)
    }

    #[test]
    fn collapse_report_is_deterministic_with_one_row_per_block() {
        let (net, train_ds, test_ds) = trained_setup();
        let a = collapse_report(&net, &train_ds, &test_ds, 0.01, false).unwrap();
        let b = collapse_report(&net, &train_ds, &test_ds, 0.01, false).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.layers.len(), 3);
        for (i, l) in a.layers.iter().enumerate() {
            assert_eq!(l.index, i + 1);
            assert!(l.cdnv_train_avg.unwrap().is_finite());
            assert!((0.0..=1.0).contains(&l.ncc_train_err));
            assert_eq!(l.ncc_separable, l.ncc_train_err == 0.0);
            assert_eq!(l.cdnv_train_matrix.len(), 3);
            assert!(l.cdnv_train_matrix[0][0].is_none());
        }
        assert!(a.effective_depth >= 1 && a.effective_depth <= 3);

        // The report must survive a JSON round trip unchanged.
        let json = serde_json::to_string(&a).unwrap();
        let back: CollapseReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn recomputed_test_means_change_the_test_error_only() {
        let (net, train_ds, test_ds) = trained_setup();
        let by_train = collapse_report(&net, &train_ds, &test_ds, 0.01, false).unwrap();
        let by_test = collapse_report(&net, &train_ds, &test_ds, 0.01, true).unwrap();
        for (a, b) in by_train.layers.iter().zip(&by_test.layers) {
            assert_eq!(a.ncc_train_err, b.ncc_train_err);
            assert_eq!(a.cdnv_train_avg, b.cdnv_train_avg);
            assert_eq!(a.cdnv_test_avg, b.cdnv_test_avg);
        }
        assert_eq!(by_train.effective_depth, by_test.effective_depth);
    }

    #[test]
    fn probe_separates_one_hot_features() {
        let f = feats(vec![
            vec![1.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![0.0, 0.0, 1.0],
        ]);
        let labels = [0, 0, 1, 1, 2, 2];
        let cfg = ProbeConfig { epochs: 40, batch_size: 6, ..ProbeConfig::default() };
        let report = linear_probe(&f, &labels, &f, &labels, 3, &cfg).unwrap();
        assert_eq!(report.train_err, 0.0);
        assert_eq!(report.test_err, 0.0);
    }

    #[test]
    fn probe_tracks_ncc_on_separable_blobs() {
        let rng = SeededRng::new(86);
        let ds = synth_mixture(3, 30, 4, 2.5, 0.5, &rng).unwrap();
        let stats = class_stats(&ds.x, &ds.labels, 3).unwrap();
        let ncc = ncc_error(&ds.x, &ds.labels, &stats.means).unwrap();
        let report = linear_probe(
            &ds.x,
            &ds.labels,
            &ds.x,
            &ds.labels,
            3,
            &ProbeConfig::default(),
        )
        .unwrap();
        assert!(
            report.train_err <= ncc + 0.02,
            "probe {} vs ncc {ncc}",
            report.train_err
        );
    }

    #[test]
    fn probe_is_deterministic() {
        let rng = SeededRng::new(88);
        let ds = synth_mixture(2, 20, 3, 2.0, 1.0, &rng).unwrap();
        let cfg = ProbeConfig { seed: 89, ..ProbeConfig::default() };
        let a = linear_probe(&ds.x, &ds.labels, &ds.x, &ds.labels, 2, &cfg).unwrap();
        let b = linear_probe(&ds.x, &ds.labels, &ds.x, &ds.labels, 2, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
