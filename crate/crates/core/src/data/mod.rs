//! Datasets: synthetic Gaussian mixtures, label noise, splits, feature
//! standardization, and an IDX loader.
//!
//! Constructors that build a dataset from a clean source enforce class
//! balance (every class has the same sample count); derived sets from
//! [`Dataset::union`] or [`inject_noise`] may be unbalanced, which matters
//! because noisy labels never have an even histogram.

pub mod idx;

use crate::rng::SeededRng;
use crate::tensor::{Tensor, TensorError};
use idx::IdxError;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("labels length {labels} does not match sample count {samples}")]
    LengthMismatch { labels: usize, samples: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelRange { label: usize, classes: usize },
    #[error("unbalanced class counts {counts:?}")]
    Unbalanced { counts: Vec<usize> },
    #[error("class {class} has no samples")]
    EmptyClass { class: usize },
    #[error("datasets have mismatched sample shapes {left:?} vs {right:?}")]
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },
    #[error("datasets have mismatched class counts {left} vs {right}")]
    ClassMismatch { left: usize, right: usize },
    #[error("noise fraction {0} outside [0, 1]")]
    BadNoiseFraction(f64),
    #[error("split size {take} exceeds class count {available}")]
    SplitTooLarge { take: usize, available: usize },
    #[error("split size {take} is not divisible by the class count {classes}")]
    SplitIndivisible { take: usize, classes: usize },
    #[error("label file defines classes {found:?}, expected a contiguous 0..C range")]
    LabelGap { found: Vec<usize> },
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error(transparent)]
    Idx(#[from] IdxError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// A labeled dataset. `x` is `[m, ...sample_shape]`; `labels[i] < classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Tensor,
    pub labels: Vec<usize>,
    pub classes: usize,
    /// Human-readable provenance tag, carried into run manifests.
    pub source: String,
    per_class: Vec<Vec<usize>>,
}

fn per_class_index(labels: &[usize], classes: usize) -> Result<Vec<Vec<usize>>, DataError> {
    let mut idx = vec![Vec::new(); classes];
    for (i, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(DataError::LabelRange { label: y, classes });
        }
        idx[y].push(i);
    }
    Ok(idx)
}

impl Dataset {
    /// Builds a balanced dataset; every class must appear equally often.
    pub fn new_balanced(
        x: Tensor,
        labels: Vec<usize>,
        classes: usize,
        source: String,
    ) -> Result<Self, DataError> {
        let ds = Self::from_parts(x, labels, classes, source)?;
        let counts = ds.label_histogram();
        if let Some(&c0) = counts.first() {
            if c0 == 0 {
                return Err(DataError::EmptyClass { class: 0 });
            }
            if counts.iter().any(|&c| c != c0) {
                return Err(DataError::Unbalanced { counts });
            }
        }
        Ok(ds)
    }

    /// Builds a dataset without the balance requirement (labels are still
    /// validated against `classes`).
    pub fn from_parts(
        x: Tensor,
        labels: Vec<usize>,
        classes: usize,
        source: String,
    ) -> Result<Self, DataError> {
        let m = x.shape()[0];
        if labels.len() != m {
            return Err(DataError::LengthMismatch { labels: labels.len(), samples: m });
        }
        let per_class = per_class_index(&labels, classes)?;
        Ok(Dataset { x, labels, classes, source, per_class })
    }

    /// Concatenates two datasets over the same sample shape and class set.
    /// The result is generally unbalanced.
    pub fn union(&self, other: &Dataset) -> Result<Dataset, DataError> {
        if self.sample_shape() != other.sample_shape() {
            return Err(DataError::ShapeMismatch {
                left: self.sample_shape().to_vec(),
                right: other.sample_shape().to_vec(),
            });
        }
        if self.classes != other.classes {
            return Err(DataError::ClassMismatch { left: self.classes, right: other.classes });
        }
        let mut shape = self.x.shape().to_vec();
        shape[0] = self.len() + other.len();
        let mut data = Vec::with_capacity(self.x.len() + other.x.len());
        data.extend_from_slice(self.x.data());
        data.extend_from_slice(other.x.data());
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Dataset::from_parts(
            Tensor::from_vec(&shape, data)?,
            labels,
            self.classes,
            format!("union({}, {})", self.source, other.source),
        )
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.x.shape()[1..]
    }

    /// Indices of the samples in class `c`, ascending.
    pub fn class_indices(&self, c: usize) -> &[usize] {
        &self.per_class[c]
    }

    pub fn label_histogram(&self) -> Vec<usize> {
        self.per_class.iter().map(Vec::len).collect()
    }

    /// Extracts the rows at `indices` into a new dataset (order preserved).
    pub fn subset(&self, indices: &[usize], source: String) -> Result<Dataset, DataError> {
        let sample: usize = self.sample_shape().iter().product();
        let mut shape = self.x.shape().to_vec();
        shape[0] = indices.len();
        let mut data = Vec::with_capacity(indices.len() * sample);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(&self.x.data()[i * sample..(i + 1) * sample]);
            labels.push(self.labels[i]);
        }
        Dataset::from_parts(Tensor::from_vec(&shape, data)?, labels, self.classes, source)
    }

    /// Carves `parts` disjoint balanced subsets of `m_each` samples each
    /// (`m_each` divisible by the class count). Membership is randomized per
    /// class with child streams of `rng`; within each part the original
    /// sample order is kept, so the same seed always yields the same
    /// canonical subsets. Leftover samples are dropped.
    pub fn split_disjoint(
        &self,
        parts: usize,
        m_each: usize,
        rng: &SeededRng,
    ) -> Result<Vec<Dataset>, DataError> {
        if m_each % self.classes != 0 {
            return Err(DataError::SplitIndivisible { take: m_each, classes: self.classes });
        }
        let per = m_each / self.classes;
        let mut picks: Vec<Vec<usize>> = vec![Vec::new(); parts];
        for c in 0..self.classes {
            let idx = self.class_indices(c);
            if idx.len() < parts * per {
                return Err(DataError::SplitTooLarge { take: parts * per, available: idx.len() });
            }
            let mut order: Vec<usize> = idx.to_vec();
            rng.split(&format!("split-class-{c}")).shuffle(&mut order);
            for (p, pick) in picks.iter_mut().enumerate() {
                pick.extend_from_slice(&order[p * per..(p + 1) * per]);
            }
        }
        picks
            .into_iter()
            .enumerate()
            .map(|(p, mut pick)| {
                pick.sort_unstable();
                self.subset(&pick, format!("{}[part {}/{parts}]", self.source, p + 1))
            })
            .collect()
    }

    /// Splits off two disjoint balanced halves of `m_each` samples each;
    /// anything beyond `2 * m_each` is left out.
    pub fn split_pair(&self, m_each: usize, rng: &SeededRng) -> Result<(Dataset, Dataset), DataError> {
        let mut parts = self.split_disjoint(2, m_each, rng)?;
        let second = parts.pop().unwrap();
        let first = parts.pop().unwrap();
        Ok((first, second))
    }

    /// Copy with every sample flattened to a vector; what MLP-family models
    /// consume when the source is image shaped.
    pub fn flattened(&self) -> Dataset {
        let sample: usize = self.sample_shape().iter().product();
        let mut ds = self.clone();
        ds.x = ds.x.reshape(&[self.len(), sample]).expect("row count unchanged");
        ds
    }
}

/// A Gaussian mixture task: one mean per class on a sphere of the given
/// radius, samples drawn as `mean + sigma * N(0, I)`.
#[derive(Debug, Clone)]
pub struct Mixture {
    pub means: Tensor,
    pub radius: f64,
    pub sigma: f64,
}

impl Mixture {
    /// Draws `classes` means uniformly on the radius-`radius` sphere in
    /// `R^dim` by normalizing Gaussian vectors from `rng`.
    pub fn new(classes: usize, dim: usize, radius: f64, sigma: f64, rng: &mut SeededRng) -> Mixture {
        let mut means = rng.gaussian(&[classes, dim]);
        for c in 0..classes {
            loop {
                let norm: f64 = means.row(c).iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 1e-12 {
                    for v in means.row_mut(c) {
                        *v *= radius / norm;
                    }
                    break;
                }
                // Essentially unreachable, but keeps the direction uniform.
                let fresh = rng.gaussian(&[dim]);
                means.row_mut(c).copy_from_slice(fresh.data());
            }
        }
        Mixture { means, radius, sigma }
    }

    pub fn classes(&self) -> usize {
        self.means.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.means.shape()[1]
    }

    /// Draws a balanced dataset with `n_per_class` samples per class.
    pub fn sample(&self, n_per_class: usize, rng: &mut SeededRng) -> Result<Dataset, DataError> {
        let (classes, dim) = (self.classes(), self.dim());
        let m = classes * n_per_class;
        let mut data = Vec::with_capacity(m * dim);
        let mut labels = Vec::with_capacity(m);
        for c in 0..classes {
            let mean = self.means.row(c).to_vec();
            for _ in 0..n_per_class {
                for &mu in &mean {
                    data.push(mu + self.sigma * rng.standard_normal());
                }
                labels.push(c);
            }
        }
        Dataset::new_balanced(
            Tensor::from_vec(&[m, dim], data)?,
            labels,
            classes,
            format!("mixture(c={classes},d={dim},r={},sigma={})", self.radius, self.sigma),
        )
    }
}

/// Convenience wrapper: means from the `means` child stream, samples from the
/// `samples` child stream of `rng`. Two calls with the same seed produce the
/// same dataset; reuse [`Mixture`] directly to draw several sample sets from
/// one fixed set of means.
pub fn synth_mixture(
    classes: usize,
    m0: usize,
    dim: usize,
    radius: f64,
    sigma: f64,
    rng: &SeededRng,
) -> Result<Dataset, DataError> {
    let mixture = Mixture::new(classes, dim, radius, sigma, &mut rng.split("means"));
    mixture.sample(m0, &mut rng.split("samples"))
}

/// Per-feature affine statistics for standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizeStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Floor applied to per-feature standard deviations so constant features map
/// to zero instead of blowing up.
pub const STD_FLOOR: f64 = 1e-8;

/// Computes per-feature mean and population standard deviation (floored at
/// [`STD_FLOOR`]) over the dataset and returns the standardized copy.
pub fn standardize(ds: &Dataset) -> Result<(Dataset, StandardizeStats), DataError> {
    let m = ds.len();
    let sample: usize = ds.sample_shape().iter().product();
    let mut mean = vec![0.0; sample];
    for i in 0..m {
        for (j, s) in mean.iter_mut().enumerate() {
            *s += ds.x.data()[i * sample + j];
        }
    }
    for s in mean.iter_mut() {
        *s /= m as f64;
    }
    let mut var = vec![0.0; sample];
    for i in 0..m {
        for (j, s) in var.iter_mut().enumerate() {
            let d = ds.x.data()[i * sample + j] - mean[j];
            *s += d * d;
        }
    }
    let std: Vec<f64> = var.iter().map(|&v| (v / m as f64).sqrt().max(STD_FLOOR)).collect();
    let stats = StandardizeStats { mean, std };
    Ok((standardize_with(ds, &stats)?, stats))
}

/// Applies existing statistics (e.g. the training split's) to a dataset.
pub fn standardize_with(ds: &Dataset, stats: &StandardizeStats) -> Result<Dataset, DataError> {
    let sample: usize = ds.sample_shape().iter().product();
    if stats.mean.len() != sample || stats.std.len() != sample {
        return Err(DataError::ShapeMismatch {
            left: vec![stats.mean.len()],
            right: vec![sample],
        });
    }
    let m = ds.len();
    let mut data = Vec::with_capacity(m * sample);
    for i in 0..m {
        for j in 0..sample {
            data.push((ds.x.data()[i * sample + j] - stats.mean[j]) / stats.std[j]);
        }
    }
    Dataset::from_parts(
        Tensor::from_vec(ds.x.shape(), data)?,
        ds.labels.clone(),
        ds.classes,
        format!("{}[standardized]", ds.source),
    )
}

/// Flips the labels of exactly `ceil(p * m)` samples, chosen uniformly
/// without replacement; each flipped label is drawn uniformly from the other
/// classes. Returns the noisy dataset and a mask marking flipped samples.
pub fn inject_noise(
    ds: &Dataset,
    p: f64,
    rng: &SeededRng,
) -> Result<(Dataset, Vec<bool>), DataError> {
    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(DataError::BadNoiseFraction(p));
    }
    let m = ds.len();
    let k = (p * m as f64).ceil() as usize;
    let k = k.min(m);
    let targets = rng.split("noise-targets").choose_indices(m, k);
    let mut labels = ds.labels.clone();
    let mut mask = vec![false; m];
    let mut label_rng = rng.split("noise-labels");
    for &i in &targets {
        let off = label_rng.below((ds.classes - 1) as u64) as usize;
        let new = if off >= labels[i] { off + 1 } else { off };
        labels[i] = new;
        mask[i] = true;
    }
    let noisy = Dataset::from_parts(
        ds.x.clone(),
        labels,
        ds.classes,
        format!("{}[noise p={p}]", ds.source),
    )?;
    Ok((noisy, mask))
}

/// Loads an IDX image/label pair as a balanced dataset. Pixels are scaled to
/// `[0, 1]` and shaped `[m, 1, rows, cols]`. The label set must be a
/// contiguous `0..C`; classes are truncated to the smallest per-class count
/// (keeping each class's earliest samples in file order) so the result is
/// balanced.
pub fn load_idx_dataset(images_path: &std::path::Path, labels_path: &std::path::Path) -> Result<Dataset, DataError> {
    let images = idx::read_images(images_path)?;
    let raw_labels = idx::read_labels(labels_path)?;
    if images.count != raw_labels.len() {
        return Err(DataError::CountMismatch { images: images.count, labels: raw_labels.len() });
    }
    let mut distinct: Vec<usize> = raw_labels.iter().map(|&b| b as usize).collect();
    distinct.sort_unstable();
    distinct.dedup();
    let classes = distinct.len();
    if distinct.is_empty() || distinct[0] != 0 || distinct[classes - 1] != classes - 1 {
        return Err(DataError::LabelGap { found: distinct });
    }

    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &b) in raw_labels.iter().enumerate() {
        per_class[b as usize].push(i);
    }
    let min_count = per_class.iter().map(Vec::len).min().unwrap();
    let mut keep: Vec<usize> = per_class.iter().flat_map(|v| v[..min_count].iter().copied()).collect();
    keep.sort_unstable();

    let sample = images.rows * images.cols;
    let mut data = Vec::with_capacity(keep.len() * sample);
    let mut labels = Vec::with_capacity(keep.len());
    for &i in &keep {
        for &px in &images.pixels[i * sample..(i + 1) * sample] {
            data.push(px as f64 / 255.0);
        }
        labels.push(raw_labels[i] as usize);
    }
    Dataset::new_balanced(
        Tensor::from_vec(&[keep.len(), 1, images.rows, images.cols], data)?,
        labels,
        classes,
        format!("idx({}, {})", images_path.display(), labels_path.display()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(labels: Vec<usize>, classes: usize) -> Dataset {
        let m = labels.len();
        let data: Vec<f64> = (0..m * 2).map(|i| i as f64).collect();
        Dataset::from_parts(
            Tensor::from_vec(&[m, 2], data).unwrap(),
            labels,
            classes,
            "toy".into(),
        )
        .unwrap()
    }

    #[test]
    fn balanced_constructor_rejects_skew() {
        let x = Tensor::zeros(&[3, 2]);
        let err = Dataset::new_balanced(x, vec![0, 0, 1], 2, "t".into());
        assert!(matches!(err, Err(DataError::Unbalanced { .. })));
    }

    #[test]
    fn label_out_of_range_is_rejected() {
        let x = Tensor::zeros(&[2, 2]);
        let err = Dataset::from_parts(x, vec![0, 2], 2, "t".into());
        assert!(matches!(err, Err(DataError::LabelRange { label: 2, classes: 2 })));
    }

    #[test]
    fn synth_mixture_is_balanced_and_deterministic() {
        let rng = SeededRng::new(70);
        let a = synth_mixture(3, 5, 4, 10.0, 0.2, &rng).unwrap();
        let b = synth_mixture(3, 5, 4, 10.0, 0.2, &rng).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.label_histogram(), vec![5, 5, 5]);
        assert_eq!(a.x.shape(), &[15, 4]);
        let c = synth_mixture(3, 5, 4, 10.0, 0.2, &SeededRng::new(71)).unwrap();
        assert_ne!(a.x, c.x);
    }

    #[test]
    fn mixture_means_sit_on_the_radius_sphere() {
        let mixture = Mixture::new(6, 9, 7.5, 1.0, &mut SeededRng::new(76));
        for c in 0..6 {
            let norm: f64 = mixture.means.row(c).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 7.5).abs() < 1e-12, "class {c} norm {norm}");
        }
    }

    #[test]
    fn zero_sigma_gives_point_masses() {
        let rng = SeededRng::new(77);
        let mixture = Mixture::new(3, 4, 5.0, 0.0, &mut rng.split("means"));
        let ds = mixture.sample(6, &mut rng.split("samples")).unwrap();
        for (i, &y) in ds.labels.iter().enumerate() {
            assert_eq!(&ds.x.data()[i * 4..(i + 1) * 4], mixture.means.row(y));
        }
    }

    #[test]
    fn wide_mixture_is_nearest_mean_separable() {
        // Means 10-sphere apart with unit noise: nearest-mean classification
        // in input space should err on at most 1% of draws.
        let rng = SeededRng::new(78);
        let ds = synth_mixture(2, 200, 20, 10.0, 1.0, &rng).unwrap();
        let d = 20;
        let mut means = vec![vec![0.0; d]; 2];
        for c in 0..2 {
            for &i in ds.class_indices(c) {
                for j in 0..d {
                    means[c][j] += ds.x.data()[i * d + j];
                }
            }
            for v in means[c].iter_mut() {
                *v /= ds.class_indices(c).len() as f64;
            }
        }
        let mut errors = 0;
        for i in 0..ds.len() {
            let row = &ds.x.data()[i * d..(i + 1) * d];
            let dist = |m: &[f64]| -> f64 {
                row.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum()
            };
            let pred = if dist(&means[0]) <= dist(&means[1]) { 0 } else { 1 };
            if pred != ds.labels[i] {
                errors += 1;
            }
        }
        assert!(errors <= 4, "{errors} of 400 misclassified");
    }

    #[test]
    fn mixture_means_are_stable_across_sample_draws() {
        let rng = SeededRng::new(72);
        let mixture = Mixture::new(2, 3, 2.0, 0.1, &mut rng.split("means"));
        let s1 = mixture.sample(4, &mut rng.split("draw-1")).unwrap();
        let s2 = mixture.sample(4, &mut rng.split("draw-2")).unwrap();
        assert_ne!(s1.x, s2.x);
        // Both sets scatter around the same means.
        for c in 0..2 {
            for j in 0..3 {
                let avg1: f64 =
                    s1.class_indices(c).iter().map(|&i| s1.x.data()[i * 3 + j]).sum::<f64>() / 4.0;
                assert!((avg1 - mixture.means.data()[c * 3 + j]).abs() < 0.3);
            }
        }
    }

    #[test]
    fn split_pair_partitions_canonically() {
        let ds = toy(vec![0, 1, 0, 1, 0, 1, 0, 1], 2);
        let rng = SeededRng::new(73);
        let (a, b) = ds.split_pair(4, &rng).unwrap();
        assert_eq!(a.label_histogram(), vec![2, 2]);
        assert_eq!(b.label_histogram(), vec![2, 2]);
        let (a2, b2) = ds.split_pair(4, &rng).unwrap();
        assert_eq!(a, a2);
        assert_eq!(b, b2);
        // 2 * m_each = m: every original row appears exactly once.
        let mut seen: Vec<f64> = a.x.data().iter().chain(b.x.data()).copied().collect();
        let mut orig: Vec<f64> = ds.x.data().to_vec();
        seen.sort_by(f64::total_cmp);
        orig.sort_by(f64::total_cmp);
        assert_eq!(seen, orig);
    }

    #[test]
    fn split_pair_halves_are_disjoint_for_many_seeds() {
        let ds = toy(vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1], 2);
        for seed in 0..100 {
            let (a, b) = ds.split_pair(4, &SeededRng::new(seed)).unwrap();
            // Rows of the toy set are unique, so content overlap means index
            // overlap.
            let rows_a: Vec<&[f64]> = (0..a.len()).map(|i| &a.x.data()[i * 2..i * 2 + 2]).collect();
            for i in 0..b.len() {
                let row = &b.x.data()[i * 2..i * 2 + 2];
                assert!(!rows_a.contains(&row), "seed {seed} leaked a row across the split");
            }
        }
    }

    #[test]
    fn split_pair_rejects_oversize_and_indivisible() {
        let ds = toy(vec![0, 1, 0, 1], 2);
        assert!(matches!(
            ds.split_pair(4, &SeededRng::new(1)),
            Err(DataError::SplitTooLarge { take: 4, available: 2 })
        ));
        assert!(matches!(
            ds.split_pair(3, &SeededRng::new(1)),
            Err(DataError::SplitIndivisible { take: 3, classes: 2 })
        ));
    }

    #[test]
    fn split_disjoint_carves_k_parts() {
        let ds = toy(vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1], 2);
        let parts = ds.split_disjoint(3, 4, &SeededRng::new(79)).unwrap();
        assert_eq!(parts.len(), 3);
        for p in &parts {
            assert_eq!(p.label_histogram(), vec![2, 2]);
        }
        let mut seen: Vec<f64> =
            parts.iter().flat_map(|p| p.x.data().iter().copied()).collect();
        let mut orig: Vec<f64> = ds.x.data().to_vec();
        seen.sort_by(f64::total_cmp);
        orig.sort_by(f64::total_cmp);
        assert_eq!(seen, orig);
    }

    #[test]
    fn union_concatenates_and_allows_imbalance() {
        let a = toy(vec![0, 1], 2);
        let b = toy(vec![0, 0], 2);
        let u = a.union(&b).unwrap();
        assert_eq!(u.len(), 4);
        assert_eq!(u.label_histogram(), vec![3, 1]);
        assert_eq!(&u.x.data()[..4], a.x.data());
        assert_eq!(&u.x.data()[4..], b.x.data());
    }

    #[test]
    fn noise_flips_exactly_ceil_pm() {
        let ds = toy(vec![0, 1, 2, 0, 1, 2, 0, 1, 2, 0], 3);
        for (p, expect) in [(0.0, 0), (0.25, 3), (0.5, 5), (0.75, 8), (1.0, 10)] {
            let (noisy, mask) = inject_noise(&ds, p, &SeededRng::new(74)).unwrap();
            let flips = mask.iter().filter(|&&b| b).count();
            assert_eq!(flips, expect, "p = {p}");
            for i in 0..ds.len() {
                if mask[i] {
                    assert_ne!(noisy.labels[i], ds.labels[i]);
                } else {
                    assert_eq!(noisy.labels[i], ds.labels[i]);
                }
            }
        }
    }

    #[test]
    fn noise_rejects_bad_fraction() {
        let ds = toy(vec![0, 1], 2);
        assert!(inject_noise(&ds, -0.1, &SeededRng::new(1)).is_err());
        assert!(inject_noise(&ds, 1.5, &SeededRng::new(1)).is_err());
        assert!(inject_noise(&ds, f64::NAN, &SeededRng::new(1)).is_err());
    }

    #[test]
    fn standardize_centers_and_scales() {
        let rng = SeededRng::new(75);
        let ds = synth_mixture(2, 50, 3, 4.0, 1.0, &rng).unwrap();
        let (std_ds, stats) = standardize(&ds).unwrap();
        let m = std_ds.len();
        for j in 0..3 {
            let col: Vec<f64> = (0..m).map(|i| std_ds.x.data()[i * 3 + j]).collect();
            let mean: f64 = col.iter().sum::<f64>() / m as f64;
            let var: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-10);
        }
        // Reapplying the same stats to the same data is the same transform.
        let again = standardize_with(&ds, &stats).unwrap();
        assert_eq!(again.x, std_ds.x);
    }

    #[test]
    fn constant_feature_hits_std_floor() {
        let x = Tensor::from_vec(&[4, 2], vec![5.0, 1.0, 5.0, 2.0, 5.0, 3.0, 5.0, 4.0]).unwrap();
        let ds = Dataset::from_parts(x, vec![0, 0, 1, 1], 2, "t".into()).unwrap();
        let (std_ds, stats) = standardize(&ds).unwrap();
        assert_eq!(stats.std[0], STD_FLOOR);
        for i in 0..4 {
            assert_eq!(std_ds.x.data()[i * 2], 0.0);
        }
    }

    #[test]
    fn idx_dataset_truncates_to_balance() {
        let dir = tempfile::tempdir().unwrap();
        let img_path = dir.path().join("imgs.idx");
        let lbl_path = dir.path().join("lbls.idx");
        // 5 samples, labels (0, 1, 0, 0, 1): class 0 should drop its third.
        let pixels: Vec<u8> = (0..5 * 16).map(|i| (i % 251) as u8).collect();
        idx::write_images(
            &img_path,
            &idx::IdxImages { count: 5, rows: 4, cols: 4, pixels },
        )
        .unwrap();
        idx::write_labels(&lbl_path, &[0, 1, 0, 0, 1]).unwrap();
        let ds = load_idx_dataset(&img_path, &lbl_path).unwrap();
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.label_histogram(), vec![2, 2]);
        assert_eq!(ds.labels, vec![0, 1, 0, 1]);
        assert_eq!(ds.x.shape(), &[4, 1, 4, 4]);
        assert!((ds.x.data()[0] - 0.0).abs() < 1e-15);
        assert!((ds.x.data()[1] - 1.0 / 255.0).abs() < 1e-15);
    }

    #[test]
    fn idx_dataset_rejects_label_gap() {
        let dir = tempfile::tempdir().unwrap();
        let img_path = dir.path().join("imgs.idx");
        let lbl_path = dir.path().join("lbls.idx");
        let pixels: Vec<u8> = vec![0; 2 * 16];
        idx::write_images(
            &img_path,
            &idx::IdxImages { count: 2, rows: 4, cols: 4, pixels },
        )
        .unwrap();
        idx::write_labels(&lbl_path, &[0, 2]).unwrap();
        match load_idx_dataset(&img_path, &lbl_path) {
            Err(DataError::LabelGap { found }) => assert_eq!(found, vec![0, 2]),
            other => panic!("expected label gap, got {other:?}"),
        }
    }

    #[test]
    fn idx_dataset_rejects_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let img_path = dir.path().join("imgs.idx");
        let lbl_path = dir.path().join("lbls.idx");
        idx::write_images(
            &img_path,
            &idx::IdxImages { count: 2, rows: 2, cols: 2, pixels: vec![0; 8] },
        )
        .unwrap();
        idx::write_labels(&lbl_path, &[0, 1, 0]).unwrap();
        assert!(matches!(
            load_idx_dataset(&img_path, &lbl_path),
            Err(DataError::CountMismatch { images: 2, labels: 3 })
        ));
    }
}
