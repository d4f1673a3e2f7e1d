//! Shared run plumbing: dataset preparation with a written provenance
//! manifest, and chunked training that pauses at caller-chosen epochs for
//! checkpoints or collapse snapshots.

use collapse_core::data::{
    inject_noise, load_idx_dataset, standardize, standardize_with, Dataset, Mixture,
};
use collapse_core::nn::{Gradients, Network};
use collapse_core::optim::{train_range, SgdConfig, TrainRecord};
use collapse_core::SeededRng;
use serde::Serialize;

use crate::config::{DatasetConfig, DatasetKind};
use crate::CliError;

/// Provenance record written next to every run's artifacts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetManifest {
    pub source: String,
    pub classes: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub sample_shape: Vec<usize>,
    pub noise_fraction: f64,
    pub noisy_labels: usize,
    pub standardized: bool,
    /// Child streams of the master seed that shaped this data.
    pub seed_streams: Vec<String>,
}

pub struct PreparedData {
    pub train: Dataset,
    pub test: Dataset,
    /// True where the training label was resampled.
    pub noise_mask: Vec<bool>,
    pub manifest: DatasetManifest,
}

/// Builds the train/test splits from the config. Mixture data draws means
/// once and samples both splits from them; IDX data is split disjointly.
/// `noise_override` lets sweeps vary the corruption fraction per run.
pub fn prepare_data(
    cfg: &DatasetConfig,
    master: &SeededRng,
    noise_override: Option<f64>,
) -> Result<PreparedData, CliError> {
    let noise = noise_override.unwrap_or(cfg.noise_fraction);
    let (mut train, mut test, mut streams) = match cfg.kind {
        DatasetKind::Mixture => {
            let mixture = Mixture::new(
                cfg.classes,
                cfg.dim,
                cfg.radius,
                cfg.sigma,
                &mut master.split("data-means"),
            );
            let train = mixture.sample(cfg.m0, &mut master.split("data-train"))?;
            let test = mixture.sample(cfg.test_m0, &mut master.split("data-test"))?;
            (train, test, vec!["data-means".into(), "data-train".into(), "data-test".into()])
        }
        DatasetKind::Idx => {
            let images = cfg.idx_images.as_deref().ok_or_else(|| {
                CliError::Usage("dataset.kind=idx needs dataset.idx_images".into())
            })?;
            let labels = cfg.idx_labels.as_deref().ok_or_else(|| {
                CliError::Usage("dataset.kind=idx needs dataset.idx_labels".into())
            })?;
            let full = load_idx_dataset(images, labels)?;
            let per_class = full.label_histogram()[0];
            let m_each = if cfg.idx_m_each == 0 {
                (per_class / 2) * full.classes
            } else {
                cfg.idx_m_each
            };
            let (train, test) = full.split_pair(m_each, &master.split("data-split"))?;
            (train, test, vec!["data-split".into()])
        }
    };

    let mut noise_mask = vec![false; train.len()];
    if noise > 0.0 {
        let (noisy, mask) = inject_noise(&train, noise, &master.split("data-noise"))?;
        train = noisy;
        noise_mask = mask;
        streams.push("data-noise".into());
    }

    if cfg.standardize {
        let (std_train, stats) = standardize(&train)?;
        test = standardize_with(&test, &stats)?;
        train = std_train;
    }

    let manifest = DatasetManifest {
        source: train.source.clone(),
        classes: train.classes,
        train_per_class: train.label_histogram().first().copied().unwrap_or(0),
        test_per_class: test.label_histogram().first().copied().unwrap_or(0),
        sample_shape: train.sample_shape().to_vec(),
        noise_fraction: noise,
        noisy_labels: noise_mask.iter().filter(|&&b| b).count(),
        standardized: cfg.standardize,
        seed_streams: streams,
    };
    Ok(PreparedData { train, test, noise_mask, manifest })
}

/// Drops the channel/height/width axes when the model family wants flat
/// samples. Mixture data is already flat; IDX images flatten to pixels.
pub fn shaped_for_mlp(ds: &Dataset) -> Dataset {
    if ds.sample_shape().len() == 1 {
        ds.clone()
    } else {
        ds.flattened()
    }
}

/// Epoch boundaries where chunked training pauses: the requested stops
/// clamped to the horizon, deduplicated, plus the final epoch.
pub fn stop_schedule(requested: &[usize], epochs: usize) -> Vec<usize> {
    let mut stops: Vec<usize> = requested.iter().copied().filter(|&e| e <= epochs).collect();
    stops.push(epochs);
    stops.sort_unstable();
    stops.dedup();
    stops
}

/// Trains in segments, invoking `at_stop(epoch, net)` at every boundary of
/// `stops` (0 included only if requested; `cfg.epochs` always last).
/// Momentum carries across segments, so the trajectory is identical to one
/// uninterrupted `train` call.
pub fn train_chunked(
    net: &mut Network,
    train: &Dataset,
    cfg: &SgdConfig,
    stops: &[usize],
    mut at_stop: impl FnMut(usize, &mut Network) -> Result<(), CliError>,
) -> Result<Vec<TrainRecord>, CliError> {
    let schedule = stop_schedule(stops, cfg.epochs);
    let mut velocity = Gradients::zeros_like(net);
    let mut records = Vec::new();
    let mut prev = 0usize;
    for &stop in &schedule {
        if stop == 0 {
            at_stop(0, net)?;
            continue;
        }
        records.extend(train_range(net, &train.x, &train.labels, cfg, prev..stop, &mut velocity)?);
        prev = stop;
        at_stop(stop, net)?;
    }
    Ok(records)
}
