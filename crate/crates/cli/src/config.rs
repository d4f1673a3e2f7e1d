//! Experiment configuration: a single JSON document covering every
//! subcommand, with dotted `--set key=value` overrides applied before
//! deserialization so typos surface as field-path errors.

use std::path::{Path, PathBuf};

use collapse_core::bound::BoundParams;
use collapse_core::metrics::ProbeConfig;
use collapse_core::nn::Family;
use collapse_core::optim::SgdConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seed of single-run training randomness (initialization and batch
    /// order). The `--seed` flag overrides it. Sweep points use `seeds`
    /// instead, and data is governed by `dataset.seed`, so a sweep point at
    /// seed s is bitwise reproducible as a single run with `--seed s`.
    pub master_seed: u64,
    /// Default output directory; the `--out` flag overrides it without
    /// changing the config hash.
    pub out_dir: PathBuf,
    pub dataset: DatasetConfig,
    pub arch: ArchConfig,
    pub sgd: SgdConfig,
    /// Effective-depth tolerance of reports.
    pub epsilon: f64,
    /// Per-point run seeds of the sweep subcommands.
    pub seeds: Vec<u64>,
    /// Report snapshot cadence in epochs (0 = initial and final only).
    pub report_every: usize,
    /// Extra checkpoint epochs of `train` (final is always written).
    pub checkpoint_epochs: Vec<usize>,
    /// Depth grid of `depth-sweep`.
    pub depths: Vec<usize>,
    /// Fraction grid of `noise-sweep`.
    pub noise_fractions: Vec<f64>,
    /// Diagnose NCC test error with test-split means instead of train means.
    pub recompute_test_means: bool,
    pub probe: ProbeConfig,
    pub bound: BoundRunConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            master_seed: 1000,
            out_dir: PathBuf::from("out"),
            dataset: DatasetConfig::default(),
            arch: ArchConfig::default(),
            sgd: SgdConfig::default(),
            epsilon: 0.01,
            seeds: vec![1, 2, 3],
            report_every: 20,
            checkpoint_epochs: Vec::new(),
            depths: vec![2, 4, 8],
            noise_fractions: vec![0.0, 0.1, 0.25, 0.5],
            recompute_test_means: false,
            probe: ProbeConfig::default(),
            bound: BoundRunConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Mixture,
    Idx,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    /// Seed of the data streams (means, samples, splits, label noise).
    /// Deliberately separate from `master_seed`: every point of a sweep
    /// trains on the same dataset.
    pub seed: u64,
    pub classes: usize,
    /// Training samples per class.
    pub m0: usize,
    /// Test samples per class.
    pub test_m0: usize,
    pub dim: usize,
    /// Sphere radius of the mixture means.
    pub radius: f64,
    /// Within-class standard deviation.
    pub sigma: f64,
    /// Training-label corruption fraction.
    pub noise_fraction: f64,
    pub standardize: bool,
    pub idx_images: Option<PathBuf>,
    pub idx_labels: Option<PathBuf>,
    /// Samples per IDX split (train and test each); 0 picks the largest
    /// balanced size.
    pub idx_m_each: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            kind: DatasetKind::Mixture,
            seed: 7,
            classes: 5,
            m0: 200,
            test_m0: 200,
            dim: 20,
            radius: 10.0,
            sigma: 2.0,
            noise_fraction: 0.0,
            standardize: true,
            idx_images: None,
            idx_labels: None,
            idx_m_each: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    pub family: Family,
    pub depth: usize,
    pub width: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig { family: Family::Mlp, depth: 4, width: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundRunConfig {
    /// Number of disjoint (S1, S2) pairs carved from the training set.
    pub k: usize,
    /// Samples per part (2k parts); 0 picks the largest balanced size.
    pub m_each: usize,
    pub params: BoundParams,
}

impl Default for BoundRunConfig {
    fn default() -> Self {
        BoundRunConfig { k: 2, m_each: 0, params: BoundParams::default() }
    }
}

/// Loads the config file (or defaults), applies `--set` overrides and the
/// `--seed` flag, and returns the effective config with its canonical JSON.
pub fn load_config(
    path: Option<&Path>,
    sets: &[String],
    seed_flag: Option<u64>,
) -> Result<(ExperimentConfig, String), CliError> {
    let mut value: serde_json::Value = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| {
                CliError::Usage(format!("cannot read config {}: {e}", p.display()))
            })?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("config {}: {e}", p.display())))?
        }
        None => serde_json::json!({}),
    };
    for set in sets {
        apply_set(&mut value, set)?;
    }
    let mut cfg: ExperimentConfig = serde_path_to_error::deserialize(value)
        .map_err(|e| CliError::Usage(format!("config field `{}`: {}", e.path(), e.inner())))?;
    if let Some(seed) = seed_flag {
        cfg.master_seed = seed;
    }
    let canonical = serde_json::to_string_pretty(&cfg)?;
    Ok((cfg, canonical))
}

/// Applies one `dotted.path=value` override. The value is parsed as JSON
/// when possible and falls back to a plain string, so `sgd.base_lr=0.05`,
/// `arch.family=conv`, and `depths=[2,4]` all work.
pub fn apply_set(root: &mut serde_json::Value, set: &str) -> Result<(), CliError> {
    let (path, raw) = set
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("--set expects key=value, got `{set}`")))?;
    if path.is_empty() {
        return Err(CliError::Usage(format!("--set has an empty key in `{set}`")));
    }
    let parsed: serde_json::Value = serde_json::from_str(raw)
        .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));

    let mut cursor = root;
    let segments: Vec<&str> = path.split('.').collect();
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        if let Ok(index) = seg.parse::<usize>() {
            let arr = cursor.as_array_mut().ok_or_else(|| {
                CliError::Usage(format!("--set path `{path}`: `{seg}` indexes a non-array"))
            })?;
            if index >= arr.len() {
                return Err(CliError::Usage(format!(
                    "--set path `{path}`: index {index} out of bounds ({} elements)",
                    arr.len()
                )));
            }
            if last {
                arr[index] = parsed;
                return Ok(());
            }
            cursor = &mut arr[index];
        } else {
            if !cursor.is_object() {
                return Err(CliError::Usage(format!(
                    "--set path `{path}`: `{seg}` traverses a non-object"
                )));
            }
            let map = cursor.as_object_mut().expect("checked above");
            if last {
                map.insert((*seg).to_string(), parsed);
                return Ok(());
            }
            cursor = map
                .entry((*seg).to_string())
                .or_insert_with(|| serde_json::json!({}));
        }
    }
    unreachable!("loop returns on the last segment");
}
