//! Output-directory bookkeeping: atomic writes, SHA-256 digests, pinned CSV
//! schemas, and the run manifest that inventories every artifact.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const REPORT_CSV_HEADER: &str = "epoch,layer,cdnv_train,cdnv_test,ncc_train_err,ncc_test_err,model_train_err,model_test_err,effective_depth";
pub const TRAIN_CSV_HEADER: &str = "epoch,lr,train_loss,train_err";
pub const DEPTH_ROWS_CSV_HEADER: &str = "depth,seed,ncc_train_err,interpolated";
pub const DEPTH_SUMMARY_CSV_HEADER: &str = "depth,seed,layer,cdnv_train,cdnv_test,ncc_train_err,ncc_test_err,model_train_err,model_test_err,effective_depth";
pub const NOISE_SUMMARY_CSV_HEADER: &str = "noise,seed,layer,cdnv_train,cdnv_test,ncc_train_err,ncc_test_err,model_train_err,model_test_err,effective_depth";
pub const PROBE_CSV_HEADER: &str =
    "layer,probe_train_err,probe_test_err,ncc_train_err,ncc_test_err";

/// 17 significant digits: enough to reproduce any f64 exactly on parse.
pub fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{v:.16e}")
    }
}

/// CDNV cells may be degenerate (`None` average); the CSV spells that `inf`
/// because a degenerate pair means the distance term vanished.
pub fn fmt_opt_float(v: Option<f64>) -> String {
    match v {
        Some(x) => fmt_float(x),
        None => "inf".to_string(),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    hex::encode(h.finalize())
}

/// Writes via a temp file in the same directory plus a rename, so a crash
/// never leaves a half-written artifact under the final name.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().ok_or_else(|| {
        CliError::Run(format!("cannot write {}: no parent directory", path.display()))
    })?;
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path)
        .map_err(|e| CliError::Run(format!("cannot persist {}: {}", path.display(), e.error)))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub master_seed: u64,
    pub config_sha256: String,
    pub wall_clock_seconds: f64,
    /// Relative path -> SHA-256 of the bytes written.
    pub files: BTreeMap<String, String>,
}

/// Tracks everything written under one output directory and finalizes the
/// manifest last, so the manifest digests always describe bytes on disk.
pub struct OutDir {
    root: PathBuf,
    command: String,
    master_seed: u64,
    config_sha256: String,
    started: Instant,
    files: BTreeMap<String, String>,
}

impl OutDir {
    pub fn new(
        root: &Path,
        command: &str,
        master_seed: u64,
        config_json: &str,
    ) -> Result<OutDir, CliError> {
        fs::create_dir_all(root)?;
        let mut out = OutDir {
            root: root.to_path_buf(),
            command: command.to_string(),
            master_seed,
            config_sha256: sha256_hex(config_json.as_bytes()),
            started: Instant::now(),
            files: BTreeMap::new(),
        };
        out.write("config.json", config_json.as_bytes())?;
        Ok(out)
    }

    /// Like [`OutDir::new`] but without writing `config.json`; used by
    /// `plot`, which re-renders figures inside another run's directory and
    /// must not clobber that run's recorded config.
    pub fn attach(
        root: &Path,
        command: &str,
        master_seed: u64,
        config_json: &str,
    ) -> Result<OutDir, CliError> {
        fs::create_dir_all(root)?;
        Ok(OutDir {
            root: root.to_path_buf(),
            command: command.to_string(),
            master_seed,
            config_sha256: sha256_hex(config_json.as_bytes()),
            started: Instant::now(),
            files: BTreeMap::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Atomically writes `rel` and records its digest for the manifest.
    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<(), CliError> {
        atomic_write(&self.root.join(rel), bytes)?;
        self.files.insert(rel.to_string(), sha256_hex(bytes));
        Ok(())
    }

    /// Registers a file written by someone else (e.g. a checkpoint writer
    /// that streams straight to disk) by hashing it from disk.
    pub fn track(&mut self, rel: &str) -> Result<(), CliError> {
        let bytes = fs::read(self.root.join(rel))?;
        self.files.insert(rel.to_string(), sha256_hex(&bytes));
        Ok(())
    }

    /// Folds previously manifested files into this run's inventory, used by
    /// `plot` when it re-renders figures inside an existing output directory.
    pub fn absorb(&mut self, prior: &RunManifest) {
        for (rel, digest) in &prior.files {
            self.files.entry(rel.clone()).or_insert_with(|| digest.clone());
        }
    }

    pub fn manifest(&self) -> RunManifest {
        RunManifest {
            tool: "collapse-lab".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: self.command.clone(),
            master_seed: self.master_seed,
            config_sha256: self.config_sha256.clone(),
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            files: self.files.clone(),
        }
    }

    /// Writes `manifest.json`. Call on success and on failure alike; a
    /// partial manifest still inventories whatever did land.
    pub fn finalize(&self) -> Result<(), CliError> {
        let manifest = self.manifest();
        let json = serde_json::to_string_pretty(&manifest)?;
        atomic_write(&self.root.join("manifest.json"), json.as_bytes())
    }
}
