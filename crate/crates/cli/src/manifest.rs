//! Reproducibility record written next to every CSV the tool produces.

use std::io;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub const GIT_DESCRIBE: &str = env!("ENVBRIDGE_GIT_DESCRIBE");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// Every flag of the invocation, defaults included.
    pub args: serde_json::Value,
    pub seed: u64,
    pub started_at: DateTime<Utc>,
    /// Absent while the run is still going (or if it died).
    pub finished_at: Option<DateTime<Utc>>,
    pub git_describe: String,
    pub version: String,
    pub physical_cores: usize,
    pub logical_cpus: usize,
}

impl RunManifest {
    pub fn start<A: Serialize>(subcommand: &str, args: &A, seed: u64) -> Self {
        Self {
            subcommand: subcommand.to_owned(),
            args: serde_json::to_value(args).expect("flag structs serialize"),
            seed,
            started_at: Utc::now(),
            finished_at: None,
            git_describe: GIT_DESCRIBE.to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            physical_cores: num_cpus::get_physical(),
            logical_cpus: num_cpus::get(),
        }
    }

    pub fn finish(&mut self) {
        self.finished_at = Some(Utc::now());
    }

    /// Write to the sibling path of `csv`.
    pub fn write_beside(&self, csv: &Path) -> io::Result<PathBuf> {
        let path = manifest_path(csv);
        let json = serde_json::to_vec_pretty(self).map_err(io::Error::other)?;
        std::fs::write(&path, json)?;
        Ok(path)
    }

    pub fn read(path: &Path) -> io::Result<Self> {
        let bytes = std::fs::read(path)?;
        serde_json::from_slice(&bytes).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }
}

/// `runs/train.csv` → `runs/train.manifest.json`.
pub fn manifest_path(csv: &Path) -> PathBuf {
    csv.with_extension("manifest.json")
}
