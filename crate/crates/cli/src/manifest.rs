//! `manifest.json`: what was run, on which scenario and seeds, and how long it took.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::ExperimentError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub arguments: Vec<String>,
    pub scenario_hash: String,
    pub seeds: Vec<u64>,
    pub output_dir: String,
    pub version: String,
    /// `"running"` until the command finishes.
    pub status: String,
    /// Wall-clock seconds by phase; empty until the command finishes.
    pub timings: BTreeMap<String, f64>,
    pub files: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, arguments: Vec<String>, scenario_hash: String, seeds: Vec<u64>, out: &Path) -> Self {
        RunManifest {
            command: command.to_string(),
            arguments,
            scenario_hash,
            seeds,
            output_dir: out.display().to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            status: "running".to_string(),
            timings: BTreeMap::new(),
            files: Vec::new(),
        }
    }

    pub fn path(&self) -> PathBuf {
        Path::new(&self.output_dir).join(MANIFEST_FILE)
    }

    pub fn write(&self) -> Result<(), ExperimentError> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(self.path(), text)?;
        Ok(())
    }
}
