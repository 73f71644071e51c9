//! `manifest.json`: everything needed to rerun a command. Bench manifests
//! embed the resolved sweep spec, so `--config manifest.json` replays them.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::spec::SweepSpec;
use crate::CliError;

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub argv: Vec<String>,
    /// `parallel` or `sequential`.
    pub policy: String,
    pub spec: Option<SweepSpec>,
    /// Seeds and settings of single-shot commands (`gen`, `simulate`, ...).
    pub settings: serde_json::Value,
    pub outputs: Vec<PathBuf>,
}

impl Manifest {
    pub fn new(command: &str, policy: &str) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.into(),
            argv: std::env::args().collect(),
            policy: policy.into(),
            spec: None,
            settings: serde_json::Value::Null,
            outputs: Vec::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}
