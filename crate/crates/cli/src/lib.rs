//! Sweeps, reports and run manifests behind the `iceberg` command.

pub mod bench;
pub mod manifest;
pub mod report;
pub mod spec;

use std::path::{Path, PathBuf};

use iceberg_core::circuit::{CircuitError, ParseError};
use iceberg_core::compiler::CompileError;
use iceberg_core::ft::FtError;
use iceberg_core::gadgets::GadgetError;
use iceberg_core::qaoa::QaoaError;
use iceberg_core::sim::SimError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error("config: {0}")]
    Config(String),
    #[error("report: {0}")]
    Report(String),
    #[error(transparent)]
    Qaoa(#[from] QaoaError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Ft(#[from] FtError),
    #[error(transparent)]
    Gadget(#[from] GadgetError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn csv(path: &Path, source: csv::Error) -> Self {
        CliError::Csv { path: path.to_path_buf(), source }
    }
}
