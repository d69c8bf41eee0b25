//! Benchmark harness: workload generation, the policy matrix runner, and
//! report generation over run directories.

pub mod config;
pub mod gen;
pub mod live;
pub mod report;
pub mod run;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{BenchConfig, Mode, PolicyKind, PolicySpec};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("run directory {0} is missing or incomplete")]
    MissingRun(PathBuf),
    #[error("policy {0} not found in run")]
    UnknownPolicy(String),
    #[error(transparent)]
    Engine(#[from] specplan_core::engine::EngineError),
    #[error(transparent)]
    Agent(#[from] specplan_core::agents::AgentError),
    #[error(transparent)]
    Metrics(#[from] specplan_core::metrics::MetricsError),
    #[error(transparent)]
    Predictor(#[from] specplan_core::predictor::PredictorError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Live(#[from] specplan_live::LiveError),
}

impl BenchError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        BenchError::Io { path: path.to_path_buf(), source }
    }

    pub fn json(path: &Path, source: serde_json::Error) -> Self {
        BenchError::Json { path: path.to_path_buf(), source }
    }
}

pub(crate) fn create_dir(path: &Path) -> Result<(), BenchError> {
    std::fs::create_dir_all(path).map_err(|e| BenchError::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), BenchError> {
    std::fs::write(path, bytes).map_err(|e| BenchError::io(path, e))
}

pub(crate) fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), BenchError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| BenchError::json(path, e))?;
    write_file(path, text + "\n")
}

pub(crate) fn write_jsonl<T: serde::Serialize>(path: &Path, items: &[T]) -> Result<(), BenchError> {
    let mut buf = Vec::new();
    specplan_core::ledger::write_jsonl(&mut buf, items).map_err(|e| BenchError::io(path, e))?;
    write_file(path, buf)
}

pub(crate) fn read_jsonl<T: for<'de> serde::Deserialize<'de>>(path: &Path) -> Result<Vec<T>, BenchError> {
    let file = std::fs::File::open(path).map_err(|_| BenchError::MissingRun(path.to_path_buf()))?;
    specplan_core::ledger::read_jsonl(std::io::BufReader::new(file)).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))
}
