use std::fs;
use std::io::BufReader;
use std::path::Path;

use mirrorboard_core::gaze::{GazeLog, Metrics};

use crate::run::metrics_bytes;
use crate::HarnessError;

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutcome {
    pub metrics: Metrics,
    /// Recomputed `metrics.json` contents.
    pub bytes: Vec<u8>,
    /// Whether they equal the recorded file byte for byte.
    pub matches: bool,
}

/// Recomputes the metrics from `gaze.jsonl` and compares them with `metrics.json`.
pub fn replay(dir: &Path) -> Result<ReplayOutcome, HarnessError> {
    let log_path = dir.join("gaze.jsonl");
    let metrics_path = dir.join("metrics.json");
    for p in [&log_path, &metrics_path] {
        if !p.is_file() {
            return Err(HarnessError::MissingArtifact(p.clone()));
        }
    }
    let log = GazeLog::read(BufReader::new(fs::File::open(&log_path)?)).map_err(|e| HarnessError::SchemaMismatch {
        path: log_path.clone(),
        message: e.to_string(),
    })?;
    let original = fs::read(&metrics_path)?;
    serde_json::from_slice::<Metrics>(&original).map_err(|e| HarnessError::SchemaMismatch {
        path: metrics_path.clone(),
        message: e.to_string(),
    })?;
    let metrics = log.analyze()?.metrics;
    let bytes = metrics_bytes(&metrics);
    Ok(ReplayOutcome {
        matches: bytes == original,
        metrics,
        bytes,
    })
}
