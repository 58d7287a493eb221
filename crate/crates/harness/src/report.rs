//! Experiment reports: per-criterion pass/fail with the tolerance applied,
//! free-form measurements, and the JSON artifact.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{ExperimentSpec, Kind};
use crate::Result;

/// One checked criterion. `target` is human-readable and always cites the
/// numeric `tolerance` that was applied.
#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub target: String,
    pub tolerance: f64,
    pub detail: String,
}

impl CriterionResult {
    pub fn new(
        name: impl Into<String>,
        passed: bool,
        measured: f64,
        target: impl Into<String>,
        tolerance: f64,
        detail: impl Into<String>,
    ) -> Self {
        Self {
            name: name.into(),
            passed,
            measured,
            target: target.into(),
            tolerance,
            detail: detail.into(),
        }
    }

    pub fn summary_line(&self) -> String {
        format!(
            "criterion {}: {} (measured {:.6}, target {})",
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.measured,
            self.target
        )
    }
}

/// Full experiment report, serialized as `report.json` in the output
/// directory.
#[derive(Debug, Serialize)]
pub struct Report {
    pub kind: Kind,
    pub passed: bool,
    pub criteria: Vec<CriterionResult>,
    /// Seeds of every run/trial stream consumed, in execution order.
    pub seeds: Vec<u64>,
    pub runtime_secs: f64,
    /// Kind-specific numbers (slopes, times, frequencies, ...).
    pub measurements: serde_json::Value,
    /// Echo of the spec that produced this report.
    pub inputs: ExperimentSpec,
}

impl Report {
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("report.json");
        std::fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }
}
