//! Structured run reports written by every command-line invocation.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub ms: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct RunReport {
    pub command: Vec<String>,
    /// SHA-256 of the model configuration file, when the command reads one.
    pub config_hash: Option<String>,
    pub timings: Vec<StageTiming>,
    pub outputs: Vec<PathBuf>,
    pub warnings: Vec<String>,
    pub result: Value,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl RunReport {
    pub fn new(command: Vec<String>) -> Self {
        RunReport {
            command,
            ..Default::default()
        }
    }

    /// Runs `f`, recording its wall-clock time under `stage`.
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f()?;
        self.record(stage, start.elapsed());
        Ok(out)
    }

    pub fn record(&mut self, stage: &str, d: Duration) {
        self.timings.push(StageTiming {
            stage: stage.into(),
            ms: d.as_secs_f64() * 1e3,
        });
    }

    pub fn warn(&mut self, w: impl Into<String>) {
        self.warnings.push(w.into());
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// Trained-model settings the toolkit has to assume, echoed in every report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assumptions {
    pub sigma: (f64, bool),
    pub margin: (f64, bool),
    pub alpha: (f64, bool),
    pub default_oks: bool,
}

impl Default for Assumptions {
    fn default() -> Self {
        Assumptions {
            sigma: (crate::codec::GaussianSpec::DEFAULT_SIGMA, true),
            margin: (crate::codec::DEFAULT_MARGIN, true),
            alpha: (crate::loss::LossConfig::DEFAULT_ALPHA, true),
            default_oks: true,
        }
    }
}

impl Assumptions {
    pub fn warnings(&self) -> Vec<String> {
        let tag = |d: bool| {
            if d {
                "assumed default"
            } else {
                "user supplied"
            }
        };
        vec![
            format!(
                "assumption: heatmap target sigma = {} px ({})",
                self.sigma.0,
                tag(self.sigma.1)
            ),
            format!(
                "assumption: person box margin = {} ({})",
                self.margin.0,
                tag(self.margin.1)
            ),
            format!(
                "assumption: distillation weight alpha = {} ({})",
                self.alpha.0,
                tag(self.alpha.1)
            ),
            format!(
                "assumption: OKS constants = {}",
                if self.default_oks {
                    "COCO person defaults (assumed default)"
                } else {
                    "user supplied"
                }
            ),
        ]
    }
}
