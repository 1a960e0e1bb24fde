use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use haqjsk_core::kernels::StageTiming;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Provenance record written next to every output file.
#[derive(Debug, Serialize)]
pub struct RunManifest<C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command_line: Vec<String>,
    pub config: C,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetFingerprint>,
    pub jobs: usize,
    pub outputs: Vec<String>,
    pub timings: Vec<StageTiming>,
    pub total_seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct DatasetFingerprint {
    pub name: String,
    pub sha256: String,
    pub graphs: usize,
    pub classes: usize,
}

/// SHA-256 over each file's name and contents, in the order given.
pub fn fingerprint(files: &[PathBuf]) -> Result<String> {
    let mut hasher = Sha256::new();
    for f in files {
        let bytes = fs::read(f).with_context(|| format!("reading {}", f.display()))?;
        let name = f
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        hasher.update(name.as_bytes());
        hasher.update([0u8]);
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

/// `<output>.manifest.json`.
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}

pub fn write_manifest<C: Serialize>(path: &Path, manifest: &RunManifest<C>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Consecutive stage timer.
pub struct Timer {
    start: Instant,
    last: Instant,
    pub stages: Vec<StageTiming>,
}

impl Timer {
    pub fn start() -> Self {
        let now = Instant::now();
        Timer {
            start: now,
            last: now,
            stages: Vec::new(),
        }
    }

    pub fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.stages.push(StageTiming {
            stage: stage.into(),
            seconds: (now - self.last).as_secs_f64(),
        });
        self.last = now;
    }

    /// Appends stages timed elsewhere that ran since the last lap.
    pub fn extend(&mut self, stages: Vec<StageTiming>) {
        self.stages.extend(stages);
        self.last = Instant::now();
    }

    /// Wall time from start to the end of the last stage.
    pub fn total(&self) -> f64 {
        (self.last - self.start).as_secs_f64()
    }
}
