//! Experiment harness: JSON configs, dispatch to the numerical core, a
//! content-addressed artifact cache, run manifests, CSV and plot data.

pub mod cache;
pub mod config;
pub mod experiments;
pub mod plot;
pub mod selftest;

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use cache::Cache;
pub use clab_core::{Error as CoreError, C64};
pub use config::{Datum, Experiment, ExperimentConfig, WallConfig};
pub use experiments::Outputs;
pub use plot::{emit_plot_data, PlotData};

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Validation(_) => 2,
            HarnessError::Numerical(_) => 3,
        }
    }
}

impl From<CoreError> for HarnessError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidGrid(_)
            | CoreError::InvalidDomain(_)
            | CoreError::InvalidPotential(_)
            | CoreError::InvalidFrequency(_)
            | CoreError::SourceTooClose(_)
            | CoreError::OutsideSafeBox(_) => HarnessError::Validation(e.to_string()),
            other => HarnessError::Numerical(other.to_string()),
        }
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Numerical(format!("i/o: {e}"))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub name: String,
    pub sha256: String,
    /// `Some(hit)` for cache entries.
    pub cache_hit: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTime {
    pub name: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub kind: String,
    pub config_hash: String,
    pub artifacts: Vec<Artifact>,
    pub stages: Vec<StageTime>,
    /// Per-item failures that left the run partial.
    pub failures: Vec<String>,
    pub warnings: Vec<String>,
    pub summary: serde_json::Value,
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

/// Stage timer feeding the manifest.
#[derive(Debug, Default)]
pub struct Stages(pub Vec<StageTime>);

impl Stages {
    pub fn time<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.0.push(StageTime {
            name: name.to_string(),
            seconds: t.elapsed().as_secs_f64(),
        });
        out
    }
}

/// Validates, dispatches, and writes every output plus `manifest.json` into
/// the configured directory.
pub fn run(config: &ExperimentConfig, cache: &Cache) -> Result<RunManifest, HarnessError> {
    config.validate()?;
    let mut stages = Stages::default();
    let out = experiments::dispatch(config, cache, &mut stages)?;
    let mut artifacts = out.cached.clone();
    for (name, bytes) in &out.files {
        write_atomic(&config.output.join(name), bytes)?;
        artifacts.push(Artifact {
            name: name.clone(),
            sha256: sha256_hex(bytes),
            cache_hit: None,
        });
    }
    for plot in &out.plots {
        let bytes = emit_plot_data(plot);
        let name = format!("{}.dat", plot.name);
        write_atomic(&config.output.join(&name), bytes.as_bytes())?;
        artifacts.push(Artifact {
            name,
            sha256: sha256_hex(bytes.as_bytes()),
            cache_hit: None,
        });
    }
    let manifest = RunManifest {
        tool_version: TOOL_VERSION.to_string(),
        kind: config.experiment.kind().to_string(),
        config_hash: config.hash(),
        artifacts,
        stages: stages.0,
        failures: out.failures,
        warnings: out.warnings,
        summary: out.summary,
    };
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    write_atomic(&config.output.join("manifest.json"), &json)?;
    Ok(manifest)
}
