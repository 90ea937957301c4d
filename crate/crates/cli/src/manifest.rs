//! `run_manifest.json`: what was run, with which configuration and inputs.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use proctor_pipeline::{PipelineError, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;

pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";
pub const RUN_MANIFEST_SCHEMA_VERSION: u32 = 1;

/// Defaults that are conventions of this implementation rather than
/// values fixed by the method. Listed in every manifest so reviewers know
/// which numbers are tunable choices.
pub const CONVENTIONS: &[&str] = &[
    "ocr.threshold",
    "ocr.upscale_k",
    "ocr.auto_threshold",
    "analysis.accept_threshold",
    "build.crop_margin",
    "build.fuzzy_max_dist",
    "build.min_class_frac",
    "train.learning_rate",
    "train.input_side",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub argv: Vec<String>,
    pub config_hash: String,
    pub config: PipelineConfig,
    pub tool_versions: BTreeMap<String, String>,
    pub inputs: BTreeMap<String, FileDigest>,
    pub conventions: Vec<String>,
    pub started_at: String,
    pub finished_at: String,
}

pub fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn file_digest(path: &Path) -> Result<FileDigest> {
    let io = |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = fs::File::open(path).map_err(io)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut bytes = 0u64;
    loop {
        let n = file.read(&mut buf).map_err(io)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
        bytes += n as u64;
    }
    Ok(FileDigest {
        path: path.to_path_buf(),
        bytes,
        sha256: hasher.finalize().iter().map(|b| format!("{b:02x}")).collect(),
    })
}

/// Collects one command's provenance while it runs.
#[derive(Debug, Clone)]
pub struct RunRecorder {
    manifest: RunManifest,
}

impl RunRecorder {
    pub fn start(command: &str, argv: &[String], config: &PipelineConfig) -> Self {
        let mut tool_versions = BTreeMap::new();
        tool_versions.insert("proctor".to_string(), env!("CARGO_PKG_VERSION").to_string());
        tool_versions.insert(
            "target".to_string(),
            format!("{}-{}", std::env::consts::ARCH, std::env::consts::OS),
        );
        Self {
            manifest: RunManifest {
                schema_version: RUN_MANIFEST_SCHEMA_VERSION,
                command: command.to_string(),
                argv: argv.to_vec(),
                config_hash: config.hash(),
                config: config.clone(),
                tool_versions,
                inputs: BTreeMap::new(),
                conventions: CONVENTIONS.iter().map(|s| s.to_string()).collect(),
                started_at: now(),
                finished_at: String::new(),
            },
        }
    }

    pub fn tool(&mut self, name: &str, version: impl Into<String>) {
        self.manifest.tool_versions.insert(name.to_string(), version.into());
    }

    pub fn input(&mut self, role: &str, path: &Path) -> Result<()> {
        let digest = file_digest(path)?;
        self.manifest.inputs.insert(role.to_string(), digest);
        Ok(())
    }

    /// The manifest as it stands, stamped with the current time.
    pub fn finish(&self) -> RunManifest {
        let mut m = self.manifest.clone();
        m.finished_at = now();
        m
    }

    /// Stamp and write `run_manifest.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<RunManifest> {
        let m = self.finish();
        let path = dir.join(RUN_MANIFEST_FILE);
        let json = serde_json::to_string_pretty(&m).expect("manifest serializes");
        fs::write(&path, json + "\n").map_err(|source| PipelineError::Io { path, source })?;
        Ok(m)
    }
}
