//! The single TOML configuration file and its flag overrides.
//!
//! Every key can be overridden from the command line with
//! `--set section.key=value`, where the value is TOML (bare words are taken
//! as strings). Precedence is flags > file > defaults.

use std::fs;
use std::path::{Path, PathBuf};

use proctor_core::AnalysisConfig;
use proctor_detect::{DetectorKind, DetectorSpec};
use proctor_ocr::OcrConfig;
use proctor_pipeline::{AnalyzeOptions, BuildConfig, PipelineError, Result};
use proctor_recognizer::{SplitFractions, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub out_dir: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_video: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exam_video: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub roster: Option<PathBuf>,
    /// Defaults to `<out_dir>/dataset`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset_root: Option<PathBuf>,
    /// Defaults to `<out_dir>/model/classifier.model`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    /// Defaults to `<out_dir>/analysis`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analysis_dir: Option<PathBuf>,
    /// Defaults to `<out_dir>/report`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report_dir: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("proctor-out"),
            train_video: None,
            exam_video: None,
            roster: None,
            dataset_root: None,
            model: None,
            analysis_dir: None,
            report_dir: None,
        }
    }
}

impl Paths {
    pub fn dataset_root(&self) -> PathBuf {
        self.dataset_root
            .clone()
            .unwrap_or_else(|| self.out_dir.join("dataset"))
    }

    pub fn model(&self) -> PathBuf {
        self.model
            .clone()
            .unwrap_or_else(|| self.out_dir.join("model").join("classifier.model"))
    }

    pub fn analysis_dir(&self) -> PathBuf {
        self.analysis_dir
            .clone()
            .unwrap_or_else(|| self.out_dir.join("analysis"))
    }

    pub fn report_dir(&self) -> PathBuf {
        self.report_dir.clone().unwrap_or_else(|| self.out_dir.join("report"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedAbsence {
    pub student: String,
    pub start_s: u64,
    pub end_s: u64,
}

/// Parameters of the `synth` subcommand. Grid rows and columns come from
/// `[analysis]` so the generated video matches the analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub students: usize,
    pub duration_s: u64,
    pub fps: u32,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
    pub absences: Vec<ScriptedAbsence>,
    /// A full session script (JSON); replaces every other synth key.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub script: Option<PathBuf>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            students: 10,
            duration_s: 180,
            fps: 30,
            width: 1920,
            height: 1080,
            seed: 7,
            absences: Vec::new(),
            script: None,
        }
    }
}

fn default_detector() -> DetectorSpec {
    DetectorSpec::bundled(DetectorKind::NeuralSsd)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seed of the train/val/test split.
    pub seed: u64,
    pub paths: Paths,
    pub detector: DetectorSpec,
    pub ocr: OcrConfig,
    pub build: BuildConfig,
    pub split: SplitFractions,
    pub train: TrainConfig,
    pub analysis: AnalysisConfig,
    pub analyze: AnalyzeOptions,
    pub synth: SynthConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            paths: Paths::default(),
            detector: default_detector(),
            ocr: OcrConfig::default(),
            build: BuildConfig::default(),
            split: SplitFractions::default(),
            train: TrainConfig::default(),
            analysis: AnalysisConfig::default(),
            analyze: AnalyzeOptions::default(),
            synth: SynthConfig::default(),
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Config(e.to_string())
}

impl PipelineConfig {
    /// Check every section. Paths are checked by the subcommands that use
    /// them.
    pub fn validate(&self) -> Result<()> {
        self.analysis.validate()?;
        self.build.validate()?;
        self.ocr.validate()?;
        self.detector.validate()?;
        self.split.validate()?;
        self.train.validate()?;
        if self.analyze.worker_count == 0 {
            return Err(config_err("analyze.worker_count must be at least 1"));
        }
        if self.analyze.crop_margin != self.build.crop_margin {
            return Err(config_err(format!(
                "analyze.crop_margin ({}) must equal build.crop_margin ({}); the model sees crops cut the same way",
                self.analyze.crop_margin, self.build.crop_margin
            )));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(config_err)
    }

    /// SHA-256 over the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes to JSON");
        Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Parse one `key=value` override. The value is read as TOML and falls
/// back to a plain string.
pub fn parse_override(spec: &str) -> Result<(String, Value)> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| config_err(format!("override {spec:?} is not key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(config_err(format!("override {spec:?} has an empty key")));
    }
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => Value::String(raw.to_string()),
    };
    Ok((key.to_string(), value))
}

/// Set a dotted key inside `table`, creating sections on the way.
pub fn set_key(table: &mut Table, key: &str, value: Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("split yields one part");
    let mut cur = table;
    for (depth, p) in parts.iter().enumerate() {
        let entry = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = match entry {
            Value::Table(t) => t,
            _ => {
                return Err(config_err(format!("{} is not a section", parts[..=depth].join("."))));
            }
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Build the effective configuration: defaults, then `file`, then each
/// override in order.
pub fn resolve(file: Option<&Path>, overrides: &[(String, Value)]) -> Result<PipelineConfig> {
    let mut table = match file {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            text.parse::<Table>()
                .map_err(|e| config_err(format!("{}: {e}", path.display())))?
        }
        None => Table::new(),
    };
    for (key, value) in overrides {
        set_key(&mut table, key, value.clone())?;
    }
    let cfg: PipelineConfig = Value::Table(table).try_into().map_err(config_err)?;
    cfg.validate()?;
    Ok(cfg)
}
