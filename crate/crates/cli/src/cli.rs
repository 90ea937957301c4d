//! Argument parsing. Dedicated flags are shorthands for config keys and are
//! applied after `--set`, so both beat the config file.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use proctor_pipeline::{AnalysisMode, PipelineError, Result};
use serde::Serialize;
use toml::Value;

use crate::config::{parse_override, resolve, PipelineConfig, ScriptedAbsence};

#[derive(Debug, Parser)]
#[command(
    name = "proctor",
    version,
    about = "Review gallery-view exam recordings for student absence"
)]
pub struct Cli {
    /// TOML configuration file.
    #[arg(short, long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Override any config key, e.g. `--set analysis.window_s=60`. Values
    /// are TOML; bare words are strings. Repeatable.
    #[arg(short = 's', long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    #[command(flatten)]
    pub paths: PathFlags,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Default, Args)]
pub struct PathFlags {
    /// paths.out_dir
    #[arg(long, global = true, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// paths.roster (CSV: student_id,display_name)
    #[arg(long, global = true, value_name = "CSV")]
    pub roster: Option<PathBuf>,
    /// paths.train_video
    #[arg(long, global = true, value_name = "VIDEO")]
    pub train_video: Option<PathBuf>,
    /// paths.exam_video
    #[arg(long, global = true, value_name = "VIDEO")]
    pub exam_video: Option<PathBuf>,
    /// paths.dataset_root
    #[arg(long, global = true, value_name = "DIR")]
    pub dataset_root: Option<PathBuf>,
    /// paths.model
    #[arg(long, global = true, value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// paths.analysis_dir
    #[arg(long, global = true, value_name = "DIR")]
    pub analysis_dir: Option<PathBuf>,
    /// paths.report_dir
    #[arg(long, global = true, value_name = "DIR")]
    pub report_dir: Option<PathBuf>,
    /// build.worker_count and analyze.worker_count
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic gallery recording with ground truth and roster.
    Synth(SynthArgs),
    /// Harvest a labeled face dataset from a training recording.
    BuildDataset(BuildArgs),
    /// Train the face classifier on a dataset.
    Train(TrainArgs),
    /// Recognize every cell once per second of an exam recording.
    Analyze(AnalyzeArgs),
    /// Turn an analysis into summary.json, timeline.csv and charts.
    Report,
    /// build-dataset, train, analyze and report in one go.
    All(TrainArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// synth.students
    #[arg(long)]
    pub students: Option<usize>,
    /// synth.duration_s
    #[arg(long, value_name = "SECONDS")]
    pub duration: Option<u64>,
    /// synth.seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Append to synth.absences, as `NAME:START-END` in seconds.
    #[arg(long, value_name = "NAME:START-END")]
    pub absence: Vec<String>,
    /// synth.script (JSON session script)
    #[arg(long, value_name = "JSON")]
    pub script: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// Same as --train-video.
    #[arg(long, value_name = "VIDEO")]
    pub video: Option<PathBuf>,
    /// build.min_count
    #[arg(long)]
    pub min_count: Option<usize>,
    /// build.sample_every_n
    #[arg(long, value_name = "N")]
    pub sample_every: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// train.epochs
    #[arg(long)]
    pub epochs: Option<u32>,
    /// seed (dataset split)
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Same as --exam-video.
    #[arg(long, value_name = "VIDEO")]
    pub video: Option<PathBuf>,
    /// analyze.mode = "per-frame" (measurement only)
    #[arg(long)]
    pub per_frame: bool,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Synth(_) => "synth",
            Self::BuildDataset(_) => "build-dataset",
            Self::Train(_) => "train",
            Self::Analyze(_) => "analyze",
            Self::Report => "report",
            Self::All(_) => "all",
        }
    }
}

fn value<T: Serialize>(v: T) -> Value {
    Value::try_from(v).expect("flag values are TOML-representable")
}

fn parse_absence(spec: &str) -> Result<ScriptedAbsence> {
    let bad = || PipelineError::Config(format!("absence {spec:?} is not NAME:START-END"));
    let (name, range) = spec.rsplit_once(':').ok_or_else(bad)?;
    let (a, b) = range.split_once('-').ok_or_else(bad)?;
    Ok(ScriptedAbsence {
        student: name.trim().to_string(),
        start_s: a.trim().parse().map_err(|_| bad())?,
        end_s: b.trim().parse().map_err(|_| bad())?,
    })
}

impl Cli {
    /// Every override in application order: `--set` first, then flags.
    pub fn overrides(&self) -> Result<Vec<(String, Value)>> {
        let mut out = Vec::new();
        for spec in &self.overrides {
            out.push(parse_override(spec)?);
        }
        let mut push = |key: &str, v: Value| out.push((key.to_string(), v));
        let p = &self.paths;
        let paths = [
            ("paths.out_dir", &p.out_dir),
            ("paths.roster", &p.roster),
            ("paths.train_video", &p.train_video),
            ("paths.exam_video", &p.exam_video),
            ("paths.dataset_root", &p.dataset_root),
            ("paths.model", &p.model),
            ("paths.analysis_dir", &p.analysis_dir),
            ("paths.report_dir", &p.report_dir),
        ];
        for (key, v) in paths {
            if let Some(v) = v {
                push(key, value(v));
            }
        }
        if let Some(n) = p.workers {
            push("build.worker_count", value(n));
            push("analyze.worker_count", value(n));
        }
        match &self.command {
            Command::Synth(a) => {
                if let Some(n) = a.students {
                    push("synth.students", value(n));
                }
                if let Some(d) = a.duration {
                    push("synth.duration_s", value(d));
                }
                if let Some(s) = a.seed {
                    push("synth.seed", value(s));
                }
                if let Some(s) = &a.script {
                    push("synth.script", value(s));
                }
                if !a.absence.is_empty() {
                    let list = a.absence.iter().map(|s| parse_absence(s)).collect::<Result<Vec<_>>>()?;
                    push("synth.absences", value(list));
                }
            }
            Command::BuildDataset(a) => {
                if let Some(v) = &a.video {
                    push("paths.train_video", value(v));
                }
                if let Some(n) = a.min_count {
                    push("build.min_count", value(n));
                }
                if let Some(n) = a.sample_every {
                    push("build.sample_every_n", value(n));
                }
            }
            Command::Train(a) | Command::All(a) => {
                if let Some(e) = a.epochs {
                    push("train.epochs", value(e));
                }
                if let Some(s) = a.seed {
                    push("seed", value(s));
                }
            }
            Command::Analyze(a) => {
                if let Some(v) = &a.video {
                    push("paths.exam_video", value(v));
                }
                if a.per_frame {
                    push("analyze.mode", value(AnalysisMode::PerFrame));
                }
            }
            Command::Report => {}
        }
        Ok(out)
    }

    pub fn resolve(&self) -> Result<PipelineConfig> {
        resolve(self.config.as_deref(), &self.overrides()?)
    }
}
