//! One function per subcommand. Each writes a run manifest beside its
//! outputs and returns what it produced.

use std::fs;
use std::path::{Path, PathBuf};

use proctor_core::{read_events_csv, write_events_csv, Roster};
use proctor_detect::{DetectorSpec, FaceDetector};
use proctor_ocr::{engine_for, OcrEngine};
use proctor_pipeline::{
    analyze_video, build_dataset as run_build, load_dataset, render_report, train_on_dataset, AnalyzeStats,
    BuildOutcome, Harvest, PipelineError, ReportBundle, Result, TrainReport,
};
use proctor_recognizer::Classifier;
use proctor_synth::{write_bundle, Bundle, SessionScript, Span, SynthError, DEMO_NAMES};
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::manifest::RunRecorder;

pub const ANALYSIS_FILE: &str = "analysis.json";
pub const EVENTS_FILE: &str = "timeline.csv";
pub const TRAIN_REPORT_FILE: &str = "train_report.json";

fn synth_err(e: SynthError) -> PipelineError {
    match e {
        SynthError::InvalidScript(m) => PipelineError::Config(m),
        e @ SynthError::CapacityExceeded { .. } => PipelineError::Config(e.to_string()),
        SynthError::Video(v) => v.into(),
        SynthError::Io { path, source } => PipelineError::Io { path, source },
        SynthError::Json(j) => PipelineError::Input(j.to_string()),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// A path the subcommand cannot run without.
fn required(path: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
    let p = path
        .clone()
        .ok_or_else(|| PipelineError::Config(format!("{key} is not set (config file or flag)")))?;
    if !p.exists() {
        return Err(PipelineError::Input(format!("{key}: {} does not exist", p.display())));
    }
    Ok(p)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, json + "\n").map_err(io_err(path))
}

fn load_detector(spec: &DetectorSpec, rec: &mut RunRecorder) -> Result<FaceDetector> {
    let det = FaceDetector::load(spec)?;
    rec.tool("detector", format!("{:?}", spec.kind));
    rec.input("detector_model", &spec.model_artifact)?;
    Ok(det)
}

fn load_engine(cfg: &PipelineConfig, rec: &mut RunRecorder) -> Result<Box<dyn OcrEngine>> {
    let engine = engine_for(cfg.ocr.engine)?;
    rec.tool("ocr_engine", format!("{} ({})", engine.name(), engine.version()));
    Ok(engine)
}

pub fn synth_script(cfg: &PipelineConfig) -> Result<SessionScript> {
    let s = &cfg.synth;
    if let Some(path) = &s.script {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        return serde_json::from_str(&text).map_err(|e| PipelineError::Input(format!("{}: {e}", path.display())));
    }
    if s.students > DEMO_NAMES.len() {
        return Err(PipelineError::Config(format!(
            "synth.students is {}; at most {} demo identities exist",
            s.students,
            DEMO_NAMES.len()
        )));
    }
    let mut script = SessionScript::demo(s.students, s.duration_s, s.seed);
    script.fps = s.fps;
    script.width = s.width;
    script.height = s.height;
    script.rows = cfg.analysis.rows;
    script.cols = cfg.analysis.cols;
    for a in &s.absences {
        let p = script
            .participants
            .iter_mut()
            .find(|p| p.name == a.student)
            .ok_or_else(|| PipelineError::Config(format!("synth absence names unknown student {:?}", a.student)))?;
        p.absences.push(Span::new(a.start_s, a.end_s));
    }
    for p in &mut script.participants {
        p.absences.sort_by_key(|a| a.start_s);
    }
    script.validate().map_err(synth_err)?;
    Ok(script)
}

pub fn synth(cfg: &PipelineConfig, argv: &[String]) -> Result<Bundle> {
    let mut rec = RunRecorder::start("synth", argv, cfg);
    if let Some(p) = &cfg.synth.script {
        rec.input("script", p)?;
    }
    let script = synth_script(cfg)?;
    let bundle = write_bundle(&script, &cfg.paths.out_dir).map_err(synth_err)?;
    rec.write(&cfg.paths.out_dir)?;
    Ok(bundle)
}

pub fn build_dataset(cfg: &PipelineConfig, argv: &[String]) -> Result<BuildOutcome> {
    let mut rec = RunRecorder::start("build-dataset", argv, cfg);
    let video = required(&cfg.paths.train_video, "paths.train_video")?;
    let roster_path = required(&cfg.paths.roster, "paths.roster")?;
    rec.input("train_video", &video)?;
    rec.input("roster", &roster_path)?;
    let roster = Roster::load(&roster_path)?;
    let detector = load_detector(&cfg.detector, &mut rec)?;
    let engine = load_engine(cfg, &mut rec)?;
    let harvest = Harvest {
        detector: &detector,
        ocr: &cfg.ocr,
        engine: engine.as_ref(),
        analysis: &cfg.analysis,
        build: &cfg.build,
    };
    let root = cfg.paths.dataset_root();
    let outcome = run_build(&harvest, &video, &roster, &root)?;
    rec.write(&root)?;
    Ok(outcome)
}

pub fn train(cfg: &PipelineConfig, argv: &[String]) -> Result<TrainReport> {
    let mut rec = RunRecorder::start("train", argv, cfg);
    let root = cfg.paths.dataset_root();
    if !root.is_dir() {
        return Err(PipelineError::Input(format!(
            "dataset root {} does not exist",
            root.display()
        )));
    }
    let (dataset, _) = load_dataset(&root)?;
    rec.input("dataset_manifest", &root.join(proctor_pipeline::dataset::MANIFEST_FILE))?;
    rec.tool("backbone", cfg.train.backbone.clone());
    let (clf, report) = train_on_dataset(&dataset, cfg.split, cfg.seed, &cfg.train)?;
    let model = cfg.paths.model();
    clf.save(&model)?;
    let dir = model
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    write_json(&dir.join(TRAIN_REPORT_FILE), &report)?;
    rec.write(dir)?;
    Ok(report)
}

/// Written by `analyze`, read by `report`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRecord {
    pub video: PathBuf,
    pub fps: f64,
    pub frame_count: u64,
    pub width: u32,
    pub height: u32,
    /// Seconds covered, counting a final partial second.
    pub duration_s: u64,
    pub class_names: Vec<String>,
    pub model_sha256: String,
    pub stats: AnalyzeStats,
}

pub fn analyze(cfg: &PipelineConfig, argv: &[String]) -> Result<AnalysisRecord> {
    let mut rec = RunRecorder::start("analyze", argv, cfg);
    let video = required(&cfg.paths.exam_video, "paths.exam_video")?;
    let model_path = cfg.paths.model();
    if !model_path.is_file() {
        return Err(PipelineError::Input(format!(
            "model {} does not exist",
            model_path.display()
        )));
    }
    rec.input("exam_video", &video)?;
    rec.input("model", &model_path)?;
    let clf = Classifier::load(&model_path)?;
    rec.tool("backbone", clf.manifest().backbone.clone());
    let detector = load_detector(&cfg.detector, &mut rec)?;
    let analysis = analyze_video(&video, &clf, &detector, &cfg.analysis, &cfg.analyze)?;

    let dir = cfg.paths.analysis_dir();
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let events_path = dir.join(EVENTS_FILE);
    let file = fs::File::create(&events_path).map_err(io_err(&events_path))?;
    write_events_csv(&analysis.events, std::io::BufWriter::new(file))?;
    let record = AnalysisRecord {
        video,
        fps: analysis.video.fps.get(),
        frame_count: analysis.video.frame_count,
        width: analysis.video.width,
        height: analysis.video.height,
        duration_s: analysis.stats.total_seconds,
        class_names: clf.manifest().class_names.clone(),
        model_sha256: clf.manifest().model_sha256.clone(),
        stats: analysis.stats,
    };
    write_json(&dir.join(ANALYSIS_FILE), &record)?;
    rec.write(&dir)?;
    Ok(record)
}

pub fn report(cfg: &PipelineConfig, argv: &[String]) -> Result<ReportBundle> {
    let mut rec = RunRecorder::start("report", argv, cfg);
    let dir = cfg.paths.analysis_dir();
    let record_path = dir.join(ANALYSIS_FILE);
    let events_path = dir.join(EVENTS_FILE);
    for p in [&record_path, &events_path] {
        if !p.is_file() {
            return Err(PipelineError::Input(format!(
                "{} does not exist; run analyze first",
                p.display()
            )));
        }
    }
    let roster_path = required(&cfg.paths.roster, "paths.roster")?;
    rec.input("analysis", &record_path)?;
    rec.input("events", &events_path)?;
    rec.input("roster", &roster_path)?;
    let record: AnalysisRecord = serde_json::from_str(&fs::read_to_string(&record_path).map_err(io_err(&record_path))?)
        .map_err(|e| PipelineError::Input(format!("{}: {e}", record_path.display())))?;
    let file = fs::File::open(&events_path).map_err(io_err(&events_path))?;
    let events = read_events_csv(std::io::BufReader::new(file))?;
    let roster = Roster::load(&roster_path)?;

    let out = cfg.paths.report_dir();
    let run = serde_json::to_value(rec.finish()).expect("manifest serializes");
    let bundle = render_report(&events, &roster, &cfg.analysis, record.duration_s, Some(run), &out)?;
    rec.write(&out)?;
    Ok(bundle)
}

#[derive(Debug, Clone)]
pub struct AllOutcome {
    pub build: BuildOutcome,
    pub train: TrainReport,
    pub analysis: AnalysisRecord,
    pub report: ReportBundle,
}

/// Every phase in order. Without `paths.exam_video` the training video is
/// analyzed.
pub fn all(cfg: &PipelineConfig, argv: &[String]) -> Result<AllOutcome> {
    let rec = RunRecorder::start("all", argv, cfg);
    let mut cfg = cfg.clone();
    if cfg.paths.exam_video.is_none() {
        cfg.paths.exam_video = cfg.paths.train_video.clone();
    }
    let build = build_dataset(&cfg, argv)?;
    let train = train(&cfg, argv)?;
    let analysis = analyze(&cfg, argv)?;
    let report = report(&cfg, argv)?;
    fs::create_dir_all(&cfg.paths.out_dir).map_err(io_err(&cfg.paths.out_dir))?;
    rec.write(&cfg.paths.out_dir)?;
    Ok(AllOutcome {
        build,
        train,
        analysis,
        report,
    })
}
