use std::path::PathBuf;

use clap::Parser;
use proctor_cli::config::{parse_override, resolve, ScriptedAbsence};
use proctor_cli::{Cli, PipelineConfig};
use proctor_pipeline::AnalysisMode;
use proptest::prelude::*;
use toml::Value;

fn custom() -> PipelineConfig {
    let mut c = PipelineConfig {
        seed: 42,
        ..Default::default()
    };
    c.paths.train_video = Some(PathBuf::from("videos/train.mp4"));
    c.paths.roster = Some(PathBuf::from("roster.csv"));
    c.build.min_count = 37;
    c.build.crop_margin = 0.2;
    c.analyze.crop_margin = 0.2;
    c.analyze.mode = AnalysisMode::PerFrame;
    c.train.augmentation.rotation_deg = 7.5;
    c.analysis.accept_threshold = 0.65;
    c.ocr.threshold = 150;
    c.synth.absences = vec![ScriptedAbsence {
        student: "LI MING".into(),
        start_s: 60,
        end_s: 150,
    }];
    c
}

#[test]
fn config_round_trips_through_toml() {
    for cfg in [PipelineConfig::default(), custom()] {
        let text = cfg.to_toml();
        let back = PipelineConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(back.to_toml(), text);
    }
}

#[test]
fn empty_file_means_defaults() {
    assert_eq!(PipelineConfig::from_toml("").unwrap(), PipelineConfig::default());
    assert_ne!(PipelineConfig::default().hash(), custom().hash());
}

#[test]
fn overrides_parse_as_toml_with_string_fallback() {
    assert_eq!(
        parse_override("analysis.window_s=60").unwrap(),
        ("analysis.window_s".into(), Value::Integer(60))
    );
    assert_eq!(
        parse_override("paths.roster=r.csv").unwrap().1,
        Value::String("r.csv".into())
    );
    assert_eq!(
        parse_override("ocr.auto_threshold=false").unwrap().1,
        Value::Boolean(false)
    );
    assert!(parse_override("novalue").is_err());
    assert!(parse_override("a..b=1").is_err());
}

#[test]
fn flags_beat_file_beat_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("p.toml");
    std::fs::write(&file, "[train]\nepochs = 3\n[analysis]\nwindow_s = 60\n").unwrap();
    let cli = Cli::try_parse_from([
        "proctor",
        "--config",
        file.to_str().unwrap(),
        "--set",
        "train.epochs=5",
        "train",
        "--epochs",
        "7",
    ])
    .unwrap();
    let cfg = cli.resolve().unwrap();
    assert_eq!(cfg.train.epochs, 7);
    assert_eq!(cfg.analysis.window_s, 60);
    assert_eq!(cfg.analysis.presence_min_count, 10);
}

#[test]
fn dedicated_flags_map_to_their_keys() {
    let cli = Cli::try_parse_from([
        "proctor",
        "--workers",
        "3",
        "synth",
        "--students",
        "4",
        "--absence",
        "LI MING:10-40",
        "--out-dir",
        "x",
    ])
    .unwrap();
    let cfg = cli.resolve().unwrap();
    assert_eq!((cfg.build.worker_count, cfg.analyze.worker_count), (3, 3));
    assert_eq!(cfg.synth.students, 4);
    assert_eq!(cfg.paths.out_dir, PathBuf::from("x"));
    assert_eq!(cfg.synth.absences[0].end_s, 40);
    let cli = Cli::try_parse_from(["proctor", "analyze", "--video", "e.mp4", "--per-frame"]).unwrap();
    let cfg = cli.resolve().unwrap();
    assert_eq!(cfg.paths.exam_video, Some(PathBuf::from("e.mp4")));
    assert_eq!(cfg.analyze.mode, AnalysisMode::PerFrame);
}

#[test]
fn invalid_configs_are_rejected() {
    let bad = [
        vec![("bogus".to_string(), Value::Integer(1))],
        vec![("analysis.presence_min_count".to_string(), Value::Integer(30))],
        vec![("build.crop_margin".to_string(), Value::Float(0.3))],
        vec![("split.train".to_string(), Value::Float(0.9))],
        vec![("analysis.window_s".to_string(), Value::String("x".into()))],
    ];
    for o in bad {
        let err = resolve(None, &o).unwrap_err();
        assert_eq!(err.exit_code(), 2, "{o:?}: {err}");
    }
}

/// Keys and TOML literals that are valid for them under the default
/// config (window_s must exceed presence_min_count = 10).
fn key_value() -> impl Strategy<Value = (&'static str, String)> {
    prop_oneof![
        (11u32..600).prop_map(|v| ("analysis.window_s", v.to_string())),
        (0.0f64..=1.0).prop_map(|v| ("analysis.accept_threshold", format!("{v:?}"))),
        (1u32..50).prop_map(|v| ("train.epochs", v.to_string())),
        (0u8..=255).prop_map(|v| ("ocr.threshold", v.to_string())),
        any::<bool>().prop_map(|v| ("ocr.auto_threshold", v.to_string())),
        (1usize..9).prop_map(|v| ("build.worker_count", v.to_string())),
        (0u32..10_000).prop_map(|v| ("seed", v.to_string())),
        "[a-z]{1,8}".prop_map(|v| ("paths.out_dir", format!("\"{v}\""))),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn a_flag_equals_the_same_key_in_the_file((key, lit) in key_value()) {
        let dir = tempfile::tempdir().unwrap();
        let (section, leaf) = match key.split_once('.') {
            Some((s, l)) => (Some(s), l),
            None => (None, key),
        };
        let text = match section {
            Some(s) => format!("[{s}]\n{leaf} = {lit}\n"),
            None => format!("{leaf} = {lit}\n"),
        };
        let file = dir.path().join("c.toml");
        std::fs::write(&file, text).unwrap();
        let from_file = resolve(Some(&file), &[]).unwrap();
        let from_flag = resolve(None, &[parse_override(&format!("{key}={lit}")).unwrap()]).unwrap();
        prop_assert_eq!(&from_file, &from_flag);
        prop_assert_eq!(from_file.hash(), from_flag.hash());
        let back = PipelineConfig::from_toml(&from_flag.to_toml()).unwrap();
        prop_assert_eq!(back, from_flag);
    }
}
