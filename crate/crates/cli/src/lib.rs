//! `proctor`: subcommands over the review pipeline, driven by one TOML
//! config file.
//!
//! | exit | meaning |
//! |------|---------|
//! | 0 | success |
//! | 2 | configuration error |
//! | 3 | input data missing or malformed |
//! | 4 | training video too short for a usable dataset |
//! | 5 | backend failure (inference, OCR, encoding) |

pub mod cli;
pub mod commands;
pub mod config;
pub mod manifest;

use proctor_pipeline::Result;

pub use cli::{Cli, Command};
pub use config::PipelineConfig;

/// Run one parsed command line; returns human-readable result lines.
pub fn run(cli: &Cli, argv: &[String]) -> Result<Vec<String>> {
    let cfg = cli.resolve()?;
    let mut out = Vec::new();
    match &cli.command {
        Command::Synth(_) => {
            let b = commands::synth(&cfg, argv)?;
            out.push(format!(
                "wrote {} ({} frames, {} s)",
                b.video.display(),
                b.truth.frame_count,
                b.truth.duration_s
            ));
            out.push(format!("roster {}", b.roster.display()));
        }
        Command::BuildDataset(_) => {
            let o = commands::build_dataset(&cfg, argv)?;
            out.push(dataset_line(&o, &cfg));
        }
        Command::Train(_) => {
            let r = commands::train(&cfg, argv)?;
            out.push(train_line(&r, &cfg));
        }
        Command::Analyze(_) => {
            let a = commands::analyze(&cfg, argv)?;
            out.push(format!(
                "analyzed {} s, {} face cells, {} recognizer calls -> {}",
                a.duration_s,
                a.stats.face_cells,
                a.stats.recognizer_calls,
                cfg.paths.analysis_dir().display()
            ));
        }
        Command::Report => {
            let r = commands::report(&cfg, argv)?;
            out.push(format!("report {}", r.summary.display()));
        }
        Command::All(_) => {
            let o = commands::all(&cfg, argv)?;
            out.push(dataset_line(&o.build, &cfg));
            out.push(train_line(&o.train, &cfg));
            out.push(format!(
                "analyzed {} s, {} recognizer calls",
                o.analysis.duration_s, o.analysis.stats.recognizer_calls
            ));
            out.push(format!("report {}", o.report.summary.display()));
        }
    }
    Ok(out)
}

fn dataset_line(o: &proctor_pipeline::BuildOutcome, cfg: &PipelineConfig) -> String {
    format!(
        "dataset {}: {} classes, {} samples ({} merged, {} dropped)",
        cfg.paths.dataset_root().display(),
        o.dataset.class_count(),
        o.dataset.sample_count(),
        o.merges.substring_merges() + o.merges.fuzzy_merges(),
        o.merges.dropped()
    )
}

fn train_line(r: &proctor_pipeline::TrainReport, cfg: &PipelineConfig) -> String {
    format!(
        "model {}: {} classes, held-out accuracy {:.4}",
        cfg.paths.model().display(),
        r.class_names.len(),
        r.test_accuracy
    )
}
