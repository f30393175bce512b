//! `interrater` — validate, evaluate, synthesize and calibrate multi-rater
//! segmentation studies.
//!
//! Exit codes: 0 success, 1 validation failure (bad manifest, config or
//! inputs), 2 internal error (I/O while writing, unexpected analysis
//! failure).

mod config;

use clap::{Args, Parser, Subcommand};
use config::{AnalysisFlags, ResolvedConfig};
use interrater::study::{analyze, load_study, render_report, summary_line, Diagnostic, Study};
use interrater::synth::{generate_study, planted_vs_measured, Calibration, SynthConfig, SynthError, SynthTruth};
use serde::Serialize;
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use thiserror::Error;

#[derive(Debug, Error)]
enum CliError {
    #[error("{message}")]
    Validation {
        message: String,
        diagnostics: Vec<Diagnostic>,
    },
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    fn validation(message: impl Into<String>) -> Self {
        CliError::Validation {
            message: message.into(),
            diagnostics: Vec::new(),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation { .. } => 1,
            CliError::Internal(_) => 2,
        }
    }
}

#[derive(Parser)]
#[command(name = "interrater", version, about = "Multi-rater 3D segmentation study evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a study manifest and every mask it references.
    Validate(ValidateArgs),
    /// Run the detection, contouring and time analyses and write the report.
    Report(ReportArgs),
    /// Generate a synthetic study with known ground truth.
    Synth(SynthArgs),
    /// Compare a synthetic study's measured statistics with its planted truth.
    Calibrate(CalibrateArgs),
}

#[derive(Args)]
struct ValidateArgs {
    /// Study manifest (JSON).
    #[arg(long)]
    manifest: PathBuf,
    /// Print a JSON document instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory for the report files.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    analysis: AnalysisFlags,
    /// Print the full report as JSON on stdout.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory; receives manifest.json, truth.json and masks/.
    #[arg(long)]
    out: PathBuf,
    /// Generator seed [default: 0, or the config file's seed].
    #[arg(long)]
    seed: Option<u64>,
    /// Generator config (JSON); missing fields take the built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Manifest of a synthetic study.
    #[arg(long)]
    manifest: PathBuf,
    /// Truth file [default: truth.json next to the manifest].
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Also write calibration.json into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    analysis: AnalysisFlags,
    #[arg(long)]
    json: bool,
}

fn load(manifest: &Path) -> Result<Study, CliError> {
    load_study(manifest).map_err(|diagnostics| CliError::Validation {
        message: format!("{}: {} problem(s) found", manifest.display(), diagnostics.len()),
        diagnostics,
    })
}

fn print_json(value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn validate(args: &ValidateArgs) -> Result<(), CliError> {
    let study = load(&args.manifest)?;
    if args.json {
        print_json(&json!({
            "ok": true,
            "study_id": study.manifest.study_id,
            "raters": study.raters(),
            "groups": study.group_count(),
            "cases": study.cases.len(),
            "cnn": study.has_cnn(),
            "diagnostics": [],
        }))
    } else {
        println!(
            "ok: {} cases in {} groups, {} raters{}",
            study.cases.len(),
            study.group_count(),
            study.raters().len(),
            if study.has_cnn() { ", CNN masks present" } else { "" }
        );
        Ok(())
    }
}

fn report(args: &ReportArgs) -> Result<(), CliError> {
    let resolved = ResolvedConfig::resolve(&args.analysis)?;
    let study = load(&args.manifest)?;
    let report = resolved
        .install(|| analyze(&study, &resolved.analysis))?
        .map_err(|e| CliError::Internal(e.to_string()))?;
    let written =
        render_report(&report, &args.out, &resolved.formats).map_err(|e| CliError::Internal(e.to_string()))?;
    if args.json {
        print_json(&report)
    } else {
        println!("{}", summary_line(&report));
        for p in written {
            println!("wrote {}", p.display());
        }
        Ok(())
    }
}

fn synth_error(e: SynthError) -> CliError {
    match e {
        SynthError::InvalidConfig(_) | SynthError::LesionTooLarge { .. } | SynthError::CannotPlace { .. } => {
            CliError::validation(e.to_string())
        }
        other => CliError::Internal(other.to_string()),
    }
}

fn synth(args: &SynthArgs) -> Result<(), CliError> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::validation(format!("{}: {e}", p.display())))?;
            serde_json::from_str::<SynthConfig>(&text)
                .map_err(|e| CliError::validation(format!("{}: {e}", p.display())))?
        }
        None => SynthConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let (study, truth) = generate_study(&cfg, &args.out).map_err(synth_error)?;
    let manifest = args.out.join("manifest.json");
    if args.json {
        print_json(&json!({
            "study_id": truth.study_id,
            "seed": cfg.seed,
            "cases": study.cases.len(),
            "lesions": truth.lesion_count(),
            "manifest": manifest,
            "truth": args.out.join("truth.json"),
        }))
    } else {
        println!(
            "{}: {} cases, {} planted lesions -> {}",
            truth.study_id,
            study.cases.len(),
            truth.lesion_count(),
            manifest.display()
        );
        Ok(())
    }
}

fn print_calibration(cal: &Calibration) {
    println!("calibration of {}", cal.study_id);
    for q in &cal.quantities {
        let z = q.z.map_or("n/a".to_string(), |z| format!("{z:+.2}"));
        println!(
            "  {:<28} planted {:.4}  measured {:.4}  z {}  {}",
            q.name,
            q.planted,
            q.measured,
            z,
            if q.within_interval { "ok" } else { "OUTSIDE 95%" }
        );
    }
    for n in &cal.noise {
        let med = n.median_sdsc.map_or("n/a".to_string(), |m| format!("{m:.3}"));
        println!(
            "  {} noise {:.2} mm: median sDSC {} over {} scores",
            n.technique, n.planted_noise_mm, med, n.n
        );
    }
    if cal.flagged_cases.is_empty() {
        println!("  all cases match their planted events");
    }
    for f in &cal.flagged_cases {
        println!("  FLAG {} {}: {}", f.case, f.source, f.reason);
    }
}

fn calibrate(args: &CalibrateArgs) -> Result<(), CliError> {
    let resolved = ResolvedConfig::resolve(&args.analysis)?;
    let truth_path = args.truth.clone().unwrap_or_else(|| {
        args.manifest
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join("truth.json")
    });
    let text = std::fs::read_to_string(&truth_path)
        .map_err(|e| CliError::validation(format!("truth file {}: {e}", truth_path.display())))?;
    let truth: SynthTruth = serde_json::from_str(&text)
        .map_err(|e| CliError::validation(format!("truth file {}: {e}", truth_path.display())))?;
    let study = load(&args.manifest)?;
    let report = resolved
        .install(|| analyze(&study, &resolved.analysis))?
        .map_err(|e| CliError::Internal(e.to_string()))?;
    let cal = planted_vs_measured(&truth, &report).map_err(|e| match e {
        SynthError::StudyMismatch { .. } => CliError::validation(e.to_string()),
        other => CliError::Internal(other.to_string()),
    })?;
    if let Some(dir) = &args.out {
        let path = dir.join("calibration.json");
        let mut text = serde_json::to_string_pretty(&cal).map_err(|e| CliError::Internal(e.to_string()))?;
        text.push('\n');
        std::fs::create_dir_all(dir)
            .and_then(|_| std::fs::write(&path, text))
            .map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))?;
    }
    if args.json {
        print_json(&cal)
    } else {
        print_calibration(&cal);
        Ok(())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (result, json) = match &cli.command {
        Command::Validate(a) => (validate(a), a.json),
        Command::Report(a) => (report(a), a.json),
        Command::Synth(a) => (synth(a), a.json),
        Command::Calibrate(a) => (calibrate(a), a.json),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let diagnostics = match &e {
                CliError::Validation { diagnostics, .. } => diagnostics.as_slice(),
                CliError::Internal(_) => &[],
            };
            if json {
                let doc = json!({
                    "ok": false,
                    "error": e.to_string(),
                    "exit_code": e.exit_code(),
                    "diagnostics": diagnostics,
                });
                println!("{}", serde_json::to_string_pretty(&doc).unwrap_or_default());
            } else {
                eprintln!("error: {e}");
                for d in diagnostics {
                    eprintln!("  - {d}");
                }
            }
            ExitCode::from(e.exit_code())
        }
    }
}
