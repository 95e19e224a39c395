//! `rffp`: batch front end for the RF fingerprinting workbench.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

mod commands;
mod config;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "rffp", version, about = "RF fingerprinting workbench: synthesize, detect, extract, enroll, verify, evaluate, tune")]
struct Cli {
    /// Experiment config (JSON). Required by synth and tune.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Replaces the config's `seed`.
    #[arg(long, global = true)]
    seed_override: Option<u64>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// More logging; repeat for debug output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render, propagate and acquire every configured session.
    ///
    /// Writes <stem>.sigmf-data (interleaved little-endian f32 I/Q) and
    /// <stem>.sigmf-meta (JSON; ground-truth emitter ids in annotation
    /// core:label) per session, plus manifest.json holding every generation
    /// parameter and seed. Prints the manifest path.
    Synth,

    /// Detect bursts and extract features for every session in a dataset.
    ///
    /// Writes features.csv with columns: session, roi_index, start_sample,
    /// length, label (overlapping annotation's emitter id, or empty), then one
    /// column per catalog feature in catalog order.
    Pipeline(PipelineArgs),

    /// Fit one reference model per labeled device.
    ///
    /// Writes fingerprints.jsonl: one JSON fingerprint per line with fields
    /// format_version, device_id, catalog_version, selection, mean,
    /// covariance (row-major), ridge_lambda, threshold, n_enrolled.
    Enroll(EnrollArgs),

    /// Verify probes against a claimed identity.
    ///
    /// Writes decisions.csv with columns: session, roi_index, claimed_id,
    /// squared_distance, threshold, accepted.
    Verify(VerifyArgs),

    /// Score probes against every model and report EER and ROC.
    ///
    /// Writes metrics.json (eer, eer_threshold, far_at, frr_at, n_genuine,
    /// n_impostor) and roc.csv (threshold, far, frr). With --scores, reads a
    /// CSV with columns score, genuine (1/0 or true/false) instead.
    Evaluate(EvaluateArgs),

    /// Tune receiver gain and filter bandwidth on a simulated plant.
    ///
    /// Writes trace.csv (step, gain_db, filter_bw_hz, objective, snr_est_db,
    /// clip_ratio, n_rois, is_best) and best_config.json (the tuned receiver
    /// config plus its objective).
    Tune,
}

#[derive(Args, Debug)]
struct PipelineArgs {
    /// Directory holding *.sigmf-meta / *.sigmf-data pairs.
    #[arg(long)]
    dataset: PathBuf,
}

#[derive(Args, Debug)]
struct EnrollArgs {
    /// Feature table from `pipeline`; rows without a label are ignored.
    #[arg(long)]
    features: PathBuf,
    /// Only use rows whose session name starts with this prefix.
    #[arg(long, default_value = "")]
    session_prefix: String,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long)]
    features: PathBuf,
    /// Fingerprint store from `enroll`.
    #[arg(long)]
    store: PathBuf,
    /// Claimed device id for every probe; defaults to each row's label.
    #[arg(long)]
    claim: Option<String>,
    /// Only use rows whose session name starts with this prefix.
    #[arg(long, default_value = "")]
    session_prefix: String,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long, conflicts_with = "scores", requires = "store")]
    features: Option<PathBuf>,
    #[arg(long)]
    store: Option<PathBuf>,
    /// Pre-computed scores (CSV: score,genuine).
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Only use feature rows whose session name starts with this prefix.
    #[arg(long, default_value = "")]
    session_prefix: String,
}

/// Failure classes mapped to the exit-code contract.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<rffp_core::Error> for Failure {
    fn from(e: rffp_core::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

pub fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

pub type CmdResult = Result<(), Failure>;

fn run(cli: Cli) -> CmdResult {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| usage(anyhow::anyhow!("--threads: {e}")))?;
    }
    let ctx = commands::Context::new(cli.config.as_deref(), cli.seed_override, cli.out)?;
    match cli.command {
        Command::Synth => commands::synth(&ctx),
        Command::Pipeline(a) => commands::pipeline(&ctx, &a.dataset),
        Command::Enroll(a) => commands::enroll(&ctx, &a.features, &a.session_prefix),
        Command::Verify(a) => commands::verify(&ctx, &a.features, &a.store, a.claim.as_deref(), &a.session_prefix),
        Command::Evaluate(a) => match (a.scores, a.features, a.store) {
            (Some(scores), _, _) => commands::evaluate_scores(&ctx, &scores),
            (None, Some(features), Some(store)) => {
                commands::evaluate_features(&ctx, &features, &store, &a.session_prefix)
            }
            _ => Err(usage(anyhow::anyhow!("evaluate needs --scores, or --features with --store"))),
        },
        Command::Tune => commands::tune(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
