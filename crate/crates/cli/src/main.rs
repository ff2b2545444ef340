use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use earsift_core::{MatchStrategy, SegmentationMode};

mod commands;

/// Color-segmented SIFT ear enrollment, verification and evaluation.
#[derive(Debug, Parser)]
#[command(name = "earsift", version)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Config file of `key = value` lines.
    #[arg(long, global = true, env = "EARSIFT_CONFIG")]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Segmentation mode: prior (whole crop) or after (gated regions).
    #[arg(long, global = true)]
    mode: Option<SegmentationMode>,
    /// Matching strategy.
    #[arg(long, global = true)]
    strategy: Option<MatchStrategy>,
    /// Extra `key=value` config overrides, applied last.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Enroll one reference image into a template file.
    Enroll {
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Defaults to the image file stem.
        #[arg(long)]
        subject: Option<String>,
        /// Mixture (JSON) used for gating in global gate mode.
        #[arg(long)]
        global_model: Option<PathBuf>,
    },
    /// Verify a probe image against a template; exit 0 accepts, 1 rejects.
    Verify {
        probe: PathBuf,
        #[arg(long)]
        template: PathBuf,
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long)]
        global_model: Option<PathBuf>,
    },
    /// Write a label map and region summary for one image.
    Segment {
        image: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Gate against this template's model instead of the image's own.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Extract SIFT keypoints over the whole mask into a template file.
    Extract {
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Also write keypoint geometry as JSON here.
        #[arg(long)]
        debug: Option<PathBuf>,
    },
    /// Score all four configurations on a dataset manifest.
    Evaluate {
        manifest: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        global_model: Option<PathBuf>,
    },
    /// Choose psi and suggest tau_kl on a held-out manifest.
    Calibrate {
        manifest: PathBuf,
        /// Evaluation manifest that must share no subject or image.
        #[arg(long)]
        against: Option<PathBuf>,
        /// Also write the result as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        global_model: Option<PathBuf>,
    },
    /// Generate a synthetic dataset and its manifest.
    GenSynth {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        subjects: usize,
        #[arg(long, default_value_t = 1)]
        probes: usize,
        /// Index of the first subject; disjoint ranges give disjoint subjects.
        #[arg(long, default_value_t = 0)]
        first_subject: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(&cli.global, cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.family().exit_code() as u8)
        }
    }
}
