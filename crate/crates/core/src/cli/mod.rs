//! `calens` command-line driver.
//!
//! Exit codes: 0 success, 2 bad arguments or configuration, 3 input/output
//! or dataset-layout failure, 4 training divergence, 5 degenerate
//! calibration system.

mod calibrate;
mod evaluate;
mod synth;
mod train;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_DIVERGED: i32 = 4;
pub const EXIT_DEGENERATE: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "calens", version, about = "Calibrated segmentation ensembles")]
pub struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Task {
    Gaussian1d,
    Blob2d,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with a known classification probability.
    Synth {
        #[arg(long, value_enum)]
        task: Task,
        /// Samples (gaussian1d) or images (blob2d).
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Image side length for blob2d.
        #[arg(long, default_value_t = 32)]
        size: usize,
    },
    /// Train the calibrated ensemble and the baselines from a run config.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Fit ensemble coefficients from member predictions and ground truth.
    Calibrate {
        /// Directory with one subdirectory of masks per loss weight.
        #[arg(long)]
        preds: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Coefficient record to write.
        #[arg(long)]
        out: PathBuf,
        /// Member predictions to compose into heatmaps with the fitted coefficients.
        #[arg(long, requires = "heatmap_out")]
        apply: Option<PathBuf>,
        #[arg(long, requires = "apply")]
        heatmap_out: Option<PathBuf>,
        #[arg(long)]
        nonnegative: bool,
        /// Weight every observed pattern equally instead of by voxel count.
        #[arg(long)]
        pattern_equal: bool,
    },
    /// Write calibration, overlap and flagging reports for heatmaps.
    Evaluate {
        /// Heatmap source as NAME=DIR; repeatable.
        #[arg(long = "heatmaps", value_name = "NAME=DIR", required = true, value_parser = parse_named)]
        heatmaps: Vec<(String, PathBuf)>,
        #[arg(long)]
        gt: PathBuf,
        /// Masks scored by true and estimated DSC (default: each heatmap > 0.5).
        #[arg(long)]
        pred: Option<PathBuf>,
        /// Independent annotation for disagreement flagging.
        #[arg(long)]
        annotation: Option<PathBuf>,
        /// Member prediction tree as NAME=DIR for union/intersection metrics; repeatable.
        #[arg(long = "members", value_name = "NAME=DIR", value_parser = parse_named)]
        members: Vec<(String, PathBuf)>,
        /// True classification probability, when known.
        #[arg(long)]
        reference_prob: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value_t = crate::evaluation::DEFAULT_BANDWIDTH)]
        bandwidth: f64,
        #[arg(long, default_value_t = crate::evaluation::DEFAULT_BINS)]
        bins: usize,
    },
}

fn parse_named(s: &str) -> std::result::Result<(String, PathBuf), String> {
    let (name, dir) = s.split_once('=').ok_or("expected NAME=DIR")?;
    let ok = !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
    if !ok {
        return Err(format!("invalid source name {name:?}"));
    }
    if dir.is_empty() {
        return Err("empty directory".into());
    }
    Ok((name.to_string(), PathBuf::from(dir)))
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. }
        | Error::Layout(_)
        | Error::CorruptHeader(_)
        | Error::UnsupportedVersion(_)
        | Error::LengthMismatch { .. }
        | Error::GridMismatch { .. } => EXIT_IO,
        Error::DivergedTraining { .. } => EXIT_DIVERGED,
        Error::DegenerateSystem(_) => EXIT_DEGENERATE,
        _ => EXIT_USAGE,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return EXIT_USAGE;
        }
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    match pool.install(|| dispatch(cli.command)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(command: Command) -> crate::Result<i32> {
    match command {
        Command::Synth {
            task,
            n,
            seed,
            out,
            size,
        } => synth::run(task, n, seed, &out, size).map(|_| EXIT_OK),
        Command::Train { config } => train::run(&config).map(|_| EXIT_OK),
        Command::Calibrate {
            preds,
            gt,
            out,
            apply,
            heatmap_out,
            nonnegative,
            pattern_equal,
        } => calibrate::run(&calibrate::Args {
            preds,
            gt,
            out,
            apply: apply.zip(heatmap_out),
            nonnegative,
            pattern_equal,
        }),
        Command::Evaluate {
            heatmaps,
            gt,
            pred,
            annotation,
            members,
            reference_prob,
            report,
            bandwidth,
            bins,
        } => evaluate::run(&evaluate::Args {
            heatmaps,
            gt,
            pred,
            annotation,
            members,
            reference_prob,
            report,
            bandwidth,
            bins,
        })
        .map(|_| EXIT_OK),
    }
}
