//! `cos`: chain-of-shot video question answering from the command line.

mod commands;
mod error;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use cos_core::harness::{BenchMode, SyntheticSpec};
use cos_core::oracles::ToyBackendConfig;

use crate::error::CliError;
use crate::settings::Knobs;

#[derive(Debug, Parser)]
#[command(name = "cos", version, about)]
struct Cli {
    /// Flat `key = value` config file; falls back to $COS_CONFIG
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Cos,
    Baseline,
}

impl From<Mode> for BenchMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Cos => BenchMode::Cos,
            Mode::Baseline => BenchMode::Baseline,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Answer a question about a directory of frames
    Run {
        #[arg(long, value_name = "DIR")]
        frames: PathBuf,
        #[arg(long)]
        question: String,
        /// Decode from all shots only, skipping grounding
        #[arg(long)]
        baseline: bool,
        /// Log the five best combined logits of every step to stderr
        #[arg(long)]
        trace: bool,
        #[command(flatten)]
        knobs: Knobs,
    },
    /// Print the per-shot relevance code and the oracle log
    Ground {
        #[arg(long, value_name = "DIR")]
        frames: PathBuf,
        #[arg(long)]
        question: String,
        #[command(flatten)]
        knobs: Knobs,
    },
    /// Show the positive and negative sub-shot maps of a relevance code
    Subshots {
        /// String of 0/1 characters, one per shot
        #[arg(long)]
        code: String,
        #[arg(long)]
        alpha_override: Option<f64>,
    },
    /// Score a multiple-choice manifest
    Bench {
        #[arg(long, value_name = "FILE")]
        manifest: PathBuf,
        /// Directory relative frame paths resolve against [default: the manifest's directory]
        #[arg(long, value_name = "DIR")]
        frames_root: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "cos")]
        mode: Mode,
        #[arg(long, value_name = "FILE", default_value = "report.json")]
        out: PathBuf,
        #[command(flatten)]
        knobs: Knobs,
    },
    /// Write a synthetic suite with known evidence and distractor frames
    Synth {
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        items: usize,
        #[arg(long, default_value_t = 64)]
        shots: usize,
        #[arg(long, default_value_t = 4)]
        relevant: usize,
        #[arg(long, default_value_t = 40)]
        distractors: usize,
        #[arg(long, default_value_t = 4)]
        options: usize,
        /// Side length of the written frames
        #[arg(long, default_value_t = 8)]
        raster: u32,
        #[arg(long, default_value_t = 0.0)]
        flip_rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Toy backend constants to embed [default: built-in]
        #[arg(long, value_name = "FILE")]
        toy: Option<PathBuf>,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let config = cli.config.as_deref();
    let effective = |knobs: &Knobs| {
        let eff = settings::load(knobs, config)?;
        eprint!("{}", eff.render());
        Ok::<_, CliError>(eff)
    };
    match cli.command {
        Command::Run {
            frames,
            question,
            baseline,
            trace,
            knobs,
        } => {
            let eff = effective(&knobs)?;
            if baseline {
                commands::run_baseline(&frames, &question, trace, &eff)
            } else {
                commands::run(&frames, &question, trace, &eff)
            }
        }
        Command::Ground {
            frames,
            question,
            knobs,
        } => commands::ground_cmd(&frames, &question, &effective(&knobs)?),
        Command::Subshots {
            code,
            alpha_override,
        } => commands::subshots(&code, alpha_override),
        Command::Bench {
            manifest,
            frames_root,
            mode,
            out,
            knobs,
        } => {
            let eff = effective(&knobs)?;
            let args = commands::BenchArgs {
                manifest: &manifest,
                frames_root: frames_root.as_deref(),
                mode: mode.into(),
                out: &out,
            };
            commands::bench(&args, &eff)
        }
        Command::Synth {
            out,
            items,
            shots,
            relevant,
            distractors,
            options,
            raster,
            flip_rate,
            seed,
            toy,
        } => {
            let toy = match toy {
                Some(path) => ToyBackendConfig::load(&path)?,
                None => ToyBackendConfig::default(),
            };
            let spec = SyntheticSpec {
                items,
                shots,
                relevant,
                distractors,
                options,
                raster,
                flip_rate,
                toy,
            };
            commands::synth(&spec, &out, seed)
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            e.category.exit_code()
        }
    }
}
