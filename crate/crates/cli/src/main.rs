use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use kvc_core::fairness::DEFAULT_ALPHA;
use kvc_core::features::FeatureSetId;
use kvc_core::pipeline::{self, ReportModes};
use kvc_core::synth::SynthConfig;
use kvc_core::KvcError;

#[derive(Parser)]
#[command(
    name = "kvc",
    version,
    about = "Keystroke verification benchmark toolkit"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Features {
    #[value(name = "4f")]
    F4,
    #[value(name = "5f")]
    F5,
    #[value(name = "10f")]
    F10,
    #[value(name = "11f")]
    F11,
}

impl From<Features> for FeatureSetId {
    fn from(f: Features) -> Self {
        match f {
            Features::F4 => FeatureSetId::F4,
            Features::F5 => FeatureSetId::F5,
            Features::F10 => FeatureSetId::F10,
            Features::F11 => FeatureSetId::F11,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Global,
    MeanPerSubject,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic population (events.csv, metadata.csv).
    Synth {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Check a dataset for evaluation readiness; prints a JSON report.
    Validate {
        #[arg(short, long)]
        data: PathBuf,
        #[arg(short, long)]
        metadata: Option<PathBuf>,
    },
    /// Write per-session feature sequences.
    Extract {
        #[arg(short, long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "5f")]
        features: Features,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Build the seeded comparison plan (plan.csv, blind_plan.csv).
    Plan {
        #[arg(short, long)]
        data: PathBuf,
        #[arg(short, long)]
        metadata: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Score a plan with the statistical baseline verifier.
    Score {
        #[arg(short, long)]
        data: PathBuf,
        #[arg(short, long)]
        plan: PathBuf,
        #[arg(long, value_enum, default_value = "5f")]
        features: Features,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Compute verification and fairness reports from a plan and its scores.
    Evaluate {
        #[arg(short, long)]
        plan: PathBuf,
        #[arg(short, long)]
        scores: PathBuf,
        #[arg(short, long)]
        metadata: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long, value_enum, default_value = "both")]
        mode: Mode,
        #[arg(short, long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> kvc_core::Result<()> {
    match cli.command {
        Command::Synth { config, out } => {
            let cfg = SynthConfig::load(&config)?;
            let summary = pipeline::run_synth(&cfg, &out)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Validate { data, metadata } => {
            let report = pipeline::run_validate(&data, metadata.as_deref())?;
            println!("{}", report.to_json()?);
            if !report.is_clean() {
                return Err(KvcError::Invalid(
                    "dataset is not ready for evaluation".into(),
                ));
            }
        }
        Command::Extract {
            data,
            features,
            out,
        } => {
            let n = pipeline::run_extract(&data, features.into(), &out)?;
            println!("wrote {n} feature files");
        }
        Command::Plan {
            data,
            metadata,
            seed,
            out,
        } => {
            let plan = pipeline::run_plan(&data, &metadata, seed, &out)?;
            println!(
                "{} comparisons for {} subjects",
                plan.len(),
                plan.subjects.len()
            );
        }
        Command::Score {
            data,
            plan,
            features,
            out,
        } => {
            let scores = pipeline::run_score(&data, &plan, features.into(), &out)?;
            println!("wrote {} scores", scores.len());
        }
        Command::Evaluate {
            plan,
            scores,
            metadata,
            alpha,
            mode,
            out,
        } => {
            let modes = match mode {
                Mode::Global => ReportModes::Global,
                Mode::MeanPerSubject => ReportModes::MeanPerSubject,
                Mode::Both => ReportModes::Both,
            };
            let eval =
                pipeline::run_evaluate(&plan, &scores, metadata.as_deref(), alpha, modes, &out)?;
            if let Some(r) = &eval.global {
                println!("{}", serde_json::to_string_pretty(r)?);
            }
            if let Some(r) = &eval.mean_per_subject {
                println!("{}", serde_json::to_string_pretty(r)?);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_user_error() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
