use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hnko_cli::commands::{replay, BaselineMethod, X0Source};
use hnko_cli::config::{Overrides, PRESET_NAMES};
use hnko_cli::error::EXIT_RUNTIME;
use hnko_cli::io::read_json;
use hnko_cli::{run, CliError, ExperimentConfig, Invocation};
use hnko_core::baselines::DEFAULT_DICTIONARY_CAP;
use hnko_core::eval::DEFAULT_EIGEN_TOL;
use hnko_core::model::KoopmanVariant;

#[derive(Parser, Debug)]
#[command(name = "hnko", version, about = "Orthogonal neural Koopman operators for Hamiltonian systems")]
struct Cli {
    /// Progress messages on stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate the configured system and write a trajectory CSV.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Number of sampling intervals (default: train + predict steps).
        #[arg(long)]
        steps: Option<usize>,
        /// Add the configured observation noise.
        #[arg(long)]
        noisy: bool,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Train a model on a trajectory file.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Roll a trained model forward.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Start from the last sample of this trajectory file.
        #[arg(long, conflicts_with = "x0", required_unless_present = "x0")]
        x0_from: Option<PathBuf>,
        /// Comma-separated initial state.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Option<Vec<f64>>,
        #[arg(long)]
        steps: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Fit DMD or EDMD and predict from the last sample of the data.
    Baseline {
        #[arg(long, value_enum)]
        method: BaselineMethod,
        #[arg(long)]
        data: PathBuf,
        /// Hermite order of the EDMD dictionary.
        #[arg(long, default_value_t = 2)]
        order: usize,
        #[arg(long, default_value_t = DEFAULT_DICTIONARY_CAP)]
        dictionary_cap: usize,
        #[arg(long)]
        steps: usize,
        /// Preset naming the system, if the data sidecar does not.
        #[arg(long)]
        preset: Option<String>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Compare a prediction with the truth.
    Evaluate {
        #[arg(long)]
        predicted: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Preset naming the system, if the truth sidecar does not.
        #[arg(long)]
        preset: Option<String>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Extract conserved quantities from a trained model.
    Discover {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = DEFAULT_EIGEN_TOL)]
        tolerance: f64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Simulate, train, predict, fit baselines, evaluate and discover.
    Pipeline {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Re-run a manifest and check that every artifact is byte-identical.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
    /// List the shipped presets.
    Presets,
}

#[derive(Args, Debug)]
struct OutArgs {
    /// Output directory for this run.
    #[arg(long)]
    out: PathBuf,
    /// Overwrite an existing run in the output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Args, Debug)]
struct ConfigArgs {
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the resolved config and exit.
    #[arg(long)]
    print_config: bool,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Model initialization seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long)]
    noise_seed: Option<u64>,
    #[arg(long)]
    train_steps: Option<usize>,
    #[arg(long)]
    predict_steps: Option<usize>,
    #[arg(long)]
    latent_dim: Option<usize>,
    #[arg(long)]
    hyperplanes: Option<usize>,
    #[arg(long, value_parser = parse_variant)]
    variant: Option<KoopmanVariant>,
    /// Comma-separated hidden widths.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
}

fn parse_variant(s: &str) -> Result<KoopmanVariant, String> {
    match s {
        "full" => Ok(KoopmanVariant::Full),
        "kronecker" => Ok(KoopmanVariant::Kronecker),
        _ => Err(format!("unknown variant '{s}' (full, kronecker)")),
    }
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match (&self.preset, &self.config) {
            (Some(p), None) => ExperimentConfig::preset(p).map_err(|e| CliError::Usage(e.to_string()))?,
            (None, Some(path)) => read_json(path)?,
            _ => return Err(CliError::Usage("give exactly one of --preset or --config".into())),
        };
        cfg.apply(&Overrides {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            seed: self.seed,
            sigma2: self.sigma2,
            noise_seed: self.noise_seed,
            train_steps: self.train_steps,
            predict_steps: self.predict_steps,
            latent_dim: self.latent_dim,
            hyperplanes: self.hyperplanes,
            variant: self.variant,
            hidden: self.hidden.clone(),
        });
        cfg.validate().map_err(|e| CliError::Usage(format!("invalid config: {e}")))?;
        Ok(cfg)
    }
}

fn preset_system(preset: &Option<String>) -> Result<Option<hnko_core::systems::SystemSpec>, CliError> {
    match preset {
        Some(p) => Ok(Some(ExperimentConfig::preset(p).map_err(|e| CliError::Usage(e.to_string()))?.system)),
        None => Ok(None),
    }
}

/// Prints the config and returns true when `--print-config` was given.
fn print_config(args: &ConfigArgs, cfg: &ExperimentConfig) -> bool {
    if args.print_config {
        println!("{}", serde_json::to_string_pretty(cfg).expect("config serializes"));
    }
    args.print_config
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let verbose = cli.verbose;
    let log = move |m: &str| {
        if verbose {
            eprintln!("{m}");
        }
    };
    let (inv, out) = match cli.command {
        Command::Presets => {
            for p in PRESET_NAMES {
                println!("{p}");
            }
            return Ok(());
        }
        Command::Replay { manifest, out } => {
            let report = replay(&manifest, &out.out, out.force, &log)?;
            println!("{}", serde_json::to_string(&report).expect("report serializes"));
            if !report.identical {
                return Err(CliError::Runtime(format!(
                    "replay differs: mismatched {:?}, missing {:?}",
                    report.mismatched, report.missing
                )));
            }
            return Ok(());
        }
        Command::Simulate { cfg, steps, noisy, out } => {
            let c = cfg.resolve()?;
            if print_config(&cfg, &c) {
                return Ok(());
            }
            let steps = steps.unwrap_or(c.train_steps + c.predict_steps);
            (
                Invocation::Simulate {
                    config: c,
                    steps,
                    noisy,
                },
                out,
            )
        }
        Command::Train { cfg, data, out } => {
            let c = cfg.resolve()?;
            if print_config(&cfg, &c) {
                return Ok(());
            }
            (Invocation::Train { config: c, data }, out)
        }
        Command::Pipeline { cfg, out } => {
            let c = cfg.resolve()?;
            if print_config(&cfg, &c) {
                return Ok(());
            }
            (Invocation::Pipeline { config: c }, out)
        }
        Command::Predict {
            checkpoint,
            x0_from,
            x0,
            steps,
            out,
        } => {
            let x0 = match (x0_from, x0) {
                (Some(p), None) => X0Source::LastOf(p),
                (None, Some(v)) => X0Source::Explicit(v),
                _ => return Err(CliError::Usage("give exactly one of --x0-from or --x0".into())),
            };
            (Invocation::Predict { checkpoint, x0, steps }, out)
        }
        Command::Baseline {
            method,
            data,
            order,
            dictionary_cap,
            steps,
            preset,
            out,
        } => (
            Invocation::Baseline {
                method,
                data,
                order,
                dictionary_cap,
                steps,
                system: preset_system(&preset)?,
            },
            out,
        ),
        Command::Evaluate {
            predicted,
            truth,
            preset,
            out,
        } => (
            Invocation::Evaluate {
                predicted,
                truth,
                system: preset_system(&preset)?,
            },
            out,
        ),
        Command::Discover {
            checkpoint,
            data,
            tolerance,
            out,
        } => (
            Invocation::Discover {
                checkpoint,
                data,
                tolerance,
            },
            out,
        ),
    };
    let r = run(&inv, &out.out, out.force, &log)?;
    log(&format!("wrote {} artifacts to {}", r.manifest.artifacts.len(), r.dir.display()));
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            let err = CliError::Usage(first.to_string());
            eprintln!("{}", err.to_json_line());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    match std::panic::catch_unwind(|| execute(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("{}", e.to_json_line());
            ExitCode::from(e.exit_code() as u8)
        }
        Err(_) => ExitCode::from(EXIT_RUNTIME as u8),
    }
}
