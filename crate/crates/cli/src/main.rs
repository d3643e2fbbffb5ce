use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ksme_cli::check::{cmd_check, CheckScale, Solvers};
use ksme_cli::embed::{cmd_embed, EmbedOptions};
use ksme_cli::files::read_json;
use ksme_cli::learn::{cmd_learn, LearnOptions};
use ksme_cli::plot::emit_plot;
use ksme_cli::solve::{cmd_solve, SolveOptions};
use ksme_cli::sweep::{cmd_sweep, SweepConfig};
use ksme_cli::{exit_code, CliError, CliResult, Status};
use ksme_core::metrics::MetricKind;
use ksme_core::PolicySpec;

/// Behavioural metrics on finite MDPs.
#[derive(Parser)]
#[command(name = "ksme", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct MdpArgs {
    /// MDP JSON file.
    #[arg(long)]
    mdp: PathBuf,
    /// Evaluation policy: `uniform` or `random:<seed>`.
    #[arg(long, default_value = "uniform")]
    policy: String,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Solve metrics and value functions for one MDP.
    Solve {
        #[command(flatten)]
        io: MdpArgs,
        /// Comma-separated metric kinds; empty writes only values.csv.
        #[arg(long, default_value = "bisim,pi_bisim,mico,reduced_mico,ksme")]
        which: String,
        #[arg(long, default_value_t = ksme_core::DEFAULT_TOL)]
        tol: f64,
        /// Iteration cap for each fixed-point solve.
        #[arg(long)]
        max_iter: Option<usize>,
    },
    /// Run the Garnet gap sweep.
    Sweep {
        /// JSON sweep configuration; defaults apply to missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output CSV.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Spectral and random-projection embeddings of the KSMe kernel.
    Embed {
        #[command(flatten)]
        io: MdpArgs,
        #[arg(long, default_value_t = 0.5)]
        epsilon: f64,
        /// Number of projection seeds.
        #[arg(long, default_value_t = 100)]
        seeds: usize,
        /// First projection seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = ksme_core::DEFAULT_TOL)]
        tol: f64,
    },
    /// Learn the KSMe with semi-gradient descent.
    Learn {
        #[command(flatten)]
        io: MdpArgs,
        /// JSON training configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the invariant checks.
    Check {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// `small` or `full`.
        #[arg(long, default_value = "small")]
        scale: String,
    },
    /// Plot a sweep CSV as SVG.
    Plot {
        /// Sweep CSV.
        #[arg(long)]
        input: PathBuf,
        /// Output SVG.
        #[arg(long)]
        out: PathBuf,
    },
}

fn policy(spec: &str) -> CliResult<PolicySpec> {
    spec.parse().map_err(|e: ksme_core::Error| CliError::Input(e.to_string()))
}

fn metric_kinds(list: &str) -> CliResult<Vec<MetricKind>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|e: ksme_core::Error| CliError::Input(e.to_string())))
        .collect()
}

fn sweep_config(path: Option<&Path>, seed: Option<u64>, tol: Option<f64>, workers: Option<usize>) -> CliResult<SweepConfig> {
    let mut cfg: SweepConfig = match path {
        Some(p) => read_json(p)?,
        None => SweepConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(t) = tol {
        cfg.tol = t;
    }
    if let Some(w) = workers {
        cfg.workers = w;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<Status> {
    match cli.command {
        Command::Solve {
            io,
            which,
            tol,
            max_iter,
        } => {
            let opts = SolveOptions {
                mdp: io.mdp,
                policy: policy(&io.policy)?,
                which: metric_kinds(&which)?,
                tol,
                max_iter,
            };
            cmd_solve(&opts, &io.out)
        }
        Command::Sweep {
            config,
            out,
            seed,
            tol,
            workers,
        } => cmd_sweep(&sweep_config(config.as_deref(), seed, tol, workers)?, &out),
        Command::Embed {
            io,
            epsilon,
            seeds,
            seed,
            tol,
        } => {
            let opts = EmbedOptions {
                mdp: io.mdp,
                policy: policy(&io.policy)?,
                epsilon,
                seeds,
                seed,
                tol,
            };
            cmd_embed(&opts, &io.out)
        }
        Command::Learn { io, config, seed } => {
            let mut opts = LearnOptions::load(io.mdp, config.as_deref())?;
            opts.policy = policy(&io.policy)?;
            if let Some(s) = seed {
                opts.train.seed = s;
            }
            cmd_learn(&opts, &io.out)
        }
        Command::Check { seed, scale } => {
            let scale: CheckScale = scale.parse()?;
            Ok(cmd_check(seed, scale, &Solvers::default(), &mut std::io::stdout()))
        }
        Command::Plot { input, out } => emit_plot(&input, &out),
    }
}

fn main() -> ExitCode {
    let result = run(Cli::parse());
    match &result {
        Ok(Status::Pass) => {}
        Ok(Status::SoftFailure(msg)) => eprintln!("ksme: {msg}"),
        Err(e) => eprintln!("ksme: {e}"),
    }
    ExitCode::from(exit_code(&result))
}
