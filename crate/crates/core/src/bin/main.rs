use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mmwave_gamp::config::{parse_config, ExperimentConfig};
use mmwave_gamp::experiment::{format_real, run_experiment};
use mmwave_gamp::{selftest, Error};

#[derive(Parser)]
#[command(
    name = "mmwave-gamp",
    version,
    about = "GAMP-Laplace mmWave channel estimation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte-Carlo sweep and write trials.csv, aggregate.csv and manifest.toml.
    Run(RunArgs),
    /// Print closed-form versus numerically integrated posterior moments.
    DenoiseCheck(DenoiseArgs),
    /// Run the built-in invariant checks.
    Selftest,
}

#[derive(Args)]
struct RunArgs {
    /// TOML scenario file; omitted fields take the full-scale defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed (overrides `master_seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    threads: Option<usize>,
    /// Number of Monte-Carlo trials (overrides `n_trials`).
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args)]
struct DenoiseArgs {
    /// Write the table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Grid points per axis.
    #[arg(long, default_value_t = 5)]
    points: usize,
}

enum Failure {
    Config(Error),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } => Failure::Config(e),
            other => Failure::Runtime(other),
        }
    }
}

fn load(args: &RunArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => parse_config(path).map_err(Failure::Config)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &args.out {
        cfg.output = out.clone();
    }
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(n) = args.trials {
        cfg.n_trials = n;
    }
    cfg.validate().map_err(Failure::Config)?;
    Ok(cfg)
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let cfg = load(&args)?;
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(Failure::Config(Error::Config {
                field: "--threads".into(),
                message: "must be >= 1".into(),
            }));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Runtime(Error::Numerical(format!("thread pool: {e}"))))?;
    }
    let out = run_experiment(&cfg)?;
    for row in &out.aggregate {
        println!(
            "{:<14} K={:<4} SNR={:>6.2} dB  NMSE={:>8.3} dB  iters={:>6.2}  rate={:>7.3}",
            row.estimator.tag(),
            row.k,
            row.snr_db,
            row.nmse_db,
            row.iterations_mean,
            row.rate_mean
        );
    }
    println!("wrote {}", out.trials_path.display());
    println!("wrote {}", out.aggregate_path.display());
    println!("wrote {}", out.manifest_path.display());
    Ok(())
}

fn denoise_check(args: DenoiseArgs) -> Result<(), Failure> {
    let table = selftest::denoiser_table(args.points.max(2))?;
    let mut text =
        String::from("r,mu_r,b,mean,mean_ref,variance,variance_ref,abs_mean,abs_mean_ref\n");
    for row in &table {
        let cols = [
            row.r,
            row.mu_r,
            row.b,
            row.closed.mean,
            row.reference.mean,
            row.closed.variance,
            row.reference.variance,
            row.closed.abs_mean,
            row.reference.abs_mean,
        ];
        let line: Vec<String> = cols.iter().map(|v| format_real(*v)).collect();
        text.push_str(&line.join(","));
        text.push('\n');
    }
    match args.out {
        Some(path) => std::fs::write(&path, text).map_err(|source| Error::Io { path, source })?,
        None => {
            let _ = std::io::stdout().write_all(text.as_bytes());
        }
    }
    let worst = selftest::worst_errors(&table);
    eprintln!(
        "worst relative error: mean {:.2e}, variance/mu_r {:.2e}, abs_mean {:.2e}",
        worst.mean, worst.variance, worst.abs_mean
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::DenoiseCheck(args) => denoise_check(args),
        Command::Selftest => {
            let report = selftest::run_all();
            for check in &report {
                println!(
                    "{} {}: {}",
                    if check.passed { "PASS" } else { "FAIL" },
                    check.name,
                    check.detail
                );
            }
            if report.iter().all(|c| c.passed) {
                Ok(())
            } else {
                Err(Failure::Runtime(Error::Numerical(
                    "self-test failed".into(),
                )))
            }
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
