use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use depthfuse::experiment::{run_experiment_with, run_sweep, Arm, ExperimentConfig, SweepAxis};
use depthfuse::{Error, Result};

#[derive(Parser)]
#[command(
    name = "depthfuse",
    version,
    about = "Multi-view depth fusion experiments on synthetic scenes"
)]
struct Cli {
    /// Worker threads for pixel-parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides `output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// US, PS or PS+CW.
        #[arg(long)]
        arm: Option<String>,
        /// Also write colour-mapped PNGs.
        #[arg(long)]
        png: bool,
    },
    /// Run one experiment per value of a fusion parameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// n_samples, n_iter, beta or kappa.
        #[arg(long)]
        axis: String,
        /// Comma-separated values, e.g. `1,2,3,4`.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn apply_common(config: &mut ExperimentConfig, out: Option<PathBuf>, seed: Option<u64>, overrides: &mut Vec<String>) {
    if let Some(out) = out {
        overrides.push(format!("output_dir={}", out.display()));
        config.output_dir = out;
    }
    if let Some(seed) = seed {
        overrides.push(format!("seed={seed}"));
        config.seed = seed;
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run {
            config,
            out,
            seed,
            arm,
            png,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            let mut overrides = Vec::new();
            apply_common(&mut cfg, out, seed, &mut overrides);
            if let Some(arm) = arm {
                cfg.arm = arm.parse::<Arm>()?;
                overrides.push(format!("arm={arm}"));
            }
            if png {
                cfg.png = true;
                overrides.push("png=true".into());
            }
            let result = run_experiment_with(&cfg, &overrides)?;
            for r in &result.reports {
                println!("{r}");
            }
            println!("wrote {}", cfg.output_dir.display());
        }
        Command::Sweep {
            config,
            axis,
            values,
            out,
            seed,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            apply_common(&mut cfg, out, seed, &mut Vec::new());
            let axis: SweepAxis = axis.parse()?;
            let values = values
                .iter()
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::config("values", format!("{v:?} is not a number")))
                })
                .collect::<Result<Vec<_>>>()?;
            let rows = run_sweep(&cfg, axis, &values)?;
            for row in &rows {
                println!("{axis}={:<8} {}", row.value, row.fused);
            }
            println!("wrote {}", cfg.output_dir.join("sweep.csv").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage mistakes are configuration errors; help and version are not errors.
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let run = || execute(cli.command);
    let outcome = match cli.threads {
        None => run(),
        Some(0) => Err(Error::config("threads", "must be at least 1")),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(run),
            Err(e) => Err(Error::Data(format!("cannot start thread pool: {e}"))),
        },
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
