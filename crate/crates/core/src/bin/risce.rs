use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use risce::experiment::{self, ExperimentConfig, RunOutput};

#[derive(Parser)]
#[command(name = "risce", version, about = "Single-RF RIS channel estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// NMSE of every method over the configured training lengths.
    NmseSweep(CommonArgs),
    /// Achievable rate after exhaustive phase tuning, estimated vs perfect CSI.
    RateEval(CommonArgs),
    /// One instance (trial 0); prints NMSE and solver diagnostics.
    Estimate(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Overrides `output_path`.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Overrides `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `trials`.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    trials: Option<u64>,
    #[arg(long)]
    quiet: bool,
}

impl CommonArgs {
    fn load(&self) -> risce::Result<ExperimentConfig> {
        let mut config = experiment::load_config(&self.config)?;
        if let Some(out) = &self.out {
            config.output_path = out.clone();
        }
        if let Some(seed) = self.seed {
            config.master_seed = seed;
        }
        if let Some(trials) = self.trials {
            config.trials = trials as usize;
        }
        Ok(config)
    }
}

fn print_summary(output: &RunOutput) {
    println!("{:<8} {:>6} {:>14} {:>14} {:>10}", "method", "t", "mean_nmse", "mean_rate", "ratio");
    let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"));
    for row in &output.summary {
        println!(
            "{:<8} {:>6} {:>14} {:>14} {:>10}",
            row.method,
            row.t,
            cell(row.mean_nmse),
            cell(row.mean_rate_bps_hz),
            cell(row.rate_ratio)
        );
    }
    println!("wrote {} and {}", output.csv_path.display(), output.summary_path.display());
}

fn execute(command: &Command) -> risce::Result<()> {
    match command {
        Command::NmseSweep(args) => {
            let output = experiment::run_nmse_sweep(&args.load()?)?;
            if !args.quiet {
                print_summary(&output);
            }
        }
        Command::RateEval(args) => {
            let output = experiment::run_rate_eval(&args.load()?)?;
            if !args.quiet {
                print_summary(&output);
            }
        }
        Command::Estimate(args) => {
            let reports = experiment::estimate_instance(&args.load()?)?;
            for r in reports {
                let mut line = format!("t={} method={} nmse={:.9e}", r.t, r.method, r.nmse);
                if let (Some(iterations), Some((r1, r2))) = (r.iterations, r.final_residuals) {
                    line.push_str(&format!(" iterations={iterations} residuals={r1:.3e},{r2:.3e}"));
                }
                println!("{line}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("risce: {err}");
            ExitCode::FAILURE
        }
    }
}
