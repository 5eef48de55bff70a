use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use slipflow::harness::{run_experiment, Experiment, ExitStatus, ExperimentConfig};

const ARTIFACTS: &str = "\
Artifacts (CSV floats carry 17 significant digits):
  trajectory.csv  t,k,E,H1,enstrophy,palinstrophy,W1sigma,force_L2,force_Lsigma
                  2D base flow at sample times t in interval k;
                  E=||w||^2, H1=||w||_H1^2, enstrophy=||rot w||^2,
                  palinstrophy=||grad rot w||^2, W1sigma=||w||_W1,sigma,
                  force_L2=||h||^2, force_Lsigma=||h||_Lsigma (projected h).
  stability.csv   t,k,X2,Y2,uL2,uH1,G2,A2
                  3D perturbation; X2=||rot u||^2, Y2=||rot rot u||^2,
                  uL2=||u||^2, uH1=||u||_H1^2, G2=(c/nu)||g||^2,
                  A2=(c/nu)||w||_W1,sigma+^2.
  oracle.csv      case,resolution,value,reference,error,tolerance,pass
  ledger.json     constants and constant chains
  monitors.json   constants, hypothesis and inequality reports
  verdict.txt     STABLE(γ=...) or VIOLATION(t=...)

Exit codes: 0 all monitors pass, 1 a monitor failed, 2 bad config or
input, 3 blow-up or CFL guard.

Environment: SLIPFLOW_THREADS sets the worker thread count.";

/// Runs one slipflow experiment.
#[derive(Debug, Parser)]
#[command(name = "slipflow", version, after_long_help = ARTIFACTS)]
struct Cli {
    /// constants | decay2d | stability3d | oracle
    experiment: Experiment,
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for every random preset and estimate.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, env = "SLIPFLOW_THREADS", default_value_t = 0)]
    threads: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("slipflow: {e}");
        }
    }
    let status = match run(&cli) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("slipflow: {e}");
            ExitStatus::from_error(&e)
        }
    };
    ExitCode::from(status.code() as u8)
}

fn run(cli: &Cli) -> slipflow::Result<ExitStatus> {
    let mut config = ExperimentConfig::load(&cli.config)?;
    if config.experiment != cli.experiment {
        return Err(slipflow::Error::Config(format!(
            "config is for {}, not {}",
            config.experiment, cli.experiment
        )));
    }
    if let Some(seed) = cli.seed {
        config = config.with_seed(seed);
    }
    let outcome = run_experiment(&config, cli.out.as_deref())?;
    if let Some(v) = &outcome.verdict {
        println!("{v}");
    }
    for p in &outcome.artifacts {
        println!("wrote {}", p.display());
    }
    Ok(outcome.status)
}
