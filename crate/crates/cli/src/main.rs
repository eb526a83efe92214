use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use clockwalk::PairState;
use clockwalk_cli::{
    cmd_amplitude, cmd_sample, cmd_stats, cmd_verify, config::parse_kv, with_threads, CliError,
    Mode, OutputFormat, Overrides, RunConfig, StatsInputs,
};

/// Two-walker quantum walk on a spin chain with noncommuting impurities.
#[derive(Debug, Parser)]
#[command(name = "clockwalk", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// key=value file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Chain length.
    #[arg(long, global = true)]
    s: Option<usize>,
    /// Link carrying σ₁.
    #[arg(long, global = true)]
    a: Option<usize>,
    /// Link carrying σ₃.
    #[arg(long, global = true)]
    b: Option<usize>,
    /// Identity on every link.
    #[arg(long, global = true)]
    free: bool,
    /// End of the amplitude time grid.
    #[arg(long, global = true)]
    t_max: Option<f64>,
    /// Amplitude grid step (amplitude) or sampler step (sample, stats).
    #[arg(long, global = true)]
    dt: Option<f64>,
    #[arg(long, global = true)]
    n_traj: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Target site as x1,x2; defaults to (a+1,b).
    #[arg(long, global = true)]
    target: Option<PairState>,
    /// Observation window (0, horizon); defaults to s.
    #[arg(long, global = true)]
    horizon: Option<f64>,
    /// Output file (verify, amplitude, sample) or directory (stats).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// csv or json.
    #[arg(long, global = true)]
    format: Option<OutputFormat>,
    /// Worker threads for sampling; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check projector conservation, the kickback gauge and the continuity equation.
    Verify,
    /// Terminal amplitude series, interacting and free.
    Amplitude,
    /// Sample trajectories of the jump process.
    Sample {
        /// Write only trajectories that visit the target.
        #[arg(long)]
        hits_only: bool,
    },
    /// Conditional first-passage and sojourn CDFs at the target.
    Stats {
        /// Read interacting trajectories from this file instead of sampling.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Read free trajectories from this file instead of sampling.
        #[arg(long)]
        free_input: Option<PathBuf>,
    },
}

impl Cli {
    fn overrides(&self) -> Overrides {
        Overrides {
            s: self.s,
            a: self.a,
            b: self.b,
            free: self.free.then_some(true),
            t_max: self.t_max,
            dt: self.dt,
            n_traj: self.n_traj,
            seed: self.seed,
            target: self.target,
            horizon: self.horizon,
            out: self.out.clone(),
            format: self.format,
            hits_only: match self.command {
                Command::Sample { hits_only: true } => Some(true),
                _ => None,
            },
        }
    }

    fn mode(&self) -> Mode {
        match self.command {
            Command::Verify => Mode::Verify,
            Command::Amplitude => Mode::Amplitude,
            Command::Sample { .. } => Mode::Sample,
            Command::Stats { .. } => Mode::Stats,
        }
    }

    fn run_config(&self) -> Result<RunConfig, CliError> {
        let file = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                parse_kv(&text)?.1
            }
            None => Overrides::default(),
        };
        RunConfig::resolve(self.mode(), file.merge(self.overrides()))
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = cli.run_config()?;
    with_threads(cli.threads, || match &cli.command {
        Command::Verify => {
            let report = cmd_verify(&cfg)?;
            for c in &report.checks {
                let mark = if c.passed { "ok  " } else { "FAIL" };
                println!("{mark} {:<22} {:.3e} (< {:.0e})", c.name, c.value, c.threshold);
            }
            if report.passed {
                Ok(())
            } else {
                Err(CliError::CheckFailed(report.failing().join(", ")))
            }
        }
        Command::Amplitude => {
            let s = cmd_amplitude(&cfg)?;
            println!(
                "{} rows at {}: max|ψ| = {:.9}, free max = {:.9}, ratio = {:.9}, max|-ψ - ψ⁰| = {:.3e}",
                s.rows, s.site, s.max_abs_interacting, s.max_abs_free, s.suppression_ratio, s.max_kickback_deviation
            );
            Ok(())
        }
        Command::Sample { .. } => {
            let s = cmd_sample(&cfg)?;
            println!(
                "wrote {} of {} trajectories to {}; hit_fraction at {} = {:.4}",
                s.written,
                s.n_traj,
                s.path.display(),
                s.target,
                s.hit_fraction
            );
            println!(
                "subdivisions = {}, node holds = {}, failures = {}",
                s.subdivisions, s.node_holds, s.failures
            );
            Ok(())
        }
        Command::Stats { input, free_input } => {
            let inputs = StatsInputs {
                interacting: input.clone(),
                free: free_input.clone(),
            };
            let s = cmd_stats(&cfg, &inputs)?;
            let json = serde_json::to_string_pretty(&s).expect("summary serializes");
            println!("{json}");
            Ok(())
        }
    })?
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
