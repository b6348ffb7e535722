use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use pipefric::experiments::{self, ExperimentConfig};
use pipefric::Error;

/// Damped pressure waves in a pipe: simulation and friction-law identification.
#[derive(Parser, Debug)]
#[command(name = "pipefric", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Instationary and linearized pressure drop for one horizon.
    Simulate {
        /// Also write the full state trajectory.
        #[arg(long)]
        trajectory: bool,
    },
    /// Distances e(T), d(T) between instationary and stationary solutions.
    Table1,
    /// Reconstruction errors over the noise-level and horizon grid.
    Table2,
    /// One Tikhonov reconstruction together with the stationary formula.
    Reconstruct,
    /// Adjoint, Taylor and energy checks.
    Selftest,
}

#[derive(Args, Debug, Default)]
struct Overrides {
    /// JSON configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Horizon T; for table drivers this replaces the horizon list.
    #[arg(long, global = true)]
    time_horizon: Option<f64>,
    /// Noise level δ; for table2 this replaces the noise list.
    #[arg(long, global = true)]
    noise_level: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    n_elements: Option<usize>,
    /// Number of spline intervals.
    #[arg(long, global = true)]
    m_knots: Option<usize>,
    #[arg(long, global = true)]
    alpha0: Option<f64>,
    #[arg(long, global = true)]
    alpha_decay: Option<f64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
}

const EXIT_VALIDATION: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;

fn resolve(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let o = &cli.overrides;
    let mut c = match &o.config {
        Some(path) => ExperimentConfig::from_json_file(path)?,
        None => ExperimentConfig::default(),
    };
    let tables = matches!(cli.command, Command::Table1 | Command::Table2);
    if let Some(t) = o.time_horizon {
        c.time_horizon = t;
        if tables {
            c.t_list = vec![t];
        }
    }
    if let Some(d) = o.noise_level {
        c.noise_level = d;
        if tables {
            c.delta_list = vec![d];
        }
    }
    if let Some(s) = o.seed {
        c.seed = s;
    }
    if let Some(n) = o.n_elements {
        c.n_elements = n;
    }
    if let Some(m) = o.m_knots {
        c.m_knots = m;
    }
    if let Some(a) = o.alpha0 {
        c.irgn.alpha0 = a;
    }
    if let Some(q) = o.alpha_decay {
        c.irgn.q = q;
    }
    if let Some(dir) = &o.out_dir {
        c.out_dir = dir.clone();
    }
    if let Command::Simulate { trajectory: true } = cli.command {
        c.write_trajectory = true;
    }
    c.validate()?;
    Ok(c)
}

/// Returns whether every requested run converged.
fn run(cli: &Cli, config: &ExperimentConfig) -> anyhow::Result<bool> {
    match cli.command {
        Command::Simulate { .. } => {
            let out = experiments::run_simulate(config, config.time_horizon)?;
            println!(
                "wrote {} (max |dp - a(g)| = {:.6})",
                out.path.display(),
                out.max_gap()
            );
            Ok(true)
        }
        Command::Table1 => {
            println!("{:>8} {:>12} {:>12}", "T", "e", "d");
            for r in experiments::run_table1(config)? {
                println!("{:>8} {:>12.6} {:>12.6}", r.horizon, r.e, r.d);
            }
            Ok(true)
        }
        Command::Table2 => {
            let cells = experiments::run_table2(config)?;
            println!("{:>10} {:>8} {:>12} {:>6} {:>10}", "delta", "T", "error", "iters", "converged");
            for c in &cells {
                println!(
                    "{:>10} {:>8} {:>12.6} {:>6} {:>10}",
                    c.delta, c.horizon, c.error, c.iterations, c.converged
                );
            }
            Ok(cells.iter().all(|c| c.converged))
        }
        Command::Reconstruct => {
            let out = experiments::run_reconstruct(config, config.time_horizon, config.noise_level, config.seed)?;
            let m = &out.meta;
            println!(
                "wrote {}: error_L2 = {:.6}, iterations = {}, alpha_final = {:.3e}, misfit = {:.3e}",
                out.path.display(),
                m.error_l2,
                m.iterations,
                m.alpha_final,
                m.misfit
            );
            Ok(m.converged)
        }
        Command::Selftest => {
            let r = experiments::run_selftest(config)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
            if !r.passed {
                anyhow::bail!(Error::Contract("self test failed".into()));
            }
            Ok(true)
        }
    }
}

fn is_validation(err: &anyhow::Error) -> bool {
    matches!(err.downcast_ref::<Error>(), Some(Error::Config(_) | Error::Format { .. }))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let config = match resolve(&cli).context("invalid configuration") {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(if is_validation(&e) { EXIT_VALIDATION } else { 1 });
        }
    };
    match run(&cli, &config) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: at least one run stopped before reaching the discrepancy level");
            ExitCode::from(EXIT_NOT_CONVERGED)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_validation(&e) { EXIT_VALIDATION } else { 1 })
        }
    }
}
