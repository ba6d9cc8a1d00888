//! Command-line front end: growth-ray computation, feasibility checks,
//! partition inspection, weight synthesis, and simulation experiments.
//!
//! Exit codes: 0 on success, 1 for configuration problems, 2 for numerical
//! failures (non-convergence, oracle budget, linear-program trouble).

mod config;
mod experiments;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand};

use maxweight::control::{
    check_feasibility, classify_rho, partition_overload, FeasibilityVerdict,
};
use maxweight::eta::{eta_oracle, solve_eta, EtaError};
use maxweight::model::WeightMatrix;

use config::ConfigFile;
use experiments::{build, default_horizon, execute_runs, ExperimentRun};
use output::{sig9, subset_text, vec_text};

#[derive(Parser)]
#[command(
    name = "maxweight",
    about = "Growth-direction analysis and simulation of overloaded parallel queues under MaxWeight scheduling",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the backlog growth ray of the configured system.
    Eta {
        #[arg(long)]
        config: PathBuf,
        /// Also run the grid oracle at this resolution and report the gap.
        #[arg(long)]
        oracle_res: Option<usize>,
    },
    /// Run only the exhaustive grid oracle.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 300)]
        oracle_res: usize,
    },
    /// Decide whether the configured fairness target is achievable.
    Feasible {
        #[arg(long)]
        config: PathBuf,
    },
    /// List the overload-partition cells for the configured target.
    Partition {
        #[arg(long)]
        config: PathBuf,
    },
    /// Synthesize weight matrices for the configured target.
    Synth {
        #[arg(long)]
        config: PathBuf,
    },
    /// Simulate the configured system and write CSV traces.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        horizon: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        stride: Option<u64>,
    },
    /// Run a built-in experiment: fig3, fig4, or fig5.
    Experiment {
        name: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        horizon: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        stride: Option<u64>,
    },
}

enum CliError {
    Config(String),
    Numeric(String),
}

impl CliError {
    fn report(self) -> ExitCode {
        match self {
            CliError::Config(msg) => {
                eprintln!("config error: {msg}");
                ExitCode::from(1)
            }
            CliError::Numeric(msg) => {
                eprintln!("numerical failure: {msg}");
                ExitCode::from(2)
            }
        }
    }
}

fn config_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Config(e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(1);
        }
        Err(e) => {
            // --help / --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => e.report(),
    }
}

/// Resolve the effective weight matrix: explicitly configured, or
/// synthesized from the fairness target when that target is feasible.
fn effective_weights(cfg: &ConfigFile) -> Result<WeightMatrix, CliError> {
    let theta = cfg.theta().map_err(config_err)?;
    let weights = cfg.weights().map_err(config_err)?;
    match (weights, theta) {
        (Some(_), Some(_)) => Err(CliError::Config(
            "provide exactly one of `theta` and `d`".into(),
        )),
        (None, None) => Err(CliError::Config(
            "provide one of `theta` (to synthesize weights) or `d`".into(),
        )),
        (Some(d), None) => {
            if d.dim() != cfg.service_set().map_err(config_err)?.dim() {
                return Err(CliError::Config("d has the wrong dimension".into()));
            }
            Ok(d)
        }
        (None, Some(theta)) => {
            let set = cfg.service_set().map_err(config_err)?;
            let rho = cfg.rho().map_err(config_err)?;
            let report = check_feasibility(&theta, &rho, &set).map_err(config_err)?;
            match report.verdict {
                FeasibilityVerdict::Feasible => Ok(report.d.expect("feasible report has weights")),
                verdict => Err(CliError::Config(format!(
                    "fairness target is not achievable at this load: {}",
                    verdict_text(verdict)
                ))),
            }
        }
    }
}

fn verdict_text(verdict: FeasibilityVerdict) -> &'static str {
    match verdict {
        FeasibilityVerdict::Feasible => "FEASIBLE",
        FeasibilityVerdict::InfeasibleNoBoundary => "INFEASIBLE_NO_BOUNDARY",
        FeasibilityVerdict::InfeasibleDirection => "INFEASIBLE_DIRECTION",
        FeasibilityVerdict::Stable => "STABLE",
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Eta { config, oracle_res } => cmd_eta(&config, oracle_res),
        Command::Oracle { config, oracle_res } => cmd_oracle(&config, oracle_res),
        Command::Feasible { config } => cmd_feasible(&config),
        Command::Partition { config } => cmd_partition(&config),
        Command::Synth { config } => cmd_synth(&config),
        Command::Simulate {
            config,
            seed,
            horizon,
            out,
            stride,
        } => cmd_simulate(&config, seed, horizon, out, stride),
        Command::Experiment {
            name,
            seed,
            horizon,
            out,
            stride,
        } => cmd_experiment(&name, seed, horizon, out, stride),
    }
}

fn cmd_eta(path: &PathBuf, oracle_res: Option<usize>) -> Result<(), CliError> {
    let cfg = ConfigFile::load(path).map_err(CliError::Config)?;
    let set = cfg.service_set().map_err(config_err)?;
    let rho = cfg.rho().map_err(config_err)?;
    let d = effective_weights(&cfg)?;
    let solution = match solve_eta(&rho, &set, &d) {
        Ok(solution) => solution,
        Err(EtaError::NonConvergence {
            iterations,
            residual,
            best,
        }) => {
            println!("eta          = {}", vec_text(&best.eta));
            println!("alpha        = {}", vec_text(best.alpha.as_slice()));
            return Err(CliError::Numeric(format!(
                "no fixed point within {iterations} iterations (residual {residual:.3e})"
            )));
        }
        Err(e) => return Err(CliError::Numeric(e.to_string())),
    };
    println!("eta          = {}", vec_text(&solution.eta));
    println!("alpha        = {}", vec_text(solution.alpha.as_slice()));
    println!("objective    = {}", sig9(solution.objective));
    println!("kkt_residual = {}", sig9(solution.kkt_residual));
    println!("iterations   = {}", solution.iterations);
    if solution.stable {
        println!("STABLE: load is inside the stability region; the ray is zero");
    }
    if let Some(res) = oracle_res {
        let reference = eta_oracle(&rho, &set, &d, res).map_err(|e| CliError::Numeric(e.to_string()))?;
        let gap = solution
            .eta
            .iter()
            .zip(&reference)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        println!("oracle       = {}", vec_text(&reference));
        println!("max_gap      = {}", sig9(gap));
    }
    Ok(())
}

fn cmd_oracle(path: &PathBuf, oracle_res: usize) -> Result<(), CliError> {
    let cfg = ConfigFile::load(path).map_err(CliError::Config)?;
    let set = cfg.service_set().map_err(config_err)?;
    let rho = cfg.rho().map_err(config_err)?;
    let d = effective_weights(&cfg)?;
    let ray = eta_oracle(&rho, &set, &d, oracle_res).map_err(|e| CliError::Numeric(e.to_string()))?;
    println!("oracle       = {}", vec_text(&ray));
    Ok(())
}

fn cmd_feasible(path: &PathBuf) -> Result<(), CliError> {
    let cfg = ConfigFile::load(path).map_err(CliError::Config)?;
    let set = cfg.service_set().map_err(config_err)?;
    let rho = cfg.rho().map_err(config_err)?;
    let theta = cfg
        .theta()
        .map_err(config_err)?
        .ok_or_else(|| CliError::Config("`feasible` needs a `theta` entry".into()))?;
    let report = check_feasibility(&theta, &rho, &set).map_err(config_err)?;
    println!("verdict = {}", verdict_text(report.verdict));
    if let Some(subset) = &report.subset {
        println!("subset  = {}", subset_text(subset));
    }
    if let Some(v) = &report.v {
        println!("v       = {}", vec_text(&v.v));
    }
    if let Some(alpha) = &report.alpha {
        println!("alpha   = {}", vec_text(alpha.as_slice()));
    }
    if let Some(eta) = &report.eta {
        println!("eta     = {}", vec_text(eta));
    }
    if let Some(d) = &report.d {
        println!("d       = diag{}", vec_text(d.diagonal()));
    }
    Ok(())
}

fn cmd_partition(path: &PathBuf) -> Result<(), CliError> {
    let cfg = ConfigFile::load(path).map_err(CliError::Config)?;
    let set = cfg.service_set().map_err(config_err)?;
    let theta = cfg
        .theta()
        .map_err(config_err)?
        .ok_or_else(|| CliError::Config("`partition` needs a `theta` entry".into()))?;
    let partition = partition_overload(&theta, &set).map_err(config_err)?;
    println!("cells = {}", partition.cells.len());
    for (i, cell) in partition.cells.iter().enumerate() {
        println!(
            "cell {}: subset {}, v = {}, d = diag{}",
            i + 1,
            subset_text(&cell.subset),
            vec_text(&cell.v.v),
            vec_text(cell.d.diagonal())
        );
    }
    Ok(())
}

fn cmd_synth(path: &PathBuf) -> Result<(), CliError> {
    let cfg = ConfigFile::load(path).map_err(CliError::Config)?;
    let set = cfg.service_set().map_err(config_err)?;
    let theta = cfg
        .theta()
        .map_err(config_err)?
        .ok_or_else(|| CliError::Config("`synth` needs a `theta` entry".into()))?;
    let partition = partition_overload(&theta, &set).map_err(config_err)?;
    if partition.cells.is_empty() {
        println!("no boundary matches the target support; nothing to synthesize");
        return Ok(());
    }
    for (i, cell) in partition.cells.iter().enumerate() {
        println!(
            "cell {}: subset {} -> d = diag{}",
            i + 1,
            subset_text(&cell.subset),
            vec_text(cell.d.diagonal())
        );
    }
    let rho = cfg.rho().map_err(config_err)?;
    match classify_rho(&rho, &partition) {
        Some(d) => println!("selected for rho: d = diag{}", vec_text(d.diagonal())),
        None => println!("rho matches no cell: target infeasible at this load"),
    }
    Ok(())
}

fn cmd_simulate(
    path: &PathBuf,
    seed: Option<u64>,
    horizon: Option<u64>,
    out: Option<PathBuf>,
    stride: Option<u64>,
) -> Result<(), CliError> {
    let cfg = ConfigFile::load(path).map_err(CliError::Config)?;
    let d = effective_weights(&cfg)?;
    let system = cfg.system_with(d).map_err(CliError::Config)?;
    let mut arrivals = cfg
        .arrivals()
        .map_err(config_err)?
        .ok_or_else(|| CliError::Config("`simulate` needs an `arrivals` entry".into()))?;
    if let Some(seed) = seed {
        arrivals.seed = seed;
    }
    let horizon = horizon
        .or(cfg.horizon)
        .ok_or_else(|| CliError::Config("`simulate` needs a `horizon`".into()))?;
    let stride = stride.or(cfg.stride).unwrap_or(1);
    let tail = cfg.tail_fraction.unwrap_or(0.2);
    let out_dir = out
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let target = cfg.theta().map_err(config_err)?.map(|t| t.as_slice().to_vec());

    let runs: Vec<ExperimentRun> = cfg
        .initial_workloads(system.q())
        .into_iter()
        .enumerate()
        .map(|(i, x0)| ExperimentRun {
            name: format!("run_{:02}", i + 1),
            system: system.clone(),
            arrivals: arrivals.clone(),
            x0,
            target: target.clone(),
        })
        .collect();
    let summary = execute_runs(runs, horizon, stride, tail, &out_dir)
        .map_err(|e| CliError::Numeric(e.to_string()))?;
    announce(&summary, &out_dir);
    Ok(())
}

fn cmd_experiment(
    name: &str,
    seed: Option<u64>,
    horizon: Option<u64>,
    out: Option<PathBuf>,
    stride: Option<u64>,
) -> Result<(), CliError> {
    let Some((runs, default_stride)) = build(name, seed.unwrap_or(1)) else {
        let mut cmd = Cli::command();
        let _ = cmd.print_help();
        return Err(CliError::Config(format!(
            "unknown experiment {name:?}; expected fig3, fig4, or fig5"
        )));
    };
    let horizon = horizon.unwrap_or_else(|| default_horizon(name));
    let stride = stride.unwrap_or(default_stride);
    let out_dir = out.unwrap_or_else(|| PathBuf::from("out").join(name));
    let summary = execute_runs(runs, horizon, stride, 0.2, &out_dir)
        .map_err(|e| CliError::Numeric(e.to_string()))?;
    announce(&summary, &out_dir);
    Ok(())
}

fn announce(summary: &output::Summary, out_dir: &Path) {
    for run in &summary.runs {
        let deviation = run
            .max_ratio_deviation
            .map(|d| format!(", max ratio deviation {}", sig9(d)))
            .unwrap_or_default();
        println!(
            "{}: eta_hat = {}{}",
            run.name,
            vec_text(&run.eta_hat),
            deviation
        );
    }
    println!("wrote {}", out_dir.join("summary.json").display());
}
