use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mec_core::harness::{self, Algorithm, Config};
use mec_core::oracle::OracleSettings;
use mec_core::par::{self, Execution};
use mec_core::scenario::{self, FadingMode};
use mec_core::solver::EpsilonMode;
use mec_core::{reuse, Error, Result};

#[derive(Parser)]
#[command(name = "mecsim", version, about = "Multi-cell MEC bandwidth and compute allocation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML file with [scenario], [sweep] and [solver] tables.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<u64>,
    /// Comma-separated list, or `all`.
    #[arg(long)]
    algorithms: Option<String>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, value_parser = ["abs", "rel"])]
    epsilon_mode: Option<String>,
    /// Output directory (sweep) or file (convergence, verify).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Reuse groups, e.g. `0,1;2,3`.
    #[arg(long)]
    reuse_partition: Option<String>,
    #[arg(long, value_parser = ["assoc", "tx-only", "off"])]
    fading: Option<String>,
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Record per-row wall time (makes output non-reproducible).
    #[arg(long)]
    wall_clock: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance and print the allocation.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Trial index of the generated instance.
        #[arg(long, default_value_t = 0)]
        trial: u64,
        /// Read the instance from a topology file instead of generating it.
        #[arg(long)]
        topology: Option<PathBuf>,
        /// Write the instance to a topology file.
        #[arg(long)]
        export: Option<PathBuf>,
    },
    /// Run the configured sweep and write results.csv and summary.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Compare the solver against the centralized oracle on small instances.
    Verify {
        #[command(flatten)]
        common: Common,
    },
    /// Mean iteration counts as K_j and M vary.
    Convergence {
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common) -> Result<Config> {
    let mut c = match &common.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = common.seed {
        c.scenario.seed = s;
    }
    if let Some(t) = common.trials {
        c.sweep.trials = t;
    }
    if let Some(a) = &common.algorithms {
        c.sweep.algorithms = harness::parse_algorithms(a)?;
    }
    if let Some(e) = common.epsilon {
        c.solver.epsilon = e;
    }
    if let Some(m) = &common.epsilon_mode {
        c.solver.epsilon_mode = if m == "rel" { EpsilonMode::Rel } else { EpsilonMode::Abs };
    }
    if let Some(p) = &common.reuse_partition {
        c.sweep.reuse_partition = Some(p.clone());
    }
    if let Some(f) = &common.fading {
        c.scenario.fading = f.parse::<FadingMode>()?;
    }
    Ok(c)
}

fn solve(common: &Common, trial: u64, topology: Option<&PathBuf>, export: Option<&PathBuf>) -> Result<bool> {
    let config = load(common)?;
    let topo = match topology {
        Some(p) => scenario::parse_topology(&fs::read_to_string(p).map_err(|e| Error::Io {
            path: p.clone(),
            source: e,
        })?)?,
        None => scenario::generate(&config.scenario, trial)?.topology,
    };
    if let Some(p) = export {
        fs::write(p, scenario::write_topology(&topo)).map_err(|e| Error::Io {
            path: p.clone(),
            source: e,
        })?;
    }
    let partition = config
        .sweep
        .reuse_partition
        .as_deref()
        .map(reuse::parse_partition)
        .transpose()?;
    let algorithms = match &common.algorithms {
        Some(_) => config.sweep.algorithms.clone(),
        None => vec![Algorithm::Joint],
    };
    let mut ok = true;
    for a in algorithms {
        println!("== {a}");
        match harness::run_algorithm(&topo, a, &config.solver, partition.as_deref()) {
            Ok(o) => {
                println!("user station gain bandwidth_hz tx_time_s compute_hz power_w energy_j");
                let al = &o.allocation;
                for u in topo.users() {
                    let i = u.id;
                    println!(
                        "{i} {} {:.4e} {:.6e} {:.6e} {:.6e} {:.6e} {:.6e}",
                        u.station, u.gain, al.bandwidth[i], al.tx_time[i], al.compute[i], al.power[i], al.energy[i]
                    );
                }
                println!("total_energy_j {:.12e}", al.total_energy());
                println!("iterations {}", o.iterations);
                println!("signaling_msgs {}", o.signaling_msgs);
                println!("residual_bw {:.3e}", o.residual_bw);
                println!("residual_comp {:.3e}", o.residual_comp);
            }
            Err(e) if e.is_infeasibility() => println!("infeasible: {e}"),
            Err(e) => {
                println!("error: {e}");
                ok = false;
            }
        }
    }
    Ok(ok)
}

fn sweep(common: &Common) -> Result<bool> {
    let config = load(common)?;
    let mut spec = config.sweep_spec()?;
    spec.wall_clock = common.wall_clock;
    let rows = harness::run_sweep(&spec)?;
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let paths = harness::emit(&rows, &dir)?;
    for s in harness::summarize(&rows) {
        println!(
            "{}={} {:<24} mean {:.6e} J  std {:.3e}  N {:.2}  kept {}/{}",
            s.sweep_param, s.sweep_value, s.algorithm, s.mean_energy, s.std_energy, s.mean_iterations, s.included, s.trials
        );
    }
    let mut ok = true;
    for r in harness::hard_errors(&rows) {
        eprintln!(
            "hard error at {}={} trial {} {}: {}",
            r.sweep_param,
            r.sweep_value,
            r.trial,
            r.algorithm,
            r.hard_error.as_deref().unwrap_or("")
        );
        ok = false;
    }
    println!("wrote {} and {}", paths.results.display(), paths.summary.display());
    Ok(ok)
}

fn verify(common: &Common) -> Result<bool> {
    let config = load(common)?;
    let trials = common.trials.unwrap_or(50);
    let spec = harness::small_scenario(config.scenario.seed);
    let rows = harness::verify(&spec, trials, &config.solver, &OracleSettings::default(), Execution::Parallel)?;
    let mut text = String::from("trial,solver_energy_J,oracle_energy_J,rel_error,oracle_converged\n");
    for r in &rows {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            r.trial, r.solver_energy, r.oracle_energy, r.rel_error, r.oracle_converged
        ));
    }
    print!("{text}");
    let worst = rows.iter().map(|r| r.rel_error).fold(0.0, f64::max);
    println!("instances {} max_rel_error {worst:.3e}", rows.len());
    if let Some(p) = &common.out {
        fs::write(p, text).map_err(|e| Error::Io {
            path: p.clone(),
            source: e,
        })?;
    }
    Ok(true)
}

fn convergence(common: &Common) -> Result<bool> {
    let config = load(common)?;
    let trials = common.trials.unwrap_or(config.sweep.trials);
    let rows = harness::convergence_stats(
        &config.scenario,
        &harness::default_convergence_points(),
        trials,
        &config.solver,
        Execution::Parallel,
    )?;
    let mut text = String::from("M,K,Kj,trials,feasible,mean_iterations,std_iterations,max_iterations,mean_signaling_msgs\n");
    for r in &rows {
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.stations,
            r.users,
            r.users_per_station(),
            r.trials,
            r.feasible,
            r.mean_iterations,
            r.std_iterations,
            r.max_iterations,
            r.mean_signaling_msgs
        ));
    }
    print!("{text}");
    if let Some(p) = &common.out {
        fs::write(p, &text).map_err(|e| Error::Io {
            path: p.clone(),
            source: e,
        })?;
    }
    Ok(rows.iter().all(|r| r.hard_errors == 0))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = match &cli.command {
        Command::Solve { common, .. }
        | Command::Sweep { common }
        | Command::Verify { common }
        | Command::Convergence { common } => common.clone(),
    };
    let result = par::with_jobs(common.jobs, || match &cli.command {
        Command::Solve {
            common,
            trial,
            topology,
            export,
        } => solve(common, *trial, topology.as_ref(), export.as_ref()),
        Command::Sweep { common } => sweep(common),
        Command::Verify { common } => verify(common),
        Command::Convergence { common } => convergence(common),
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
