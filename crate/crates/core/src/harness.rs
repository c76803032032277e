//! Monte Carlo sweeps over scenario parameters.
//!
//! A sweep runs every selected algorithm on the same topology for each
//! `(sweep value, trial)` pair. Trial `n` always draws from random stream `n`
//! of the scenario seed, so every algorithm and every sweep value at that
//! index is paired with the same underlying draws. Work units run on the
//! rayon pool and rows are sorted before they are written, so the output
//! does not depend on scheduling.
//!
//! If any algorithm is infeasible for an instance (including the equal-split
//! baselines), that row carries `energy_J = inf` and `feasible = false`, and
//! [`summarize`] drops the instance for every algorithm at that sweep value.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines;
use crate::error::{Error, Result};
use crate::model::{Allocation, Topology};
use crate::oracle::{self, OracleSettings};
use crate::par::{self, Execution};
use crate::reuse;
use crate::scenario::{self, Range, ScenarioSpec};
use crate::solver::{self, SolverSettings};

pub const RESULTS_HEADER: &str =
    "sweep_param,sweep_value,trial,algorithm,energy_J,iterations,signaling_msgs,feasible,residual_bw,residual_comp,wall_ms";

pub const SUMMARY_HEADER: &str = "sweep_param,sweep_value,algorithm,trials,included,excluded,mean_energy_J,std_energy_J,mean_iterations,mean_signaling_msgs";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "joint")]
    Joint,
    #[serde(rename = "fixed")]
    Fixed,
    #[serde(rename = "fixed-bandwidth")]
    FixedBandwidth,
    #[serde(rename = "fixed-bandwidth-per-bs")]
    FixedBandwidthPerBs,
    #[serde(rename = "fixed-computing")]
    FixedComputing,
    #[serde(rename = "reuse")]
    Reuse,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Joint,
        Algorithm::Fixed,
        Algorithm::FixedBandwidth,
        Algorithm::FixedBandwidthPerBs,
        Algorithm::FixedComputing,
        Algorithm::Reuse,
    ];

    /// Joint plus the four baselines.
    pub const STANDARD: [Algorithm; 5] = [
        Algorithm::Joint,
        Algorithm::Fixed,
        Algorithm::FixedBandwidth,
        Algorithm::FixedBandwidthPerBs,
        Algorithm::FixedComputing,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Joint => "joint",
            Algorithm::Fixed => "fixed",
            Algorithm::FixedBandwidth => "fixed-bandwidth",
            Algorithm::FixedBandwidthPerBs => "fixed-bandwidth-per-bs",
            Algorithm::FixedComputing => "fixed-computing",
            Algorithm::Reuse => "reuse",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm {s:?}")))
    }
}

/// Parses a comma-separated list; `all` selects every algorithm.
pub fn parse_algorithms(s: &str) -> Result<Vec<Algorithm>> {
    if s.trim() == "all" {
        return Ok(Algorithm::ALL.to_vec());
    }
    s.split(',').map(|a| a.trim().parse()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    /// Input size in bits (constant across users).
    L,
    /// Midpoint `W` of the cycle range `[W/3, 5W/3]`.
    W,
    /// Deadline in seconds.
    D,
    /// Total users.
    K,
    /// Stations.
    M,
    /// Users per station on average (`K = K_j * M`).
    #[serde(rename = "Kj")]
    Kj,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::L => "L",
            SweepParam::W => "W",
            SweepParam::D => "D",
            SweepParam::K => "K",
            SweepParam::M => "M",
            SweepParam::Kj => "Kj",
        }
    }

    fn is_count(self) -> bool {
        matches!(self, SweepParam::K | SweepParam::M | SweepParam::Kj)
    }

    /// The scenario at sweep value `v`.
    pub fn apply(self, base: &ScenarioSpec, v: f64) -> Result<ScenarioSpec> {
        let mut s = base.clone();
        if self.is_count() && !(v >= 1.0 && v.fract() == 0.0) {
            return Err(Error::Config(format!(
                "sweep over {} needs positive integer values, got {v}",
                self.name()
            )));
        }
        match self {
            SweepParam::L => s.data_bits = Range::constant(v),
            SweepParam::W => s.cycles = Range::new(v / 3.0, 5.0 * v / 3.0),
            SweepParam::D => s.deadline_s = v,
            SweepParam::K => s.users = v as usize,
            SweepParam::M => s.stations = v as usize,
            SweepParam::Kj => s.users = v as usize * s.stations,
        }
        s.validate()?;
        Ok(s)
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "L" => Ok(SweepParam::L),
            "W" => Ok(SweepParam::W),
            "D" => Ok(SweepParam::D),
            "K" => Ok(SweepParam::K),
            "M" => Ok(SweepParam::M),
            "Kj" => Ok(SweepParam::Kj),
            _ => Err(Error::Config(format!(
                "unknown sweep parameter {s:?} (expected L, W, D, K, M or Kj)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
    pub trials: u64,
    pub algorithms: Vec<Algorithm>,
    pub scenario: ScenarioSpec,
    pub solver: SolverSettings,
    /// Partition used by [`Algorithm::Reuse`].
    pub reuse_partition: Option<Vec<Vec<usize>>>,
    pub execution: Execution,
    /// Record wall time per row. Off by default so output is byte-stable.
    pub wall_clock: bool,
}

impl SweepSpec {
    pub fn new(param: SweepParam, values: Vec<f64>, trials: u64, scenario: ScenarioSpec) -> Self {
        Self {
            param,
            values,
            trials,
            algorithms: Algorithm::STANDARD.to_vec(),
            scenario,
            solver: SolverSettings::default(),
            reuse_partition: None,
            execution: Execution::Parallel,
            wall_clock: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("sweep needs at least one value".into()));
        }
        if self.values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config("sweep values must be strictly increasing".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Config("no algorithms selected".into()));
        }
        if self.algorithms.contains(&Algorithm::Reuse) && self.reuse_partition.is_none() {
            return Err(Error::Config("reuse needs a partition (reuse_partition)".into()));
        }
        self.solver.validate()?;
        for &v in &self.values {
            self.param.apply(&self.scenario, v)?;
        }
        Ok(())
    }
}

/// On-disk sweep description; every field is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub param: SweepParam,
    pub values: Vec<f64>,
    pub trials: u64,
    pub algorithms: Vec<Algorithm>,
    /// Groups separated by `;`, stations by `,`, e.g. `"0,1;2,3"`.
    pub reuse_partition: Option<String>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            param: SweepParam::L,
            values: vec![0.1e6, 0.2e6, 0.3e6, 0.4e6, 0.5e6, 0.6e6, 0.7e6, 0.8e6, 0.9e6, 1.0e6],
            trials: 50,
            algorithms: Algorithm::STANDARD.to_vec(),
            reuse_partition: None,
        }
    }
}

/// The config file: `[scenario]`, `[sweep]` and `[solver]` tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub scenario: ScenarioSpec,
    pub sweep: SweepConfig,
    pub solver: SolverSettings,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config always serializes")
    }

    pub fn sweep_spec(&self) -> Result<SweepSpec> {
        let reuse_partition = self
            .sweep
            .reuse_partition
            .as_deref()
            .map(reuse::parse_partition)
            .transpose()?;
        let spec = SweepSpec {
            param: self.sweep.param,
            values: self.sweep.values.clone(),
            trials: self.sweep.trials,
            algorithms: self.sweep.algorithms.clone(),
            scenario: self.scenario.clone(),
            solver: self.solver,
            reuse_partition,
            execution: Execution::Parallel,
            wall_clock: false,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// One algorithm on one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub sweep_param: SweepParam,
    pub sweep_value: f64,
    pub trial: u64,
    pub algorithm: Algorithm,
    /// Joules; `inf` when infeasible, `NaN` on a hard error.
    pub energy: f64,
    pub iterations: usize,
    pub signaling_msgs: usize,
    pub feasible: bool,
    /// `|sum x - B| / B` (per-station band for reuse).
    pub residual_bw: f64,
    /// `max_j |sum q - C_j| / C_j`.
    pub residual_comp: f64,
    pub wall_ms: f64,
    /// Set when the run failed for a reason other than infeasibility.
    pub hard_error: Option<String>,
}

impl TrialResult {
    fn sort_key(&self) -> (u64, u64, Algorithm) {
        (self.sweep_value.to_bits(), self.trial, self.algorithm)
    }
}

/// Outcome of one algorithm on one topology.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub allocation: Allocation,
    pub iterations: usize,
    pub signaling_msgs: usize,
    pub residual_bw: f64,
    pub residual_comp: f64,
}

/// `|sum x - B| / B` and `max_j |sum q - C_j| / C_j` over stations with users.
pub fn primal_residuals(topology: &Topology, allocation: &Allocation) -> (f64, f64) {
    let b = topology.bandwidth();
    let bw = (allocation.bandwidth.iter().sum::<f64>() - b).abs() / b;
    let comp = topology
        .stations()
        .iter()
        .filter(|s| !s.users.is_empty())
        .map(|s| {
            let load: f64 = s.users.iter().map(|&i| allocation.compute[i]).sum();
            (load - s.capacity).abs() / s.capacity
        })
        .fold(0.0, f64::max);
    (bw, comp)
}

pub fn run_algorithm(
    topology: &Topology,
    algorithm: Algorithm,
    settings: &SolverSettings,
    partition: Option<&[Vec<usize>]>,
) -> Result<Outcome> {
    let plain = |allocation: Allocation, iterations, signaling_msgs| {
        let (residual_bw, residual_comp) = primal_residuals(topology, &allocation);
        Outcome {
            allocation,
            iterations,
            signaling_msgs,
            residual_bw,
            residual_comp,
        }
    };
    let from_run = |r: baselines::BaselineRun| plain(r.allocation, r.iterations, r.signaling_msgs);
    Ok(match algorithm {
        Algorithm::Joint => {
            let s = solver::iterate(topology, settings)?;
            Outcome {
                iterations: s.report.iterations,
                signaling_msgs: s.report.signaling_msgs,
                residual_bw: s.report.residuals.bandwidth,
                residual_comp: s.report.residuals.compute,
                allocation: s.allocation,
            }
        }
        Algorithm::Fixed => plain(baselines::fixed(topology)?, 0, 0),
        Algorithm::FixedBandwidth => from_run(baselines::fixed_bandwidth(topology, settings)?),
        Algorithm::FixedBandwidthPerBs => from_run(baselines::fixed_bandwidth_per_bs(topology, settings)?),
        Algorithm::FixedComputing => from_run(baselines::fixed_computing(topology, settings)?),
        Algorithm::Reuse => {
            let groups = partition.ok_or_else(|| Error::Config("reuse needs a partition".into()))?;
            let s = reuse::reuse_allocate(topology, groups, settings)?;
            Outcome {
                iterations: s.report.iterations,
                signaling_msgs: s.report.signaling_msgs,
                residual_bw: s.station_band_residual,
                residual_comp: s.report.residuals.compute,
                allocation: s.allocation,
            }
        }
    })
}

fn unit(spec: &SweepSpec, value: f64, trial: u64) -> Vec<TrialResult> {
    let row = |algorithm| TrialResult {
        sweep_param: spec.param,
        sweep_value: value,
        trial,
        algorithm,
        energy: f64::INFINITY,
        iterations: 0,
        signaling_msgs: 0,
        feasible: false,
        residual_bw: 0.0,
        residual_comp: 0.0,
        wall_ms: 0.0,
        hard_error: None,
    };
    let topology = spec
        .param
        .apply(&spec.scenario, value)
        .and_then(|s| scenario::generate(&s, trial));
    let topology = match topology {
        Ok(g) => g.topology,
        Err(e) => {
            let hard = (!e.is_infeasibility()).then(|| e.to_string());
            return spec
                .algorithms
                .iter()
                .map(|&a| TrialResult {
                    energy: if hard.is_some() { f64::NAN } else { f64::INFINITY },
                    hard_error: hard.clone(),
                    ..row(a)
                })
                .collect();
        }
    };
    spec.algorithms
        .iter()
        .map(|&a| {
            let start = Instant::now();
            let out = run_algorithm(&topology, a, &spec.solver, spec.reuse_partition.as_deref());
            let wall_ms = if spec.wall_clock {
                start.elapsed().as_secs_f64() * 1e3
            } else {
                0.0
            };
            match out {
                Ok(o) => TrialResult {
                    energy: o.allocation.total_energy(),
                    iterations: o.iterations,
                    signaling_msgs: o.signaling_msgs,
                    feasible: true,
                    residual_bw: o.residual_bw,
                    residual_comp: o.residual_comp,
                    wall_ms,
                    ..row(a)
                },
                Err(e) if e.is_infeasibility() => TrialResult { wall_ms, ..row(a) },
                Err(e) => TrialResult {
                    energy: f64::NAN,
                    wall_ms,
                    hard_error: Some(e.to_string()),
                    ..row(a)
                },
            }
        })
        .collect()
}

/// Runs the grid. Per-instance failures are recorded in the rows and never
/// stop the sweep; the result is sorted by (value, trial, algorithm).
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<TrialResult>> {
    spec.validate()?;
    let trials = spec.trials as usize;
    let n = spec.values.len() * trials;
    let mut rows: Vec<TrialResult> = par::map_indexed(n, spec.execution, |k| {
        unit(spec, spec.values[k / trials], (k % trials) as u64)
    })
    .into_iter()
    .flatten()
    .collect();
    rows.sort_by_key(TrialResult::sort_key);
    Ok(rows)
}

pub fn hard_errors(rows: &[TrialResult]) -> impl Iterator<Item = &TrialResult> {
    rows.iter().filter(|r| r.hard_error.is_some())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub sweep_param: SweepParam,
    pub sweep_value: f64,
    pub algorithm: Algorithm,
    pub trials: usize,
    pub included: usize,
    pub excluded: usize,
    pub mean_energy: f64,
    /// Sample standard deviation; 0 with fewer than two included trials.
    pub std_energy: f64,
    pub mean_iterations: f64,
    pub mean_signaling_msgs: f64,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Per (sweep value, algorithm) statistics over instances on which every
/// algorithm was feasible.
pub fn summarize(rows: &[TrialResult]) -> Vec<SummaryRow> {
    let mut flagged: BTreeMap<(u64, u64), bool> = BTreeMap::new();
    for r in rows {
        *flagged.entry((r.sweep_value.to_bits(), r.trial)).or_default() |= !r.feasible;
    }
    let mut groups: BTreeMap<(u64, Algorithm), Vec<&TrialResult>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.sweep_value.to_bits(), r.algorithm)).or_default().push(r);
    }
    let mut out: Vec<SummaryRow> = groups
        .into_values()
        .map(|g| {
            let first = g[0];
            let kept: Vec<&TrialResult> = g
                .iter()
                .copied()
                .filter(|r| !flagged[&(r.sweep_value.to_bits(), r.trial)])
                .collect();
            let energy: Vec<f64> = kept.iter().map(|r| r.energy).collect();
            let iters: Vec<f64> = kept.iter().map(|r| r.iterations as f64).collect();
            let msgs: Vec<f64> = kept.iter().map(|r| r.signaling_msgs as f64).collect();
            SummaryRow {
                sweep_param: first.sweep_param,
                sweep_value: first.sweep_value,
                algorithm: first.algorithm,
                trials: g.len(),
                included: kept.len(),
                excluded: g.len() - kept.len(),
                mean_energy: mean(&energy),
                std_energy: sample_std(&energy),
                mean_iterations: mean(&iters),
                mean_signaling_msgs: mean(&msgs),
            }
        })
        .collect();
    out.sort_by(|a, b| a.sweep_value.total_cmp(&b.sweep_value).then(a.algorithm.cmp(&b.algorithm)));
    out
}

fn write_csv(path: &Path, header: &str, lines: impl Iterator<Item = String>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::io(path, e.into()))?;
    let io = |e: csv::Error| Error::io(path, e.into());
    w.write_record(header.split(',')).map_err(io)?;
    for line in lines {
        w.write_record(line.split(',')).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn result_line(r: &TrialResult) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        r.sweep_param, r.sweep_value, r.trial, r.algorithm, r.energy, r.iterations, r.signaling_msgs, r.feasible,
        r.residual_bw, r.residual_comp, r.wall_ms
    )
}

fn summary_line(s: &SummaryRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        s.sweep_param,
        s.sweep_value,
        s.algorithm,
        s.trials,
        s.included,
        s.excluded,
        s.mean_energy,
        s.std_energy,
        s.mean_iterations,
        s.mean_signaling_msgs
    )
}

pub fn write_results(rows: &[TrialResult], path: &Path) -> Result<()> {
    write_csv(path, RESULTS_HEADER, rows.iter().map(result_line))
}

pub fn write_summary(rows: &[SummaryRow], path: &Path) -> Result<()> {
    write_csv(path, SUMMARY_HEADER, rows.iter().map(summary_line))
}

/// Paths written by [`emit`].
#[derive(Debug, Clone)]
pub struct Emitted {
    pub results: PathBuf,
    pub summary: PathBuf,
}

/// Writes `results.csv` and `summary.csv` into `dir`, creating it if needed.
pub fn emit(rows: &[TrialResult], dir: &Path) -> Result<Emitted> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let out = Emitted {
        results: dir.join("results.csv"),
        summary: dir.join("summary.csv"),
    };
    write_results(rows, &out.results)?;
    write_summary(&summarize(rows), &out.summary)?;
    Ok(out)
}

/// Reads a results file written by [`write_results`]. `hard_error` is not
/// stored and comes back as `None`.
pub fn read_results(path: &Path) -> Result<Vec<TrialResult>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| Error::io(path, e.into()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.join(",") != RESULTS_HEADER {
        return Err(Error::Parse {
            line: 1,
            msg: "unexpected header".into(),
        });
    }
    let mut rows = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let line = n + 2;
        let rec = rec.map_err(|e| Error::Parse {
            line,
            msg: e.to_string(),
        })?;
        let field = |k: usize| rec.get(k).unwrap_or("");
        fn p<T: FromStr>(v: &str, line: usize) -> Result<T> {
            v.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("bad field {v:?}"),
            })
        }
        rows.push(TrialResult {
            sweep_param: field(0).parse()?,
            sweep_value: p(field(1), line)?,
            trial: p(field(2), line)?,
            algorithm: field(3).parse()?,
            energy: p(field(4), line)?,
            iterations: p(field(5), line)?,
            signaling_msgs: p(field(6), line)?,
            feasible: p(field(7), line)?,
            residual_bw: p(field(8), line)?,
            residual_comp: p(field(9), line)?,
            wall_ms: p(field(10), line)?,
            hard_error: None,
        });
    }
    Ok(rows)
}

/// Mean outer iteration count per `(M, K)` point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub stations: usize,
    pub users: usize,
    pub trials: usize,
    pub feasible: usize,
    pub mean_iterations: f64,
    pub std_iterations: f64,
    pub max_iterations: usize,
    pub mean_signaling_msgs: f64,
    pub hard_errors: usize,
}

impl ConvergenceRow {
    pub fn users_per_station(&self) -> f64 {
        self.users as f64 / self.stations as f64
    }
}

/// Default `(M, K)` grid: `K_j` in 4..16 at `M = 4`, then `M` in 4..16 at `K = 64`.
pub fn default_convergence_points() -> Vec<(usize, usize)> {
    vec![(4, 16), (4, 32), (4, 48), (4, 64), (8, 64), (16, 64)]
}

pub fn convergence_stats(
    base: &ScenarioSpec,
    points: &[(usize, usize)],
    trials: u64,
    settings: &SolverSettings,
    execution: Execution,
) -> Result<Vec<ConvergenceRow>> {
    settings.validate()?;
    points
        .iter()
        .map(|&(m, k)| {
            let spec = ScenarioSpec {
                stations: m,
                users: k,
                ..base.clone()
            };
            spec.validate()?;
            let runs = par::map_indexed(trials as usize, execution, |trial| {
                scenario::generate(&spec, trial as u64).and_then(|g| solver::iterate(&g.topology, settings))
            });
            let mut iters = Vec::new();
            let mut msgs = Vec::new();
            let mut hard = 0;
            for r in runs {
                match r {
                    Ok(s) => {
                        iters.push(s.report.iterations as f64);
                        msgs.push(s.report.signaling_msgs as f64);
                    }
                    Err(e) if e.is_infeasibility() => {}
                    Err(_) => hard += 1,
                }
            }
            Ok(ConvergenceRow {
                stations: m,
                users: k,
                trials: trials as usize,
                feasible: iters.len(),
                mean_iterations: mean(&iters),
                std_iterations: sample_std(&iters),
                max_iterations: iters.iter().fold(0.0f64, |a, &b| a.max(b)) as usize,
                mean_signaling_msgs: mean(&msgs),
                hard_errors: hard,
            })
        })
        .collect()
}

/// Small instances for comparison against the centralized oracle: two
/// stations, eight users, budgets scaled to the user count.
pub fn small_scenario(seed: u64) -> ScenarioSpec {
    ScenarioSpec {
        stations: 2,
        users: 8,
        bandwidth_hz: 2.5e6,
        capacity: 50e9,
        seed,
        ..ScenarioSpec::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyRow {
    pub trial: u64,
    pub solver_energy: f64,
    pub oracle_energy: f64,
    pub rel_error: f64,
    pub oracle_converged: bool,
}

/// Solver vs centralized oracle on `trials` instances of `spec`.
pub fn verify(
    spec: &ScenarioSpec,
    trials: u64,
    settings: &SolverSettings,
    oracle_settings: &OracleSettings,
    execution: Execution,
) -> Result<Vec<VerifyRow>> {
    spec.validate()?;
    par::map_indexed(trials as usize, execution, |trial| {
        let trial = trial as u64;
        let topology = scenario::generate(spec, trial)?.topology;
        let s = solver::iterate(&topology, settings)?;
        let o = oracle::solve_p2_oracle(&topology, oracle_settings)?;
        let e = s.allocation.total_energy();
        Ok(VerifyRow {
            trial,
            solver_energy: e,
            oracle_energy: o.energy,
            rel_error: (e - o.energy).abs() / o.energy,
            oracle_converged: o.converged,
        })
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert_eq!(parse_algorithms("all").unwrap().len(), 6);
        assert!(parse_algorithms("joint,magic").is_err());
    }

    #[test]
    fn sweep_param_application() {
        let base = ScenarioSpec::default();
        let s = SweepParam::W.apply(&base, 3e9).unwrap();
        assert_eq!(s.cycles, Range::new(1e9, 5e9));
        let s = SweepParam::Kj.apply(&base, 8.0).unwrap();
        assert_eq!(s.users, 32);
        assert!(SweepParam::K.apply(&base, 2.5).is_err());
    }

    #[test]
    fn spec_validation() {
        let mut s = SweepSpec::new(SweepParam::D, vec![0.5, 0.4], 1, ScenarioSpec::default());
        assert!(s.validate().is_err());
        s.values = vec![0.4, 0.5];
        assert!(s.validate().is_ok());
        s.algorithms.push(Algorithm::Reuse);
        assert!(s.validate().is_err());
    }

    #[test]
    fn config_defaults_round_trip() {
        let c = Config::default();
        let back = Config::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert!(Config::from_toml("[sweep]\nbogus = 1\n").is_err());
        let c = Config::from_toml("[sweep]\nparam = \"D\"\nvalues = [0.3, 0.5]\n[scenario]\nusers = 8\n").unwrap();
        assert_eq!(c.sweep.param, SweepParam::D);
        assert_eq!(c.scenario.users, 8);
        assert_eq!(c.scenario.stations, 4);
    }

    #[test]
    fn stats_helpers() {
        assert_eq!(sample_std(&[3.0]), 0.0);
        assert!((sample_std(&[1.0, 2.0, 3.0, 4.0]) - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(mean(&[]).is_nan());
    }
}
