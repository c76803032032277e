//! Acceptance suite. Prints one PASS/FAIL line per criterion, with indented
//! diagnostics under it, and exits non-zero if any criterion fails.

mod common;

use std::fs;
use std::process::Command;
use std::time::Instant;

use mec_core::baselines;
use mec_core::harness::{
    convergence_stats, emit, run_sweep, small_scenario, Algorithm, SweepParam, SweepSpec, TrialResult,
};
use mec_core::model::{self, Allocation, Topology};
use mec_core::oracle::{solve_p2_oracle, solve_p5_oracle, OracleSettings};
use mec_core::par::Execution;
use mec_core::reuse::{reuse_allocate, ReuseSolution};
use mec_core::scenario::{generate, Range, ScenarioSpec};
use mec_core::solver::{self, EpsilonMode, Solution, SolverSettings};

const ORACLE_REL_TOL: f64 = 1e-4;
const ORACLE_TIME_LIMIT_S: f64 = 120.0;
const TRAJECTORY_ABS_SLACK: f64 = 1e-12;
const BANDWIDTH_RESIDUAL_TOL: f64 = 1e-8;
const COMPUTE_RESIDUAL_TOL: f64 = 1e-6;
const STATIONARITY_TOL: f64 = 1e-6;
const RATE_FILL_TOL: f64 = 1e-9;
const DOMINATION_SLACK: f64 = 1e-9;
const CONVERGENCE_MEAN_LIMIT: f64 = 4.0;
const REUSE_MATCH_TOL: f64 = 1e-6;
const PRICE_BALANCE_TOL: f64 = 1e-6;

const DEFAULT_INSTANCES: u64 = 200;
const SMALL_INSTANCES: u64 = 50;
const TREND_TRIALS: u64 = 50;
const REUSE_INSTANCES: u64 = 20;
const P5_ORACLE_INSTANCES: u64 = 10;
const HESSIAN_POINTS: usize = 1000;

struct Check {
    id: usize,
    title: &'static str,
    pass: bool,
    notes: Vec<String>,
}

fn converged() -> SolverSettings {
    SolverSettings {
        epsilon: 1e-12,
        epsilon_mode: EpsilonMode::Rel,
        ..Default::default()
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn rate_fill_error(topo: &Topology, a: &Allocation) -> f64 {
    topo.users()
        .iter()
        .enumerate()
        .filter(|(_, u)| u.task.data_bits > 0.0)
        .map(|(i, u)| {
            let r = model::achievable_rate(a.bandwidth[i], a.power[i], u.gain, topo.noise_density()).unwrap();
            rel(r * a.tx_time[i], u.task.data_bits)
        })
        .fold(0.0, f64::max)
}

fn trajectory_rise(s: &Solution) -> f64 {
    s.report
        .energy_trajectory
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Joint and baseline results on the default instances.
struct DefaultRun {
    topology: Topology,
    joint: Solution,
    /// Fixed, fixed bandwidth, per-BS, fixed computing; `None` when infeasible.
    baselines: [Option<Allocation>; 4],
}

fn default_runs() -> Vec<DefaultRun> {
    let spec = ScenarioSpec::default();
    let s = SolverSettings::default();
    (0..DEFAULT_INSTANCES)
        .map(|trial| {
            let topology = generate(&spec, trial).unwrap().topology;
            let joint = solver::iterate(&topology, &s).unwrap();
            let baselines = [
                baselines::fixed(&topology).ok(),
                baselines::fixed_bandwidth(&topology, &s).ok().map(|r| r.allocation),
                baselines::fixed_bandwidth_per_bs(&topology, &s).ok().map(|r| r.allocation),
                baselines::fixed_computing(&topology, &s).ok().map(|r| r.allocation),
            ];
            DefaultRun {
                topology,
                joint,
                baselines,
            }
        })
        .collect()
}

/// Small instances with the solver at default and converged settings and the oracle.
struct SmallRun {
    topology: Topology,
    default: Solution,
    converged: Solution,
    oracle: f64,
}

fn small_runs() -> (Vec<SmallRun>, f64) {
    let start = Instant::now();
    let spec = small_scenario(42);
    let runs = (0..SMALL_INSTANCES)
        .map(|trial| {
            let topology = generate(&spec, trial).unwrap().topology;
            let converged = solver::iterate(&topology, &converged()).unwrap();
            let oracle = solve_p2_oracle(&topology, &OracleSettings::default()).unwrap().energy;
            let default = solver::iterate(&topology, &SolverSettings::default()).unwrap();
            SmallRun {
                topology,
                default,
                converged,
                oracle,
            }
        })
        .collect();
    (runs, start.elapsed().as_secs_f64())
}

fn c1(small: &[SmallRun], secs: f64) -> Check {
    let worst = small
        .iter()
        .map(|r| rel(r.converged.allocation.total_energy(), r.oracle))
        .fold(0.0, f64::max);
    let worst_default = small
        .iter()
        .map(|r| rel(r.default.allocation.total_energy(), r.oracle))
        .fold(0.0, f64::max);
    Check {
        id: 1,
        title: "oracle optimality",
        pass: worst <= ORACLE_REL_TOL && secs < ORACLE_TIME_LIMIT_S,
        notes: vec![
            format!(
                "{} instances (M=2, K=8), solver at relative epsilon 1e-12: worst rel error {worst:.3e} (limit {ORACLE_REL_TOL:e})",
                small.len()
            ),
            format!("runtime {secs:.1} s including oracle and both solver settings (limit {ORACLE_TIME_LIMIT_S} s)"),
            format!("at the default epsilon (1e-6 J absolute) the worst rel error is {worst_default:.3e}"),
        ],
    }
}

fn c2(runs: &[DefaultRun]) -> Check {
    let worst = runs.iter().map(|r| trajectory_rise(&r.joint)).fold(f64::NEG_INFINITY, f64::max);
    let capped = runs.iter().filter(|r| !r.joint.report.converged).count();
    let max_iter = runs.iter().map(|r| r.joint.report.iterations).max().unwrap_or(0);
    Check {
        id: 2,
        title: "monotone energy trajectory",
        pass: worst <= TRAJECTORY_ABS_SLACK && capped == 0,
        notes: vec![
            format!(
                "{} default instances: largest step-to-step rise {worst:.3e} J (slack {TRAJECTORY_ABS_SLACK:e})",
                runs.len()
            ),
            format!(
                "runs stopped by the iteration cap: {capped}; most iterations {max_iter} (cap {})",
                SolverSettings::default().max_iterations
            ),
        ],
    }
}

fn c3(runs: &[DefaultRun], small: &[SmallRun]) -> Check {
    let mut bw: f64 = 0.0;
    let mut comp: f64 = 0.0;
    let mut stat_default: f64 = 0.0;
    for r in runs {
        let k = r.joint.report.residuals;
        bw = bw.max(k.bandwidth);
        comp = comp.max(k.compute);
        stat_default = stat_default.max(k.max_stationarity());
    }
    let mut stat_conv: f64 = 0.0;
    for r in small {
        let k = r.converged.report.residuals;
        bw = bw.max(k.bandwidth);
        comp = comp.max(k.compute);
        stat_conv = stat_conv.max(k.max_stationarity());
        stat_default = stat_default.max(r.default.report.residuals.max_stationarity());
    }
    let primal = bw <= BANDWIDTH_RESIDUAL_TOL && comp <= COMPUTE_RESIDUAL_TOL;
    Check {
        id: 3,
        title: "constraint and KKT residuals",
        pass: primal && stat_default.min(stat_conv) <= STATIONARITY_TOL,
        notes: vec![
            format!(
                "primal: bandwidth {bw:.3e} (limit {BANDWIDTH_RESIDUAL_TOL:e}), compute {comp:.3e} (limit {COMPUTE_RESIDUAL_TOL:e}) -> {}",
                if primal { "ok" } else { "over" }
            ),
            format!("normalized stationarity at default epsilon: {stat_default:.3e} (limit {STATIONARITY_TOL:e})"),
            format!("normalized stationarity at relative epsilon 1e-12: {stat_conv:.3e}"),
            "the energy-gap stop is reached before the alternation settles the prices to 1e-6".into(),
        ],
    }
}

fn c4(runs: &[DefaultRun], small: &[SmallRun]) -> Check {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for r in runs {
        worst = worst.max(rate_fill_error(&r.topology, &r.joint.allocation));
        count += 1;
        for a in r.baselines.iter().flatten() {
            worst = worst.max(rate_fill_error(&r.topology, a));
            count += 1;
        }
    }
    for r in small {
        worst = worst.max(rate_fill_error(&r.topology, &r.converged.allocation));
        count += 1;
    }
    Check {
        id: 4,
        title: "transmission fills its budget",
        pass: worst <= RATE_FILL_TOL,
        notes: vec![format!(
            "{count} allocations: worst |rate * t / L - 1| = {worst:.3e} (limit {RATE_FILL_TOL:e})"
        )],
    }
}

struct Gap {
    mean: f64,
    median: f64,
    positive: usize,
    feasible: usize,
    drawn: u64,
}

fn fig2_gap() -> Gap {
    let spec = ScenarioSpec {
        cycles: Range::new(0.5e9, 4e9),
        data_bits: Range::new(0.5e6, 1e6),
        ..Default::default()
    };
    let s = SolverSettings::default();
    let mut gaps = Vec::new();
    let mut trial = 0;
    while gaps.len() < TREND_TRIALS as usize && trial < 10 * TREND_TRIALS {
        let topo = generate(&spec, trial).unwrap().topology;
        trial += 1;
        let Ok(fc) = baselines::fixed_computing(&topo, &s) else {
            continue;
        };
        let j = solver::iterate(&topo, &s).unwrap().allocation.total_energy();
        gaps.push(fc.allocation.total_energy() - j);
    }
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let positive = gaps.iter().filter(|g| **g > 0.0).count();
    gaps.sort_by(f64::total_cmp);
    Gap {
        mean,
        median: gaps[gaps.len() / 2],
        positive,
        feasible: gaps.len(),
        drawn: trial,
    }
}

fn c5(runs: &[DefaultRun]) -> Check {
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    let mut compared = 0;
    for r in runs {
        let j = r.joint.allocation.total_energy();
        for a in r.baselines.iter().flatten() {
            let e = a.total_energy();
            compared += 1;
            worst = worst.max((j - e) / e);
            if j > e * (1.0 + DOMINATION_SLACK) {
                violations += 1;
            }
        }
    }
    let gap = fig2_gap();
    Check {
        id: 5,
        title: "baseline domination",
        pass: violations == 0 && gap.mean > 0.0 && gap.feasible >= TREND_TRIALS as usize,
        notes: vec![
            format!(
                "{compared} feasible (instance, baseline) pairs: {violations} with joint above the baseline; largest (joint - base) / base = {worst:.3e}"
            ),
            format!(
                "W in [0.5, 4] Gcycles, L in [0.5, 1] Mb: mean fixed-computing gap {:.4e} J over {} feasible of {} trials",
                gap.mean, gap.feasible, gap.drawn
            ),
            format!(
                "gap positive on {}/{}; median {:.4e} J (the mean is dominated by instances with very short transmission budgets)",
                gap.positive, gap.feasible, gap.median
            ),
        ],
    }
}

/// Mean energy per (value, algorithm) over trials feasible at every value.
fn paired_means(rows: &[TrialResult], values: &[f64], algs: &[Algorithm]) -> (Vec<Vec<f64>>, usize) {
    let trials = rows.iter().map(|r| r.trial).max().map_or(0, |t| t + 1);
    let keep: Vec<u64> = (0..trials)
        .filter(|&t| rows.iter().filter(|r| r.trial == t).all(|r| r.feasible))
        .collect();
    let means = algs
        .iter()
        .map(|&a| {
            values
                .iter()
                .map(|&v| {
                    let e: Vec<f64> = rows
                        .iter()
                        .filter(|r| r.algorithm == a && r.sweep_value == v && keep.contains(&r.trial))
                        .map(|r| r.energy)
                        .collect();
                    e.iter().sum::<f64>() / e.len() as f64
                })
                .collect()
        })
        .collect();
    (means, keep.len())
}

fn c6() -> Check {
    let sweeps = [
        (SweepParam::L, vec![0.2e6, 0.4e6, 0.6e6, 0.8e6, 1.0e6], true),
        (SweepParam::W, vec![0.6e9, 0.9e9, 1.2e9, 1.5e9, 1.8e9], true),
        (SweepParam::D, vec![0.3, 0.4, 0.5, 0.6, 0.7], false),
    ];
    let algs = Algorithm::STANDARD;
    let mut pass = true;
    let mut notes = Vec::new();
    for (param, values, increasing) in sweeps {
        let spec = SweepSpec::new(param, values.clone(), TREND_TRIALS, ScenarioSpec::default());
        let rows = run_sweep(&spec).unwrap();
        let (means, kept) = paired_means(&rows, &values, &algs);
        let mut bad = Vec::new();
        for (a, m) in algs.iter().zip(&means) {
            let ok = m.windows(2).all(|w| if increasing { w[1] > w[0] } else { w[1] < w[0] });
            if !ok {
                bad.push(a.name());
            }
        }
        pass &= bad.is_empty() && kept >= TREND_TRIALS as usize / 2;
        let joint: Vec<String> = means[0].iter().map(|e| format!("{e:.3e}")).collect();
        notes.push(format!(
            "{param} sweep, {kept}/{TREND_TRIALS} trials feasible at every point, {} for all five: {}; joint means [{}]",
            if increasing { "increasing" } else { "decreasing" },
            if bad.is_empty() { "ok".to_string() } else { format!("not monotone: {}", bad.join(", ")) },
            joint.join(", ")
        ));
    }
    Check {
        id: 6,
        title: "trend reproduction",
        pass,
        notes,
    }
}

fn c7() -> Check {
    let points = [(4, 32), (4, 64), (16, 64)];
    let rows = convergence_stats(
        &ScenarioSpec::default(),
        &points,
        TREND_TRIALS,
        &SolverSettings::default(),
        Execution::Parallel,
    )
    .unwrap();
    let n = |m: usize, k: usize| rows.iter().find(|r| r.stations == m && r.users == k).unwrap();
    let big = n(16, 64);
    let trend = n(4, 64).mean_iterations > n(4, 32).mean_iterations;
    let small_mean = big.mean_iterations <= CONVERGENCE_MEAN_LIMIT;
    let mut notes: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "M={} K={} (K_j={}): mean N {:.2}, std {:.2}, max {}, feasible {}/{}",
                r.stations,
                r.users,
                r.users_per_station(),
                r.mean_iterations,
                r.std_iterations,
                r.max_iterations,
                r.feasible,
                r.trials
            )
        })
        .collect();
    notes.push(format!(
        "mean N <= {CONVERGENCE_MEAN_LIMIT} at M=16 K=64: {}; N grows from K_j=8 to K_j=16: {}",
        if small_mean { "ok" } else { "no" },
        if trend { "ok" } else { "no" }
    ));
    Check {
        id: 7,
        title: "convergence statistics",
        pass: small_mean && trend,
        notes,
    }
}

fn reuse_scenario() -> ScenarioSpec {
    ScenarioSpec {
        stations: 4,
        ..small_scenario(7)
    }
}

fn c8() -> Check {
    let spec = reuse_scenario();
    let s = converged();
    let one = vec![vec![0, 1, 2, 3]];
    let two = vec![vec![0, 1], vec![2, 3]];
    let singles: Vec<Vec<usize>> = (0..4).map(|j| vec![j]).collect();
    let mut f1_vs_joint: f64 = 0.0;
    let mut singles_vs_joint: f64 = 0.0;
    let mut balance: f64 = 0.0;
    let mut p5_below_p2 = 0;
    let mut factor_order = 0;
    let mut oracle_err: f64 = 0.0;
    let mut oracle_runs = 0;
    let mut record = |r: &ReuseSolution| balance = balance.max(r.price_balance_residual);
    for trial in 0..REUSE_INSTANCES {
        let topo = generate(&spec, trial).unwrap().topology;
        let joint = solver::iterate(&topo, &s).unwrap().allocation.total_energy();
        let r1 = reuse_allocate(&topo, &one, &s).unwrap();
        let r2 = reuse_allocate(&topo, &two, &s).unwrap();
        let r4 = reuse_allocate(&topo, &singles, &s).unwrap();
        record(&r1);
        record(&r2);
        record(&r4);
        let (e1, e2, e4) = (
            r1.allocation.total_energy(),
            r2.allocation.total_energy(),
            r4.allocation.total_energy(),
        );
        f1_vs_joint = f1_vs_joint.max(rel(e1, joint));
        singles_vs_joint = singles_vs_joint.max(rel(e4, joint));
        if e2 < joint {
            p5_below_p2 += 1;
        }
        if e1 <= e2 * (1.0 + 1e-9) && e2 <= e4 * (1.0 + 1e-9) {
            factor_order += 1;
        }
        if trial < P5_ORACLE_INSTANCES {
            let o = solve_p5_oracle(&topo, &two, &OracleSettings::default()).unwrap();
            oracle_err = oracle_err.max(rel(e2, o.energy));
            oracle_runs += 1;
        }
    }
    let f1_ok = f1_vs_joint <= REUSE_MATCH_TOL;
    let oracle_ok = oracle_err <= ORACLE_REL_TOL;
    let balance_ok = balance <= PRICE_BALANCE_TOL;
    let order_ok = p5_below_p2 == 0;
    Check {
        id: 8,
        title: "frequency reuse",
        pass: f1_ok && oracle_ok && balance_ok && order_ok,
        notes: vec![
            format!(
                "F=1 reuse vs joint on {REUSE_INSTANCES} instances (M=4, K=8): worst rel diff {f1_vs_joint:.3e} (limit {REUSE_MATCH_TOL:e}) -> {}",
                if f1_ok { "ok" } else { "no" }
            ),
            format!(
                "F=2 vs centralized reuse optimum on {oracle_runs} instances: worst rel error {oracle_err:.3e} (limit {ORACLE_REL_TOL:e}) -> {}",
                if oracle_ok { "ok" } else { "no" }
            ),
            format!(
                "group price balance residual: worst {balance:.3e} (limit {PRICE_BALANCE_TOL:e}) -> {}",
                if balance_ok { "ok" } else { "no" }
            ),
            format!(
                "F=2 energy below joint energy on {p5_below_p2}/{REUSE_INSTANCES} instances -> {}",
                if order_ok { "ok" } else { "no" }
            ),
            format!("one station per group vs joint: worst rel diff {singles_vs_joint:.3e}"),
            format!("E(F=1) <= E(F=2) <= E(one station per group) on {factor_order}/{REUSE_INSTANCES} instances"),
        ],
    }
}

fn c9() -> Check {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
    let task_topo = |l: f64, h: f64| {
        common::topology(&[common::u(h, l, 1e9, 0.5, 0)], &[100e9], 1e7)
    };
    let mut min_diag = f64::INFINITY;
    let mut min_det = f64::INFINITY;
    let mut bad = 0;
    let mut n = 0;
    while n < HESSIAN_POINTS {
        let x = 10f64.powf(rng.gen_range(5.0..7.0));
        let t = rng.gen_range(0.01..0.49);
        let l = rng.gen_range(1e5..1e6);
        let h = 10f64.powf(rng.gen_range(-12.0..-8.0));
        let y = l * std::f64::consts::LN_2 / (x * t);
        if !(0.01..=50.0).contains(&y) {
            continue;
        }
        n += 1;
        let topo = task_topo(l, h);
        let task = topo.user(0).task;
        // second differences in log coordinates; the sign pattern is unchanged
        let e = |a: f64, b: f64| model::user_energy(x * a.exp(), t * b.exp(), &task, h, topo.noise_density()).unwrap();
        let d = 1e-4;
        let e0 = e(0.0, 0.0);
        let hxx = (e(d, 0.0) - 2.0 * e0 + e(-d, 0.0)) / (d * d);
        let htt = (e(0.0, d) - 2.0 * e0 + e(0.0, -d)) / (d * d);
        let hxt = (e(d, d) - e(d, -d) - e(-d, d) + e(-d, -d)) / (4.0 * d * d);
        // diag(x, t) H diag(x, t) = log-space Hessian minus diag(log-space gradient)
        let gx = (e(d, 0.0) - e(-d, 0.0)) / (2.0 * d);
        let gt = (e(0.0, d) - e(0.0, -d)) / (2.0 * d);
        let (axx, att, axt) = ((hxx - gx) / e0, (htt - gt) / e0, hxt / e0);
        let det = axx * att - axt * axt;
        min_diag = min_diag.min(axx.min(att));
        min_det = min_det.min(det);
        if !(axx > 0.0 && att > 0.0 && det > 0.0) {
            bad += 1;
        }
    }
    Check {
        id: 9,
        title: "convexity spot check",
        pass: bad == 0,
        notes: vec![format!(
            "{HESSIAN_POINTS} points: {bad} without a positive definite finite-difference Hessian; smallest scaled diagonal {min_diag:.3e}, smallest scaled determinant {min_det:.3e}"
        )],
    }
}

fn c10() -> Check {
    let mut spec = SweepSpec::new(SweepParam::D, vec![0.4, 0.5], 4, ScenarioSpec::default());
    spec.algorithms = Algorithm::ALL.to_vec();
    spec.reuse_partition = Some(vec![vec![0, 1], vec![2, 3]]);
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for (k, exec) in [Execution::Parallel, Execution::Parallel, Execution::Sequential].into_iter().enumerate() {
        spec.execution = exec;
        let out = emit(&run_sweep(&spec).unwrap(), &dir.path().join(k.to_string())).unwrap();
        outputs.push((fs::read(out.results).unwrap(), fs::read(out.summary).unwrap()));
    }
    let library_same = outputs.windows(2).all(|w| w[0] == w[1]);
    let config = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/mini_sweep.toml");
    let mut cli = Vec::new();
    for (k, jobs) in ["0", "1"].into_iter().enumerate() {
        let out = dir.path().join(format!("cli{k}"));
        let status = Command::new(env!("CARGO_BIN_EXE_mecsim"))
            .args(["sweep", "--jobs", jobs, "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        cli.push(status.status.success().then(|| fs::read(out.join("results.csv")).unwrap()));
    }
    let cli_same = cli[0].is_some() && cli[0] == cli[1];
    Check {
        id: 10,
        title: "determinism",
        pass: library_same && cli_same,
        notes: vec![
            format!(
                "library sweep (all six algorithms) twice in parallel and once sequentially: {}",
                if library_same { "byte-identical" } else { "differs" }
            ),
            format!(
                "mecsim sweep with default and single-thread pools: {}",
                if cli_same { "byte-identical" } else { "differs" }
            ),
        ],
    }
}

fn main() {
    let start = Instant::now();
    let mut checks = Vec::new();
    let (small, small_secs) = small_runs();
    let defaults = default_runs();
    checks.push(c1(&small, small_secs));
    checks.push(c2(&defaults));
    checks.push(c3(&defaults, &small));
    checks.push(c4(&defaults, &small));
    checks.push(c5(&defaults));
    checks.push(c6());
    checks.push(c7());
    checks.push(c8());
    checks.push(c9());
    checks.push(c10());
    println!();
    for c in &checks {
        println!("{} criterion {:>2}: {}", if c.pass { "PASS" } else { "FAIL" }, c.id, c.title);
        for n in &c.notes {
            println!("      {n}");
        }
    }
    let failed = checks.iter().filter(|c| !c.pass).count();
    println!(
        "\nacceptance: {} passed, {failed} failed ({:.1} s)",
        checks.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
