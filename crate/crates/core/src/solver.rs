//! Primal-dual iterative allocation with dynamic spectrum sharing.
//!
//! Bandwidth is priced by a single network-wide dual `lambda`; for a given
//! price every station sizes its users' bandwidth locally, and only the
//! per-station totals are exchanged to steer `lambda`. Compute is priced per
//! station by `mu_j` and never leaves the station. The outer loop alternates
//! the two steps until the energy decrease across one compute step and one
//! bandwidth step drops to `epsilon`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, energy_raw, rate_gap, Allocation, TaskSpec, Topology};
use crate::roots::{increasing_root_on_half_line, increasing_root_on_interval, price_search, price_search_with, Refine};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EpsilonMode {
    /// `epsilon` is an energy gap in joules.
    #[default]
    Abs,
    /// `epsilon` is a gap relative to the current total energy.
    Rel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub epsilon: f64,
    pub epsilon_mode: EpsilonMode,
    pub max_iterations: usize,
    /// Relative bracket width at which the per-user bisections stop.
    pub root_rel_tol: f64,
    /// Stop the `lambda` search once `|sum x - B| / B` is below this.
    pub bandwidth_tol: f64,
    /// Stop each `mu_j` search once `|load - C_j| / C_j` is below this.
    pub compute_tol: f64,
    /// First probe of every price search.
    pub price_start: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            epsilon_mode: EpsilonMode::Abs,
            max_iterations: 1000,
            root_rel_tol: 1e-10,
            bandwidth_tol: 1e-10,
            compute_tol: 1e-9,
            price_start: 1.0,
        }
    }
}

impl SolverSettings {
    pub(crate) fn gap(&self, before: f64, after: f64) -> f64 {
        match self.epsilon_mode {
            EpsilonMode::Abs => before - after,
            EpsilonMode::Rel => (before - after) / after.abs().max(f64::MIN_POSITIVE),
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidInput(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        for (name, v) in [
            ("root_rel_tol", self.root_rel_tol),
            ("bandwidth_tol", self.bandwidth_tol),
            ("compute_tol", self.compute_tol),
            ("price_start", self.price_start),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Dual prices of the bandwidth and compute constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub lambda: f64,
    /// One entry per station; zero for stations without users.
    pub mu: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KktResiduals {
    /// `|sum_i x_i - B| / B`.
    pub bandwidth: f64,
    /// `max_j |sum_{i in S_j} q_i - C_j| / C_j` over stations with users.
    pub compute: f64,
    /// `max_i |g(x_i)| / lambda`.
    pub bandwidth_stationarity: f64,
    /// `max_i |f(t_i)| / (mu_j W_i / (D_i - t_i)^2)`.
    pub compute_stationarity: f64,
}

impl KktResiduals {
    pub fn max_stationarity(&self) -> f64 {
        self.bandwidth_stationarity.max(self.compute_stationarity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// Outer iterations `N`.
    pub iterations: usize,
    /// Total energy after the initial bandwidth step, then after each compute
    /// step and each bandwidth step in turn.
    pub energy_trajectory: Vec<f64>,
    pub residuals: KktResiduals,
    pub duals: DualState,
    /// Price probes of the network-wide `lambda` search, summed over all
    /// bandwidth steps.
    pub lambda_probes: usize,
    /// `lambda_probes * M`: one partial-sum report per station per probe.
    pub signaling_msgs: usize,
    pub converged: bool,
}

impl SolveReport {
    pub fn final_energy(&self) -> f64 {
        *self.energy_trajectory.last().unwrap_or(&f64::NAN)
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub allocation: Allocation,
    pub report: SolveReport,
}

/// Stationarity residual of the bandwidth condition,
/// `g(x) = (N0 t / h) [2^z - z 2^z ln 2 - 1] + lambda`, `z = L / (t x)`.
///
/// Increasing in `x`, tends to `lambda` as `x` grows and to `-inf` as `x -> 0+`.
pub fn baa_stationarity(
    x: f64,
    t: f64,
    task: &TaskSpec,
    gain: f64,
    noise_density: f64,
    lambda: f64,
) -> f64 {
    lambda - noise_density * t / gain * rate_gap(task.data_bits / (t * x))
}

/// Stationarity residual of the compute condition,
/// `f(t) = (N0 x / h) [2^z - z 2^z ln 2 - 1] + mu W / (D - t)^2`, `z = L / (x t)`.
///
/// Increasing on `(0, D)`; `-inf` at `0+` and `+inf` at `D-` when `mu > 0`.
pub fn caa_stationarity(
    t: f64,
    x: f64,
    task: &TaskSpec,
    gain: f64,
    noise_density: f64,
    mu: f64,
) -> f64 {
    let slack = task.deadline - t;
    mu * task.cycles / (slack * slack) - noise_density * x / gain * rate_gap(task.data_bits / (x * t))
}

/// Bandwidth a user claims at price `lambda` for a fixed transmission budget.
pub fn baa_user_bandwidth(
    t: f64,
    task: &TaskSpec,
    gain: f64,
    noise_density: f64,
    lambda: f64,
    rel_tol: f64,
) -> Result<f64> {
    if task.data_bits == 0.0 {
        return Ok(0.0);
    }
    if !(lambda > 0.0 && t > 0.0) {
        return Err(Error::InvalidInput(format!(
            "bandwidth root needs lambda > 0 and t > 0, got lambda={lambda}, t={t}"
        )));
    }
    increasing_root_on_half_line(
        |x| baa_stationarity(x, t, task, gain, noise_density, lambda),
        task.data_bits / t,
        rel_tol,
        "bandwidth stationarity",
    )
}

/// Transmission budget a user takes at compute price `mu` for fixed bandwidth.
pub fn caa_user_time(
    x: f64,
    task: &TaskSpec,
    gain: f64,
    noise_density: f64,
    mu: f64,
    rel_tol: f64,
) -> Result<f64> {
    if !(mu > 0.0 && x > 0.0) {
        return Err(Error::InvalidInput(format!(
            "compute root needs mu > 0 and x > 0, got mu={mu}, x={x}"
        )));
    }
    increasing_root_on_interval(
        |t| caa_stationarity(t, x, task, gain, noise_density, mu),
        task.deadline,
        rel_tol,
        "compute stationarity",
    )
}

/// Total bandwidth requested by station `station`'s users at price `lambda`;
/// this partial sum is the only quantity a station reports during the
/// network-wide price search. The per-user claims are written into `x`.
pub fn station_bandwidth_demand(
    topology: &Topology,
    station: usize,
    t: &[f64],
    lambda: f64,
    rel_tol: f64,
    x: &mut [f64],
) -> Result<f64> {
    let n0 = topology.noise_density();
    let mut sum = 0.0;
    for &i in &topology.station(station).users {
        let u = topology.user(i);
        x[i] = baa_user_bandwidth(t[i], &u.task, u.gain, n0, lambda, rel_tol)?;
        sum += x[i];
    }
    Ok(sum)
}

/// Result of a bandwidth step.
#[derive(Debug, Clone)]
pub struct BandwidthStep {
    /// Full-length bandwidth vector; untouched entries are zero.
    pub x: Vec<f64>,
    pub lambda: f64,
    pub probes: usize,
}

/// Splits `budget` among `users` for fixed transmission budgets `t`.
///
/// The final vector is rescaled onto `sum x = budget` exactly; the rescale is
/// within the price-search tolerance.
pub fn split_bandwidth(
    topology: &Topology,
    users: &[usize],
    t: &[f64],
    budget: f64,
    settings: &SolverSettings,
) -> Result<BandwidthStep> {
    split_bandwidth_from(topology, users, t, budget, settings, settings.price_start, Refine::Bisect)
}

pub(crate) fn split_bandwidth_from(
    topology: &Topology,
    users: &[usize],
    t: &[f64],
    budget: f64,
    settings: &SolverSettings,
    start: f64,
    refine: Refine,
) -> Result<BandwidthStep> {
    let k = topology.num_users();
    if users.iter().all(|&i| topology.user(i).task.data_bits == 0.0) {
        let mut x = vec![0.0; k];
        for &i in users {
            x[i] = budget / users.len() as f64;
        }
        return Ok(BandwidthStep {
            x,
            lambda: 0.0,
            probes: 0,
        });
    }
    let n0 = topology.noise_density();
    let search = price_search_with(
        |lambda| {
            let mut local = Vec::with_capacity(users.len());
            for &i in users {
                let u = topology.user(i);
                local.push(baa_user_bandwidth(t[i], &u.task, u.gain, n0, lambda, settings.root_rel_tol)?);
            }
            let sum: f64 = local.iter().sum();
            Ok(((sum - budget) / budget, local))
        },
        start,
        settings.bandwidth_tol,
        "bandwidth price",
        refine,
    )?;
    let mut x = vec![0.0; k];
    for (&i, &xi) in users.iter().zip(&search.payload) {
        x[i] = xi;
    }
    rescale(&mut x, users, budget);
    Ok(BandwidthStep {
        x,
        lambda: search.price,
        probes: search.probes,
    })
}

/// Network-wide bandwidth allocation for fixed transmission budgets.
///
/// Each `lambda` probe collects one partial sum per station via
/// [`station_bandwidth_demand`]; the report's signaling counter is
/// `probes * M`.
pub fn baa(topology: &Topology, t: &[f64], settings: &SolverSettings) -> Result<BandwidthStep> {
    check_budgets(topology, t)?;
    let k = topology.num_users();
    let b = topology.bandwidth();
    let all: Vec<usize> = (0..k).collect();
    if all.iter().all(|&i| topology.user(i).task.data_bits == 0.0) {
        return split_bandwidth(topology, &all, t, b, settings);
    }
    let search = price_search(
        |lambda| {
            let mut x = vec![0.0; k];
            let mut total = 0.0;
            for j in 0..topology.num_stations() {
                total += station_bandwidth_demand(topology, j, t, lambda, settings.root_rel_tol, &mut x)?;
            }
            Ok(((total - b) / b, x))
        },
        settings.price_start,
        settings.bandwidth_tol,
        "bandwidth price",
    )?;
    let mut x = search.payload;
    rescale(&mut x, &all, b);
    Ok(BandwidthStep {
        x,
        lambda: search.price,
        probes: search.probes,
    })
}

/// Result of a compute step at one station.
#[derive(Debug, Clone)]
pub struct ComputeStep {
    /// `(user, t_i)` for every user of the station.
    pub budgets: Vec<(usize, f64)>,
    pub mu: f64,
    pub probes: usize,
}

/// Per-station compute allocation for fixed bandwidth.
///
/// Finds `mu_j` so that `sum W_i / (D_i - t_i) = C_j`, then rescales the
/// compute slack `q_i - W_i / D_i` so the constraint holds exactly.
pub fn caa(
    topology: &Topology,
    station: usize,
    x: &[f64],
    settings: &SolverSettings,
) -> Result<ComputeStep> {
    let s = topology.station(station);
    if s.users.is_empty() {
        return Ok(ComputeStep {
            budgets: Vec::new(),
            mu: 0.0,
            probes: 0,
        });
    }
    let min_load: f64 = s.users.iter().map(|&i| topology.user(i).task.min_compute()).sum();
    if min_load >= s.capacity {
        return Err(Error::InfeasibleStation {
            station,
            load: min_load,
            capacity: s.capacity,
            slack: s.capacity - min_load,
        });
    }
    let n0 = topology.noise_density();
    let active: Vec<usize> = s
        .users
        .iter()
        .copied()
        .filter(|&i| topology.user(i).task.data_bits > 0.0)
        .collect();
    for &i in &active {
        if !(x[i] > 0.0) {
            return Err(Error::InvalidInput(format!(
                "user {i} has bandwidth {} but non-zero data",
                x[i]
            )));
        }
    }
    if active.is_empty() {
        // Nobody transmits: every user runs at its minimum share, leftover idles.
        return Ok(ComputeStep {
            budgets: s.users.iter().map(|&i| (i, 0.0)).collect(),
            mu: 0.0,
            probes: 0,
        });
    }
    let cap = s.capacity;
    let search = price_search(
        |mu| {
            let mut load = min_load;
            let mut ts = Vec::with_capacity(active.len());
            for &i in &active {
                let u = topology.user(i);
                let t = caa_user_time(x[i], &u.task, u.gain, n0, mu, settings.root_rel_tol)?;
                load += u.task.cycles / (u.task.deadline - t) - u.task.min_compute();
                ts.push(t);
            }
            Ok(((load - cap) / cap, ts))
        },
        settings.price_start,
        settings.compute_tol,
        "compute price",
    )?;

    // exact projection of the slack onto its budget
    let target = cap - min_load;
    let slack_of = |i: usize, t: f64| {
        let task = &topology.user(i).task;
        task.cycles / (task.deadline - t) - task.min_compute()
    };
    let have: f64 = active
        .iter()
        .zip(&search.payload)
        .map(|(&i, &t)| slack_of(i, t))
        .sum();
    let scale = target / have;
    let mut budgets = Vec::with_capacity(s.users.len());
    let mut k = 0;
    for &i in &s.users {
        let task = &topology.user(i).task;
        if task.data_bits > 0.0 {
            let q = task.min_compute() + slack_of(i, search.payload[k]) * scale;
            budgets.push((i, task.deadline - task.cycles / q));
            k += 1;
        } else {
            budgets.push((i, 0.0));
        }
    }
    Ok(ComputeStep {
        budgets,
        mu: search.price,
        probes: search.probes,
    })
}

/// Starting transmission budgets: equal compute share `C_j / K_j`, or, when a
/// user's deadline cannot be met that way, `W_i / D_i` plus an equal share of
/// the station's slack.
pub fn initial_budgets(topology: &Topology) -> Result<Vec<f64>> {
    model::ensure_feasible(topology)?;
    let mut t = vec![0.0; topology.num_users()];
    for s in topology.stations() {
        let kj = s.users.len() as f64;
        let equal = s.capacity / kj;
        let equal_ok = s
            .users
            .iter()
            .all(|&i| equal > topology.user(i).task.min_compute());
        let slack = s.capacity
            - s.users
                .iter()
                .map(|&i| topology.user(i).task.min_compute())
                .sum::<f64>();
        for &i in &s.users {
            let task = &topology.user(i).task;
            let q = if equal_ok {
                equal
            } else {
                task.min_compute() + slack / kj
            };
            t[i] = task.deadline - task.cycles / q;
        }
    }
    Ok(t)
}

pub(crate) fn energy_over(topology: &Topology, users: impl Iterator<Item = usize>, x: &[f64], t: &[f64]) -> f64 {
    users
        .map(|i| {
            let u = topology.user(i);
            if u.task.data_bits == 0.0 {
                0.0
            } else {
                energy_raw(x[i], t[i], u.task.data_bits, u.gain, topology.noise_density())
            }
        })
        .sum()
}

/// State of the compute/bandwidth alternation after it stops.
#[derive(Debug, Clone)]
pub(crate) struct Alternation {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    pub mu: Vec<f64>,
    pub trajectory: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Runs the alternation over the users of `stations`: bandwidth step, then
/// `(compute step, bandwidth step)` pairs while the energy drop across a pair
/// exceeds `epsilon`.
pub(crate) fn alternate<S>(
    topology: &Topology,
    stations: &[usize],
    mut t: Vec<f64>,
    settings: &SolverSettings,
    mut bandwidth_step: S,
) -> Result<Alternation>
where
    S: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let users = || stations.iter().flat_map(|&j| topology.station(j).users.iter().copied());
    let mut x = bandwidth_step(&t)?;
    let mut e_x = energy_over(topology, users(), &x, &t);
    let mut trajectory = vec![e_x];
    let mut e_t = match settings.epsilon_mode {
        EpsilonMode::Abs => e_x + 2.0 * settings.epsilon,
        EpsilonMode::Rel => e_x * (1.0 + 2.0 * settings.epsilon),
    };
    let mut mu = vec![0.0; topology.num_stations()];
    let mut iterations = 0;
    let mut converged = true;
    while settings.gap(e_t, e_x) > settings.epsilon {
        if iterations >= settings.max_iterations {
            converged = false;
            break;
        }
        for &j in stations {
            let step = caa(topology, j, &x, settings)?;
            for (i, ti) in step.budgets {
                t[i] = ti;
            }
            mu[j] = step.mu;
        }
        e_t = energy_over(topology, users(), &x, &t);
        trajectory.push(e_t);
        x = bandwidth_step(&t)?;
        e_x = energy_over(topology, users(), &x, &t);
        trajectory.push(e_x);
        iterations += 1;
    }
    Ok(Alternation {
        x,
        t,
        mu,
        trajectory,
        iterations,
        converged,
    })
}

/// Joint allocation of bandwidth and compute minimizing total transmission
/// energy.
pub fn iterate(topology: &Topology, settings: &SolverSettings) -> Result<Solution> {
    settings.validate()?;
    let t0 = initial_budgets(topology)?;
    let stations: Vec<usize> = (0..topology.num_stations()).collect();
    let mut lambda = 0.0;
    let mut probes = 0;
    let alt = alternate(topology, &stations, t0, settings, |t| {
        let step = baa(topology, t, settings)?;
        lambda = step.lambda;
        probes += step.probes;
        Ok(step.x)
    })?;
    let allocation = Allocation::from_bandwidth_and_time(topology, alt.x, alt.t)?;
    let duals = DualState { lambda, mu: alt.mu };
    let residuals = kkt_residuals(topology, &allocation, &duals)?;
    Ok(Solution {
        allocation,
        report: SolveReport {
            iterations: alt.iterations,
            energy_trajectory: alt.trajectory,
            residuals,
            duals,
            lambda_probes: probes,
            signaling_msgs: probes * topology.num_stations(),
            converged: alt.converged,
        },
    })
}

/// Primal and normalized stationarity residuals of an allocation against
/// given prices.
pub fn kkt_residuals(topology: &Topology, allocation: &Allocation, duals: &DualState) -> Result<KktResiduals> {
    let k = topology.num_users();
    if allocation.len() != k || duals.mu.len() != topology.num_stations() {
        return Err(Error::InvalidInput(
            "allocation or duals do not match the topology".into(),
        ));
    }
    let n0 = topology.noise_density();
    let b = topology.bandwidth();
    let x = &allocation.bandwidth;
    let t = &allocation.tx_time;
    let mut out = KktResiduals {
        bandwidth: (x.iter().sum::<f64>() - b).abs() / b,
        ..Default::default()
    };
    for s in topology.stations() {
        if s.users.is_empty() {
            continue;
        }
        let load: f64 = s.users.iter().map(|&i| allocation.compute[i]).sum();
        out.compute = out.compute.max((load - s.capacity).abs() / s.capacity);
        let mu = duals.mu[s.id];
        for &i in &s.users {
            let u = topology.user(i);
            if u.task.data_bits == 0.0 {
                continue;
            }
            let g = baa_stationarity(x[i], t[i], &u.task, u.gain, n0, duals.lambda);
            out.bandwidth_stationarity = out.bandwidth_stationarity.max(g.abs() / duals.lambda);
            let slack = u.task.deadline - t[i];
            let price_term = mu * u.task.cycles / (slack * slack);
            let f = caa_stationarity(t[i], x[i], &u.task, u.gain, n0, mu);
            out.compute_stationarity = out.compute_stationarity.max(f.abs() / price_term);
        }
    }
    Ok(out)
}

fn rescale(x: &mut [f64], users: &[usize], budget: f64) {
    let sum: f64 = users.iter().map(|&i| x[i]).sum();
    if sum > 0.0 {
        let s = budget / sum;
        for &i in users {
            x[i] *= s;
        }
    }
}

fn check_budgets(topology: &Topology, t: &[f64]) -> Result<()> {
    if t.len() != topology.num_users() {
        return Err(Error::InvalidInput(format!(
            "{} budgets for {} users",
            t.len(),
            topology.num_users()
        )));
    }
    for (i, u) in topology.users().iter().enumerate() {
        if u.task.data_bits > 0.0 && !(t[i] > 0.0 && t[i] < u.task.deadline) {
            return Err(Error::InvalidInput(format!(
                "user {i}: budget {} outside (0, {})",
                t[i], u.task.deadline
            )));
        }
    }
    Ok(())
}
