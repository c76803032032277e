//! Allocation under fixed frequency reuse.
//!
//! Stations are partitioned into `F` co-channel groups. Every station of group
//! `f` may use the whole group band `B_f`, and the bands add up to `B`. The
//! bandwidth step becomes three nested price searches: the network price
//! `beta` on `sum_f B_f = B`, each group's band `B_f` chosen so its stations'
//! prices add up to `beta`, and each station's own price `lambda_j` splitting
//! `B_f` among its users. The compute step is unchanged.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Allocation, Topology};
use crate::roots::{price_search_with, Refine};
use crate::solver::{self, KktResiduals, SolveReport, SolverSettings};

/// Partition of stations into co-channel groups and the band of each group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReusePlan {
    pub groups: Vec<Vec<usize>>,
    /// `B_f` in Hz, one per group.
    pub budgets: Vec<f64>,
}

impl ReusePlan {
    /// Reuse factor `F`.
    pub fn factor(&self) -> usize {
        self.groups.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReuseDuals {
    /// Price of the total bandwidth constraint.
    pub beta: f64,
    /// Price of each station's band constraint; zero for empty stations.
    pub lambda_per_station: Vec<f64>,
}

/// Checks that `groups` partitions `0..num_stations` into non-empty groups.
pub fn validate_partition(groups: &[Vec<usize>], num_stations: usize) -> Result<()> {
    if groups.is_empty() {
        return Err(Error::InvalidInput("reuse partition has no groups".into()));
    }
    let mut seen = vec![false; num_stations];
    for (f, g) in groups.iter().enumerate() {
        if g.is_empty() {
            return Err(Error::InvalidInput(format!("reuse group {f} is empty")));
        }
        for &j in g {
            if j >= num_stations {
                return Err(Error::InvalidInput(format!(
                    "reuse group {f} names station {j}, only {num_stations} exist"
                )));
            }
            if std::mem::replace(&mut seen[j], true) {
                return Err(Error::InvalidInput(format!(
                    "station {j} appears in more than one reuse group"
                )));
            }
        }
    }
    if let Some(j) = seen.iter().position(|s| !s) {
        return Err(Error::InvalidInput(format!(
            "station {j} is not in any reuse group"
        )));
    }
    Ok(())
}

/// Bandwidth of one station's users under a fixed band.
#[derive(Debug, Clone)]
pub struct StationSplit {
    pub station: usize,
    /// `(user, x_i)` for the station's users.
    pub x: Vec<(usize, f64)>,
    pub lambda: f64,
    pub probes: usize,
}

/// Splits a station's band among its users for fixed transmission budgets.
/// A station without users returns an empty split with `lambda = 0`.
pub fn station_bandwidth_split(
    topology: &Topology,
    station: usize,
    t: &[f64],
    budget: f64,
    settings: &SolverSettings,
) -> Result<StationSplit> {
    station_split_from(topology, station, t, budget, settings, settings.price_start)
}

fn station_split_from(
    topology: &Topology,
    station: usize,
    t: &[f64],
    budget: f64,
    settings: &SolverSettings,
    start: f64,
) -> Result<StationSplit> {
    let users = &topology.station(station).users;
    if users.is_empty() {
        return Ok(StationSplit {
            station,
            x: Vec::new(),
            lambda: 0.0,
            probes: 0,
        });
    }
    if !(budget > 0.0) {
        return Err(Error::InvalidInput(format!(
            "station {station}: band must be > 0, got {budget}"
        )));
    }
    let step = solver::split_bandwidth_from(topology, users, t, budget, settings, start, Refine::Illinois)?;
    Ok(StationSplit {
        station,
        x: users.iter().map(|&i| (i, step.x[i])).collect(),
        lambda: step.lambda,
        probes: step.probes,
    })
}

/// Band of one co-channel group at network price `beta`.
#[derive(Debug, Clone)]
pub struct GroupBudget {
    pub budget: f64,
    pub splits: Vec<StationSplit>,
    /// `sum_{j in M_f} lambda_j` at `budget`.
    pub lambda_sum: f64,
    pub probes: usize,
    /// Probe pairs where a larger band gave a larger price sum.
    pub monotonicity_violations: usize,
}

/// Warm-start prices for the per-station searches, one per station.
type PriceCache = Vec<f64>;

fn group_splits(
    topology: &Topology,
    group: &[usize],
    t: &[f64],
    budget: f64,
    settings: &SolverSettings,
    cache: &mut PriceCache,
) -> Result<(f64, Vec<StationSplit>)> {
    let mut sum = 0.0;
    let mut splits = Vec::with_capacity(group.len());
    for &j in group {
        let start = if cache[j] > 0.0 { cache[j] } else { settings.price_start };
        let s = station_split_from(topology, j, t, budget, settings, start)?;
        if s.lambda > 0.0 {
            cache[j] = s.lambda;
        }
        sum += s.lambda;
        splits.push(s);
    }
    Ok((sum, splits))
}

/// Finds the group band `B_f` in `(0, B]` at which the group's station prices
/// add up to `beta`. If even the whole band leaves the sum above `beta`, the
/// band is capped at `B`. A group without users gets a zero band.
pub fn group_budget(
    topology: &Topology,
    group: &[usize],
    t: &[f64],
    beta: f64,
    settings: &SolverSettings,
) -> Result<GroupBudget> {
    let mut cache = vec![0.0; topology.num_stations()];
    group_budget_from(topology, group, t, beta, settings, None, &mut cache)
}

fn group_budget_from(
    topology: &Topology,
    group: &[usize],
    t: &[f64],
    beta: f64,
    settings: &SolverSettings,
    hint: Option<f64>,
    cache: &mut PriceCache,
) -> Result<GroupBudget> {
    if !(beta > 0.0) {
        return Err(Error::InvalidInput(format!("beta must be > 0, got {beta}")));
    }
    let total = topology.bandwidth();
    if group.iter().all(|&j| topology.station(j).users.is_empty()) {
        return Ok(GroupBudget {
            budget: 0.0,
            splits: group
                .iter()
                .map(|&j| StationSplit {
                    station: j,
                    x: Vec::new(),
                    lambda: 0.0,
                    probes: 0,
                })
                .collect(),
            lambda_sum: 0.0,
            probes: 0,
            monotonicity_violations: 0,
        });
    }
    let mut history: Vec<(f64, f64)> = Vec::new();
    let (sum_full, splits_full) = group_splits(topology, group, t, total, settings, cache)?;
    history.push((total, sum_full));
    if sum_full >= beta {
        return Ok(GroupBudget {
            budget: total,
            splits: splits_full,
            lambda_sum: sum_full,
            probes: 1,
            monotonicity_violations: 0,
        });
    }
    let start = hint.filter(|h| *h > 0.0 && *h < total).unwrap_or(0.5 * total);
    let search = price_search_with(
        |b| {
            if b >= total {
                // the bracket never needs more than the whole band
                return Ok(((sum_full - beta) / beta, (sum_full, splits_full.clone())));
            }
            let (sum, splits) = group_splits(topology, group, t, b, settings, cache)?;
            history.push((b, sum));
            Ok(((sum - beta) / beta, (sum, splits)))
        },
        start,
        settings.bandwidth_tol,
        "group band",
        Refine::Illinois,
    )?;
    history.sort_by(|a, b| a.0.total_cmp(&b.0));
    let violations = history.windows(2).filter(|w| w[1].1 > w[0].1).count();
    let (lambda_sum, splits) = search.payload;
    Ok(GroupBudget {
        budget: search.price.min(total),
        splits,
        lambda_sum,
        probes: search.probes + 1,
        monotonicity_violations: violations,
    })
}

/// Bandwidth step under frequency reuse.
#[derive(Debug, Clone)]
pub struct ReuseBandwidth {
    pub x: Vec<f64>,
    pub budgets: Vec<f64>,
    pub duals: ReuseDuals,
    pub beta_probes: usize,
    pub signaling_msgs: usize,
    pub monotonicity_violations: usize,
}

/// Nested price search for the group bands, the station prices and the user
/// bandwidths at fixed transmission budgets.
///
/// After the `beta` search the bands are rescaled to add up to `B` exactly and
/// every station split is recomputed at its final band.
pub fn reuse_bandwidth(
    topology: &Topology,
    groups: &[Vec<usize>],
    t: &[f64],
    settings: &SolverSettings,
) -> Result<ReuseBandwidth> {
    let mut cache = vec![0.0; topology.num_stations()];
    reuse_bandwidth_from(topology, groups, t, settings, None, &mut cache)
}

fn reuse_bandwidth_from(
    topology: &Topology,
    groups: &[Vec<usize>],
    t: &[f64],
    settings: &SolverSettings,
    warm: Option<(f64, &[f64])>,
    cache: &mut PriceCache,
) -> Result<ReuseBandwidth> {
    validate_partition(groups, topology.num_stations())?;
    let total = topology.bandwidth();
    let mut messages = 0usize;
    let mut violations = 0usize;
    let mut hints: Vec<Option<f64>> = match warm {
        Some((_, b)) => b.iter().map(|&v| Some(v)).collect(),
        None => vec![None; groups.len()],
    };
    let beta_start = warm.map(|(b, _)| b).unwrap_or(settings.price_start);
    let search = price_search_with(
        |beta| {
            let mut budgets = Vec::with_capacity(groups.len());
            for (f, g) in groups.iter().enumerate() {
                let gb = group_budget_from(topology, g, t, beta, settings, hints[f], cache)?;
                messages += gb.probes * g.len();
                violations += gb.monotonicity_violations;
                if gb.budget > 0.0 {
                    hints[f] = Some(gb.budget);
                }
                budgets.push(gb.budget);
            }
            let sum: f64 = budgets.iter().sum();
            messages += groups.len();
            Ok(((sum - total) / total, budgets))
        },
        beta_start,
        settings.bandwidth_tol,
        "total bandwidth price",
        Refine::Illinois,
    )?;
    let mut budgets = search.payload;
    let sum: f64 = budgets.iter().sum();
    for b in &mut budgets {
        *b *= total / sum;
    }
    let mut x = vec![0.0; topology.num_users()];
    let mut lambda = vec![0.0; topology.num_stations()];
    for (f, g) in groups.iter().enumerate() {
        for &j in g {
            if topology.station(j).users.is_empty() {
                continue;
            }
            let start = if cache[j] > 0.0 { cache[j] } else { settings.price_start };
            let s = station_split_from(topology, j, t, budgets[f], settings, start)?;
            for (i, xi) in s.x {
                x[i] = xi;
            }
            lambda[j] = s.lambda;
        }
    }
    let live: Vec<&Vec<usize>> = groups
        .iter()
        .filter(|g| g.iter().any(|&j| !topology.station(j).users.is_empty()))
        .collect();
    // a lone group holds the whole band for any beta up to its price sum
    let beta = match live.as_slice() {
        [g] => g.iter().map(|&j| lambda[j]).sum(),
        _ => search.price,
    };
    Ok(ReuseBandwidth {
        x,
        budgets,
        duals: ReuseDuals {
            beta,
            lambda_per_station: lambda,
        },
        beta_probes: search.probes,
        signaling_msgs: messages,
        monotonicity_violations: violations,
    })
}

#[derive(Debug, Clone)]
pub struct ReuseSolution {
    pub allocation: Allocation,
    pub plan: ReusePlan,
    pub duals: ReuseDuals,
    pub report: SolveReport,
    /// `max_f |sum_{j in M_f} lambda_j - beta| / beta` over groups with users.
    pub price_balance_residual: f64,
    /// `|sum_f B_f - B| / B`.
    pub budget_residual: f64,
    /// `max_j |sum_{i in S_j} x_i - B_f(j)| / B_f(j)`.
    pub station_band_residual: f64,
    pub monotonicity_violations: usize,
}

/// Joint allocation under a fixed reuse partition: the compute step and the
/// reuse bandwidth step alternate exactly as in [`solver::iterate`].
pub fn reuse_allocate(
    topology: &Topology,
    groups: &[Vec<usize>],
    settings: &SolverSettings,
) -> Result<ReuseSolution> {
    settings.validate()?;
    validate_partition(groups, topology.num_stations())?;
    let t0 = solver::initial_budgets(topology)?;
    let stations: Vec<usize> = (0..topology.num_stations()).collect();
    let mut last: Option<ReuseBandwidth> = None;
    let mut messages = 0usize;
    let mut beta_probes = 0usize;
    let mut violations = 0usize;
    let mut cache = vec![0.0; topology.num_stations()];
    let alt = solver::alternate(topology, &stations, t0, settings, |t| {
        let warm = last.as_ref().map(|l| (l.duals.beta, l.budgets.as_slice()));
        let step = reuse_bandwidth_from(topology, groups, t, settings, warm, &mut cache)?;
        messages += step.signaling_msgs;
        beta_probes += step.beta_probes;
        violations += step.monotonicity_violations;
        let x = step.x.clone();
        last = Some(step);
        Ok(x)
    })?;
    let last = last.expect("alternation runs at least one bandwidth step");
    let allocation = Allocation::from_bandwidth_and_time(topology, alt.x, alt.t)?;

    let beta = last.duals.beta;
    let mut price_balance_residual: f64 = 0.0;
    let mut station_band_residual: f64 = 0.0;
    for (f, g) in groups.iter().enumerate() {
        if g.iter().all(|&j| topology.station(j).users.is_empty()) {
            continue;
        }
        let sum: f64 = g.iter().map(|&j| last.duals.lambda_per_station[j]).sum();
        price_balance_residual = price_balance_residual.max((sum - beta).abs() / beta);
        for &j in g {
            let users = &topology.station(j).users;
            if users.is_empty() {
                continue;
            }
            let used: f64 = users.iter().map(|&i| allocation.bandwidth[i]).sum();
            station_band_residual =
                station_band_residual.max((used - last.budgets[f]).abs() / last.budgets[f]);
        }
    }
    let total = topology.bandwidth();
    let budget_residual = (last.budgets.iter().sum::<f64>() - total).abs() / total;

    let mut residuals = KktResiduals {
        bandwidth: station_band_residual,
        ..Default::default()
    };
    for s in topology.stations() {
        if s.users.is_empty() {
            continue;
        }
        let load: f64 = s.users.iter().map(|&i| allocation.compute[i]).sum();
        residuals.compute = residuals.compute.max((load - s.capacity).abs() / s.capacity);
        let mu = alt.mu[s.id];
        let lambda = last.duals.lambda_per_station[s.id];
        for &i in &s.users {
            let u = topology.user(i);
            if u.task.data_bits == 0.0 {
                continue;
            }
            let (x, t) = (allocation.bandwidth[i], allocation.tx_time[i]);
            let n0 = topology.noise_density();
            let g = solver::baa_stationarity(x, t, &u.task, u.gain, n0, lambda);
            residuals.bandwidth_stationarity = residuals.bandwidth_stationarity.max(g.abs() / lambda);
            let slack = u.task.deadline - t;
            let f = solver::caa_stationarity(t, x, &u.task, u.gain, n0, mu);
            residuals.compute_stationarity = residuals
                .compute_stationarity
                .max(f.abs() / (mu * u.task.cycles / (slack * slack)));
        }
    }

    let duals = last.duals.clone();
    Ok(ReuseSolution {
        allocation,
        plan: ReusePlan {
            groups: groups.to_vec(),
            budgets: last.budgets.clone(),
        },
        report: SolveReport {
            iterations: alt.iterations,
            energy_trajectory: alt.trajectory,
            residuals,
            duals: solver::DualState {
                lambda: beta,
                mu: alt.mu,
            },
            lambda_probes: beta_probes,
            signaling_msgs: messages,
            converged: alt.converged,
        },
        duals,
        price_balance_residual,
        budget_residual,
        station_band_residual,
        monotonicity_violations: violations,
    })
}

/// Parses a partition such as `"0,1;2,3"` (groups separated by `;`).
pub fn parse_partition(s: &str) -> Result<Vec<Vec<usize>>> {
    s.split(';')
        .map(|g| {
            g.split(',')
                .map(|v| {
                    v.trim().parse::<usize>().map_err(|e| {
                        Error::Config(format!("bad station index {v:?} in partition {s:?}: {e}"))
                    })
                })
                .collect()
        })
        .collect()
}
