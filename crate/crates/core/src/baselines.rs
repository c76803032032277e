//! Reference allocators that fix one or both resources to equal splits.

use crate::error::{Error, Result};
use crate::model::{self, Allocation, Topology};
use crate::solver::{self, SolverSettings};

/// A baseline allocation and the work it took.
#[derive(Debug, Clone)]
pub struct BaselineRun {
    pub allocation: Allocation,
    /// Outer alternation iterations (1 for single-step baselines, 0 for
    /// closed-form ones).
    pub iterations: usize,
    pub signaling_msgs: usize,
}

/// Transmission budgets implied by `q_i = C_j / K_j`. Users whose deadline
/// cannot be met that way are reported together.
pub fn equal_compute_budgets(topology: &Topology) -> Result<Vec<f64>> {
    let mut t = vec![0.0; topology.num_users()];
    let mut bad = Vec::new();
    for s in topology.stations() {
        let q = s.capacity / s.users.len() as f64;
        for &i in &s.users {
            let task = &topology.user(i).task;
            let ti = task.deadline - task.cycles / q;
            if ti > 0.0 {
                t[i] = ti;
            } else {
                bad.push(i);
            }
        }
    }
    if bad.is_empty() {
        Ok(t)
    } else {
        Err(Error::BaselineInfeasible { users: bad })
    }
}

fn equal_bandwidth(topology: &Topology) -> Vec<f64> {
    let k = topology.num_users();
    vec![topology.bandwidth() / k as f64; k]
}

/// Equal bandwidth `B / K` and equal compute `C_j / K_j` per user.
pub fn fixed(topology: &Topology) -> Result<Allocation> {
    let t = equal_compute_budgets(topology)?;
    Allocation::from_bandwidth_and_time(topology, equal_bandwidth(topology), t)
}

/// Equal bandwidth per user; compute optimized per station.
pub fn fixed_bandwidth(topology: &Topology, settings: &SolverSettings) -> Result<BaselineRun> {
    model::ensure_feasible(topology)?;
    let x = equal_bandwidth(topology);
    let mut t = vec![0.0; topology.num_users()];
    for j in 0..topology.num_stations() {
        for (i, ti) in solver::caa(topology, j, &x, settings)?.budgets {
            t[i] = ti;
        }
    }
    Ok(BaselineRun {
        allocation: Allocation::from_bandwidth_and_time(topology, x, t)?,
        iterations: 1,
        signaling_msgs: 0,
    })
}

/// Every station gets `B / M`; bandwidth and compute are optimized jointly
/// inside each station with no sharing between stations.
pub fn fixed_bandwidth_per_bs(topology: &Topology, settings: &SolverSettings) -> Result<BaselineRun> {
    settings.validate()?;
    let t0 = solver::initial_budgets(topology)?;
    let budget = topology.bandwidth() / topology.num_stations() as f64;
    let k = topology.num_users();
    let mut x = vec![0.0; k];
    let mut t = vec![0.0; k];
    let mut iterations = 0;
    for s in topology.stations() {
        if s.users.is_empty() {
            continue;
        }
        let alt = solver::alternate(topology, &[s.id], t0.clone(), settings, |t| {
            Ok(solver::split_bandwidth(topology, &s.users, t, budget, settings)?.x)
        })?;
        for &i in &s.users {
            x[i] = alt.x[i];
            t[i] = alt.t[i];
        }
        iterations = iterations.max(alt.iterations);
    }
    Ok(BaselineRun {
        allocation: Allocation::from_bandwidth_and_time(topology, x, t)?,
        iterations,
        signaling_msgs: 0,
    })
}

/// Equal compute `C_j / K_j` per user; bandwidth optimized network-wide.
pub fn fixed_computing(topology: &Topology, settings: &SolverSettings) -> Result<BaselineRun> {
    settings.validate()?;
    let t = equal_compute_budgets(topology)?;
    let step = solver::baa(topology, &t, settings)?;
    Ok(BaselineRun {
        allocation: Allocation::from_bandwidth_and_time(topology, step.x, t)?,
        iterations: 1,
        signaling_msgs: step.probes * topology.num_stations(),
    })
}
