//! Domain types and closed-form link/compute formulas.
//!
//! All quantities are SI linear units: Hz, W, W/Hz, bits, CPU cycles,
//! seconds and joules. The only place decibels appear is
//! [`dbm_per_hz_to_watts`], used when reading configuration.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Above this exponent `exp(y)` overflows an `f64`.
pub(crate) const EXP_OVERFLOW: f64 = 709.0;

/// Offloading job of one user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    /// Input size `L` in bits.
    pub data_bits: f64,
    /// Compute demand `W` in CPU cycles.
    pub cycles: f64,
    /// Completion deadline `D` in seconds.
    pub deadline: f64,
}

impl TaskSpec {
    pub fn new(data_bits: f64, cycles: f64, deadline: f64) -> Self {
        Self {
            data_bits,
            cycles,
            deadline,
        }
    }

    /// Smallest compute share that still meets the deadline with zero
    /// transmission time, `W / D`.
    pub fn min_compute(&self) -> f64 {
        self.cycles / self.deadline
    }

    fn validate(&self, user: usize) -> Result<()> {
        let TaskSpec {
            data_bits,
            cycles,
            deadline,
        } = *self;
        if !(data_bits.is_finite() && data_bits >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "user {user}: data size must be finite and >= 0, got {data_bits}"
            )));
        }
        if !(cycles.is_finite() && cycles > 0.0) {
            return Err(Error::InvalidInput(format!(
                "user {user}: cycle demand must be finite and > 0, got {cycles}"
            )));
        }
        if !(deadline.is_finite() && deadline > 0.0) {
            return Err(Error::InvalidInput(format!(
                "user {user}: deadline must be finite and > 0, got {deadline}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserRecord {
    pub id: usize,
    pub task: TaskSpec,
    /// Linear channel power gain to the serving station (pathloss x fading).
    pub gain: f64,
    pub station: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationRecord {
    pub id: usize,
    /// MEC server capacity in CPU cycles per second.
    pub capacity: f64,
    /// Indices of the users served by this station, ascending.
    pub users: Vec<usize>,
}

/// A validated multi-cell instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    users: Vec<UserRecord>,
    stations: Vec<StationRecord>,
    bandwidth: f64,
    noise_density: f64,
}

impl Topology {
    /// Builds a topology from user records and per-station capacities.
    /// Station membership lists are derived from `UserRecord::station`.
    pub fn new(
        users: Vec<UserRecord>,
        capacities: &[f64],
        bandwidth: f64,
        noise_density: f64,
    ) -> Result<Self> {
        let mut stations: Vec<StationRecord> = capacities
            .iter()
            .enumerate()
            .map(|(id, &capacity)| StationRecord {
                id,
                capacity,
                users: Vec::new(),
            })
            .collect();
        for (i, u) in users.iter().enumerate() {
            let s = stations.get_mut(u.station).ok_or_else(|| {
                Error::InvalidInput(format!(
                    "user {i} references station {} but only {} exist",
                    u.station,
                    capacities.len()
                ))
            })?;
            s.users.push(i);
        }
        Self::from_parts(users, stations, bandwidth, noise_density)
    }

    /// Builds a topology from explicit parts, checking every invariant.
    pub fn from_parts(
        users: Vec<UserRecord>,
        stations: Vec<StationRecord>,
        bandwidth: f64,
        noise_density: f64,
    ) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::InvalidInput(format!(
                "bandwidth must be finite and > 0, got {bandwidth}"
            )));
        }
        if !(noise_density.is_finite() && noise_density > 0.0) {
            return Err(Error::InvalidInput(format!(
                "noise density must be finite and > 0, got {noise_density}"
            )));
        }
        if stations.is_empty() {
            return Err(Error::InvalidInput("at least one station required".into()));
        }
        for (i, u) in users.iter().enumerate() {
            if u.id != i {
                return Err(Error::InvalidInput(format!(
                    "user at position {i} carries id {}",
                    u.id
                )));
            }
            u.task.validate(i)?;
            if !(u.gain.is_finite() && u.gain > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "user {i}: channel gain must be finite and > 0, got {}",
                    u.gain
                )));
            }
            if u.station >= stations.len() {
                return Err(Error::InvalidInput(format!(
                    "user {i}: station {} out of range",
                    u.station
                )));
            }
        }
        let mut seen = vec![false; users.len()];
        for (j, s) in stations.iter().enumerate() {
            if s.id != j {
                return Err(Error::InvalidInput(format!(
                    "station at position {j} carries id {}",
                    s.id
                )));
            }
            if !(s.capacity.is_finite() && s.capacity > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "station {j}: capacity must be finite and > 0, got {}",
                    s.capacity
                )));
            }
            for &i in &s.users {
                if i >= users.len() || users[i].station != j {
                    return Err(Error::InvalidInput(format!(
                        "station {j} lists user {i} which is not associated with it"
                    )));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::InvalidInput(format!("user {i} listed twice")));
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidInput(format!(
                "user {i} missing from its station's list"
            )));
        }
        Ok(Self {
            users,
            stations,
            bandwidth,
            noise_density,
        })
    }

    pub fn users(&self) -> &[UserRecord] {
        &self.users
    }

    pub fn stations(&self) -> &[StationRecord] {
        &self.stations
    }

    pub fn user(&self, i: usize) -> &UserRecord {
        &self.users[i]
    }

    pub fn station(&self, j: usize) -> &StationRecord {
        &self.stations[j]
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_stations(&self) -> usize {
        self.stations.len()
    }

    /// Total system bandwidth `B` in Hz.
    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// Noise power spectral density `N0` in W/Hz.
    pub fn noise_density(&self) -> f64 {
        self.noise_density
    }

    /// Returns a copy with every channel gain multiplied by `factor`.
    pub fn with_scaled_gains(&self, factor: f64) -> Result<Self> {
        let users = self
            .users
            .iter()
            .map(|u| UserRecord {
                gain: u.gain * factor,
                ..*u
            })
            .collect();
        Self::from_parts(
            users,
            self.stations.clone(),
            self.bandwidth,
            self.noise_density,
        )
    }

    /// Energy of user `i` at bandwidth `x` and transmission budget `t`.
    pub fn energy_of(&self, i: usize, x: f64, t: f64) -> f64 {
        let u = &self.users[i];
        energy_raw(x, t, u.task.data_bits, u.gain, self.noise_density)
    }
}

/// Per-user resource assignment together with the implied power and energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    /// Bandwidth `x_i` in Hz.
    pub bandwidth: Vec<f64>,
    /// Transmission-time budget `t_i = D_i - W_i / q_i` in seconds.
    pub tx_time: Vec<f64>,
    /// Compute share `q_i` in cycles/s.
    pub compute: Vec<f64>,
    /// Minimal transmit power `P_i` in W.
    pub power: Vec<f64>,
    /// Transmission energy `E_i = P_i t_i` in J.
    pub energy: Vec<f64>,
}

impl Allocation {
    /// Completes an allocation from bandwidth and transmission budgets.
    pub fn from_bandwidth_and_time(topology: &Topology, x: Vec<f64>, t: Vec<f64>) -> Result<Self> {
        let k = topology.num_users();
        if x.len() != k || t.len() != k {
            return Err(Error::InvalidInput(format!(
                "allocation length mismatch: {} users, {} bandwidths, {} budgets",
                k,
                x.len(),
                t.len()
            )));
        }
        let n0 = topology.noise_density();
        let mut compute = Vec::with_capacity(k);
        let mut power = Vec::with_capacity(k);
        let mut energy = Vec::with_capacity(k);
        for (i, u) in topology.users().iter().enumerate() {
            if u.task.data_bits == 0.0 && t[i] >= 0.0 && t[i] < u.task.deadline {
                // no airtime needed; t = 0 is allowed
                compute.push(u.task.cycles / (u.task.deadline - t[i]));
                power.push(0.0);
                energy.push(0.0);
                continue;
            }
            compute.push(q_from_t(t[i], &u.task)?);
            let p = min_power(x[i], t[i], &u.task, u.gain, n0)?;
            power.push(p);
            energy.push(p * t[i]);
        }
        Ok(Self {
            bandwidth: x,
            tx_time: t,
            compute,
            power,
            energy,
        })
    }

    pub fn total_energy(&self) -> f64 {
        self.energy.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.bandwidth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bandwidth.is_empty()
    }
}

/// Converts a noise density in dBm/Hz to W/Hz.
pub fn dbm_per_hz_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "{name} must be finite and > 0, got {v}"
        )))
    }
}

/// Shannon rate `x log2(1 + P h / (x N0))` in bits/s.
pub fn achievable_rate(x: f64, power: f64, gain: f64, noise_density: f64) -> Result<f64> {
    check_positive("bandwidth", x)?;
    check_positive("gain", gain)?;
    check_positive("noise density", noise_density)?;
    if !(power.is_finite() && power >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "power must be finite and >= 0, got {power}"
        )));
    }
    let snr = power * gain / (x * noise_density);
    Ok(x * snr.ln_1p() / LN_2)
}

/// Smallest power meeting rate `L / t` over bandwidth `x`:
/// `(N0 x / h) (2^(L / (x t)) - 1)`.
pub fn min_power(x: f64, t: f64, task: &TaskSpec, gain: f64, noise_density: f64) -> Result<f64> {
    check_positive("bandwidth", x)?;
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::InvalidInput(format!(
            "transmission budget must be > 0 (compute share too small), got {t}"
        )));
    }
    check_positive("gain", gain)?;
    check_positive("noise density", noise_density)?;
    let y = task.data_bits * LN_2 / (x * t);
    if y > EXP_OVERFLOW {
        return Ok(f64::INFINITY);
    }
    Ok(noise_density * x / gain * y.exp_m1())
}

/// Transmission energy `(N0 / h) x t (2^(L / (x t)) - 1)`.
///
/// Returns `+inf` once `2^(L / (x t))` leaves the `f64` range; callers treat
/// that as "worse than any finite point".
pub fn user_energy(x: f64, t: f64, task: &TaskSpec, gain: f64, noise_density: f64) -> Result<f64> {
    check_positive("bandwidth", x)?;
    check_positive("transmission budget", t)?;
    check_positive("gain", gain)?;
    check_positive("noise density", noise_density)?;
    Ok(energy_raw(x, t, task.data_bits, gain, noise_density))
}

#[inline]
pub(crate) fn energy_raw(x: f64, t: f64, data_bits: f64, gain: f64, noise_density: f64) -> f64 {
    let s = x * t;
    let y = data_bits * LN_2 / s;
    if y > EXP_OVERFLOW {
        return f64::INFINITY;
    }
    noise_density / gain * s * y.exp_m1()
}

/// `1 - 2^z (1 - z ln 2)`, the (positive) magnitude of the bracket that appears
/// in both stationarity conditions. Equals `sum_{n>=2} (n-1) y^n / n!` with
/// `y = z ln 2`.
#[inline]
pub(crate) fn rate_gap(z: f64) -> f64 {
    let y = z * LN_2;
    if y > EXP_OVERFLOW {
        return f64::INFINITY;
    }
    if y < 0.5 {
        // series avoids cancellation near zero
        let mut term = y;
        let mut sum = 0.0;
        for n in 2..40 {
            term *= y / n as f64;
            let add = (n - 1) as f64 * term;
            sum += add;
            if add < sum * 1e-18 {
                break;
            }
        }
        sum
    } else {
        1.0 + y.exp() * (y - 1.0)
    }
}

/// Transmission budget from compute share: `t = D - W / q`.
pub fn t_from_q(q: f64, task: &TaskSpec) -> Result<f64> {
    if !(q.is_finite() && q > task.min_compute()) {
        return Err(Error::InvalidInput(format!(
            "compute share {q} does not exceed W/D = {}; deadline unmeetable",
            task.min_compute()
        )));
    }
    Ok(task.deadline - task.cycles / q)
}

/// Compute share from transmission budget: `q = W / (D - t)`.
pub fn q_from_t(t: f64, task: &TaskSpec) -> Result<f64> {
    if !(t.is_finite() && t > 0.0 && t < task.deadline) {
        return Err(Error::InvalidInput(format!(
            "transmission budget {t} outside (0, {})",
            task.deadline
        )));
    }
    Ok(task.cycles / (task.deadline - t))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationFeasibility {
    pub station: usize,
    /// `sum_{i in S_j} W_i / D_i`, the compute rate needed with zero airtime.
    pub min_load: f64,
    pub capacity: f64,
    /// `capacity - min_load`; strictly positive iff feasible.
    pub slack: f64,
    pub feasible: bool,
}

/// Necessary and sufficient per-station condition for a feasible compute
/// allocation: `sum W_i / D_i < C_j`.
pub fn check_feasibility(topology: &Topology) -> Vec<StationFeasibility> {
    topology
        .stations()
        .iter()
        .map(|s| {
            let min_load: f64 = s
                .users
                .iter()
                .map(|&i| topology.user(i).task.min_compute())
                .sum();
            let slack = s.capacity - min_load;
            StationFeasibility {
                station: s.id,
                min_load,
                capacity: s.capacity,
                slack,
                feasible: slack > 0.0,
            }
        })
        .collect()
}

/// Fails with the first infeasible station, if any.
pub fn ensure_feasible(topology: &Topology) -> Result<()> {
    match check_feasibility(topology).into_iter().find(|f| !f.feasible) {
        Some(f) => Err(Error::InfeasibleStation {
            station: f.station,
            load: f.min_load,
            capacity: f.capacity,
            slack: f.slack,
        }),
        None => Ok(()),
    }
}
