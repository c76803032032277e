//! Centralized reference solver for small instances.
//!
//! Works in `(x, q)` coordinates, where both resource constraints are
//! simplices: `sum x = budget` per bandwidth block and
//! `sum_{i in S_j} q_i = C_j` with `q_i > W_i / D_i` per station. The energy is
//! jointly convex there (it is convex and non-increasing in `t`, and
//! `t = D - W / q` is concave). The method is a diagonally scaled projected
//! gradient: the step is the gradient divided by the Hessian diagonal and the
//! projection is exact in that same metric (sort-based, no bisection).
//!
//! None of this shares code with [`crate::solver`] beyond the energy formula.

use std::f64::consts::LN_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, Allocation, Topology, EXP_OVERFLOW};
use crate::par::{self, Execution};
use crate::reuse;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleSettings {
    pub max_iterations: usize,
    /// Stop once the relative gradient spread inside every block is below this.
    pub kkt_tol: f64,
    /// Also stop after several consecutive steps with relative energy change
    /// below this.
    pub tolerance: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self {
            max_iterations: 50_000,
            kkt_tol: 1e-10,
            tolerance: 1e-15,
            armijo: 1e-4,
            restarts: 3,
            seed: 0x5eed,
        }
    }
}

impl OracleSettings {
    fn validate(&self) -> Result<()> {
        if !(self.kkt_tol > 0.0 && self.tolerance > 0.0) {
            return Err(Error::InvalidInput("oracle tolerances must be > 0".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidInput("oracle needs at least one start".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub allocation: Allocation,
    pub energy: f64,
    /// Energies reached from each start, best first is not implied.
    pub restart_energies: Vec<f64>,
    pub iterations: usize,
    /// Largest relative gradient spread over all blocks at the returned point.
    pub kkt: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct P5OracleSolution {
    pub allocation: Allocation,
    /// `B_f` per group.
    pub budgets: Vec<f64>,
    pub energy: f64,
    pub outer_iterations: usize,
    pub converged: bool,
}

/// Users sharing one bandwidth total.
#[derive(Debug, Clone)]
struct Block {
    users: Vec<usize>,
    total: f64,
}

/// Value and first/second derivatives of one user's energy in `(x, q)`.
#[derive(Debug, Clone, Copy)]
struct Local {
    e: f64,
    gx: f64,
    gq: f64,
    hx: f64,
    hq: f64,
}

fn local(topology: &Topology, i: usize, x: f64, q: f64) -> Local {
    let u = topology.user(i);
    let (l, w, d) = (u.task.data_bits, u.task.cycles, u.task.deadline);
    let c = topology.noise_density() / u.gain;
    let t = d - w / q;
    let s = x * t;
    if !(x > 0.0 && t > 0.0) {
        return Local {
            e: f64::INFINITY,
            gx: f64::NAN,
            gq: f64::NAN,
            hx: f64::NAN,
            hq: f64::NAN,
        };
    }
    let y = l * LN_2 / s;
    if y > EXP_OVERFLOW {
        return Local {
            e: f64::INFINITY,
            gx: f64::NAN,
            gq: f64::NAN,
            hx: f64::NAN,
            hq: f64::NAN,
        };
    }
    let ey = y.exp();
    // e(s) = c s (e^y - 1), y = L ln2 / s
    let e = c * s * y.exp_m1();
    let e_s = c * (y.exp_m1() - y * ey);
    let e_ss = c * y * y * ey / s;
    let dt = w / (q * q);
    let ddt = -2.0 * w / (q * q * q);
    Local {
        e,
        gx: t * e_s,
        gq: x * e_s * dt,
        hx: t * t * e_ss,
        hq: x * x * e_ss * dt * dt + x * e_s * ddt,
    }
}

/// Exact minimizer of `sum w_i (v_i - y_i)^2` over `sum v_i = total`,
/// `v_i >= lo_i`. Breakpoints of the piecewise-linear total are visited in
/// sorted order.
pub(crate) fn project_weighted_simplex(y: &[f64], w: &[f64], lo: &[f64], total: f64) -> Vec<f64> {
    let n = y.len();
    debug_assert!(n > 0 && w.len() == n && lo.len() == n);
    // v_i(nu) = max(lo_i, y_i - nu / w_i); lo_i is reached at nu >= b_i
    let mut order: Vec<usize> = (0..n).collect();
    let b: Vec<f64> = (0..n).map(|i| w[i] * (y[i] - lo[i])).collect();
    order.sort_by(|&a, &c| b[a].total_cmp(&b[c]));
    let mut active_y: f64 = y.iter().sum();
    let mut active_inv_w: f64 = w.iter().map(|wi| 1.0 / wi).sum();
    let mut clamped_lo = 0.0;
    let mut nu = f64::NAN;
    for k in 0..=n {
        // indices order[..k] sit at their lower bound
        if active_inv_w > 0.0 {
            let cand = (active_y + clamped_lo - total) / active_inv_w;
            let lower = if k == 0 { f64::NEG_INFINITY } else { b[order[k - 1]] };
            let upper = if k == n { f64::INFINITY } else { b[order[k]] };
            if cand >= lower && cand <= upper {
                nu = cand;
                break;
            }
        }
        if k < n {
            let i = order[k];
            active_y -= y[i];
            active_inv_w -= 1.0 / w[i];
            clamped_lo += lo[i];
        }
    }
    if nu.is_nan() {
        // total <= sum lo: everything at its bound
        return lo.to_vec();
    }
    (0..n).map(|i| (y[i] - nu / w[i]).max(lo[i])).collect()
}

struct Problem<'a> {
    topology: &'a Topology,
    xblocks: Vec<Block>,
    /// Stations with users.
    qblocks: Vec<usize>,
}

impl Problem<'_> {
    fn energy(&self, x: &[f64], q: &[f64]) -> f64 {
        let mut e = 0.0;
        for b in &self.xblocks {
            for &i in &b.users {
                e += local(self.topology, i, x[i], q[i]).e;
            }
        }
        e
    }

    fn project(&self, x: &[f64], q: &[f64], hx: &[f64], hq: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let topo = self.topology;
        let mut px = x.to_vec();
        let mut pq = q.to_vec();
        for b in &self.xblocks {
            let y: Vec<f64> = b.users.iter().map(|&i| x[i]).collect();
            let w: Vec<f64> = b.users.iter().map(|&i| hx[i]).collect();
            let lo = vec![0.0; y.len()];
            for (k, v) in project_weighted_simplex(&y, &w, &lo, b.total).into_iter().enumerate() {
                px[b.users[k]] = v;
            }
        }
        for &j in &self.qblocks {
            let s = topo.station(j);
            let y: Vec<f64> = s.users.iter().map(|&i| q[i]).collect();
            let w: Vec<f64> = s.users.iter().map(|&i| hq[i]).collect();
            let lo: Vec<f64> = s.users.iter().map(|&i| topo.user(i).task.min_compute()).collect();
            for (k, v) in project_weighted_simplex(&y, &w, &lo, s.capacity).into_iter().enumerate() {
                pq[s.users[k]] = v;
            }
        }
        (px, pq)
    }

    /// Largest `(max g - min g) / |mean g|` over all blocks.
    fn spread(&self, gx: &[f64], gq: &[f64]) -> f64 {
        let topo = self.topology;
        let spread_of = |vals: &mut dyn Iterator<Item = f64>| {
            let v: Vec<f64> = vals.collect();
            if v.len() < 2 {
                return 0.0;
            }
            let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            (max - min) / mean.abs()
        };
        let mut worst: f64 = 0.0;
        for b in &self.xblocks {
            worst = worst.max(spread_of(&mut b.users.iter().map(|&i| gx[i])));
        }
        for &j in &self.qblocks {
            worst = worst.max(spread_of(&mut topo.station(j).users.iter().map(|&i| gq[i])));
        }
        worst
    }

    fn start(&self, restart: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let topo = self.topology;
        let k = topo.num_users();
        let mut x = vec![0.0; k];
        let mut q = vec![0.0; k];
        for b in &self.xblocks {
            for &i in &b.users {
                x[i] = b.total / b.users.len() as f64;
            }
        }
        for &j in &self.qblocks {
            let s = topo.station(j);
            let kj = s.users.len() as f64;
            let min_load: f64 = s.users.iter().map(|&i| topo.user(i).task.min_compute()).sum();
            let equal = s.capacity / kj;
            let equal_ok = s.users.iter().all(|&i| equal > topo.user(i).task.min_compute());
            for &i in &s.users {
                q[i] = if equal_ok {
                    equal
                } else {
                    topo.user(i).task.min_compute() + (s.capacity - min_load) / kj
                };
            }
        }
        if restart == 0 {
            return (x, q);
        }
        // blend halfway toward a random interior point
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(restart as u64);
        for b in &self.xblocks {
            let w: Vec<f64> = b.users.iter().map(|_| rng.gen_range(0.05..1.0)).collect();
            let sw: f64 = w.iter().sum();
            for (k, &i) in b.users.iter().enumerate() {
                x[i] = 0.5 * x[i] + 0.5 * b.total * w[k] / sw;
            }
        }
        for &j in &self.qblocks {
            let s = topo.station(j);
            let min_load: f64 = s.users.iter().map(|&i| topo.user(i).task.min_compute()).sum();
            let slack = s.capacity - min_load;
            let w: Vec<f64> = s.users.iter().map(|_| rng.gen_range(0.05..1.0)).collect();
            let sw: f64 = w.iter().sum();
            for (k, &i) in s.users.iter().enumerate() {
                let r = topo.user(i).task.min_compute() + slack * w[k] / sw;
                q[i] = 0.5 * q[i] + 0.5 * r;
            }
        }
        (x, q)
    }

    fn descend(&self, mut x: Vec<f64>, mut q: Vec<f64>, settings: &OracleSettings) -> Descent {
        let users: Vec<usize> = self.xblocks.iter().flat_map(|b| b.users.iter().copied()).collect();
        let k = self.topology.num_users();
        let (mut gx, mut gq, mut hx, mut hq) = (vec![0.0; k], vec![0.0; k], vec![1.0; k], vec![1.0; k]);
        let mut energy = self.energy(&x, &q);
        let mut step: f64 = 1.0;
        let mut flat = 0;
        let mut iterations = 0;
        let mut kkt = f64::INFINITY;
        while iterations < settings.max_iterations {
            for &i in &users {
                let l = local(self.topology, i, x[i], q[i]);
                gx[i] = l.gx;
                gq[i] = l.gq;
                hx[i] = l.hx;
                hq[i] = l.hq;
            }
            kkt = self.spread(&gx, &gq);
            if kkt <= settings.kkt_tol {
                break;
            }
            iterations += 1;
            let mut alpha = (2.0 * step).min(1.0);
            let mut accepted = None;
            for _ in 0..80 {
                let yx: Vec<f64> = (0..k).map(|i| x[i] - alpha * gx[i] / hx[i]).collect();
                let yq: Vec<f64> = (0..k).map(|i| q[i] - alpha * gq[i] / hq[i]).collect();
                let (nx, nq) = self.project(&yx, &yq, &hx, &hq);
                let e = self.energy(&nx, &nq);
                let decrease: f64 = users
                    .iter()
                    .map(|&i| gx[i] * (nx[i] - x[i]) + gq[i] * (nq[i] - q[i]))
                    .sum();
                if e.is_finite() && e <= energy + settings.armijo * decrease {
                    accepted = Some((nx, nq, e));
                    break;
                }
                alpha *= 0.5;
            }
            let Some((nx, nq, e)) = accepted else {
                break;
            };
            step = alpha;
            let change = (energy - e).abs() / energy;
            x = nx;
            q = nq;
            energy = e;
            if change < settings.tolerance {
                flat += 1;
                if flat >= 5 {
                    break;
                }
            } else {
                flat = 0;
            }
        }
        Descent {
            x,
            q,
            energy,
            iterations,
            kkt,
        }
    }

    /// Estimated bandwidth price of each x-block: minus the mean gradient.
    fn block_prices(&self, x: &[f64], q: &[f64]) -> Vec<f64> {
        self.xblocks
            .iter()
            .map(|b| {
                let sum: f64 = b.users.iter().map(|&i| local(self.topology, i, x[i], q[i]).gx).sum();
                -sum / b.users.len() as f64
            })
            .collect()
    }
}

struct Descent {
    x: Vec<f64>,
    q: Vec<f64>,
    energy: f64,
    iterations: usize,
    kkt: f64,
}

fn require_positive_data(topology: &Topology) -> Result<()> {
    if let Some(u) = topology.users().iter().find(|u| u.task.data_bits <= 0.0) {
        return Err(Error::InvalidInput(format!(
            "oracle needs L > 0 for every user (user {})",
            u.id
        )));
    }
    Ok(())
}

fn to_allocation(topology: &Topology, x: Vec<f64>, q: &[f64]) -> Result<Allocation> {
    let t = topology
        .users()
        .iter()
        .enumerate()
        .map(|(i, u)| model::t_from_q(q[i], &u.task))
        .collect::<Result<Vec<_>>>()?;
    Allocation::from_bandwidth_and_time(topology, x, t)
}

/// Centralized minimum-energy allocation with one shared bandwidth total.
pub fn solve_p2_oracle(topology: &Topology, settings: &OracleSettings) -> Result<OracleSolution> {
    settings.validate()?;
    model::ensure_feasible(topology)?;
    require_positive_data(topology)?;
    if topology.num_users() == 0 {
        return Err(Error::InvalidInput("no users".into()));
    }
    let problem = Problem {
        topology,
        xblocks: vec![Block {
            users: (0..topology.num_users()).collect(),
            total: topology.bandwidth(),
        }],
        qblocks: nonempty_stations(topology),
    };
    let runs = par::map_indexed(settings.restarts, Execution::Parallel, |r| {
        let (x, q) = problem.start(r, settings.seed);
        problem.descend(x, q, settings)
    });
    let restart_energies: Vec<f64> = runs.iter().map(|d| d.energy).collect();
    let best = runs
        .into_iter()
        .min_by(|a, b| a.energy.total_cmp(&b.energy))
        .expect("at least one restart");
    let allocation = to_allocation(topology, best.x, &best.q)?;
    Ok(OracleSolution {
        energy: allocation.total_energy(),
        allocation,
        restart_energies,
        iterations: best.iterations,
        kkt: best.kkt,
        converged: best.kkt <= 1e-6,
    })
}

fn nonempty_stations(topology: &Topology) -> Vec<usize> {
    topology
        .stations()
        .iter()
        .filter(|s| !s.users.is_empty())
        .map(|s| s.id)
        .collect()
}

/// Value of the group bands `budgets`: each station with users solves its own
/// problem with band `B_f(j)`. Returns the energy, the per-group derivative
/// `-sum_{j in M_f} lambda_j` and the primal point.
struct BandValue {
    energy: f64,
    grad: Vec<f64>,
    x: Vec<f64>,
    q: Vec<f64>,
}

fn band_value(
    topology: &Topology,
    groups: &[Vec<usize>],
    budgets: &[f64],
    warm: Option<(&[f64], &[f64])>,
    settings: &OracleSettings,
) -> BandValue {
    let k = topology.num_users();
    let mut x = vec![0.0; k];
    let mut q = vec![0.0; k];
    let mut energy = 0.0;
    let mut grad = vec![0.0; groups.len()];
    for (f, g) in groups.iter().enumerate() {
        for &j in g {
            let s = topology.station(j);
            if s.users.is_empty() {
                continue;
            }
            if !(budgets[f] > 0.0) {
                energy = f64::INFINITY;
                continue;
            }
            let problem = Problem {
                topology,
                xblocks: vec![Block {
                    users: s.users.clone(),
                    total: budgets[f],
                }],
                qblocks: vec![j],
            };
            let (mut x0, q0) = match warm {
                Some((wx, wq)) => (wx.to_vec(), wq.to_vec()),
                None => problem.start(0, settings.seed),
            };
            // rescale the warm bandwidth onto the new band
            let used: f64 = s.users.iter().map(|&i| x0[i]).sum();
            for &i in &s.users {
                x0[i] *= budgets[f] / used;
            }
            let d = problem.descend(x0, q0, settings);
            energy += d.energy;
            grad[f] -= problem.block_prices(&d.x, &d.q)[0];
            for &i in &s.users {
                x[i] = d.x[i];
                q[i] = d.q[i];
            }
        }
    }
    BandValue { energy, grad, x, q }
}

/// Centralized minimum-energy allocation under a reuse partition: the group
/// bands are optimized by projected gradient over `sum_f B_f = B`, each
/// evaluation solving every station's problem for its band.
pub fn solve_p5_oracle(
    topology: &Topology,
    groups: &[Vec<usize>],
    settings: &OracleSettings,
) -> Result<P5OracleSolution> {
    settings.validate()?;
    model::ensure_feasible(topology)?;
    require_positive_data(topology)?;
    reuse::validate_partition(groups, topology.num_stations())?;
    let total = topology.bandwidth();
    let f = groups.len();
    let live: Vec<bool> = groups
        .iter()
        .map(|g| g.iter().any(|&j| !topology.station(j).users.is_empty()))
        .collect();
    let n_live = live.iter().filter(|&&l| l).count();
    let mut b: Vec<f64> = live
        .iter()
        .map(|&l| if l { total / n_live as f64 } else { 0.0 })
        .collect();
    let mut val = band_value(topology, groups, &b, None, settings);
    let mut outer = 0;
    let mut converged = false;
    let mut step = 0.1 * total;
    let idx: Vec<usize> = (0..f).filter(|&g| live[g]).collect();
    while outer < 500 {
        // gradient spread over live groups measures optimality
        let gl: Vec<f64> = idx.iter().map(|&g| val.grad[g]).collect();
        let gmax = gl.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let gmin = gl.iter().cloned().fold(f64::INFINITY, f64::min);
        let gmean = gl.iter().sum::<f64>() / gl.len() as f64;
        if idx.len() < 2 || (gmax - gmin) / gmean.abs() < 1e-9 {
            converged = true;
            break;
        }
        outer += 1;
        let scale = 1.0 / gmean.abs();
        let mut alpha = step;
        let mut accepted = None;
        for _ in 0..60 {
            let y: Vec<f64> = idx.iter().map(|&g| b[g] - alpha * val.grad[g] * scale).collect();
            let w = vec![1.0; idx.len()];
            let lo = vec![0.0; idx.len()];
            let p = project_weighted_simplex(&y, &w, &lo, total);
            let mut nb = b.clone();
            for (k, &g) in idx.iter().enumerate() {
                nb[g] = p[k];
            }
            let nv = band_value(topology, groups, &nb, Some((&val.x, &val.q)), settings);
            let decrease: f64 = idx.iter().map(|&g| val.grad[g] * (nb[g] - b[g])).sum();
            if nv.energy.is_finite() && nv.energy <= val.energy + settings.armijo * decrease {
                accepted = Some((nb, nv));
                break;
            }
            alpha *= 0.5;
        }
        let Some((nb, nv)) = accepted else {
            break;
        };
        let change = (val.energy - nv.energy).abs() / val.energy;
        step = (alpha * 2.0).min(total);
        b = nb;
        val = nv;
        if change < settings.tolerance {
            converged = true;
            break;
        }
    }
    let allocation = to_allocation(topology, val.x, &val.q)?;
    Ok(P5OracleSolution {
        energy: allocation.total_energy(),
        allocation,
        budgets: b,
        outer_iterations: outer,
        converged,
    })
}

/// Analytic gradient of one user's energy in `(x, t)`, exposed for checking
/// against finite differences.
pub fn energy_gradient_xt(topology: &Topology, i: usize, x: f64, t: f64) -> (f64, f64) {
    let u = topology.user(i);
    let c = topology.noise_density() / u.gain;
    let s = x * t;
    let y = u.task.data_bits * LN_2 / s;
    let e_s = c * (y.exp_m1() - y * y.exp());
    (t * e_s, x * e_s)
}

/// Analytic gradient of one user's energy in `(x, q)`.
pub fn energy_gradient_xq(topology: &Topology, i: usize, x: f64, q: f64) -> (f64, f64) {
    let l = local(topology, i, x, q);
    (l.gx, l.gq)
}
