//! Random multi-cell instances.
//!
//! Stations and users are dropped uniformly in a disk. Each user-station
//! link gets distance pathloss and an independent Rayleigh power draw; users
//! attach to the station with the best gain. Draws come from ChaCha8 with
//! stream `trial`, so trial `n` of a seed is the same regardless of which
//! other trials run or in what order. Every user consumes the same number of
//! draws whatever the parameters, which keeps trials paired across sweeps.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, dbm_per_hz_to_watts, StationRecord, TaskSpec, Topology, UserRecord};

/// Pathloss `30.6 + 36.7 log10(d)` dB as a linear gain, `d` clamped at 1 m.
pub fn pathloss_gain(distance_m: f64) -> f64 {
    pathloss_gain_with(distance_m, 30.6, 36.7)
}

pub fn pathloss_gain_with(distance_m: f64, intercept_db: f64, slope_db: f64) -> f64 {
    let d = distance_m.max(1.0);
    let pl_db = intercept_db + slope_db * d.log10();
    10f64.powf(-pl_db / 10.0)
}

/// Closed interval for a uniform draw; `lo == hi` is a constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn constant(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    /// Maps a unit draw onto the interval.
    pub fn at(&self, u: f64) -> f64 {
        self.lo + u * (self.hi - self.lo)
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FadingMode {
    /// Fading affects both association and transmission.
    #[default]
    Assoc,
    /// Association by pathloss only; fading applied to the chosen link.
    TxOnly,
    /// No small-scale fading.
    Off,
}

impl std::str::FromStr for FadingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "assoc" => Ok(Self::Assoc),
            "tx-only" => Ok(Self::TxOnly),
            "off" => Ok(Self::Off),
            _ => Err(Error::Config(format!(
                "unknown fading mode {s:?} (expected assoc, tx-only or off)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    /// Number of stations `M`.
    pub stations: usize,
    /// Number of users `K`.
    pub users: usize,
    pub radius_m: f64,
    pub pathloss_intercept_db: f64,
    /// dB per decade of distance.
    pub pathloss_slope_db: f64,
    pub fading: FadingMode,
    pub bandwidth_hz: f64,
    pub noise_dbm_per_hz: f64,
    /// Per-station capacity in cycles/s.
    pub capacity: f64,
    /// Input size in bits.
    pub data_bits: Range,
    /// Compute demand in cycles.
    pub cycles: Range,
    pub deadline_s: f64,
    pub seed: u64,
    /// Redraws allowed when a station cannot meet its users' deadlines.
    pub max_retries: usize,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            stations: 4,
            users: 32,
            radius_m: 200.0,
            pathloss_intercept_db: 30.6,
            pathloss_slope_db: 36.7,
            fading: FadingMode::Assoc,
            bandwidth_hz: 10e6,
            noise_dbm_per_hz: -174.0,
            capacity: 100e9,
            data_bits: Range::constant(0.5e6),
            cycles: Range::new(0.5e9, 2.5e9),
            deadline_s: 0.5,
            seed: 42,
            max_retries: 100,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.stations == 0 || self.users == 0 {
            return bad(format!(
                "need at least one station and one user, got M={} K={}",
                self.stations, self.users
            ));
        }
        for (name, v) in [
            ("radius_m", self.radius_m),
            ("bandwidth_hz", self.bandwidth_hz),
            ("capacity", self.capacity),
            ("deadline_s", self.deadline_s),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be > 0, got {v}"));
            }
        }
        if !self.noise_dbm_per_hz.is_finite() {
            return bad("noise_dbm_per_hz must be finite".into());
        }
        for (name, r, min) in [("data_bits", self.data_bits, 0.0), ("cycles", self.cycles, f64::MIN_POSITIVE)] {
            if !(r.lo.is_finite() && r.hi.is_finite() && r.lo <= r.hi && r.lo >= min) {
                return bad(format!("{name} range [{}, {}] is not ordered or out of domain", r.lo, r.hi));
            }
        }
        Ok(())
    }

    pub fn noise_density(&self) -> f64 {
        dbm_per_hz_to_watts(self.noise_dbm_per_hz)
    }

    pub fn gain_at(&self, distance_m: f64) -> f64 {
        pathloss_gain_with(distance_m, self.pathloss_intercept_db, self.pathloss_slope_db)
    }

    /// The generator for trial `trial`.
    pub fn rng(&self, trial: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(trial);
        rng
    }
}

/// Uniform point in a disk centred at the origin.
pub fn sample_disk_point<R: Rng + ?Sized>(rng: &mut R, radius: f64) -> (f64, f64) {
    let r = radius * rng.gen::<f64>().sqrt();
    let theta = 2.0 * PI * rng.gen::<f64>();
    (r * theta.cos(), r * theta.sin())
}

/// Rayleigh power fading factor (unit-mean exponential).
pub fn sample_fading<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(Exp1)
}

/// Positions and draws behind one topology.
#[derive(Debug, Clone)]
pub struct Layout {
    pub stations: Vec<(f64, f64)>,
    pub users: Vec<(f64, f64)>,
    pub topology: Topology,
}

/// One draw from `rng`, without any feasibility check.
pub fn draw<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Result<Layout> {
    spec.validate()?;
    let m = spec.stations;
    let stations: Vec<(f64, f64)> = (0..m).map(|_| sample_disk_point(rng, spec.radius_m)).collect();
    let mut positions = Vec::with_capacity(spec.users);
    let mut users = Vec::with_capacity(spec.users);
    let mut fades = vec![0.0; m];
    for id in 0..spec.users {
        let pos = sample_disk_point(rng, spec.radius_m);
        let u_l: f64 = rng.gen();
        let u_w: f64 = rng.gen();
        for f in fades.iter_mut() {
            *f = sample_fading(rng);
        }
        let pathloss: Vec<f64> = stations
            .iter()
            .map(|s| spec.gain_at(((pos.0 - s.0).powi(2) + (pos.1 - s.1).powi(2)).sqrt()))
            .collect();
        let score = |j: usize| match spec.fading {
            FadingMode::Assoc => pathloss[j] * fades[j],
            FadingMode::TxOnly | FadingMode::Off => pathloss[j],
        };
        let station = (0..m)
            .max_by(|&a, &b| score(a).total_cmp(&score(b)))
            .expect("at least one station");
        let gain = match spec.fading {
            FadingMode::Off => pathloss[station],
            _ => pathloss[station] * fades[station],
        };
        positions.push(pos);
        users.push(UserRecord {
            id,
            task: TaskSpec::new(spec.data_bits.at(u_l), spec.cycles.at(u_w), spec.deadline_s),
            gain,
            station,
        });
    }
    let topology = Topology::new(users, &vec![spec.capacity; m], spec.bandwidth_hz, spec.noise_density())?;
    Ok(Layout {
        stations,
        users: positions,
        topology,
    })
}

/// A feasible topology and the number of draws it took.
#[derive(Debug, Clone)]
pub struct Generated {
    pub topology: Topology,
    pub attempts: usize,
}

/// Feasible instance for `trial`. Draws that leave some station unable to meet
/// its users' deadlines are redrawn from the same stream, up to
/// `max_retries` times.
pub fn generate(spec: &ScenarioSpec, trial: u64) -> Result<Generated> {
    let mut rng = spec.rng(trial);
    let mut last_err = None;
    for attempt in 1..=spec.max_retries + 1 {
        let layout = draw(spec, &mut rng)?;
        match model::ensure_feasible(&layout.topology) {
            Ok(()) => {
                return Ok(Generated {
                    topology: layout.topology,
                    attempts: attempt,
                })
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

/// Fraction of first draws (no retries) that are feasible over `trials` trials.
pub fn first_draw_feasibility(spec: &ScenarioSpec, trials: u64) -> Result<f64> {
    let mut ok = 0u64;
    for trial in 0..trials {
        let layout = draw(spec, &mut spec.rng(trial))?;
        if model::ensure_feasible(&layout.topology).is_ok() {
            ok += 1;
        }
    }
    Ok(ok as f64 / trials as f64)
}

/// Writes the line format: `#` header lines for the system constants, then one
/// `id station gain L W D` line per user.
pub fn write_topology(topology: &Topology) -> String {
    let mut out = String::new();
    out.push_str("# mec-topology v1\n");
    let _ = writeln!(out, "# bandwidth_hz {:e}", topology.bandwidth());
    let _ = writeln!(out, "# noise_w_per_hz {:e}", topology.noise_density());
    for s in topology.stations() {
        let _ = writeln!(out, "# station {} {:e}", s.id, s.capacity);
    }
    out.push_str("# id station gain data_bits cycles deadline_s\n");
    for u in topology.users() {
        let _ = writeln!(
            out,
            "{} {} {:e} {:e} {:e} {:e}",
            u.id, u.station, u.gain, u.task.data_bits, u.task.cycles, u.task.deadline
        );
    }
    out
}

/// Parses the format produced by [`write_topology`].
pub fn parse_topology(text: &str) -> Result<Topology> {
    let mut bandwidth = None;
    let mut noise = None;
    let mut capacities: Vec<(usize, f64)> = Vec::new();
    let mut users = Vec::new();
    let num = |line: usize, v: &str| -> Result<f64> {
        v.parse::<f64>().map_err(|e| Error::Parse {
            line,
            msg: format!("bad number {v:?}: {e}"),
        })
    };
    let idx = |line: usize, v: &str| -> Result<usize> {
        v.parse::<usize>().map_err(|e| Error::Parse {
            line,
            msg: format!("bad index {v:?}: {e}"),
        })
    };
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        if let Some(rest) = raw.strip_prefix('#') {
            let f: Vec<&str> = rest.split_whitespace().collect();
            match f.as_slice() {
                ["bandwidth_hz", v] => bandwidth = Some(num(line, v)?),
                ["noise_w_per_hz", v] => noise = Some(num(line, v)?),
                ["station", j, c] => capacities.push((idx(line, j)?, num(line, c)?)),
                _ => {}
            }
            continue;
        }
        let f: Vec<&str> = raw.split_whitespace().collect();
        if f.len() != 6 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 6 fields, found {}", f.len()),
            });
        }
        users.push(UserRecord {
            id: idx(line, f[0])?,
            station: idx(line, f[1])?,
            gain: num(line, f[2])?,
            task: TaskSpec::new(num(line, f[3])?, num(line, f[4])?, num(line, f[5])?),
        });
    }
    let bandwidth = bandwidth.ok_or(Error::Parse {
        line: 0,
        msg: "missing bandwidth_hz header".into(),
    })?;
    let noise = noise.ok_or(Error::Parse {
        line: 0,
        msg: "missing noise_w_per_hz header".into(),
    })?;
    capacities.sort_by_key(|c| c.0);
    let mut stations: Vec<StationRecord> = Vec::with_capacity(capacities.len());
    for (pos, (j, c)) in capacities.into_iter().enumerate() {
        if j != pos {
            return Err(Error::Parse {
                line: 0,
                msg: format!("station ids must be 0..M without gaps, found {j} at {pos}"),
            });
        }
        stations.push(StationRecord {
            id: j,
            capacity: c,
            users: Vec::new(),
        });
    }
    for u in &users {
        if let Some(s) = stations.get_mut(u.station) {
            s.users.push(u.id);
        }
    }
    Topology::from_parts(users, stations, bandwidth, noise)
}
