#![allow(dead_code)]

use mec_core::model::{TaskSpec, Topology, UserRecord};

pub const N0: f64 = 3.981_071_705_534_969e-21;

pub struct U {
    pub gain: f64,
    pub l: f64,
    pub w: f64,
    pub d: f64,
    pub station: usize,
}

pub fn u(gain: f64, l: f64, w: f64, d: f64, station: usize) -> U {
    U { gain, l, w, d, station }
}

pub fn topology(users: &[U], caps: &[f64], bandwidth: f64) -> Topology {
    let recs = users
        .iter()
        .enumerate()
        .map(|(i, u)| UserRecord {
            id: i,
            task: TaskSpec::new(u.l, u.w, u.d),
            gain: u.gain,
            station: u.station,
        })
        .collect();
    Topology::new(recs, caps, bandwidth, N0).unwrap()
}

/// Energy straight from the definition, no shared code with the library.
pub fn energy(x: f64, t: f64, l: f64, h: f64) -> f64 {
    N0 / h * x * t * ((l / (x * t)).exp2() - 1.0)
}

/// Golden-section minimizer of a unimodal function on `[a, b]`.
pub fn golden(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Minimum of `f(v, total - v)` for two variables on a simplex, by a grid
/// with `n` points refined by golden section around the best cell.
pub fn simplex2_min(f: impl Fn(f64, f64) -> f64, total: f64, n: usize) -> (f64, f64) {
    let mut best = (f64::INFINITY, 0.0);
    for k in 1..n {
        let v = total * k as f64 / n as f64;
        let e = f(v, total - v);
        if e < best.0 {
            best = (e, v);
        }
    }
    let h = total / n as f64;
    let v = golden(|v| f(v, total - v), (best.1 - h).max(0.0), (best.1 + h).min(total), 200);
    (f(v, total - v), v)
}

/// Minimum over the 3-simplex `{a + b + c = total}` by nested golden
/// sections on the first coordinate and the split of the rest.
pub fn simplex3_min(f: impl Fn(f64, f64, f64) -> f64, total: f64) -> (f64, [f64; 3]) {
    let inner = |a: f64| {
        let rest = total - a;
        let b = golden(|b| f(a, b, rest - b), 0.0, rest, 120);
        (f(a, b, rest - b), b)
    };
    let a = golden(|a| inner(a).0, 0.0, total, 120);
    let (e, b) = inner(a);
    (e, [a, b, total - a - b])
}
