//! Expand-then-bisect root finders for the monotone scalar conditions used by
//! the allocation algorithms.

use crate::error::{Error, Result};

const MAX_EXPANSIONS: usize = 1100;
const MAX_BISECTIONS: usize = 400;

/// Root of a function that is increasing on `(0, inf)`, negative near `0+`
/// and positive for large arguments.
///
/// Starts at `seed`, doubles or halves until the sign changes, then bisects
/// until the bracket is narrower than `rel_tol` times its upper end.
pub(crate) fn increasing_root_on_half_line<F>(
    mut f: F,
    seed: f64,
    rel_tol: f64,
    what: &'static str,
) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let (mut lo, mut hi);
    let v = sign_of(f(seed), what)?;
    if v == 0 {
        return Ok(seed);
    }
    if v < 0 {
        lo = seed;
        hi = seed * 2.0;
        let mut n = 0;
        loop {
            match sign_of(f(hi), what)? {
                0 => return Ok(hi),
                s if s > 0 => break,
                _ => {}
            }
            lo = hi;
            hi *= 2.0;
            n += 1;
            if n > MAX_EXPANSIONS || !hi.is_finite() {
                return Err(Error::Bracket { what });
            }
        }
    } else {
        hi = seed;
        lo = seed * 0.5;
        let mut n = 0;
        loop {
            match sign_of(f(lo), what)? {
                0 => return Ok(lo),
                s if s < 0 => break,
                _ => {}
            }
            hi = lo;
            lo *= 0.5;
            n += 1;
            if n > MAX_EXPANSIONS || lo == 0.0 {
                return Err(Error::Bracket { what });
            }
        }
    }
    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= rel_tol * hi {
            break;
        }
        let mid = lo + 0.5 * (hi - lo);
        match sign_of(f(mid), what)? {
            0 => return Ok(mid),
            s if s < 0 => lo = mid,
            _ => hi = mid,
        }
    }
    Ok(lo + 0.5 * (hi - lo))
}

/// Root of a function increasing on the open interval `(0, end)`, negative near
/// `0+` and positive near `end-`.
///
/// The bracket grows from `end / 2` by halving the distance to whichever
/// endpoint the sign points at; bisection stops once the bracket is narrower
/// than `rel_tol` times the distance to the nearer endpoint.
pub(crate) fn increasing_root_on_interval<F>(
    mut f: F,
    end: f64,
    rel_tol: f64,
    what: &'static str,
) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let seed = 0.5 * end;
    let (mut lo, mut hi);
    let v = sign_of(f(seed), what)?;
    if v == 0 {
        return Ok(seed);
    }
    if v < 0 {
        lo = seed;
        let mut gap = 0.5 * (end - seed);
        hi = end - gap;
        let mut n = 0;
        loop {
            match sign_of(f(hi), what)? {
                0 => return Ok(hi),
                s if s > 0 => break,
                _ => {}
            }
            lo = hi;
            gap *= 0.5;
            hi = end - gap;
            n += 1;
            if n > MAX_EXPANSIONS || hi >= end {
                return Err(Error::Bracket { what });
            }
        }
    } else {
        hi = seed;
        lo = 0.5 * seed;
        let mut n = 0;
        loop {
            match sign_of(f(lo), what)? {
                0 => return Ok(lo),
                s if s < 0 => break,
                _ => {}
            }
            hi = lo;
            lo *= 0.5;
            n += 1;
            if n > MAX_EXPANSIONS || lo == 0.0 {
                return Err(Error::Bracket { what });
            }
        }
    }
    for _ in 0..MAX_BISECTIONS {
        let scale = lo.min(end - hi);
        if hi - lo <= rel_tol * scale {
            break;
        }
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            break;
        }
        match sign_of(f(mid), what)? {
            0 => return Ok(mid),
            s if s < 0 => lo = mid,
            _ => hi = mid,
        }
    }
    Ok(lo + 0.5 * (hi - lo))
}

/// Outcome of a price search.
#[derive(Debug, Clone)]
pub(crate) struct PriceSearch<T> {
    pub price: f64,
    pub payload: T,
    /// Number of evaluations of the demand function.
    pub probes: usize,
}

/// How a bracketed price search shrinks its bracket.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Refine {
    /// Midpoint of `log p`.
    Bisect,
    /// Illinois-modified regula falsi on `log p`, falling back to the
    /// midpoint whenever the interpolated point leaves the bracket.
    Illinois,
}

/// Finds a positive price `p` at which a decreasing excess-demand function
/// crosses zero.
///
/// `eval` returns the normalized excess demand (e.g. `(sum x - B) / B`) together
/// with whatever the caller wants to keep from that probe. The search expands
/// geometrically from `start` and then bisects on `log p` until
/// `|residual| <= tol`. If the price bracket collapses first, the probe with the
/// smallest residual is returned.
pub(crate) fn price_search<T, F>(eval: F, start: f64, tol: f64, what: &'static str) -> Result<PriceSearch<T>>
where
    F: FnMut(f64) -> Result<(f64, T)>,
{
    price_search_with(eval, start, tol, what, Refine::Bisect)
}

pub(crate) fn price_search_with<T, F>(
    mut eval: F,
    start: f64,
    tol: f64,
    what: &'static str,
    refine: Refine,
) -> Result<PriceSearch<T>>
where
    F: FnMut(f64) -> Result<(f64, T)>,
{
    let mut search = Search {
        best: None,
        probes: 0,
        what,
    };
    let r0 = search.probe(&mut eval, start)?;
    if search.done(tol) {
        return search.finish();
    }
    // excess demand decreases with price
    let (mut lo, mut hi) = (start, start);
    let (mut r_lo, mut r_hi) = (r0, r0);
    let mut n = 0;
    if r0 > 0.0 {
        loop {
            hi *= 2.0;
            if n > MAX_EXPANSIONS || !hi.is_finite() {
                return Err(Error::Bracket { what });
            }
            let r = search.probe(&mut eval, hi)?;
            if search.done(tol) {
                return search.finish();
            }
            if r <= 0.0 {
                r_hi = r;
                break;
            }
            lo = hi;
            r_lo = r;
            n += 1;
        }
    } else {
        loop {
            lo *= 0.5;
            if n > MAX_EXPANSIONS || lo == 0.0 {
                return Err(Error::Bracket { what });
            }
            let r = search.probe(&mut eval, lo)?;
            if search.done(tol) {
                return search.finish();
            }
            if r >= 0.0 {
                r_lo = r;
                break;
            }
            hi = lo;
            r_hi = r;
            n += 1;
        }
    }
    // which end was kept on the previous step: -1 lo, +1 hi
    let mut kept = 0i8;
    for _ in 0..MAX_BISECTIONS {
        let (u_lo, u_hi) = (lo.ln(), hi.ln());
        let mut mid = (lo * hi).sqrt();
        if refine == Refine::Illinois && r_lo > r_hi {
            let u = (u_lo * r_hi - u_hi * r_lo) / (r_hi - r_lo);
            let p = u.exp();
            if p > lo && p < hi {
                mid = p;
            }
        }
        if !(mid > lo && mid < hi) {
            break;
        }
        let r = search.probe(&mut eval, mid)?;
        if search.done(tol) {
            break;
        }
        if r > 0.0 {
            lo = mid;
            r_lo = r;
            if kept == 1 {
                r_hi *= 0.5;
            }
            kept = 1;
        } else {
            hi = mid;
            r_hi = r;
            if kept == -1 {
                r_lo *= 0.5;
            }
            kept = -1;
        }
    }
    search.finish()
}

struct Search<T> {
    best: Option<(f64, f64, T)>,
    probes: usize,
    what: &'static str,
}

impl<T> Search<T> {
    fn probe<F>(&mut self, eval: &mut F, p: f64) -> Result<f64>
    where
        F: FnMut(f64) -> Result<(f64, T)>,
    {
        self.probes += 1;
        let (r, payload) = eval(p)?;
        if r.is_nan() {
            return Err(Error::Bracket { what: self.what });
        }
        let better = match &self.best {
            Some((_, rb, _)) => r.abs() < rb.abs(),
            None => true,
        };
        if better {
            self.best = Some((p, r, payload));
        }
        Ok(r)
    }

    fn done(&self, tol: f64) -> bool {
        matches!(&self.best, Some((_, r, _)) if r.abs() <= tol)
    }

    fn finish(self) -> Result<PriceSearch<T>> {
        let (price, _, payload) = self.best.ok_or(Error::Bracket { what: self.what })?;
        Ok(PriceSearch {
            price,
            payload,
            probes: self.probes,
        })
    }
}

fn sign_of(v: f64, what: &'static str) -> Result<i8> {
    if v.is_nan() {
        Err(Error::Bracket { what })
    } else if v > 0.0 {
        Ok(1)
    } else if v < 0.0 {
        Ok(-1)
    } else {
        Ok(0)
    }
}
