//! Polynomial approximation of `exp` on a bounded interval.
//!
//! The degree follows `g = max{B, ln(1/ε) / ln(ln(1/ε)/B)}` (with the inner log clamped at 1)
//! plus a margin of 2. Coefficients come from Chebyshev interpolation, are stored in the
//! monomial basis, and the achieved error is certified on a dense grid.

use crate::error::{Error, Result};

/// Number of evenly spaced points used to certify the error.
pub const CERT_GRID_POINTS: usize = 10_001;
pub const MAX_DEGREE: usize = 64;
pub const MAX_INTERVAL: f64 = 200.0;
const DEGREE_MARGIN: usize = 2;
const MAX_RETRIES: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct PolyApprox {
    pub degree: usize,
    /// Monomial coefficients, constant term first.
    pub coeffs: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
    /// `max |P(x) - exp(x)|` over the certification grid.
    pub certified_err: f64,
    pub grid_points: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolyEval {
    pub value: f64,
    pub in_interval: bool,
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 0.1) {
        return Err(Error::Parameter(format!(
            "eps must lie in (0, 0.1), got {eps}"
        )));
    }
    Ok(())
}

/// Degree needed for `|P - exp| < eps` on an interval of length `bint` (clamped up to 1).
pub fn select_degree(bint: f64, eps: f64) -> Result<usize> {
    check_eps(eps)?;
    if !(bint > 0.0 && bint.is_finite()) {
        return Err(Error::Parameter(format!(
            "interval length must be positive, got {bint}"
        )));
    }
    let b = bint.max(1.0);
    let log_inv = (1.0 / eps).ln();
    let denom = (log_inv / b).max(std::f64::consts::E).ln().max(1.0);
    let g = b.max(log_inv / denom).ceil() as usize + DEGREE_MARGIN;
    if g > MAX_DEGREE {
        return Err(Error::Parameter(format!(
            "degree {g} exceeds the cap {MAX_DEGREE}; the interval is too wide for the fast path"
        )));
    }
    Ok(g)
}

fn check_interval(lo: f64, hi: f64) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(Error::Parameter(format!("need lo < hi, got [{lo}, {hi}]")));
    }
    if hi - lo > MAX_INTERVAL {
        return Err(Error::Parameter(format!(
            "interval width {} exceeds {MAX_INTERVAL}",
            hi - lo
        )));
    }
    Ok(())
}

/// Chebyshev coefficients of the degree-`g` interpolant of `exp` on `[lo, hi]`.
fn chebyshev_coeffs(lo: f64, hi: f64, g: usize) -> Vec<f64> {
    let m = g + 1;
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    let nodes: Vec<f64> = (0..m)
        .map(|k| (std::f64::consts::PI * (k as f64 + 0.5) / m as f64).cos())
        .collect();
    let values: Vec<f64> = nodes.iter().map(|t| (mid + half * t).exp()).collect();
    (0..m)
        .map(|j| {
            let s: f64 = (0..m)
                .map(|k| {
                    values[k]
                        * (std::f64::consts::PI * j as f64 * (k as f64 + 0.5) / m as f64).cos()
                })
                .sum();
            let c = 2.0 * s / m as f64;
            if j == 0 {
                0.5 * c
            } else {
                c
            }
        })
        .collect()
}

/// Converts `sum_j c_j T_j(t)`, `t = (2x - lo - hi)/(hi - lo)`, into monomials in `x`.
fn chebyshev_to_monomial(cheb: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let m = cheb.len();
    let mut in_t = vec![0.0; m];
    let mut prev = vec![0.0; m];
    let mut cur = vec![0.0; m];
    prev[0] = 1.0; // T_0
    in_t[0] += cheb[0];
    if m > 1 {
        cur[1] = 1.0; // T_1
        in_t[1] += cheb[1];
    }
    for &c in cheb.iter().skip(2) {
        let mut next = vec![0.0; m];
        for k in 0..m - 1 {
            next[k + 1] += 2.0 * cur[k];
        }
        for k in 0..m {
            next[k] -= prev[k];
        }
        for (acc, v) in in_t.iter_mut().zip(&next) {
            *acc += c * v;
        }
        prev = std::mem::replace(&mut cur, next);
    }
    // substitute t = alpha x + beta by Horner on polynomials
    let alpha = 2.0 / (hi - lo);
    let beta = -(hi + lo) / (hi - lo);
    let mut out = vec![0.0; m];
    for &a in in_t.iter().rev() {
        let mut next = vec![0.0; m];
        for k in 0..m {
            next[k] += beta * out[k];
            if k + 1 < m {
                next[k + 1] += alpha * out[k];
            }
        }
        next[0] += a;
        out = next;
    }
    out
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

fn grid_error(coeffs: &[f64], lo: f64, hi: f64) -> f64 {
    let last = (CERT_GRID_POINTS - 1) as f64;
    (0..CERT_GRID_POINTS)
        .map(|k| {
            let x = lo + (hi - lo) * k as f64 / last;
            (horner(coeffs, x) - x.exp()).abs()
        })
        .fold(0.0, f64::max)
}

/// Degree-`degree` Chebyshev interpolant on `[lo, hi]` with its grid error, without an error target.
pub fn build_poly_with_degree(lo: f64, hi: f64, degree: usize) -> Result<PolyApprox> {
    check_interval(lo, hi)?;
    if degree > MAX_DEGREE {
        return Err(Error::Parameter(format!(
            "degree {degree} exceeds the cap {MAX_DEGREE}"
        )));
    }
    let coeffs = chebyshev_to_monomial(&chebyshev_coeffs(lo, hi, degree), lo, hi);
    let certified_err = grid_error(&coeffs, lo, hi);
    Ok(PolyApprox {
        degree,
        coeffs,
        lo,
        hi,
        certified_err,
        grid_points: CERT_GRID_POINTS,
    })
}

/// Polynomial with certified `|P - exp| <= eps` on `[lo, hi]`.
pub fn build_poly(lo: f64, hi: f64, eps: f64) -> Result<PolyApprox> {
    check_interval(lo, hi)?;
    let start = select_degree(hi - lo, eps)?;
    let mut last = None;
    for degree in start..=(start + MAX_RETRIES).min(MAX_DEGREE) {
        let p = build_poly_with_degree(lo, hi, degree)?;
        if p.certified_err <= eps {
            return Ok(p);
        }
        last = Some(p);
    }
    let p = last.expect("at least one attempt");
    Err(Error::Approximation {
        degree: p.degree,
        achieved: p.certified_err,
        requested: eps,
    })
}

/// Horner evaluation of monomial coefficients.
pub fn eval_poly(p: &PolyApprox, x: f64) -> f64 {
    horner(&p.coeffs, x)
}

impl PolyApprox {
    pub fn eval(&self, x: f64) -> f64 {
        horner(&self.coeffs, x)
    }

    /// Evaluates anywhere, flagging points outside the certified interval.
    pub fn eval_checked(&self, x: f64) -> PolyEval {
        PolyEval {
            value: self.eval(x),
            in_interval: x >= self.lo && x <= self.hi,
        }
    }
}
