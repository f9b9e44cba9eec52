//! `I(n) = ∫_n^∞ e^{-t/2} t^{3k/4-2} |sin(2t^k)|^{1/4} dt` and the growth of
//! `I(n)^{1/q} / (n^{-1} e^{-n})^{1/p'}` with `1/p' = 1/(2q)`.

use serde::{Deserialize, Serialize};

use super::restriction::fit_slope;
use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleRow {
    pub n: f64,
    pub integral: f64,
    /// Quadrature discrepancy plus tail bound.
    pub error: f64,
    pub ratio: f64,
    /// `I(n) / (e^{-n/2} n^{3k/4-2})`.
    pub lower_const: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub k: u32,
    pub q: f64,
    pub p_prime: f64,
    pub rows: Vec<CounterexampleRow>,
    /// Least-squares slope of `log ratio` against `log n`.
    pub slope: f64,
    pub increasing: bool,
    pub c_min: f64,
    pub c_max: f64,
}

/// Upper end of the integration range: `e^{-t/2} < 1e-18`.
fn t_end(n_max: f64) -> f64 {
    (2.0 * 1e18f64.ln()).max(n_max + 40.0)
}

struct Rule {
    u: Vec<f64>,
    w: Vec<f64>,
    /// `w(u)` and `w'(u)` of the substitution `u^4 (35 - 84u + 70u^2 - 20u^3)`.
    s: Vec<f64>,
    ds: Vec<f64>,
}

impl Rule {
    fn new(n: usize) -> Self {
        let (x, w) = gauss_legendre(n);
        let u: Vec<f64> = x.iter().map(|x| 0.5 * (x + 1.0)).collect();
        let w: Vec<f64> = w.iter().map(|w| 0.5 * w).collect();
        let s = u.iter().map(|&u| u.powi(4) * (35.0 - 84.0 * u + 70.0 * u * u - 20.0 * u.powi(3))).collect();
        let ds = u.iter().map(|&u| 140.0 * u.powi(3) * (1.0 - u).powi(3)).collect();
        Self { u, w, s, ds }
    }
}

/// Integral over `[a, b]` where `z` is a zero of `sin(2t^k)` with `z <= a`.
/// The polynomial substitution flattens the `|sin|^{1/4}` cusps at the endpoints.
fn segment(k: u32, expo: f64, z: f64, a: f64, b: f64, rule: &Rule) -> f64 {
    let mut acc = 0.0;
    for i in 0..rule.u.len() {
        let t = a + (b - a) * rule.s[i];
        // t^k - z^k = (t - z) Σ t^j z^{k-1-j}, free of cancellation.
        let d = t - z;
        let mut sum = 0.0;
        for j in 0..k {
            sum += t.powi(j as i32) * z.powi((k - 1 - j) as i32);
        }
        let osc = (2.0 * d * sum).sin().abs().powf(0.25);
        acc += rule.w[i] * rule.ds[i] * (-0.5 * t).exp() * t.powf(expo) * osc;
    }
    acc * (b - a)
}

fn zero(k: u32, m: u64) -> f64 {
    (m as f64 * std::f64::consts::FRAC_PI_2).powf(1.0 / k as f64)
}

/// Index of the last zero `t_m <= t`.
fn zero_below(k: u32, t: f64) -> u64 {
    let mut m = (2.0 * t.powi(k as i32) / std::f64::consts::PI).floor() as u64;
    while zero(k, m) > t {
        m -= 1;
    }
    while zero(k, m + 1) <= t {
        m += 1;
    }
    m
}

pub fn counterexample_scan(k: u32, q: f64, ns: &[f64]) -> Result<CounterexampleReport> {
    if k < 3 {
        return Err(Error::InvalidArgument(format!("k must be at least 3, got {k}")));
    }
    if !(q > 0.0) {
        return Err(Error::InvalidArgument(format!("q must be positive, got {q}")));
    }
    if ns.is_empty() || ns.iter().any(|&n| !(3.0..=40.0).contains(&n)) {
        return Err(Error::InvalidArgument("n values must lie in [3, 40]".into()));
    }
    let expo = 0.75 * k as f64 - 2.0;
    let p_prime = 2.0 * q;
    let fine = Rule::new(32);
    let coarse = Rule::new(20);
    let mut sorted: Vec<f64> = ns.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let top = t_end(*sorted.last().unwrap());
    let m_lo = zero_below(k, sorted[0]) + 1;
    let m_hi = zero_below(k, top) + 1;

    // Full segments [t_m, t_{m+1}] for m in m_lo..m_hi, with suffix sums.
    let count = (m_hi - m_lo) as usize;
    let mut seg = vec![0.0; count];
    let mut err = vec![0.0; count];
    for (i, m) in (m_lo..m_hi).enumerate() {
        let (a, b) = (zero(k, m), zero(k, m + 1));
        let f = segment(k, expo, a, a, b, &fine);
        let c = segment(k, expo, a, a, b, &coarse);
        seg[i] = f;
        err[i] = (f - c).abs();
    }
    let mut suffix = vec![0.0; count + 1];
    let mut suffix_err = vec![0.0; count + 1];
    for i in (0..count).rev() {
        suffix[i] = suffix[i + 1] + seg[i];
        suffix_err[i] = suffix_err[i + 1] + err[i];
    }
    let t_last = zero(k, m_hi);
    let tail = 2.0 * (-0.5 * t_last).exp() * t_last.powf(expo.max(0.0)) / (1.0 - 2.0 * expo.max(0.0) / t_last);

    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        let m = zero_below(k, n);
        let (z, b) = (zero(k, m), zero(k, m + 1));
        let head = segment(k, expo, z, n, b, &fine);
        let head_err = (head - segment(k, expo, z, n, b, &coarse)).abs();
        let idx = (m + 1 - m_lo) as usize;
        let integral = head + suffix[idx];
        let error = head_err + suffix_err[idx] + tail;
        if !(integral > 0.0) || error > 1e-8 * integral {
            return Err(Error::QuadratureNonConvergent(format!(
                "I({n}) = {integral:e} with error estimate {error:e}"
            )));
        }
        let ratio = integral.powf(1.0 / q) / (n.recip() * (-n).exp()).powf(1.0 / p_prime);
        let lower_const = integral / ((-0.5 * n).exp() * n.powf(expo));
        rows.push(CounterexampleRow { n, integral, error, ratio, lower_const });
    }
    let lx: Vec<f64> = rows.iter().map(|r| r.n.ln()).collect();
    let ly: Vec<f64> = rows.iter().map(|r| r.ratio.ln()).collect();
    let mut by_n: Vec<&CounterexampleRow> = rows.iter().collect();
    by_n.sort_by(|a, b| a.n.total_cmp(&b.n));
    let increasing = by_n.windows(2).all(|w| w[1].ratio > w[0].ratio);
    let c_min = rows.iter().map(|r| r.lower_const).fold(f64::INFINITY, f64::min);
    let c_max = rows.iter().map(|r| r.lower_const).fold(0.0, f64::max);
    Ok(CounterexampleReport {
        k,
        q,
        p_prime,
        slope: if rows.len() > 1 { fit_slope(&lx, &ly) } else { 0.0 },
        rows,
        increasing,
        c_min,
        c_max,
    })
}
