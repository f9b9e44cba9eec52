//! Gauss–Legendre rules on intervals and tensor rules on parallelograms.

use serde::{Deserialize, Serialize};

use crate::geometry::Parallelogram;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "rule needs at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// `∫_a^b f` by the `n`-point rule.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let (h, m) = (0.5 * (b - a), 0.5 * (a + b));
    rule.0
        .iter()
        .zip(&rule.1)
        .map(|(x, w)| w * f(m + h * x))
        .sum::<f64>()
        * h
}

/// Globally adaptive `∫_a^b f` to relative tolerance `rtol`: the interval with the
/// largest 6-point vs split 6-point discrepancy is bisected until the summed
/// discrepancy is small. Returns `None` when `max_intervals` is reached.
pub fn adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rtol: f64, max_intervals: usize) -> Option<f64> {
    // Even order keeps nodes off the midpoint, where singularities tend to sit.
    let rule = gauss_legendre(6);
    let piece = |a: f64, b: f64| {
        let m = 0.5 * (a + b);
        let whole = integrate(&f, a, b, &rule);
        let (l, r) = (integrate(&f, a, m, &rule), integrate(&f, m, b, &rule));
        (a, b, l + r, (l + r - whole).abs())
    };
    let mut parts = vec![piece(a, b)];
    loop {
        let total: f64 = parts.iter().map(|p| p.2).sum();
        let err: f64 = parts.iter().map(|p| p.3).sum();
        if !total.is_finite() || !err.is_finite() {
            return None;
        }
        if err <= rtol * total.abs() || err == 0.0 {
            return Some(total);
        }
        if parts.len() >= max_intervals {
            return None;
        }
        let worst = (0..parts.len())
            .max_by(|&i, &j| parts[i].3.total_cmp(&parts[j].3))
            .unwrap();
        let (a, b, _, _) = parts.swap_remove(worst);
        let m = 0.5 * (a + b);
        parts.push(piece(a, m));
        parts.push(piece(m, b));
    }
}

/// Tensor Gauss–Legendre rule mapped onto a parallelogram.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quadrature {
    pub nodes: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    /// Points per axis; the rule integrates bi-degree `2 order - 1` exactly.
    pub order: usize,
}

impl Quadrature {
    pub fn on_parallelogram(p: &Parallelogram, order: usize) -> Self {
        let (x, w) = gauss_legendre(order);
        let jac = p.map.det().abs();
        let mut nodes = Vec::with_capacity(order * order);
        let mut weights = Vec::with_capacity(order * order);
        for i in 0..order {
            for j in 0..order {
                nodes.push(p.map.apply([x[i], x[j]]));
                weights.push(w[i] * w[j] * jac);
            }
        }
        Self { nodes, weights, order }
    }

    pub fn integrate<F: Fn([f64; 2]) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(*x)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::Poly2;

    #[test]
    fn small_rules_match_tables() {
        let (x, w) = gauss_legendre(2);
        assert!((x[1] - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!((w[0] - 1.0).abs() < 1e-15);
        let (x, w) = gauss_legendre(3);
        assert!(x[1].abs() < 1e-15 && (w[1] - 8.0 / 9.0).abs() < 1e-14);
        let (_, w) = gauss_legendre(32);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
    }

    #[test]
    fn exact_on_polynomials() {
        let rule = gauss_legendre(8);
        for k in 0..16 {
            let got = integrate(|t| t.powi(k), 0.0, 1.0, &rule);
            assert!((got - 1.0 / (k + 1) as f64).abs() < 1e-14, "{k}");
        }
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        let got = adaptive(|t| t.abs().powf(-0.5), -1.0, 1.0, 1e-8, 2000).unwrap();
        assert!((got - 4.0).abs() < 1e-6);
        assert!(adaptive(|t| 1.0 / t.abs(), -1.0, 1.0, 1e-6, 500).is_none());
    }

    #[test]
    fn parallelogram_rule_is_exact() {
        let p = Parallelogram::new([[0.5, 0.2], [-0.1, 0.3]], [0.1, -0.2]).unwrap();
        let q = Quadrature::on_parallelogram(&p, 4);
        assert!((q.weights.iter().sum::<f64>() - p.area()).abs() < 1e-14);
        // Independent check: integrate in local coordinates by the same rule after pulling back.
        let f = Poly2::from_terms(3, [(2, 1, 1.0), (0, 3, -2.0), (1, 0, 0.5)]);
        let pulled = f.compose_affine(&p.map);
        let (x, w) = gauss_legendre(4);
        let mut local = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                local += w[i] * w[j] * pulled.eval([x[i], x[j]]);
            }
        }
        let got = q.integrate(|z| f.eval(z));
        assert!((got - local * p.map.det().abs()).abs() < 1e-14);
    }
}
