//! Splitting a polynomial with small Hessian into a one-dimensional part plus a small remainder.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::geometry::AffineMap2;
use crate::poly::{Poly1, Poly2};

/// Number of grid angles on `[0, pi)`.
pub const GRID_ANGLES: usize = 720;

/// `P = A o rho_theta + residual_norm * B o rho_theta` with `rho_theta` the rotation
/// `(c x1 + s x2, -s x1 + c x2)` and `A` a function of the first rotated coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub theta: f64,
    #[serde(rename = "A")]
    pub a: Poly1,
    #[serde(rename = "B")]
    pub b: Poly2,
    pub residual_norm: f64,
    /// `log ||r|| / log nu`; infinite when the residual vanishes.
    #[serde(with = "inf_as_null")]
    pub achieved_alpha: f64,
}

mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// `rho_theta` as an affine map.
pub fn rho(theta: f64) -> AffineMap2 {
    AffineMap2::rotation(-theta)
}

impl SplitResult {
    /// `A o rho + ||r|| B o rho` in the original coordinates.
    pub fn reconstruct(&self) -> Poly2 {
        let r = rho(self.theta);
        let a = self.a.to_poly2().compose_affine(&r);
        let b = self.b.compose_affine(&r).scale(self.residual_norm);
        &a + &b
    }

    /// The one-dimensional part `A o rho` in the original coordinates.
    pub fn a_in_original(&self) -> Poly2 {
        self.a.to_poly2().compose_affine(&rho(self.theta))
    }
}

fn split_at(p: &Poly2, theta: f64, chop: f64) -> (Poly1, Poly2) {
    let q = p.compose_affine(&AffineMap2::rotation(theta)).chop(chop);
    let mut a = vec![0.0; q.actual_degree() as usize + 1];
    let mut rest = Vec::new();
    for ((a1, a2), c) in q.terms() {
        if a2 == 0 {
            a[a1 as usize] = c;
        } else {
            rest.push((a1, a2, c));
        }
    }
    (Poly1::new(a), Poly2::from_terms(p.degree(), rest))
}

/// Rotation search for the best one-dimensional split of `p`.
pub fn split_small_hessian(p: &Poly2, nu: f64) -> SplitResult {
    let chop = 1e-12 * p.coeff_norm().max(1.0);
    let cost = |t: f64| split_at(p, t, chop).1.coeff_norm();

    let mut best_t = 0.0;
    let mut best = f64::INFINITY;
    for k in 0..GRID_ANGLES {
        let t = PI * k as f64 / GRID_ANGLES as f64;
        let c = cost(t);
        if c < best {
            best = c;
            best_t = t;
        }
    }

    if best > 0.0 {
        let h = PI / GRID_ANGLES as f64;
        let (t, c) = golden_min(&cost, best_t - h, best_t + h, 1e-14);
        if c < best {
            best = c;
            best_t = t.rem_euclid(PI);
        }
    }

    let (a, r) = split_at(p, best_t, chop);
    let rn = r.coeff_norm();
    let b = if rn > 0.0 { r.scale(1.0 / rn) } else { r };
    let achieved_alpha = if rn == 0.0 {
        f64::INFINITY
    } else {
        rn.ln() / nu.ln()
    };
    debug_assert!(best.is_finite());
    SplitResult {
        theta: best_t,
        a,
        b,
        residual_norm: rn,
        achieved_alpha,
    }
}

fn golden_min<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > tol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn already_one_dimensional() {
        let s = split_small_hessian(&Poly2::monomial(1.0, 2, 0), 0.1);
        assert_eq!(s.theta, 0.0);
        assert_eq!(s.a, Poly1::new(vec![0.0, 0.0, 1.0]));
        assert_eq!(s.residual_norm, 0.0);
        assert_eq!(s.achieved_alpha, f64::INFINITY);
    }

    #[test]
    fn diagonal_square() {
        let p = Poly2::from_terms(2, [(2, 0, 0.5), (1, 1, 1.0), (0, 2, 0.5)]);
        let s = split_small_hessian(&p, 0.1);
        assert!((s.theta - PI / 4.0).abs() < 1e-9, "{}", s.theta);
        assert_eq!(s.residual_norm, 0.0);
        assert!(s.reconstruct().max_coeff_diff(&p) < 1e-12);
    }

    #[test]
    fn perturbed_closed_form() {
        let nu = 2f64.powi(-8);
        let p = Poly2::from_terms(2, [(2, 0, 0.5), (0, 2, nu / 2.0)]);
        let s = split_small_hessian(&p, nu);
        assert_eq!(s.theta, 0.0);
        assert_eq!(s.a, Poly1::new(vec![0.0, 0.0, 0.5]));
        assert!((s.residual_norm - nu / 2.0).abs() < 1e-15);
        assert!((s.achieved_alpha - 1.125).abs() < 1e-12);
    }

    #[test]
    fn reconstruction_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let mut t = Vec::new();
            for a1 in 0..=4u32 {
                for a2 in 0..=(4 - a1) {
                    if a1 + a2 >= 2 {
                        t.push((a1, a2, rng.gen_range(-1.0..1.0)));
                    }
                }
            }
            let p = Poly2::from_terms(4, t);
            let s = split_small_hessian(&p, 0.5);
            assert!(s.reconstruct().max_coeff_diff(&p) <= 1e-9);
            let r = rho(s.theta);
            assert!((r.det() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn monotone_trend() {
        for k in 2..=10 {
            let t = 2f64.powi(-k);
            let p = Poly2::from_terms(2, [(2, 0, 0.5), (0, 2, t / 2.0)]);
            assert!(split_small_hessian(&p, t).achieved_alpha >= 1.0);
        }
    }

    #[test]
    fn json_round_trip() {
        let s = split_small_hessian(&Poly2::monomial(1.0, 2, 0), 0.1);
        let j = serde_json::to_string(&s).unwrap();
        assert!(j.contains("\"achieved_alpha\":null"));
        let back: SplitResult = serde_json::from_str(&j).unwrap();
        assert_eq!(back, s);
    }
}
