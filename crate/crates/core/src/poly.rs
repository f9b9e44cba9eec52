//! Bivariate and univariate polynomials in coefficient form.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::geometry::AffineMap2;

/// Dense bivariate polynomial `sum c_a xi1^a1 xi2^a2` with `a1 + a2 <= degree`.
///
/// Zero coefficients are never stored.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Poly2 {
    degree: u32,
    coeffs: BTreeMap<(u32, u32), f64>,
}

impl Poly2 {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self::monomial(c, 0, 0)
    }

    pub fn monomial(c: f64, a1: u32, a2: u32) -> Self {
        let mut p = Self {
            degree: a1 + a2,
            coeffs: BTreeMap::new(),
        };
        p.add_term(a1, a2, c);
        p
    }

    /// `xi1` as a polynomial.
    pub fn x1() -> Self {
        Self::monomial(1.0, 1, 0)
    }

    /// `xi2` as a polynomial.
    pub fn x2() -> Self {
        Self::monomial(1.0, 0, 1)
    }

    /// Builds a polynomial from `(a1, a2, c)` triples. Repeated exponents are summed.
    /// The declared degree is raised if a term needs it.
    pub fn from_terms<I: IntoIterator<Item = (u32, u32, f64)>>(degree: u32, terms: I) -> Self {
        let mut p = Self {
            degree,
            coeffs: BTreeMap::new(),
        };
        for (a1, a2, c) in terms {
            p.add_term(a1, a2, c);
        }
        p
    }

    fn add_term(&mut self, a1: u32, a2: u32, c: f64) {
        assert!(c.is_finite(), "non-finite coefficient {c}");
        if c == 0.0 {
            return;
        }
        self.degree = self.degree.max(a1 + a2);
        let e = self.coeffs.entry((a1, a2)).or_insert(0.0);
        *e += c;
        if *e == 0.0 {
            self.coeffs.remove(&(a1, a2));
        }
    }

    /// Declared maximal degree `d`.
    pub fn degree(&self) -> u32 {
        self.degree
    }

    /// Largest `|a|` actually present (0 for the zero polynomial).
    pub fn actual_degree(&self) -> u32 {
        self.coeffs.keys().map(|(a, b)| a + b).max().unwrap_or(0)
    }

    pub fn with_degree(mut self, degree: u32) -> Self {
        self.degree = degree.max(self.actual_degree());
        self
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeff(&self, a1: u32, a2: u32) -> f64 {
        self.coeffs.get(&(a1, a2)).copied().unwrap_or(0.0)
    }

    /// Nonzero terms as `((a1, a2), c)`, ascending in `(a1, a2)`.
    pub fn terms(&self) -> impl Iterator<Item = ((u32, u32), f64)> + '_ {
        self.coeffs.iter().map(|(&k, &v)| (k, v))
    }

    pub fn num_terms(&self) -> usize {
        self.coeffs.len()
    }

    pub fn eval(&self, xi: [f64; 2]) -> f64 {
        if self.coeffs.is_empty() {
            return 0.0;
        }
        let d = self.actual_degree() as usize;
        let mut p1 = vec![1.0; d + 1];
        let mut p2 = vec![1.0; d + 1];
        for k in 1..=d {
            p1[k] = p1[k - 1] * xi[0];
            p2[k] = p2[k - 1] * xi[1];
        }
        self.coeffs
            .iter()
            .map(|(&(a1, a2), &c)| c * p1[a1 as usize] * p2[a2 as usize])
            .sum()
    }

    /// `max_a |c_a|`.
    pub fn coeff_norm(&self) -> f64 {
        self.coeffs.values().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// `sum_a |c_a|`, an upper bound for `sup |P|` on `[-1,1]^2`.
    pub fn l1_norm(&self) -> f64 {
        self.coeffs.values().map(|c| c.abs()).sum()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_terms(
            self.degree,
            self.coeffs.iter().map(|(&(a1, a2), &c)| (a1, a2, c * s)),
        )
    }

    /// Partial derivative `d^a1/dxi1^a1 d^a2/dxi2^a2`.
    pub fn derivative(&self, a1: u32, a2: u32) -> Self {
        let mut out = Self {
            degree: self.degree.saturating_sub(a1 + a2),
            coeffs: BTreeMap::new(),
        };
        for (&(e1, e2), &c) in &self.coeffs {
            if e1 < a1 || e2 < a2 {
                continue;
            }
            let f = falling(e1, a1) * falling(e2, a2);
            out.add_term(e1 - a1, e2 - a2, c * f);
        }
        out
    }

    /// `P_11 P_22 - P_12^2`.
    pub fn hessian_det(&self) -> Self {
        let p11 = self.derivative(2, 0);
        let p22 = self.derivative(0, 2);
        let p12 = self.derivative(1, 1);
        (&(&p11 * &p22) - &(&p12 * &p12)).with_degree(2 * self.degree.saturating_sub(2))
    }

    /// `P(T(xi))`, expanded.
    pub fn compose_affine(&self, t: &AffineMap2) -> Self {
        let d = self.actual_degree() as usize;
        let [[a, b], [c, e]] = t.linear;
        let l1 = Self::from_terms(1, [(1, 0, a), (0, 1, b), (0, 0, t.shift[0])]);
        let l2 = Self::from_terms(1, [(1, 0, c), (0, 1, e), (0, 0, t.shift[1])]);
        let pw1 = powers(&l1, d);
        let pw2 = powers(&l2, d);
        let mut out = Self {
            degree: self.degree,
            coeffs: BTreeMap::new(),
        };
        for (&(a1, a2), &k) in &self.coeffs {
            let m = &pw1[a1 as usize] * &pw2[a2 as usize];
            for ((e1, e2), v) in m.terms() {
                out.add_term(e1, e2, k * v);
            }
        }
        out.degree = self.degree;
        out
    }

    /// `phi o T` with its constant and linear terms removed.
    pub fn recentred(&self, t: &AffineMap2) -> Self {
        let mut q = self.compose_affine(t);
        for k in [(0, 0), (1, 0), (0, 1)] {
            q.coeffs.remove(&k);
        }
        q
    }

    /// `(P / ||P||, ||P||)`.
    pub fn normalize(&self) -> Result<(Self, f64)> {
        let n = self.coeff_norm();
        if n == 0.0 {
            return Err(Error::ZeroPolynomial);
        }
        Ok((self.scale(1.0 / n), n))
    }

    /// Drops coefficients with `|c| <= tol`.
    pub fn chop(&self, tol: f64) -> Self {
        Self::from_terms(
            self.degree,
            self.coeffs
                .iter()
                .filter(|(_, c)| c.abs() > tol)
                .map(|(&(a1, a2), &c)| (a1, a2, c)),
        )
    }

    /// `t -> P(p0 + t * dir)` as a univariate polynomial.
    pub fn restrict_line(&self, p0: [f64; 2], dir: [f64; 2]) -> Poly1 {
        let t = AffineMap2 {
            linear: [[dir[0], 0.0], [dir[1], 0.0]],
            shift: p0,
        };
        let q = self.compose_affine(&t);
        let mut c = vec![0.0; self.actual_degree() as usize + 1];
        for ((a1, _), v) in q.terms() {
            c[a1 as usize] += v;
        }
        Poly1::new(c)
    }

    /// Largest absolute coefficient difference to `other`.
    pub fn max_coeff_diff(&self, other: &Self) -> f64 {
        (self - other).coeff_norm()
    }
}

fn falling(n: u32, k: u32) -> f64 {
    (0..k).map(|i| (n - i) as f64).product()
}

fn powers(p: &Poly2, d: usize) -> Vec<Poly2> {
    let mut v = Vec::with_capacity(d + 1);
    v.push(Poly2::constant(1.0));
    for k in 1..=d {
        let next = &v[k - 1] * p;
        v.push(next);
    }
    v
}

impl<'a> Add<&'a Poly2> for &'a Poly2 {
    type Output = Poly2;
    fn add(self, rhs: &Poly2) -> Poly2 {
        let mut out = self.clone();
        out.degree = out.degree.max(rhs.degree);
        for (&(a1, a2), &c) in &rhs.coeffs {
            out.add_term(a1, a2, c);
        }
        out
    }
}

impl<'a> Sub<&'a Poly2> for &'a Poly2 {
    type Output = Poly2;
    fn sub(self, rhs: &Poly2) -> Poly2 {
        let mut out = self.clone();
        out.degree = out.degree.max(rhs.degree);
        for (&(a1, a2), &c) in &rhs.coeffs {
            out.add_term(a1, a2, -c);
        }
        out
    }
}

impl<'a> Mul<&'a Poly2> for &'a Poly2 {
    type Output = Poly2;
    fn mul(self, rhs: &Poly2) -> Poly2 {
        let mut out = Poly2 {
            degree: self.degree + rhs.degree,
            coeffs: BTreeMap::new(),
        };
        for (&(a1, a2), &c) in &self.coeffs {
            for (&(b1, b2), &k) in &rhs.coeffs {
                out.add_term(a1 + b1, a2 + b2, c * k);
            }
        }
        out
    }
}

impl Neg for &Poly2 {
    type Output = Poly2;
    fn neg(self) -> Poly2 {
        self.scale(-1.0)
    }
}

impl Add for Poly2 {
    type Output = Poly2;
    fn add(self, rhs: Poly2) -> Poly2 {
        &self + &rhs
    }
}

impl Sub for Poly2 {
    type Output = Poly2;
    fn sub(self, rhs: Poly2) -> Poly2 {
        &self - &rhs
    }
}

impl Mul for Poly2 {
    type Output = Poly2;
    fn mul(self, rhs: Poly2) -> Poly2 {
        &self * &rhs
    }
}

impl fmt::Display for Poly2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (&(a1, a2), &c) in &self.coeffs {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{c}")?;
            if a1 > 0 {
                write!(f, "*x^{a1}")?;
            }
            if a2 > 0 {
                write!(f, "*y^{a2}")?;
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct TermJson {
    a1: u32,
    a2: u32,
    c: f64,
}

#[derive(Serialize, Deserialize)]
struct Poly2Json {
    degree: u32,
    terms: Vec<TermJson>,
}

impl Serialize for Poly2 {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        Poly2Json {
            degree: self.degree,
            terms: self
                .coeffs
                .iter()
                .map(|(&(a1, a2), &c)| TermJson { a1, a2, c })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Poly2 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = Poly2Json::deserialize(d)?;
        if let Some(t) = j.terms.iter().find(|t| !t.c.is_finite()) {
            return Err(serde::de::Error::custom(format!(
                "non-finite coefficient at ({}, {})",
                t.a1, t.a2
            )));
        }
        Ok(Poly2::from_terms(
            j.degree,
            j.terms.into_iter().map(|t| (t.a1, t.a2, t.c)),
        ))
    }
}

/// Univariate polynomial, `coeffs[k]` multiplies `t^k`.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Poly1 {
    coeffs: Vec<f64>,
}

impl Poly1 {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    pub fn derivative(&self) -> Self {
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| c * k as f64)
                .collect(),
        )
    }

    pub fn coeff_norm(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// `t -> P(a t + b)`.
    pub fn compose_affine(&self, a: f64, b: f64) -> Self {
        // Horner in polynomial arithmetic.
        let mut acc: Vec<f64> = Vec::new();
        for &c in self.coeffs.iter().rev() {
            let mut next = vec![0.0; acc.len() + 1];
            for (k, &v) in acc.iter().enumerate() {
                next[k] += v * b;
                next[k + 1] += v * a;
            }
            next[0] += c;
            acc = next;
        }
        Self::new(acc)
    }

    /// Treats `P(t)` as the polynomial `P(xi1)` in two variables.
    pub fn to_poly2(&self) -> Poly2 {
        Poly2::from_terms(
            self.degree() as u32,
            self.coeffs
                .iter()
                .enumerate()
                .map(|(k, &c)| (k as u32, 0, c)),
        )
    }
}

/// Source of exact partial derivatives for [`taylor2`].
pub trait DerivativeOracle {
    /// `d^b1/dxi1^b1 d^b2/dxi2^b2 phi(at)`, or `None` if unavailable.
    fn partial(&self, b1: u32, b2: u32, at: [f64; 2]) -> Option<f64>;
}

impl DerivativeOracle for Poly2 {
    fn partial(&self, b1: u32, b2: u32, at: [f64; 2]) -> Option<f64> {
        Some(self.derivative(b1, b2).eval(at))
    }
}

impl<F: Fn(u32, u32, [f64; 2]) -> Option<f64>> DerivativeOracle for F {
    fn partial(&self, b1: u32, b2: u32, at: [f64; 2]) -> Option<f64> {
        self(b1, b2, at)
    }
}

/// Degree-`d` Taylor polynomial of `phi` at `center`, expanded in powers of `xi`.
pub fn taylor2<O: DerivativeOracle + ?Sized>(oracle: &O, center: [f64; 2], d: u32) -> Result<Poly2> {
    let mut local = Vec::new();
    for total in 0..=d {
        for b1 in 0..=total {
            let b2 = total - b1;
            let v = oracle
                .partial(b1, b2, center)
                .ok_or(Error::OracleMissingDerivative(b1, b2))?;
            local.push((b1, b2, v / (factorial(b1) * factorial(b2))));
        }
    }
    let q = Poly2::from_terms(d, local);
    Ok(q.compose_affine(&AffineMap2::translation([-center[0], -center[1]])))
}

pub fn factorial(n: u32) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(terms: &[(u32, u32, f64)]) -> Poly2 {
        let d = terms.iter().map(|t| t.0 + t.1).max().unwrap_or(0);
        Poly2::from_terms(d, terms.iter().copied())
    }

    fn random_poly(rng: &mut ChaCha8Rng, d: u32) -> Poly2 {
        let mut t = Vec::new();
        for a1 in 0..=d {
            for a2 in 0..=(d - a1) {
                t.push((a1, a2, rng.gen_range(-1.0..1.0)));
            }
        }
        Poly2::from_terms(d, t)
    }

    #[test]
    fn eval_examples() {
        assert_eq!(p(&[(2, 0, 1.0), (0, 2, 1.0)]).eval([0.0, 0.0]), 0.0);
        assert_eq!(p(&[(1, 1, 1.0)]).eval([1.0, 1.0]), 1.0);
        assert_eq!(p(&[(3, 0, 1.0), (1, 2, -3.0)]).eval([2.0, 1.0]), 2.0);
    }

    #[test]
    fn coeff_norm_examples() {
        assert_eq!(p(&[(2, 0, 1.0), (0, 1, 2.0)]).coeff_norm(), 2.0);
        assert_eq!(Poly2::zero().coeff_norm(), 0.0);
        let one_plus = p(&[(0, 0, 1.0), (1, 0, 1.0)]);
        let cube = &(&one_plus * &one_plus) * &one_plus;
        assert_eq!(cube.coeff_norm(), 3.0);
    }

    #[test]
    fn derivative_examples() {
        assert_eq!(p(&[(2, 1, 1.0)]).derivative(1, 1), p(&[(1, 0, 2.0)]));
        assert!(Poly2::constant(5.0).derivative(1, 0).is_zero());
        assert_eq!(p(&[(4, 0, 1.0)]).derivative(2, 0), p(&[(2, 0, 12.0)]));
    }

    #[test]
    fn hessian_det_examples() {
        let parab = p(&[(2, 0, 0.5), (0, 2, 0.5)]);
        assert_eq!(parab.hessian_det(), Poly2::constant(1.0).with_degree(0));
        assert_eq!(p(&[(1, 1, 1.0)]).hessian_det().coeff(0, 0), -1.0);
        let q = p(&[(4, 0, 1.0), (0, 2, 1.0)]).hessian_det();
        assert_eq!(q.num_terms(), 1);
        assert_eq!(q.coeff(2, 0), 24.0);
    }

    #[test]
    fn compose_examples() {
        let x = Poly2::x1();
        assert_eq!(x.compose_affine(&AffineMap2::identity()), x);
        let sq = p(&[(2, 0, 1.0)]);
        let t = AffineMap2::linear([[0.5, 0.0], [0.0, 1.0]]);
        assert_eq!(sq.compose_affine(&t), p(&[(2, 0, 0.25)]));
        let r = AffineMap2::rotation(std::f64::consts::FRAC_PI_4);
        let q = p(&[(1, 1, 1.0)]).compose_affine(&r);
        let want = p(&[(2, 0, 0.5), (0, 2, -0.5)]);
        assert!(q.max_coeff_diff(&want) < 1e-15, "{q}");
    }

    #[test]
    fn recentred_examples() {
        let phi = p(&[(2, 0, 1.0), (1, 0, 3.0), (0, 0, 5.0)]);
        assert_eq!(phi.recentred(&AffineMap2::identity()), p(&[(2, 0, 1.0)]));
        assert!(p(&[(1, 0, 2.0), (0, 1, -1.0), (0, 0, 4.0)])
            .recentred(&AffineMap2::identity())
            .is_zero());
        let xy = p(&[(1, 1, 1.0)]);
        assert_eq!(xy.recentred(&AffineMap2::translation([1.0, 1.0])), xy);
    }

    #[test]
    fn normalize_examples() {
        let (q, s) = p(&[(2, 0, 4.0)]).normalize().unwrap();
        assert_eq!((q, s), (p(&[(2, 0, 1.0)]), 4.0));
        let sum = p(&[(2, 0, 1.0), (0, 2, 1.0)]);
        assert_eq!(sum.normalize().unwrap(), (sum.clone(), 1.0));
        assert_eq!(Poly2::zero().normalize(), Err(Error::ZeroPolynomial));
    }

    #[test]
    fn taylor_examples() {
        let phi = p(&[(3, 0, 1.0), (1, 2, -3.0), (1, 1, 2.0)]);
        let t = taylor2(&phi, [0.3, -0.7], 3).unwrap();
        assert!(t.max_coeff_diff(&phi) < 1e-13);

        let sin = |b1: u32, b2: u32, at: [f64; 2]| -> Option<f64> {
            if b2 > 0 {
                return Some(0.0);
            }
            Some(match b1 % 4 {
                0 => at[0].sin(),
                1 => at[0].cos(),
                2 => -at[0].sin(),
                _ => -at[0].cos(),
            })
        };
        let t = taylor2(&sin, [0.0, 0.0], 3).unwrap();
        assert!(t.max_coeff_diff(&p(&[(1, 0, 1.0), (3, 0, -1.0 / 6.0)])) < 1e-15);

        let xy = p(&[(1, 1, 1.0)]);
        let t = taylor2(&xy, [1.0, 0.0], 2).unwrap();
        assert!(t.max_coeff_diff(&xy) < 1e-15);

        let partial = |b1: u32, _b2: u32, _at: [f64; 2]| if b1 < 2 { Some(1.0) } else { None };
        assert_eq!(
            taylor2(&partial, [0.0, 0.0], 2),
            Err(Error::OracleMissingDerivative(2, 0))
        );
    }

    #[test]
    fn json_is_sorted_and_round_trips() {
        let q = p(&[(0, 2, 1.5), (2, 0, -1.0), (1, 0, 0.25)]);
        let s = serde_json::to_string(&q).unwrap();
        assert_eq!(
            s,
            r#"{"degree":2,"terms":[{"a1":0,"a2":2,"c":1.5},{"a1":1,"a2":0,"c":0.25},{"a1":2,"a2":0,"c":-1.0}]}"#
        );
        let back: Poly2 = serde_json::from_str(&s).unwrap();
        assert_eq!(back, q);
    }

    #[test]
    fn poly1_basics() {
        let a = Poly1::new(vec![1.0, -2.0, 3.0, 0.0]);
        assert_eq!(a.degree(), 2);
        assert_eq!(a.eval(2.0), 9.0);
        assert_eq!(a.derivative(), Poly1::new(vec![-2.0, 6.0]));
        let b = a.compose_affine(2.0, 1.0);
        for t in [-1.0, 0.0, 0.3, 2.0] {
            assert!((b.eval(t) - a.eval(2.0 * t + 1.0)).abs() < 1e-12);
        }
        let q = p(&[(2, 0, 1.0), (1, 1, 1.0), (0, 1, 1.0)]);
        let line = q.restrict_line([0.5, -1.0], [1.0, 2.0]);
        for t in [-1.0, 0.0, 0.7] {
            let v = q.eval([0.5 + t, -1.0 + 2.0 * t]);
            assert!((line.eval(t) - v).abs() < 1e-12);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let q = random_poly(&mut rng, 6);
            for _ in 0..100 {
                let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                let h = 1e-5;
                let fd1 = (q.eval([x[0] + h, x[1]]) - q.eval([x[0] - h, x[1]])) / (2.0 * h);
                let fd2 = (q.eval([x[0], x[1] + h]) - q.eval([x[0], x[1] - h])) / (2.0 * h);
                let d1 = q.derivative(1, 0).eval(x);
                let d2 = q.derivative(0, 1).eval(x);
                assert!((fd1 - d1).abs() <= 1e-5 * d1.abs().max(1.0));
                assert!((fd2 - d2).abs() <= 1e-5 * d2.abs().max(1.0));
            }
        }
    }

    #[test]
    fn coeff_norm_vs_sup_constant_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut worst_up: f64 = 0.0;
        let mut worst_down: f64 = 0.0;
        for _ in 0..20 {
            let q = random_poly(&mut rng, 4);
            let mut sup: f64 = 0.0;
            for i in 0..100 {
                for j in 0..100 {
                    let x = [-1.0 + 2.0 * i as f64 / 99.0, -1.0 + 2.0 * j as f64 / 99.0];
                    sup = sup.max(q.eval(x).abs());
                }
            }
            worst_up = worst_up.max(q.coeff_norm() / sup);
            worst_down = worst_down.max(sup / q.coeff_norm());
        }
        // sup <= l1 <= 15 ||P|| for degree 4; the other direction is Markov-type.
        assert!(worst_down <= 15.0);
        assert!(worst_up < 50.0, "C_d measured {worst_up}");
    }

    proptest! {
        #[test]
        fn hessian_transforms_under_affine_maps(
            seed in 0u64..1000,
            l in proptest::array::uniform4(-2.0f64..2.0),
            b in proptest::array::uniform2(-1.0f64..1.0),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let q = random_poly(&mut rng, 5);
            let t = AffineMap2 { linear: [[l[0], l[1]], [l[2], l[3]]], shift: b };
            let lhs = q.compose_affine(&t).hessian_det();
            let det = t.det();
            let rhs = q.hessian_det().compose_affine(&t).scale(det * det);
            // Cancellation happens at the size of products of second derivatives.
            let scale = (20.0 * q.compose_affine(&t).coeff_norm()).powi(2).max(1.0);
            prop_assert!(lhs.max_coeff_diff(&rhs) <= 1e-10 * scale);
        }

        #[test]
        fn recentred_has_no_affine_part(
            seed in 0u64..1000,
            l in proptest::array::uniform4(-2.0f64..2.0),
            b in proptest::array::uniform2(-1.0f64..1.0),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let q = random_poly(&mut rng, 4);
            let t = AffineMap2 { linear: [[l[0], l[1]], [l[2], l[3]]], shift: b };
            let r = q.recentred(&t);
            prop_assert_eq!(r.coeff(0, 0), 0.0);
            prop_assert_eq!(r.coeff(1, 0), 0.0);
            prop_assert_eq!(r.coeff(0, 1), 0.0);
        }
    }
}
