//! Certified polynomial ranges via Bernstein coefficients and adaptive bisection.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AffineMap2, Parallelogram};
use crate::poly::Poly2;

/// Default number of sub-boxes one enclosure may examine.
pub const DEFAULT_BUDGET: usize = 1 << 15;

/// Outer bounds `lower <= min P`, `max P <= upper`, plus attained values
/// `attained_min >= min P` and `attained_max <= max P` taken from actual evaluations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RangeEnclosure {
    pub lower: f64,
    pub upper: f64,
    pub attained_min: f64,
    pub attained_max: f64,
}

impl RangeEnclosure {
    pub fn point(v: f64) -> Self {
        Self {
            lower: v,
            upper: v,
            attained_min: v,
            attained_max: v,
        }
    }

    /// Enclosure of `|P|` derived from the enclosure of `P`.
    pub fn abs(&self) -> Self {
        if self.lower >= 0.0 {
            *self
        } else if self.upper <= 0.0 {
            Self {
                lower: -self.upper,
                upper: -self.lower,
                attained_min: -self.attained_max,
                attained_max: -self.attained_min,
            }
        } else {
            let straddles = self.attained_min <= 0.0 && self.attained_max >= 0.0;
            Self {
                lower: 0.0,
                upper: self.upper.max(-self.lower),
                attained_min: if straddles {
                    0.0
                } else {
                    self.attained_min.abs().min(self.attained_max.abs())
                },
                attained_max: self.attained_max.abs().max(self.attained_min.abs()),
            }
        }
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Tensor Bernstein coefficients of a polynomial on `[0,1]^2`.
#[derive(Clone, Debug)]
struct Patch {
    n1: usize,
    n2: usize,
    b: Vec<f64>,
}

impl Patch {
    fn from_unit_square(q: &Poly2) -> Self {
        let n1 = q.terms().map(|((a, _), _)| a as usize).max().unwrap_or(0);
        let n2 = q.terms().map(|((_, a), _)| a as usize).max().unwrap_or(0);
        let w = n2 + 1;
        let mut a = vec![0.0; (n1 + 1) * w];
        for ((a1, a2), c) in q.terms() {
            a[a1 as usize * w + a2 as usize] = c;
        }
        // Power to Bernstein, one variable at a time.
        let mut tmp = vec![0.0; a.len()];
        for i in 0..=n1 {
            for j in 0..=n2 {
                let mut s = 0.0;
                for l in 0..=j {
                    s += binom(j, l) / binom(n2, l) * a[i * w + l];
                }
                tmp[i * w + j] = s;
            }
        }
        let mut b = vec![0.0; a.len()];
        for i in 0..=n1 {
            for j in 0..=n2 {
                let mut s = 0.0;
                for k in 0..=i {
                    s += binom(i, k) / binom(n1, k) * tmp[k * w + j];
                }
                b[i * w + j] = s;
            }
        }
        Self { n1, n2, b }
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.b[i * (self.n2 + 1) + j]
    }

    fn min_coeff(&self) -> f64 {
        self.b.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn min_corner(&self) -> f64 {
        self.at(0, 0)
            .min(self.at(self.n1, 0))
            .min(self.at(0, self.n2))
            .min(self.at(self.n1, self.n2))
    }

    fn negate(&mut self) {
        for v in &mut self.b {
            *v = -*v;
        }
    }

    fn split_dir1(&self) -> (Self, Self) {
        let w = self.n2 + 1;
        let mut left = self.clone();
        let mut right = self.clone();
        let mut col = vec![0.0; self.n1 + 1];
        for j in 0..w {
            for i in 0..=self.n1 {
                col[i] = self.b[i * w + j];
            }
            let (l, r) = casteljau_half(&col);
            for i in 0..=self.n1 {
                left.b[i * w + j] = l[i];
                right.b[i * w + j] = r[i];
            }
        }
        (left, right)
    }

    fn split_dir2(&self) -> (Self, Self) {
        let w = self.n2 + 1;
        let mut left = self.clone();
        let mut right = self.clone();
        for i in 0..=self.n1 {
            let row = &self.b[i * w..(i + 1) * w];
            let (l, r) = casteljau_half(row);
            left.b[i * w..(i + 1) * w].copy_from_slice(&l);
            right.b[i * w..(i + 1) * w].copy_from_slice(&r);
        }
        (left, right)
    }

    fn split4(&self) -> Vec<Self> {
        let mut out = Vec::with_capacity(4);
        let (a, b) = if self.n1 > 0 {
            self.split_dir1()
        } else {
            (self.clone(), self.clone())
        };
        for half in [a, b] {
            if self.n2 > 0 {
                let (c, d) = half.split_dir2();
                out.push(c);
                out.push(d);
            } else {
                out.push(half);
            }
        }
        if self.n1 == 0 {
            out.truncate(out.len() / 2);
        }
        out
    }
}

fn casteljau_half(c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = c.len();
    let mut work = c.to_vec();
    let mut left = Vec::with_capacity(n);
    let mut right = vec![0.0; n];
    for k in 0..n {
        left.push(work[0]);
        right[n - 1 - k] = work[n - 1 - k];
        for i in 0..n - 1 - k {
            work[i] = 0.5 * (work[i] + work[i + 1]);
        }
    }
    (left, right)
}

fn binom(n: usize, k: usize) -> f64 {
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r
}

struct Node {
    key: f64,
    patch: Patch,
}

impl PartialEq for Node {
    fn eq(&self, o: &Self) -> bool {
        self.key == o.key
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Node {
    fn cmp(&self, o: &Self) -> Ordering {
        // BinaryHeap is a max-heap; smallest key first.
        o.key.total_cmp(&self.key)
    }
}

/// Returns `(lower, attained)` with `lower <= min <= attained` and `attained - lower <= tol`.
fn certified_min(root: Patch, tol: f64, cap: usize, used: &mut usize) -> Result<(f64, f64)> {
    let mut best = root.min_corner();
    let mut heap = BinaryHeap::new();
    heap.push(Node {
        key: root.min_coeff(),
        patch: root,
    });
    loop {
        let Some(node) = heap.pop() else {
            return Ok((best, best));
        };
        if best - node.key <= tol {
            return Ok((node.key, best));
        }
        *used += 1;
        if *used > cap {
            return Err(Error::BudgetExceeded { cap, tol });
        }
        for child in node.patch.split4() {
            best = best.min(child.min_corner());
            let key = child.min_coeff();
            if key < best {
                heap.push(Node { key, patch: child });
            }
        }
    }
}

/// Patch of `P` over the parallelogram, in the unit-square parametrisation.
fn patch_over(p: &Poly2, omega: &Parallelogram) -> Patch {
    // xi = T(2u - 1), u in [0,1]^2.
    let to_square = AffineMap2 {
        linear: [[2.0, 0.0], [0.0, 2.0]],
        shift: [-1.0, -1.0],
    };
    let q = p.compose_affine(&omega.map.compose(&to_square));
    Patch::from_unit_square(&q)
}

/// Certified range of `P` over `omega`; see [`range_enclosure_with_budget`].
pub fn range_enclosure(p: &Poly2, omega: &Parallelogram, tol: f64) -> Result<RangeEnclosure> {
    range_enclosure_with_budget(p, omega, tol, DEFAULT_BUDGET)
}

/// Certified range with at most `cap` subdivisions. The returned enclosure exceeds the
/// true range by at most `tol` in total.
pub fn range_enclosure_with_budget(
    p: &Poly2,
    omega: &Parallelogram,
    tol: f64,
    cap: usize,
) -> Result<RangeEnclosure> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    if p.actual_degree() == 0 {
        return Ok(RangeEnclosure::point(p.coeff(0, 0)));
    }
    let patch = patch_over(p, omega);
    // Round-off guard proportional to the coefficient magnitudes.
    let pad = 1e-14 * patch.b.iter().fold(0.0f64, |m, v| m.max(v.abs())) * (patch.b.len() as f64);
    let mut used = 0;
    let (lo, amin) = certified_min(patch.clone(), 0.5 * tol, cap, &mut used)?;
    let mut neg = patch;
    neg.negate();
    let (nlo, namax) = certified_min(neg, 0.5 * tol, cap, &mut used)?;
    Ok(RangeEnclosure {
        lower: lo - pad,
        upper: -nlo + pad,
        attained_min: amin,
        attained_max: -namax,
    })
}

/// Single-shot Bernstein bound (no subdivision). Cheap and always valid, but loose.
pub fn bernstein_bound(p: &Poly2, omega: &Parallelogram) -> RangeEnclosure {
    if p.actual_degree() == 0 {
        return RangeEnclosure::point(p.coeff(0, 0));
    }
    let patch = patch_over(p, omega);
    let pad = 1e-14 * patch.b.iter().fold(0.0f64, |m, v| m.max(v.abs())) * (patch.b.len() as f64);
    let lo = patch.min_coeff();
    let hi = patch.b.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let cmin = patch.min_corner();
    let cmax = patch
        .at(0, 0)
        .max(patch.at(patch.n1, 0))
        .max(patch.at(0, patch.n2))
        .max(patch.at(patch.n1, patch.n2));
    RangeEnclosure {
        lower: lo - pad,
        upper: hi + pad,
        attained_min: cmin,
        attained_max: cmax,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sq() -> Parallelogram {
        Parallelogram::unit_square()
    }

    #[test]
    fn square_of_x_on_unit_square() {
        let p = Poly2::monomial(1.0, 2, 0);
        let r = range_enclosure(&p, &sq(), 1e-6).unwrap();
        assert!(r.lower <= 0.0 && r.lower >= -1e-6);
        assert!(r.upper >= 1.0 && r.upper <= 1.0 + 1e-6);
    }

    #[test]
    fn constant_is_exact() {
        let r = range_enclosure(&Poly2::constant(3.0), &sq(), 1e-6).unwrap();
        assert_eq!((r.lower, r.upper), (3.0, 3.0));
    }

    #[test]
    fn product_on_positive_quadrant() {
        let p = Poly2::monomial(1.0, 1, 1);
        let q = Parallelogram::from_rect(0.0, 1.0, 0.0, 1.0);
        let r = range_enclosure(&p, &q, 1e-9).unwrap();
        assert!(r.lower <= 0.0 && r.upper >= 1.0);
        assert!(r.width() <= 1.0 + 1e-9);
    }

    #[test]
    fn interior_minimum_is_resolved() {
        // (x - 0.3)^2 + (y + 0.2)^2 - 0.5 has an interior minimum of -0.5.
        let p = Poly2::from_terms(
            2,
            [
                (2, 0, 1.0),
                (1, 0, -0.6),
                (0, 2, 1.0),
                (0, 1, 0.4),
                (0, 0, 0.09 + 0.04 - 0.5),
            ],
        );
        let r = range_enclosure(&p, &sq(), 1e-8).unwrap();
        assert!(r.lower <= -0.5 && r.lower >= -0.5 - 1e-7, "{r:?}");
        assert!(r.attained_min >= -0.5 && r.attained_min <= -0.5 + 1e-7);
    }

    #[test]
    fn budget_is_enforced() {
        let p = Poly2::from_terms(4, [(4, 0, 1.0), (2, 2, -3.0), (0, 4, 1.0), (1, 1, 0.3)]);
        let e = range_enclosure_with_budget(&p, &sq(), 1e-14, 4).unwrap_err();
        assert!(matches!(e, Error::BudgetExceeded { cap: 4, .. }));
    }

    #[test]
    fn abs_of_sign_changing_range() {
        let r = RangeEnclosure {
            lower: -2.0,
            upper: 1.0,
            attained_min: -1.9,
            attained_max: 0.9,
        };
        let a = r.abs();
        assert_eq!((a.lower, a.upper, a.attained_min, a.attained_max), (0.0, 2.0, 0.0, 1.9));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn never_excludes_samples(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut t = Vec::new();
            for a1 in 0..=4u32 {
                for a2 in 0..=(4 - a1) {
                    t.push((a1, a2, rng.gen_range(-1.0..1.0)));
                }
            }
            let p = Poly2::from_terms(4, t);
            let l = [[rng.gen_range(0.2..1.0), rng.gen_range(-0.5..0.5)],
                     [rng.gen_range(-0.5..0.5), rng.gen_range(0.2..1.0)]];
            let omega = Parallelogram::new(l, [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)]).unwrap();
            let r = range_enclosure(&p, &omega, 1e-6).unwrap();
            let b = bernstein_bound(&p, &omega);
            for _ in 0..10_000 {
                let s = [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)];
                let v = p.eval(omega.map.apply(s));
                prop_assert!(r.lower <= v && v <= r.upper);
                prop_assert!(b.lower <= v && v <= b.upper);
            }
            prop_assert!(r.attained_min - r.lower <= 1e-6);
            prop_assert!(r.upper - r.attained_max <= 1e-6);
        }
    }
}
