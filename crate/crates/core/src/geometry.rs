//! Affine maps, parallelograms, and the admissibility predicate.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::enclosure::{range_enclosure, RangeEnclosure};
use crate::error::{Error, Result};
use crate::poly::Poly2;

/// `xi -> L xi + b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineMap2 {
    pub linear: [[f64; 2]; 2],
    pub shift: [f64; 2],
}

impl AffineMap2 {
    pub fn identity() -> Self {
        Self::linear([[1.0, 0.0], [0.0, 1.0]])
    }

    pub fn linear(l: [[f64; 2]; 2]) -> Self {
        Self {
            linear: l,
            shift: [0.0, 0.0],
        }
    }

    pub fn translation(b: [f64; 2]) -> Self {
        Self {
            linear: [[1.0, 0.0], [0.0, 1.0]],
            shift: b,
        }
    }

    /// Counter-clockwise rotation by `theta`.
    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self::linear([[c, -s], [s, c]])
    }

    pub fn apply(&self, x: [f64; 2]) -> [f64; 2] {
        let l = &self.linear;
        [
            l[0][0] * x[0] + l[0][1] * x[1] + self.shift[0],
            l[1][0] * x[0] + l[1][1] * x[1] + self.shift[1],
        ]
    }

    pub fn apply_linear(&self, x: [f64; 2]) -> [f64; 2] {
        let l = &self.linear;
        [l[0][0] * x[0] + l[0][1] * x[1], l[1][0] * x[0] + l[1][1] * x[1]]
    }

    pub fn det(&self) -> f64 {
        let l = &self.linear;
        l[0][0] * l[1][1] - l[0][1] * l[1][0]
    }

    pub fn inverse(&self) -> Result<Self> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return Err(Error::DegenerateParallelogram(d));
        }
        let l = &self.linear;
        let inv = [[l[1][1] / d, -l[0][1] / d], [-l[1][0] / d, l[0][0] / d]];
        let m = Self::linear(inv);
        let b = m.apply(self.shift);
        Ok(Self {
            linear: inv,
            shift: [-b[0], -b[1]],
        })
    }

    /// `self o inner`.
    pub fn compose(&self, inner: &Self) -> Self {
        let a = &self.linear;
        let b = &inner.linear;
        let mut l = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                l[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Self {
            linear: l,
            shift: self.apply(inner.shift),
        }
    }
}

/// `T([-1,1]^2)` for an invertible affine `T`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Parallelogram {
    pub map: AffineMap2,
}

impl Parallelogram {
    pub fn new(l: [[f64; 2]; 2], b: [f64; 2]) -> Result<Self> {
        Self::from_map(AffineMap2 { linear: l, shift: b })
    }

    pub fn from_map(map: AffineMap2) -> Result<Self> {
        let d = map.det();
        if d == 0.0 || !d.is_finite() {
            return Err(Error::DegenerateParallelogram(d));
        }
        Ok(Self { map })
    }

    pub fn unit_square() -> Self {
        Self {
            map: AffineMap2::identity(),
        }
    }

    /// Axis-parallel rectangle `[x0,x1] x [y0,y1]`.
    pub fn from_rect(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self {
            map: AffineMap2 {
                linear: [[0.5 * (x1 - x0), 0.0], [0.0, 0.5 * (y1 - y0)]],
                shift: [0.5 * (x0 + x1), 0.5 * (y0 + y1)],
            },
        }
    }

    /// Rectangle with centre `c`, unit direction `dir` of the first half-edge, half-lengths `h1`, `h2`.
    pub fn oriented_rect(c: [f64; 2], dir: [f64; 2], h1: f64, h2: f64) -> Self {
        Self {
            map: AffineMap2 {
                linear: [[dir[0] * h1, -dir[1] * h2], [dir[1] * h1, dir[0] * h2]],
                shift: c,
            },
        }
    }

    pub fn center(&self) -> [f64; 2] {
        self.map.shift
    }

    /// First half-edge `L e1`.
    pub fn u(&self) -> [f64; 2] {
        [self.map.linear[0][0], self.map.linear[1][0]]
    }

    /// Second half-edge `L e2`.
    pub fn v(&self) -> [f64; 2] {
        [self.map.linear[0][1], self.map.linear[1][1]]
    }

    pub fn area(&self) -> f64 {
        4.0 * self.map.det().abs()
    }

    /// Shorter of the two distances between opposite sides.
    pub fn width(&self) -> Result<f64> {
        let d = self.map.det().abs();
        if d == 0.0 {
            return Err(Error::DegenerateParallelogram(0.0));
        }
        let nu = norm(self.u());
        let nv = norm(self.v());
        // Sides parallel to u are 2 d / |u| apart, sides parallel to v are 2 d / |v| apart.
        Ok((2.0 * d / nu).min(2.0 * d / nv))
    }

    /// Width, for parallelograms already known to be nondegenerate.
    pub fn w(&self) -> f64 {
        let d = self.map.det().abs();
        2.0 * d / norm(self.u()).max(norm(self.v()))
    }

    /// Length of the longer pair of sides.
    pub fn length(&self) -> f64 {
        2.0 * norm(self.u()).max(norm(self.v()))
    }

    pub fn dilate(&self, c: f64) -> Self {
        let l = &self.map.linear;
        Self {
            map: AffineMap2 {
                linear: [[c * l[0][0], c * l[0][1]], [c * l[1][0], c * l[1][1]]],
                shift: self.map.shift,
            },
        }
    }

    pub fn contains(&self, x: [f64; 2]) -> Result<bool> {
        let inv = self.map.inverse()?;
        let s = inv.apply(x);
        Ok(s[0].abs() <= 1.0 && s[1].abs() <= 1.0)
    }

    /// Local coordinates `T^{-1}(x)`. Panics on a degenerate map.
    pub fn local(&self, x: [f64; 2]) -> [f64; 2] {
        let l = &self.map.linear;
        let d = self.map.det();
        let y = [x[0] - self.map.shift[0], x[1] - self.map.shift[1]];
        [
            (l[1][1] * y[0] - l[0][1] * y[1]) / d,
            (-l[1][0] * y[0] + l[0][0] * y[1]) / d,
        ]
    }

    pub fn vertices(&self) -> [[f64; 2]; 4] {
        [
            self.map.apply([-1.0, -1.0]),
            self.map.apply([1.0, -1.0]),
            self.map.apply([1.0, 1.0]),
            self.map.apply([-1.0, 1.0]),
        ]
    }

    /// Axis-aligned bounding box `[x0, x1, y0, y1]`.
    pub fn bbox(&self) -> [f64; 4] {
        let hx = self.map.linear[0][0].abs() + self.map.linear[0][1].abs();
        let hy = self.map.linear[1][0].abs() + self.map.linear[1][1].abs();
        let c = self.map.shift;
        [c[0] - hx, c[0] + hx, c[1] - hy, c[1] + hy]
    }

    /// Image of the local sub-rectangle `[a1,b1] x [a2,b2] ⊆ [-1,1]^2`.
    pub fn sub(&self, a1: f64, b1: f64, a2: f64, b2: f64) -> Self {
        let r = Self::from_rect(a1, b1, a2, b2);
        Self {
            map: self.map.compose(&r.map),
        }
    }

    /// Halves along the longer edge direction.
    pub fn bisect_long(&self) -> [Self; 2] {
        if norm(self.u()) >= norm(self.v()) {
            [self.sub(-1.0, 0.0, -1.0, 1.0), self.sub(0.0, 1.0, -1.0, 1.0)]
        } else {
            [self.sub(-1.0, 1.0, -1.0, 0.0), self.sub(-1.0, 1.0, 0.0, 1.0)]
        }
    }

    /// Smallest `lambda` with `self ⊆ lambda * other` (both centred at `other`'s centre).
    pub fn containment_factor(&self, other: &Self) -> f64 {
        self.vertices()
            .iter()
            .map(|&v| {
                let s = other.local(v);
                s[0].abs().max(s[1].abs())
            })
            .fold(0.0, f64::max)
    }
}

pub(crate) fn norm(x: [f64; 2]) -> f64 {
    x[0].hypot(x[1])
}

#[derive(Serialize, Deserialize)]
struct ParallelogramJson {
    #[serde(rename = "L")]
    l: [[f64; 2]; 2],
    b: [f64; 2],
}

impl Serialize for Parallelogram {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ParallelogramJson {
            l: self.map.linear,
            b: self.map.shift,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Parallelogram {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = ParallelogramJson::deserialize(d)?;
        Parallelogram::new(j.l, j.b).map_err(serde::de::Error::custom)
    }
}

/// `(xi, eta)` with `xi` in one of `region` and `|eta - phi(xi)| < delta`.
pub fn in_neighborhood(phi: &Poly2, region: &[Parallelogram], delta: f64, xi: [f64; 2], eta: f64) -> bool {
    (eta - phi.eval(xi)).abs() < delta
        && region
            .iter()
            .any(|o| o.contains(xi).unwrap_or(false))
}

/// Constants hidden in the `≲` and `∼` of the admissibility definition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3_lo: f64,
    pub c3_hi: f64,
    pub c4_lo: f64,
    pub c4_hi: f64,
    pub c5: f64,
}

impl AdmissibilityConstants {
    pub fn for_eps(eps: f64) -> Self {
        Self {
            c1: 4.0,
            c2: 4.0,
            c3_lo: 0.25,
            c3_hi: 4.0,
            c4_lo: eps * eps / 100.0,
            c4_hi: 100.0 / (eps * eps),
            c5: 100.0 / (eps * eps),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdmissibilityClass {
    FlatAdmissible,
    CurvedAdmissible,
    NotAdmissible,
}

/// Measured quantities behind a verdict. Values are certified outer bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witnesses {
    pub sup_det_2omega: f64,
    pub inf_det_2omega: f64,
    pub phi_t_norm: f64,
    pub inf_det_bar: Option<f64>,
    pub sup_det_bar: Option<f64>,
    pub sup_d23_bar: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityVerdict {
    pub class: AdmissibilityClass,
    pub witnesses: Witnesses,
}

/// Relative tolerance schedule used by the certified comparisons.
const TOLS: [f64; 3] = [1e-3, 1e-5, 1e-8];

#[derive(Clone, Copy, PartialEq, Debug)]
enum Cmp {
    Yes,
    No,
}

/// Decides `sup_omega |P| <= thr` (`upper = true`) or `inf_omega |P| >= thr`,
/// tightening the enclosure while the threshold sits inside the uncertainty band.
fn certify_abs(p: &Poly2, omega: &Parallelogram, thr: f64, upper: bool) -> Result<(Cmp, RangeEnclosure)> {
    let scale = p.l1_norm().max(f64::MIN_POSITIVE);
    let mut last = None;
    for rel in TOLS {
        let r = range_enclosure(p, omega, rel * scale)?.abs();
        let verdict = if upper {
            if r.upper <= thr {
                Some(Cmp::Yes)
            } else if r.attained_max > thr {
                Some(Cmp::No)
            } else {
                None
            }
        } else if r.lower >= thr {
            Some(Cmp::Yes)
        } else if r.attained_min < thr {
            Some(Cmp::No)
        } else {
            None
        };
        if let Some(v) = verdict {
            return Ok((v, r));
        }
        last = Some(r);
    }
    let r = last.expect("tolerance schedule is nonempty");
    Err(Error::EnclosureTooLoose {
        lower: if upper { r.attained_max } else { r.lower },
        upper: if upper { r.upper } else { r.attained_min },
        threshold: thr,
    })
}

/// Certified range of `|P|` on `omega` at relative tolerance `rel`.
pub fn abs_range(p: &Poly2, omega: &Parallelogram, rel: f64) -> Result<RangeEnclosure> {
    let scale = p.l1_norm().max(f64::MIN_POSITIVE);
    Ok(range_enclosure(p, omega, rel * scale)?.abs())
}

/// Upper bound for `sup_{[-1,1]^2} sum_{|a|=2,3} |D^a q|`.
pub fn sup_d23(q: &Poly2) -> Result<f64> {
    let sq = Parallelogram::unit_square();
    let mut s = 0.0;
    for order in 2..=3u32 {
        for a1 in 0..=order {
            let d = q.derivative(a1, order - a1);
            if !d.is_zero() {
                s += abs_range(&d, &sq, 1e-6)?.upper;
            }
        }
    }
    Ok(s)
}

/// The two-case admissibility test with certified bounds.
///
/// Returns `EnclosureTooLoose` when a threshold cannot be decided even at the tightest tolerance.
pub fn check_admissible(
    phi: &Poly2,
    omega: &Parallelogram,
    sigma: f64,
    r: f64,
    k: &AdmissibilityConstants,
) -> Result<AdmissibilityVerdict> {
    let det = phi.hessian_det();
    let two = omega.dilate(2.0);
    let det_range = abs_range(&det, &two, 1e-4)?;
    let phi_t = phi.recentred(&omega.map);
    let mut w = Witnesses {
        sup_det_2omega: det_range.upper,
        inf_det_2omega: det_range.lower,
        phi_t_norm: phi_t.coeff_norm(),
        inf_det_bar: None,
        sup_det_bar: None,
        sup_d23_bar: None,
    };

    // Case 1.
    if w.phi_t_norm <= k.c2 / r {
        let (c, _) = certify_abs(&det, &two, k.c1 * sigma, true)?;
        if c == Cmp::Yes {
            return Ok(AdmissibilityVerdict {
                class: AdmissibilityClass::FlatAdmissible,
                witnesses: w,
            });
        }
    }

    // Case 2.
    let not = |w| {
        Ok(AdmissibilityVerdict {
            class: AdmissibilityClass::NotAdmissible,
            witnesses: w,
        })
    };
    if certify_abs(&det, &two, k.c3_hi * sigma, true)?.0 == Cmp::No {
        return not(w);
    }
    if certify_abs(&det, &two, k.c3_lo * sigma, false)?.0 == Cmp::No {
        return not(w);
    }
    let Ok((bar, _)) = phi_t.normalize() else {
        return not(w);
    };
    let sq = Parallelogram::unit_square();
    let dbar = bar.hessian_det();
    let (lo_ok, lo_r) = certify_abs(&dbar, &sq, k.c4_lo, false)?;
    w.inf_det_bar = Some(lo_r.lower);
    w.sup_det_bar = Some(lo_r.upper);
    if lo_ok == Cmp::No {
        return not(w);
    }
    let (hi_ok, hi_r) = certify_abs(&dbar, &sq, k.c4_hi, true)?;
    w.sup_det_bar = Some(hi_r.upper);
    if hi_ok == Cmp::No {
        return not(w);
    }
    let s23 = sup_d23(&bar)?;
    w.sup_d23_bar = Some(s23);
    if s23 > k.c5 {
        return not(w);
    }
    Ok(AdmissibilityVerdict {
        class: AdmissibilityClass::CurvedAdmissible,
        witnesses: w,
    })
}

/// `H(Omega)` and its surrogate `||phi_T||^{-2} |det L|^2 sigma`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HQuantity {
    pub certified_inf: f64,
    pub surrogate: f64,
}

pub fn h_quantity(phi: &Poly2, omega: &Parallelogram, sigma: f64) -> Result<HQuantity> {
    let phi_t = phi.recentred(&omega.map);
    let (bar, s) = phi_t.normalize()?;
    let det = bar.hessian_det();
    let r = abs_range(&det, &Parallelogram::unit_square(), 1e-6)?;
    let dl = omega.map.det();
    Ok(HQuantity {
        certified_inf: r.lower,
        surrogate: dl * dl * sigma / (s * s),
    })
}

/// Convex hull in counter-clockwise order (monotone chain).
pub fn convex_hull(pts: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut p: Vec<[f64; 2]> = pts.to_vec();
    p.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut h: Vec<[f64; 2]> = Vec::with_capacity(2 * p.len());
    for &x in &p {
        while h.len() >= 2 && cross(h[h.len() - 2], h[h.len() - 1], x) <= 0.0 {
            h.pop();
        }
        h.push(x);
    }
    let lower = h.len() + 1;
    for &x in p.iter().rev().skip(1) {
        while h.len() >= lower && cross(h[h.len() - 2], h[h.len() - 1], x) <= 0.0 {
            h.pop();
        }
        h.push(x);
    }
    h.pop();
    h
}

/// Minimum-area rectangle containing `pts`, searched over hull edge directions.
pub fn min_area_rect(pts: &[[f64; 2]]) -> Option<Parallelogram> {
    let h = convex_hull(pts);
    if h.len() < 3 {
        return None;
    }
    let mut best: Option<(f64, Parallelogram)> = None;
    for i in 0..h.len() {
        let a = h[i];
        let b = h[(i + 1) % h.len()];
        let e = [b[0] - a[0], b[1] - a[1]];
        let n = norm(e);
        if n == 0.0 {
            continue;
        }
        let u = [e[0] / n, e[1] / n];
        let v = [-u[1], u[0]];
        let (mut s0, mut s1, mut t0, mut t1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for q in &h {
            let s = q[0] * u[0] + q[1] * u[1];
            let t = q[0] * v[0] + q[1] * v[1];
            s0 = s0.min(s);
            s1 = s1.max(s);
            t0 = t0.min(t);
            t1 = t1.max(t);
        }
        let area = (s1 - s0) * (t1 - t0);
        if area <= 0.0 {
            continue;
        }
        if best.as_ref().map_or(true, |(ba, _)| area < *ba * (1.0 - 1e-12)) {
            let (sm, tm) = (0.5 * (s0 + s1), 0.5 * (t0 + t1));
            let c = [sm * u[0] + tm * v[0], sm * u[1] + tm * v[1]];
            best = Some((area, Parallelogram::oriented_rect(c, u, 0.5 * (s1 - s0), 0.5 * (t1 - t0))));
        }
    }
    best.map(|(_, p)| p)
}

/// Points of the `n x n` grid on `[-1,1]^2`, endpoints included.
pub fn unit_grid(n: usize) -> impl Iterator<Item = [f64; 2]> {
    let step = 2.0 / (n.max(2) - 1) as f64;
    (0..n * n).map(move |k| [-1.0 + step * (k / n) as f64, -1.0 + step * (k % n) as f64])
}

/// For each point of the `n x n` grid on `[-1,1]^2`, the number of `c`-dilates containing it.
pub fn dilate_counts_on_grid(pieces: &[Parallelogram], c: f64, n: usize) -> Vec<u32> {
    dilate_counts_on(pieces, c, n, [-1.0, 1.0, -1.0, 1.0])
}

/// [`dilate_counts_on_grid`] over the grid on the rectangle `[x0, x1, y0, y1]`.
pub fn dilate_counts_on(pieces: &[Parallelogram], c: f64, n: usize, dom: [f64; 4]) -> Vec<u32> {
    let sx = (dom[1] - dom[0]) / (n.max(2) - 1) as f64;
    let sy = (dom[3] - dom[2]) / (n.max(2) - 1) as f64;
    let mut counts = vec![0u32; n * n];
    let idx = |x: f64, o: f64, s: f64| ((x - o) / s).clamp(0.0, (n - 1) as f64);
    for p in pieces {
        let d = p.dilate(c);
        let [x0, x1, y0, y1] = d.bbox();
        if x1 < dom[0] || x0 > dom[1] || y1 < dom[2] || y0 > dom[3] {
            continue;
        }
        let (i0, i1) = (idx(x0, dom[0], sx).floor() as usize, idx(x1, dom[0], sx).ceil() as usize);
        let (j0, j1) = (idx(y0, dom[2], sy).floor() as usize, idx(y1, dom[2], sy).ceil() as usize);
        for i in i0..=i1 {
            for j in j0..=j1 {
                let x = [dom[0] + sx * i as f64, dom[2] + sy * j as f64];
                let s = d.local(x);
                if s[0].abs() <= 1.0 + 1e-12 && s[1].abs() <= 1.0 + 1e-12 {
                    counts[i * n + j] += 1;
                }
            }
        }
    }
    counts
}

/// Largest number of `c`-dilates over a point of the `n x n` grid.
pub fn max_dilate_overlap(pieces: &[Parallelogram], c: f64, n: usize) -> u32 {
    dilate_counts_on_grid(pieces, c, n).into_iter().max().unwrap_or(0)
}

/// Number of points of the `n x n` grid lying in none of the pieces.
pub fn uncovered_on_grid(pieces: &[Parallelogram], n: usize) -> usize {
    dilate_counts_on_grid(pieces, 1.0, n).iter().filter(|&&c| c == 0).count()
}
