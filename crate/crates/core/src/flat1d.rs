//! Partitions of an interval into pieces on which a univariate polynomial is δ-flat.

use serde::{Deserialize, Serialize};

use crate::enclosure::{bernstein_bound, range_enclosure};
use crate::error::{Error, Result};
use crate::geometry::Parallelogram;
use crate::poly::{Poly1, Poly2};

/// Default domain of the partition.
pub const DEFAULT_DOMAIN: (f64, f64) = (-2.0, 2.0);

/// Relative slack when comparing a certified defect against δ, so that exact ties
/// (for example `L^2/2 = δ`) are not split by round-off.
const TIE_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub a: f64,
    pub b: f64,
    /// Produced by merging; the flatness guarantee no longer applies.
    pub stop: bool,
}

impl Interval {
    pub fn len(&self) -> f64 {
        self.b - self.a
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalPartition {
    pub delta: f64,
    pub intervals: Vec<Interval>,
    #[serde(skip)]
    pub provenance: Vec<String>,
}

impl IntervalPartition {
    pub fn min_len(&self) -> f64 {
        self.intervals.iter().map(Interval::len).fold(f64::INFINITY, f64::min)
    }

    /// Largest number of `c`-dilates covering a single point.
    pub fn max_dilate_overlap(&self, c: f64) -> usize {
        max_dilate_overlap(&self.intervals, c)
    }
}

pub fn max_dilate_overlap(intervals: &[Interval], c: f64) -> usize {
    let mut ev: Vec<(f64, i32)> = Vec::with_capacity(2 * intervals.len());
    for i in intervals {
        let m = 0.5 * (i.a + i.b);
        let h = 0.5 * c * i.len();
        ev.push((m - h, 1));
        ev.push((m + h, -1));
    }
    // Closed intervals: openings sort before closings at equal coordinates.
    ev.sort_by(|x, y| x.0.total_cmp(&y.0).then(y.1.cmp(&x.1)));
    let mut cur = 0i32;
    let mut best = 0i32;
    for (_, d) in ev {
        cur += d;
        best = best.max(cur);
    }
    best as usize
}

/// `D(x, y) = P(x) - P(y) - P'(y)(x - y)` as a bivariate polynomial.
pub fn defect_poly(p: &Poly1) -> Poly2 {
    let px = p.to_poly2();
    let swap = crate::geometry::AffineMap2::linear([[0.0, 1.0], [1.0, 0.0]]);
    let py = px.compose_affine(&swap);
    let dpy = p.derivative().to_poly2().compose_affine(&swap);
    let diff = &Poly2::x1() - &Poly2::x2();
    &(&px - &py) - &(&dpy * &diff)
}

/// Certified upper bound of `sup_{x,y in [a,b]} |D(x,y)|`.
pub fn flatness_defect(p: &Poly1, a: f64, b: f64) -> f64 {
    if p.degree() <= 1 {
        return 0.0;
    }
    let d = defect_poly(p);
    defect_on(&d, a, b)
}

fn defect_on(d: &Poly2, a: f64, b: f64) -> f64 {
    let sq = Parallelogram::from_rect(a, b, a, b);
    let rough = bernstein_bound(d, &sq).abs();
    if rough.upper == 0.0 {
        return 0.0;
    }
    let tol = 1e-6 * rough.upper;
    match range_enclosure(d, &sq, tol) {
        Ok(r) => r.abs().upper,
        Err(_) => rough.upper,
    }
}

/// Recursive bisection of `domain` until every piece has certified defect `<= delta`.
///
/// Requires `||P|| <= 1`; callers rescale `delta` when normalising.
pub fn flat_partition(p: &Poly1, delta: f64, domain: (f64, f64)) -> Result<IntervalPartition> {
    let n = p.coeff_norm();
    if n > 1.0 + 1e-12 {
        return Err(Error::NotBounded(n));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    let (a, b) = domain;
    let mut part = IntervalPartition {
        delta,
        intervals: Vec::new(),
        provenance: Vec::new(),
    };
    if delta >= 1.0 || p.degree() <= 1 {
        part.intervals.push(Interval { a, b, stop: false });
        part.provenance.push("trivial".into());
        return Ok(part);
    }
    let d = defect_poly(p);
    let mut stack = vec![(a, b)];
    let mut splits = 0usize;
    while let Some((x, y)) = stack.pop() {
        let def = defect_on(&d, x, y);
        if def <= delta * (1.0 + TIE_SLACK) || y - x < 1e-12 {
            part.intervals.push(Interval { a: x, b: y, stop: false });
        } else {
            splits += 1;
            let m = 0.5 * (x + y);
            stack.push((m, y));
            stack.push((x, m));
        }
    }
    part.intervals.sort_by(|u, v| u.a.total_cmp(&v.a));
    part.provenance.push(format!("bisection: {splits} splits"));
    Ok(part)
}

/// Merges neighbours left to right until every group reaches `w_min` under `width`.
/// Groups of two or more are flagged `stop`; a short tail joins the previous group.
pub fn merge_to_min_width_by<F: Fn(f64, f64) -> f64>(
    part: &IntervalPartition,
    w_min: f64,
    width: F,
) -> IntervalPartition {
    let mut out: Vec<Interval> = Vec::new();
    let mut cur: Option<(Interval, usize)> = None;
    for iv in &part.intervals {
        let (g, n) = match cur.take() {
            None => (*iv, 1),
            Some((g, n)) => (
                Interval {
                    a: g.a,
                    b: iv.b,
                    stop: true,
                },
                n + 1,
            ),
        };
        if width(g.a, g.b) >= w_min {
            out.push(g);
        } else {
            cur = Some((g, n));
        }
    }
    if let Some((g, n)) = cur {
        match out.last_mut() {
            Some(last) => {
                last.b = g.b;
                last.stop = true;
            }
            None => out.push(Interval {
                stop: g.stop || n > 1,
                ..g
            }),
        }
    }
    let mut provenance = part.provenance.clone();
    provenance.push(format!(
        "merge to {w_min:e}: {} -> {} intervals",
        part.intervals.len(),
        out.len()
    ));
    IntervalPartition {
        delta: part.delta,
        intervals: out,
        provenance,
    }
}

/// [`merge_to_min_width_by`] with interval length as the width.
pub fn merge_to_min_width(part: &IntervalPartition, w_min: f64) -> IntervalPartition {
    merge_to_min_width_by(part, w_min, |a, b| b - a)
}
