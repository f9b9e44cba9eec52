//! One induction step on `H(Ω)`: split the normalised phase, partition along the
//! one-dimensional direction twice, and sort the pieces into `iter` and `stop`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flat1d::{flat_partition, merge_to_min_width_by, Interval, IntervalPartition};
use crate::geometry::{abs_range, AffineMap2, Parallelogram};
use crate::hessian_split::split_small_hessian;
use crate::poly::{Poly1, Poly2};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub iter: Vec<Parallelogram>,
    pub stop: Vec<Parallelogram>,
    /// Certified `H(Ω)`.
    pub h: f64,
    pub theta: f64,
    pub residual_norm: f64,
    pub achieved_alpha: f64,
    pub delta: f64,
    /// The residual of the split exceeded `H^α`, so δ was enlarged to absorb it.
    pub degraded: bool,
    pub short_circuit: bool,
}

/// Certified `H(Ω) = inf_{[-1,1]^2} |det D^2 φ̄_{T_Ω}|` together with `φ̄` and `||φ_{T_Ω}||`.
pub fn normalized_phase(phi: &Poly2, omega: &Parallelogram) -> Result<(Poly2, f64, f64)> {
    let (bar, s) = phi.recentred(&omega.map).normalize()?;
    let h = abs_range(&bar.hessian_det(), &Parallelogram::unit_square(), 1e-6)?.lower;
    Ok((bar, s, h))
}

/// `u_2`-range of the rotated square `ρ([-1,1]^2)` over the slab `a <= u_1 <= b`.
fn chord(theta: f64, a: f64, b: f64) -> Option<(f64, f64)> {
    let (s, c) = theta.sin_cos();
    let v: Vec<[f64; 2]> = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]]
        .iter()
        .map(|x| [c * x[0] + s * x[1], -s * x[0] + c * x[1]])
        .collect();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut take = |y: f64| {
        lo = lo.min(y);
        hi = hi.max(y);
    };
    for i in 0..4 {
        let p = v[i];
        let q = v[(i + 1) % 4];
        if p[0] >= a && p[0] <= b {
            take(p[1]);
        }
        for x in [a, b] {
            if (p[0] - x) * (q[0] - x) < 0.0 {
                let t = (x - p[0]) / (q[0] - p[0]);
                take(p[1] + t * (q[1] - p[1]));
            }
        }
    }
    (lo <= hi).then_some((lo, hi))
}

/// Drops constant and linear terms and rescales to norm at most 1.
/// Returns the scale factor that was divided out.
pub(crate) fn bounded_curvature_part(p: &Poly1) -> (Poly1, f64) {
    let mut c = p.coeffs().to_vec();
    for x in c.iter_mut().take(2) {
        *x = 0.0;
    }
    let q = Poly1::new(c);
    let n = q.coeff_norm();
    if n > 1.0 {
        (Poly1::new(q.coeffs().iter().map(|x| x / n).collect()), n)
    } else {
        (q, 1.0)
    }
}

/// Merges any interval whose chord is shorter than half its length into the neighbour
/// nearer the middle of the domain.
fn enforce_half_chord(theta: f64, mut ivs: Vec<Interval>) -> Vec<Interval> {
    loop {
        let bad = ivs.iter().position(|i| match chord(theta, i.a, i.b) {
            Some((lo, hi)) => hi - lo < 0.5 * i.len(),
            None => true,
        });
        let Some(i) = bad else { return ivs };
        if ivs.len() == 1 {
            return ivs;
        }
        let mid = 0.5 * (ivs[i].a + ivs[i].b);
        let j = if (mid < 0.0 && i + 1 < ivs.len()) || i == 0 { i + 1 } else { i - 1 };
        let (l, r) = (i.min(j), i.max(j));
        let merged = Interval {
            a: ivs[l].a,
            b: ivs[r].b,
            stop: ivs[l].stop || ivs[r].stop,
        };
        ivs.splice(l..=r, [merged]);
    }
}

/// Induction step with the short-circuit `H(Ω) >= 1/K`.
pub fn induction_step(
    phi: &Poly2,
    omega: &Parallelogram,
    sigma: f64,
    r: f64,
    alpha: f64,
    k: f64,
) -> Result<StepResult> {
    let (bar, _, h) = normalized_phase(phi, omega)?;
    let mut out = StepResult {
        iter: Vec::new(),
        stop: Vec::new(),
        h,
        theta: 0.0,
        residual_norm: 0.0,
        achieved_alpha: f64::INFINITY,
        delta: 0.0,
        degraded: false,
        short_circuit: false,
    };
    if h >= 1.0 / k {
        out.iter.push(*omega);
        out.short_circuit = true;
        return Ok(out);
    }
    let floor = sigma.powi(3);
    if h < floor {
        return Err(Error::HPreconditionFails { h, floor });
    }

    let nu = h.max(f64::MIN_POSITIVE);
    let split = split_small_hessian(&bar, nu.min(0.5));
    out.theta = split.theta;
    out.residual_norm = split.residual_norm;
    out.achieved_alpha = split.achieved_alpha;
    let h_alpha = h.powf(alpha);
    out.degraded = split.residual_norm > h_alpha;
    let delta = h_alpha.max(split.residual_norm) + sigma;
    out.delta = delta;

    let (st, ct) = split.theta.sin_cos();
    let m = ct.abs() + st.abs();
    let rho_inv = AffineMap2::rotation(split.theta);
    let psi = bar.compose_affine(&rho_inv);
    let frame = omega.map.compose(&rho_inv);
    let piece = |a: f64, b: f64, lo: f64, hi: f64| Parallelogram {
        map: frame.compose(&Parallelogram::from_rect(a, b, lo, hi).map),
    };
    let chord_piece = |a: f64, b: f64| {
        let (lo, hi) = chord(split.theta, a, b).unwrap_or((-1e-300, 1e-300));
        piece(a, b, lo, hi)
    };

    // First stage: δ-flat pieces of A on the projection of the rotated square.
    let (a_part, a_scale) = bounded_curvature_part(&split.a);
    let mut first = flat_partition(&a_part, (delta / a_scale).min(1.0), (-m, m))?;
    first.intervals = enforce_half_chord(split.theta, first.intervals);
    let first = merge_to_min_width_by(&first, 1.0 / r, |a, b| chord_piece(a, b).w());

    for iv in &first.intervals {
        let Some((lo, hi)) = chord(split.theta, iv.a, iv.b) else {
            continue;
        };
        if iv.stop {
            out.stop.push(piece(iv.a, iv.b, lo, hi));
            continue;
        }
        // Second stage: along the centre line of the strip, at scale δh.
        let half = 0.5 * (hi - lo);
        let centre = 0.5 * (lo + hi);
        let line = psi.restrict_line([0.0, centre], [1.0, 0.0]);
        let (l_part, l_scale) = bounded_curvature_part(&line);
        let d2 = (delta * half / l_scale).min(1.0);
        let second = flat_partition(&l_part, d2, (iv.a, iv.b))?;
        let second = merge_to_min_width_by(&second, 1.0 / r, |a, b| piece(a, b, lo, hi).w());
        for j in &second.intervals {
            let p = piece(j.a, j.b, lo, hi);
            if j.stop {
                out.stop.push(p);
            } else {
                out.iter.push(p);
            }
        }
    }
    Ok(out)
}

/// Partition used for logging and tests: the first-stage intervals only.
pub fn first_stage(phi: &Poly2, omega: &Parallelogram, sigma: f64, alpha: f64) -> Result<IntervalPartition> {
    let (bar, _, h) = normalized_phase(phi, omega)?;
    let split = split_small_hessian(&bar, h.clamp(f64::MIN_POSITIVE, 0.5));
    let delta = h.powf(alpha).max(split.residual_norm) + sigma;
    let (st, ct) = split.theta.sin_cos();
    let m = ct.abs() + st.abs();
    let (a_part, a_scale) = bounded_curvature_part(&split.a);
    flat_partition(&a_part, (delta / a_scale).min(1.0), (-m, m))
}
