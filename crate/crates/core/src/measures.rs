//! Densities `|det D^2 φ|^e`, weighted `L^2` norms of discrete Fourier data,
//! and the affine rescaling check.

use serde::{Deserialize, Serialize};

use crate::enclosure::{bernstein_bound, range_enclosure};
use crate::error::{Error, Result};
use crate::fourier::{eval_points, grid_weights, lp_norm_weighted, synthesize_direct, FourierData, Node, SynthesisGrid, Weight};
use crate::geometry::Parallelogram;
use crate::poly::Poly2;
use crate::quadrature::{adaptive, Quadrature};

/// Named measures on the surface, written as densities `|det D^2 φ|^e dξ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset")]
pub enum MeasureSpec {
    #[serde(rename = "surface_measure")]
    SurfaceMeasure,
    #[serde(rename = "affine")]
    Affine,
    #[serde(rename = "affine_damped")]
    AffineDamped { eps: f64 },
    #[serde(rename = "M")]
    M,
    #[serde(rename = "M_damped")]
    MDamped { eps: f64 },
    #[serde(rename = "lebesgue_pullback")]
    LebesguePullback,
}

impl MeasureSpec {
    /// Exponent `e` of `|det D^2 φ|`.
    pub fn exponent(&self) -> f64 {
        match *self {
            MeasureSpec::SurfaceMeasure | MeasureSpec::LebesguePullback => 0.0,
            MeasureSpec::Affine => 0.25,
            MeasureSpec::AffineDamped { eps } => 0.25 + eps,
            MeasureSpec::M => -0.25,
            MeasureSpec::MDamped { eps } => -0.25 - eps,
        }
    }
}

/// `|d|^e`, with `0` at zeros for `e > 0` and `+∞` for `e < 0`.
pub fn density(det: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else if det == 0.0 {
        if e > 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        det.abs().powf(e)
    }
}

pub fn density_at(det: &Poly2, xi: [f64; 2], spec: MeasureSpec) -> f64 {
    density(det.eval(xi), spec.exponent())
}

const CELL_RTOL: f64 = 1e-3;
const CELL_INTERVALS: usize = 400;

/// Average of `|det|^e` over an axis-parallel cell by iterated adaptive quadrature.
fn cell_average(det: &Poly2, center: [f64; 2], side: [f64; 2], e: f64) -> Result<f64> {
    let (x0, x1) = (center[0] - 0.5 * side[0], center[0] + 0.5 * side[0]);
    let (y0, y1) = (center[1] - 0.5 * side[1], center[1] + 0.5 * side[1]);
    let failed = std::cell::Cell::new(false);
    let inner = |y: f64| {
        adaptive(|x| density(det.eval([x, y]), e), x0, x1, 0.1 * CELL_RTOL, CELL_INTERVALS).unwrap_or_else(|| {
            failed.set(true);
            f64::NAN
        })
    };
    let total = adaptive(inner, y0, y1, CELL_RTOL, CELL_INTERVALS);
    match total {
        Some(t) if !failed.get() => Ok(t / (side[0] * side[1])),
        _ => Err(Error::QuadratureNonConvergent(format!(
            "density average over the cell at ({}, {}) did not reach relative {CELL_RTOL:e}",
            center[0], center[1]
        ))),
    }
}

/// `det` takes both signs on the cell at evaluated points. The padded outer bound alone
/// would also flag cells that only touch the zero set.
fn strict_sign_change(det: &Poly2, cell: &Parallelogram) -> bool {
    let b = bernstein_bound(det, cell);
    if !(b.lower < 0.0 && b.upper > 0.0) {
        return false;
    }
    let tol = 1e-9 * b.upper.max(-b.lower);
    match range_enclosure(det, cell, tol) {
        Ok(r) => r.attained_min < 0.0 && r.attained_max > 0.0,
        Err(_) => true,
    }
}

/// Density attached to one node: the point value, or the cell average when the
/// density is singular and the cell meets a sign change of `det`.
fn node_density(det: &Poly2, nd: &Node, e: f64) -> Result<f64> {
    let point = density(det.eval(nd.xi), e);
    if e >= 0.0 || nd.cell[0] <= 0.0 || nd.cell[1] <= 0.0 {
        return Ok(point);
    }
    let cell = Parallelogram::from_rect(
        nd.xi[0] - 0.5 * nd.cell[0],
        nd.xi[0] + 0.5 * nd.cell[0],
        nd.xi[1] - 0.5 * nd.cell[1],
        nd.xi[1] + 0.5 * nd.cell[1],
    );
    if point.is_finite() && !strict_sign_change(det, &cell) {
        return Ok(point);
    }
    cell_average(det, nd.xi, nd.cell, e)
}

/// `||F̂||_{L^2(|det D^2 φ|^e dξ dη)}` for discrete data.
pub fn l2_norm_dm(data: &FourierData, phi: &Poly2, spec: MeasureSpec) -> Result<f64> {
    data.check_support()?;
    let det = phi.hessian_det();
    let e = spec.exponent();
    let mut acc = 0.0;
    for nd in &data.nodes {
        if nd.amp.norm_sqr() == 0.0 {
            continue;
        }
        acc += nd.amp.norm_sqr() * nd.volume * node_density(&det, nd, e)?;
    }
    Ok(acc.sqrt())
}

/// `L(ξ', η') = (T ξ', s η' + φ(c) + ∇φ(c)·(T ξ' - c))`, the frequency-side map of the rescaling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrequencyMap {
    pub omega: Parallelogram,
    pub s: f64,
    pub phi_c: f64,
    pub grad_c: [f64; 2],
}

impl FrequencyMap {
    pub fn new(phi: &Poly2, omega: &Parallelogram, s: f64) -> Self {
        let c = omega.center();
        let grad_c = [phi.derivative(1, 0).eval(c), phi.derivative(0, 1).eval(c)];
        Self { omega: *omega, s, phi_c: phi.eval(c), grad_c }
    }

    /// `|det L| = s |det T|`.
    pub fn jacobian(&self) -> f64 {
        self.s * self.omega.map.det().abs()
    }

    fn affine_eta(&self, xi: [f64; 2]) -> f64 {
        let c = self.omega.center();
        self.phi_c + self.grad_c[0] * (xi[0] - c[0]) + self.grad_c[1] * (xi[1] - c[1])
    }

    /// Pulls `F̂` back to `Ĝ = F̂ ∘ L`.
    pub fn pull_back(&self, data: &FourierData) -> FourierData {
        let jac = self.jacobian();
        let nodes = data
            .nodes
            .iter()
            .map(|nd| Node {
                xi: self.omega.local(nd.xi),
                eta: (nd.eta - self.affine_eta(nd.xi)) / self.s,
                amp: nd.amp,
                volume: nd.volume / jac,
                cell: [0.0; 2],
            })
            .collect();
        FourierData::new(nodes)
    }

    /// `A^T y`, where `A` is the linear part of `L`.
    pub fn spatial(&self, y: [f64; 3]) -> [f64; 3] {
        let l = &self.omega.map.linear;
        let g = [
            self.grad_c[0] * l[0][0] + self.grad_c[1] * l[1][0],
            self.grad_c[0] * l[0][1] + self.grad_c[1] * l[1][1],
        ];
        [
            l[0][0] * y[0] + l[1][0] * y[1] + g[0] * y[2],
            l[0][1] * y[0] + l[1][1] * y[1] + g[1] * y[2],
            self.s * y[2],
        ]
    }
}

/// The rescaled phase `φ̄ = s^{-1} φ_{T_Ω}`.
pub fn rescaled_phase(phi: &Poly2, omega: &Parallelogram, s: f64) -> Poly2 {
    phi.recentred(&omega.map).scale(1.0 / s)
}

/// Predicted ratio `||F̂||_{L^2(dM^φ)} / ||Ĝ||_{L^2(dM^φ̄)} = (s^{-2} |det T|^2)^{1/8} (s |det T|)^{1/2}`.
pub fn pushforward_factor(omega: &Parallelogram, s: f64) -> f64 {
    let dt = omega.map.det().abs();
    (dt * dt / (s * s)).powf(0.125) * (s * dt).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineInvarianceReport {
    /// `R^{1/2} ||F||_{L^4(B_R)} / ||F̂||_{L^2(dM^φ)}`.
    pub lhs: f64,
    /// `(sR)^{1/2} ||G||_{L^4(A^T B_R)} / ||Ĝ||_{L^2(dM^φ̄)}`.
    pub rhs: f64,
    pub residual: f64,
}

/// Both sides of the rescaling identity, each from its own data: `F` on the grid of
/// `B_R`, `G` from the pulled-back nodes at the image points with Jacobian weights.
pub fn affine_invariance_residual(
    phi: &Poly2,
    omega: &Parallelogram,
    s: f64,
    data: &FourierData,
    r: f64,
    n: usize,
) -> Result<AffineInvarianceReport> {
    if !(s > 0.0) {
        return Err(Error::InvalidArgument(format!("scale s must be positive, got {s}")));
    }
    let grid = SynthesisGrid::new([0.0; 3], r, n)?;
    let ball = Weight::Ball { radius: r };
    let weights = grid_weights(&grid, &ball);
    let f = synthesize_direct(data, &grid);
    let lf = lp_norm_weighted(&f.values, &weights, 4.0);
    let nf = l2_norm_dm(data, phi, MeasureSpec::M)?;

    let map = FrequencyMap::new(phi, omega, s);
    let g_data = map.pull_back(data);
    let bar = rescaled_phase(phi, omega, s);
    let idx: Vec<usize> = (0..grid.len()).filter(|&i| weights[i] > 0.0).collect();
    let pts: Vec<[f64; 3]> = idx.iter().map(|&i| map.spatial(grid.point(i))).collect();
    let g = eval_points(&g_data, &pts);
    let jac = map.jacobian();
    let g_weights: Vec<f64> = idx.iter().map(|&i| weights[i] * jac).collect();
    let lg = lp_norm_weighted(&g, &g_weights, 4.0);
    let ng = l2_norm_dm(&g_data, &bar, MeasureSpec::M)?;

    let lhs = r.sqrt() * lf / nf;
    let rhs = (s * r).sqrt() * lg / ng;
    Ok(AffineInvarianceReport { lhs, rhs, residual: (lhs / rhs - 1.0).abs() })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrivialEstimates {
    /// `||f̂||_{L^2(dμ_{-1/4})} / (|[-1,1]^2|^{1/2} ||f||_1)`.
    pub l2_ratio: f64,
    /// `sup |f̂| / ||f||_1` over the quadrature nodes.
    pub sup_ratio: f64,
}

/// The two trivial estimates for `f = Σ f_m δ_{x_m} h^3` sampled on a grid.
pub fn trivial_estimates(phi: &Poly2, f: &[([f64; 3], crate::fourier::C64)], cell: f64, order: usize) -> TrivialEstimates {
    let l1: f64 = f.iter().map(|(_, v)| v.norm() * cell).sum();
    let q = Quadrature::on_parallelogram(&Parallelogram::unit_square(), order);
    let mut l2 = 0.0;
    let mut sup: f64 = 0.0;
    for (xi, w) in q.nodes.iter().zip(&q.weights) {
        let eta = phi.eval(*xi);
        let v: crate::fourier::C64 = f
            .iter()
            .map(|(x, a)| a * cell * crate::fourier::e(-(x[0] * xi[0] + x[1] * xi[1] + x[2] * eta)))
            .sum();
        l2 += w * v.norm_sqr();
        sup = sup.max(v.norm());
    }
    TrivialEstimates { l2_ratio: l2.sqrt() / (2.0 * l1), sup_ratio: sup / l1 }
}
