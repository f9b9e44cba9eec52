use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::inputs_hash;
use super::restriction::data_digest;
use crate::dyadic;
use crate::error::{Error, Result};
use crate::fourier::{grid_weights, lp_norm_weighted, synthesize, FourierData, SynthesisGrid, Weight};
use crate::measures::{l2_norm_dm, MeasureSpec};
use crate::poly::Poly2;

/// `F̂ = F̂_0 + Σ_σ F̂_σ`: nodes with `|det D^2 φ| <= R^{-6}` go to `f0`, the rest to
/// the band `k` with `2^-k <= |det| < 2^{1-k}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyadicSplit {
    pub f0: FourierData,
    pub bands: BTreeMap<i32, FourierData>,
}

impl DyadicSplit {
    pub fn node_count(&self) -> usize {
        self.f0.nodes.len() + self.bands.values().map(|d| d.nodes.len()).sum::<usize>()
    }
}

pub fn dyadic_split(data: &FourierData, phi: &Poly2, r: f64) -> DyadicSplit {
    let det = phi.hessian_det();
    let tiny = r.powi(-6);
    let empty = || FourierData { nodes: Vec::new(), support: data.support.clone(), lattice: data.lattice };
    let mut f0 = empty();
    let mut bands: BTreeMap<i32, FourierData> = BTreeMap::new();
    for n in &data.nodes {
        let d = det.eval(n.xi).abs();
        if d <= tiny {
            f0.nodes.push(*n);
        } else {
            bands.entry(dyadic::floor(d)).or_insert_with(empty).nodes.push(*n);
        }
    }
    DyadicSplit { f0, bands }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TinyReport {
    /// `||F||_{L^4(B_R)} / (|B_R|^{1/4} ||F̂||_{L^1})`, with `|B_R|` the grid volume of the ball.
    pub ratio1: f64,
    /// The same numerator over `R^{3/4} ||F̂||_{L^1}`.
    pub ratio1_r34: f64,
    /// `||F̂||_{L^1} / (|supp|^{1/2} ||F̂||_{L^2})`.
    pub ratio_cs: f64,
    /// `||F̂||_{L^2} (C R^{-6})^{-(1/4+ε)/2} / ||F̂||_{L^2(dM_ε)}`: the density bound enters the norm under a square root.
    pub ratio2: f64,
    pub vacuous: bool,
    pub pass: bool,
    pub inputs_hash: String,
    pub grid: SynthesisGrid,
}

/// Checks the chain `||F||_4 <= |B_R|^{1/4} ||F̂||_1` and `dM_ε >= (C R^{-6})^{-1/4-ε} dξdη`
/// for data whose nodes all have `|det D^2 φ| <= C R^{-6}`.
pub fn tiny_curvature_check(
    f0: &FourierData,
    phi: &Poly2,
    r: f64,
    eps: f64,
    c: f64,
    grid: &SynthesisGrid,
) -> Result<TinyReport> {
    let det = phi.hessian_det();
    let bound = c * r.powi(-6);
    if let Some((i, n)) = f0.nodes.iter().enumerate().find(|(_, n)| det.eval(n.xi).abs() > bound) {
        return Err(Error::PreconditionFails(format!(
            "node {i} has |det D^2 phi| = {:e} above {bound:e}",
            det.eval(n.xi).abs()
        )));
    }
    let hash = inputs_hash(&(phi, r, eps, c, grid, data_digest(f0)));
    let l1 = f0.l1_norm();
    if f0.nodes.is_empty() || l1 == 0.0 {
        return Ok(TinyReport {
            ratio1: 0.0,
            ratio1_r34: 0.0,
            ratio_cs: 0.0,
            ratio2: 0.0,
            vacuous: true,
            pass: true,
            inputs_hash: hash,
            grid: *grid,
        });
    }
    let w = grid_weights(grid, &Weight::Ball { radius: r });
    let ball: f64 = w.iter().sum();
    let f = synthesize(f0, grid)?;
    let l4 = lp_norm_weighted(&f.values, &w, 4.0);
    let l2 = f0.l2_norm();
    let dm = l2_norm_dm(f0, phi, MeasureSpec::MDamped { eps })?;
    let ratio1 = l4 / (ball.powf(0.25) * l1);
    let ratio2 = if dm.is_infinite() { 0.0 } else { l2 * bound.powf(-0.5 * (0.25 + eps)) / dm };
    let ratio_cs = l1 / (f0.support_volume().sqrt() * l2);
    let tol = 1.02;
    Ok(TinyReport {
        ratio1,
        ratio1_r34: l4 / (r.powf(0.75) * l1),
        ratio_cs,
        ratio2,
        vacuous: false,
        pass: ratio1 <= tol && ratio2 <= tol && ratio_cs <= tol,
        inputs_hash: hash,
        grid: *grid,
    })
}
