//! Smooth phases: tile the square, decompose the Taylor polynomial on each tile,
//! and keep the families with `σ' >= σ/2`.

use serde::{Deserialize, Serialize};

use super::{decompose_on, DecomposeConfig, DecompositionResult};
use crate::dyadic;
use crate::error::{Error, Result};
use crate::geometry::Parallelogram;
use crate::poly::{taylor2, DerivativeOracle};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothTile {
    pub tile: Parallelogram,
    /// Sampled estimate of `max |∂^β φ|` over `|β| = d+1` at the tile's centre and corners.
    pub cd1_estimate: f64,
    /// `cd1_estimate * side^{d-1}`: Taylor remainder scale for second derivatives.
    pub remainder_bound: f64,
    pub result: DecompositionResult,
}

/// Number of tiles per axis so that the side `2/n` is at most `σ^ε`.
pub fn tiles_per_axis(sigma: f64, eps: f64) -> usize {
    (2.0 / sigma.powf(eps)).ceil().max(1.0) as usize
}

pub fn decompose_smooth<O: DerivativeOracle + Sync + ?Sized>(
    oracle: &O,
    r: f64,
    eps: f64,
    sigma: f64,
    d: u32,
    cfg: &DecomposeConfig,
) -> Result<Vec<SmoothTile>> {
    if !(sigma > r.powi(-6) && sigma <= 1.0) {
        return Err(Error::InvalidArgument(format!("sigma must lie in (R^-6, 1], got {sigma}")));
    }
    let n = tiles_per_axis(sigma, eps);
    let side = 2.0 / n as f64;
    let k_keep = dyadic::floor(sigma / 2.0);
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let dom = [
                -1.0 + side * i as f64,
                -1.0 + side * (i + 1) as f64,
                -1.0 + side * j as f64,
                -1.0 + side * (j + 1) as f64,
            ];
            let tile = Parallelogram::from_rect(dom[0], dom[1], dom[2], dom[3]);
            let c = tile.center();
            let poly = taylor2(oracle, c, d)?;
            let mut cd1: f64 = 0.0;
            for at in std::iter::once(c).chain(tile.vertices()) {
                for b1 in 0..=d + 1 {
                    let v = oracle
                        .partial(b1, d + 1 - b1, at)
                        .ok_or(Error::OracleMissingDerivative(b1, d + 1 - b1))?;
                    cd1 = cd1.max(v.abs());
                }
            }
            let mut result = decompose_on(&poly, r, eps, cfg, dom)?;
            result.families.retain(|&k, _| k <= k_keep);
            out.push(SmoothTile {
                tile,
                cd1_estimate: cd1,
                remainder_bound: cd1 * side.powi(d as i32 - 1),
                result,
            });
        }
    }
    Ok(out)
}
