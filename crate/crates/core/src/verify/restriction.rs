use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{inputs_hash, RatioReport};
use crate::dyadic;
use crate::error::{Error, Result};
use crate::fourier::{e, grid_weights, lp_norm_weighted, synthesize, FourierData, Lattice, Node, Support, SynthesisGrid, Weight, C64};
use crate::geometry::Parallelogram;
use crate::measures::{l2_norm_dm, MeasureSpec};
use crate::poly::Poly2;

/// Order-sensitive digest of the node data.
pub(crate) fn data_digest(data: &FourierData) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |x: f64| {
        for b in x.to_bits().to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    };
    for n in &data.nodes {
        for x in [n.xi[0], n.xi[1], n.eta, n.amp.re, n.amp.im, n.volume] {
            eat(x);
        }
    }
    h
}

/// `||F||_{L^4(B_R)} / (R^{-1/2} ||F̂||_{L^2(spec)})`, with the ball centred at the grid centre.
pub fn restriction_ratio(
    phi: &Poly2,
    data: &FourierData,
    r: f64,
    spec: MeasureSpec,
    grid: &SynthesisGrid,
) -> Result<RatioReport> {
    let start = Instant::now();
    data.check_support()?;
    let field = synthesize(data, grid)?;
    let num = lp_norm_weighted(&field.values, &grid_weights(grid, &Weight::Ball { radius: r }), 4.0);
    let den = r.powf(-0.5) * l2_norm_dm(data, phi, spec)?;
    let (value, zero_input) = if num == 0.0 && den == 0.0 {
        (0.0, true)
    } else if den == 0.0 {
        return Err(Error::InvalidArgument("denominator vanishes for a nonzero field".into()));
    } else {
        (num / den, false)
    };
    Ok(RatioReport {
        name: "restriction".into(),
        value,
        inputs_hash: inputs_hash(&(phi, r, spec, grid, data_digest(data))),
        grid: Some(*grid),
        zero_input,
        runtime: start.elapsed(),
    })
}

/// Cell-centred lattice nodes of spacing `1/(2R)` over `[-1,1]^2`, with `η` the
/// lattice point nearest `φ(ξ)`. Amplitudes are 1; each node carries the
/// ξ-cell times the `2/R` thickness of the neighbourhood.
pub fn lattice_nodes(phi: &Poly2, r: f64) -> FourierData {
    let step = 1.0 / (2.0 * r);
    let m = (2.0 / step).round() as usize;
    let volume = step * step * 2.0 / r;
    let mut nodes = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            let xi = [-1.0 + (i as f64 + 0.5) * step, -1.0 + (j as f64 + 0.5) * step];
            let eta = step * (phi.eval(xi) / step).round();
            nodes.push(Node { xi, eta, amp: C64::new(1.0, 0.0), volume, cell: [step, step] });
        }
    }
    FourierData {
        nodes,
        support: Some(Support { phi: phi.clone(), delta: 1.0 / r, region: vec![Parallelogram::unit_square()] }),
        lattice: Some(Lattice { origin: [-1.0 + 0.5 * step, -1.0 + 0.5 * step, 0.0], step: [step; 3] }),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleOptions {
    pub trials: usize,
    pub seed: u64,
    pub grid_cap: usize,
    /// Multiply amplitudes by the bump `Π cos^2(π ξ_i / 2)`.
    pub window: bool,
    /// Cycle the trials through the dyadic bands of `|det D^2 φ|`, starting with all nodes.
    pub stratified: bool,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        Self { trials: 50, seed: 7, grid_cap: 96, window: false, stratified: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestrictionEnsemble {
    pub r: f64,
    pub spec: MeasureSpec,
    pub grid: SynthesisGrid,
    pub undersampled: bool,
    pub nodes: usize,
    /// Band of each trial: `None` for all nodes, `Some(k)` for `|det| ∈ [2^-k, 2^{1-k})`.
    pub bands: Vec<Option<i32>>,
    pub ratios: Vec<f64>,
    pub max: f64,
    pub min: f64,
    pub mean: f64,
}

fn band_of(det: f64, tiny: f64) -> i32 {
    if det.abs() <= tiny {
        i32::MAX
    } else {
        dyadic::floor(det.abs())
    }
}

/// Seeded random-phase ensemble on the lattice nodes of `N_{1/R}`.
pub fn restriction_ensemble(phi: &Poly2, r: f64, spec: MeasureSpec, opts: &EnsembleOptions) -> Result<RestrictionEnsemble> {
    let base = lattice_nodes(phi, r);
    let grid = SynthesisGrid::for_ball([0.0; 3], r, opts.grid_cap)?;
    let det = phi.hessian_det();
    let tiny = r.powi(-6);
    let node_band: Vec<i32> = base.nodes.iter().map(|n| band_of(det.eval(n.xi), tiny)).collect();
    let mut bands: Vec<i32> = node_band.clone();
    bands.sort_unstable();
    bands.dedup();
    let mut cycle: Vec<Option<i32>> = vec![None];
    if opts.stratified && bands.len() > 1 {
        cycle.extend(bands.iter().map(|&b| Some(b)));
    }
    let mut ratios = Vec::with_capacity(opts.trials);
    let mut used = Vec::with_capacity(opts.trials);
    for t in 0..opts.trials {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(t as u64);
        let band = cycle[t % cycle.len()];
        let mut data = base.clone();
        data.nodes = base
            .nodes
            .iter()
            .zip(&node_band)
            .filter(|(_, &b)| band.map_or(true, |k| k == b))
            .map(|(n, _)| {
                let mut n = *n;
                let w = if opts.window {
                    (0.5 * std::f64::consts::PI * n.xi[0]).cos().powi(2) * (0.5 * std::f64::consts::PI * n.xi[1]).cos().powi(2)
                } else {
                    1.0
                };
                n.amp = e(rng.gen::<f64>()) * w;
                n
            })
            .collect();
        let rep = restriction_ratio(phi, &data, r, spec, &grid)?;
        ratios.push(rep.value);
        used.push(band);
    }
    let max = ratios.iter().copied().fold(0.0, f64::max);
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = ratios.iter().sum::<f64>() / ratios.len().max(1) as f64;
    Ok(RestrictionEnsemble {
        r,
        spec,
        grid,
        undersampled: grid.undersampled(),
        nodes: base.nodes.len(),
        bands: used,
        ratios,
        max,
        min,
        mean,
    })
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestrictionSweep {
    pub points: Vec<RestrictionEnsemble>,
    /// Slope of `log max` against `log R`; zero for a single `R`.
    pub slope: f64,
    /// Largest over smallest per-R maximum.
    pub max_over_min: f64,
}

pub fn restriction_sweep(phi: &Poly2, rs: &[f64], spec: MeasureSpec, opts: &EnsembleOptions) -> Result<RestrictionSweep> {
    let points = rs
        .iter()
        .map(|&r| restriction_ensemble(phi, r, spec, opts))
        .collect::<Result<Vec<_>>>()?;
    let lx: Vec<f64> = points.iter().map(|p| p.r.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.max.ln()).collect();
    let hi = points.iter().map(|p| p.max).fold(0.0, f64::max);
    let lo = points.iter().map(|p| p.max).fold(f64::INFINITY, f64::min);
    let slope = if points.len() > 1 { fit_slope(&lx, &ly) } else { 0.0 };
    Ok(RestrictionSweep { slope, max_over_min: hi / lo, points })
}
