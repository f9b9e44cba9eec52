use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::inputs_hash;
use super::restriction::data_digest;
use crate::error::{Error, Result};
use crate::fourier::{e, grid_weights, lp_norm_weighted, synthesize_direct, FourierData, Node, SynthesisGrid, Weight, C64};
use crate::geometry::Parallelogram;
use crate::poly::Poly2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecouplingOptions {
    pub p: f64,
    pub trials: usize,
    pub seed: u64,
    pub nodes_per_piece: usize,
    pub grid_n: usize,
    /// Half-side of the sampling cube as a fraction of `R`. The weight
    /// `(1 + |x|/R)^{-100}` is below `1e-5` outside `R/8`.
    pub grid_fraction: f64,
}

impl Default for DecouplingOptions {
    fn default() -> Self {
        Self { p: 4.0, trials: 50, seed: 7, nodes_per_piece: 4, grid_n: 16, grid_fraction: 0.125 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecouplingReport {
    pub lhs: f64,
    pub rhs: f64,
    /// `LHS / RHS`.
    pub ratio: f64,
    /// `LHS / (σ^{-ε} RHS)`.
    pub ratio_sigma: f64,
    pub pieces: usize,
    pub occupied: usize,
    /// `ratio >= occupied^{-1/2}`.
    pub floor_ok: bool,
    /// `ratio <= occupied^{1/2}`, which the triangle inequality forces.
    pub ceiling_ok: bool,
    pub inputs_hash: String,
    #[serde(skip)]
    pub runtime: std::time::Duration,
}

fn contains(p: &Parallelogram, x: [f64; 2]) -> bool {
    let s = p.local(x);
    s[0].abs() <= 1.0 + 1e-12 && s[1].abs() <= 1.0 + 1e-12
}

/// Index of the first piece containing each node's ξ.
pub fn assign_nodes(family: &[Parallelogram], data: &FourierData) -> Result<Vec<usize>> {
    data.nodes
        .iter()
        .enumerate()
        .map(|(i, n)| family.iter().position(|p| contains(p, n.xi)).ok_or(Error::UnassignedNode(i)))
        .collect()
}

/// Sampling grid for `L^p(w_B)` with `B = B(0, R)`.
pub fn decoupling_grid(r: f64, opts: &DecouplingOptions) -> Result<SynthesisGrid> {
    SynthesisGrid::new([0.0; 3], opts.grid_fraction * r, opts.grid_n)
}

#[allow(clippy::too_many_arguments)]
pub fn decoupling_ratio(
    phi: &Poly2,
    family: &[Parallelogram],
    sigma: f64,
    eps: f64,
    data: &FourierData,
    p: f64,
    r: f64,
    grid: &SynthesisGrid,
) -> Result<DecouplingReport> {
    let start = Instant::now();
    for (index, n) in data.nodes.iter().enumerate() {
        if (n.eta - phi.eval(n.xi)).abs() >= 1.0 / r {
            return Err(Error::NodeOutsideSupport { index, xi1: n.xi[0], xi2: n.xi[1], eta: n.eta });
        }
    }
    let owner = assign_nodes(family, data)?;
    let weights = grid_weights(grid, &Weight::Decay { radius: r, power: 100.0 });
    let mut total = vec![C64::new(0.0, 0.0); grid.len()];
    let mut rhs_sq = 0.0;
    let mut occupied = 0;
    for k in 0..family.len() {
        let piece = FourierData::new(
            data.nodes.iter().zip(&owner).filter(|(_, &o)| o == k).map(|(n, _)| *n).collect(),
        );
        if piece.nodes.is_empty() {
            continue;
        }
        occupied += 1;
        let f = synthesize_direct(&piece, grid);
        rhs_sq += lp_norm_weighted(&f.values, &weights, p).powi(2);
        for (t, v) in total.iter_mut().zip(&f.values) {
            *t += v;
        }
    }
    let lhs = lp_norm_weighted(&total, &weights, p);
    let rhs = rhs_sq.sqrt();
    let ratio = if rhs > 0.0 { lhs / rhs } else { 0.0 };
    let m = occupied.max(1) as f64;
    Ok(DecouplingReport {
        lhs,
        rhs,
        ratio,
        ratio_sigma: ratio * sigma.powf(eps),
        pieces: family.len(),
        occupied,
        floor_ok: occupied == 0 || ratio >= m.powf(-0.5) * (1.0 - 1e-12),
        ceiling_ok: ratio <= m.sqrt() * (1.0 + 1e-12),
        inputs_hash: inputs_hash(&(phi, family, sigma, eps, p, r, grid, data_digest(data))),
        runtime: start.elapsed(),
    })
}

/// `m` random-phase nodes per piece, uniform in local coordinates and in the
/// `0.9/R` slab about the surface.
pub fn family_nodes(phi: &Poly2, family: &[Parallelogram], r: f64, m: usize, rng: &mut ChaCha8Rng) -> FourierData {
    let mut nodes = Vec::with_capacity(family.len() * m);
    for p in family {
        let volume = p.area() * 2.0 / r / m as f64;
        for _ in 0..m {
            let xi = p.map.apply([rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
            let eta = phi.eval(xi) + rng.gen_range(-0.9..0.9) / r;
            nodes.push(Node { xi, eta, amp: e(rng.gen()), volume, cell: [0.0; 2] });
        }
    }
    FourierData::new(nodes)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecouplingEnsemble {
    pub sigma: f64,
    pub eps: f64,
    pub r: f64,
    pub pieces: usize,
    pub trials: usize,
    pub grid: SynthesisGrid,
    pub max_ratio: f64,
    /// Empirical max of `LHS / (σ^{-ε} RHS)`.
    pub max_ratio_sigma: f64,
    pub min_ratio: f64,
    /// Smallest `ratio · occupied^{1/2}`; the floor holds when this is at least 1.
    pub min_floor_margin: f64,
    pub floor_violations: usize,
    pub ceiling_violations: usize,
}

pub fn decoupling_ensemble(
    phi: &Poly2,
    family: &[Parallelogram],
    sigma: f64,
    eps: f64,
    r: f64,
    opts: &DecouplingOptions,
) -> Result<DecouplingEnsemble> {
    let grid = decoupling_grid(r, opts)?;
    let mut out = DecouplingEnsemble {
        sigma,
        eps,
        r,
        pieces: family.len(),
        trials: opts.trials,
        grid,
        max_ratio: 0.0,
        max_ratio_sigma: 0.0,
        min_ratio: f64::INFINITY,
        min_floor_margin: f64::INFINITY,
        floor_violations: 0,
        ceiling_violations: 0,
    };
    for t in 0..opts.trials {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(t as u64);
        let data = family_nodes(phi, family, r, opts.nodes_per_piece, &mut rng);
        let rep = decoupling_ratio(phi, family, sigma, eps, &data, opts.p, r, &grid)?;
        out.max_ratio = out.max_ratio.max(rep.ratio);
        out.max_ratio_sigma = out.max_ratio_sigma.max(rep.ratio_sigma);
        out.min_ratio = out.min_ratio.min(rep.ratio);
        out.min_floor_margin = out.min_floor_margin.min(rep.ratio * (rep.occupied as f64).sqrt());
        out.floor_violations += usize::from(!rep.floor_ok);
        out.ceiling_violations += usize::from(!rep.ceiling_ok);
    }
    Ok(out)
}
