//! Discrete Fourier data on neighbourhoods of a surface, synthesis of
//! `F(x) = Σ a_j v_j e(x·ζ_j)` on a cubic grid, and grid `L^p` norms.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{in_neighborhood, Parallelogram};
use crate::poly::Poly2;

pub type C64 = Complex64;

/// `e(t) = exp(2πi t)`.
#[inline]
pub fn e(t: f64) -> C64 {
    let (s, c) = (std::f64::consts::TAU * t).sin_cos();
    C64::new(c, s)
}

/// One quadrature node of `F̂`: amplitude `amp` on a cell of volume `volume`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub xi: [f64; 2],
    pub eta: f64,
    pub amp: C64,
    pub volume: f64,
    /// Side lengths of the axis-parallel ξ-cell, or zero for a point mass.
    #[serde(default)]
    pub cell: [f64; 2],
}

impl Node {
    pub fn zeta(&self) -> [f64; 3] {
        [self.xi[0], self.xi[1], self.eta]
    }
}

/// Declared support: `{(ξ, η): ξ ∈ ∪ region, |η - φ(ξ)| < delta}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Support {
    pub phi: Poly2,
    pub delta: f64,
    pub region: Vec<Parallelogram>,
}

/// Nodes sit on `origin + step ∘ k` for integer `k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub origin: [f64; 3],
    pub step: [f64; 3],
}

impl Lattice {
    pub fn index(&self, z: [f64; 3]) -> Option<[i64; 3]> {
        let mut k = [0i64; 3];
        for i in 0..3 {
            let t = (z[i] - self.origin[i]) / self.step[i];
            let r = t.round();
            if (t - r).abs() > 1e-6 {
                return None;
            }
            k[i] = r as i64;
        }
        Some(k)
    }

    pub fn point(&self, k: [i64; 3]) -> [f64; 3] {
        [0, 1, 2].map(|i| self.origin[i] + self.step[i] * k[i] as f64)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FourierData {
    pub nodes: Vec<Node>,
    pub support: Option<Support>,
    pub lattice: Option<Lattice>,
}

impl FourierData {
    pub fn new(nodes: Vec<Node>) -> Self {
        Self { nodes, support: None, lattice: None }
    }

    pub fn check_support(&self) -> Result<()> {
        let Some(s) = &self.support else { return Ok(()) };
        for (index, n) in self.nodes.iter().enumerate() {
            if !in_neighborhood(&s.phi, &s.region, s.delta, n.xi, n.eta) {
                return Err(Error::NodeOutsideSupport { index, xi1: n.xi[0], xi2: n.xi[1], eta: n.eta });
            }
        }
        Ok(())
    }

    /// `Σ |a_j| v_j`.
    pub fn l1_norm(&self) -> f64 {
        self.nodes.iter().map(|n| n.amp.norm() * n.volume).sum()
    }

    /// `(Σ |a_j|^2 v_j)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        self.nodes.iter().map(|n| n.amp.norm_sqr() * n.volume).sum::<f64>().sqrt()
    }

    pub fn support_volume(&self) -> f64 {
        self.nodes.iter().map(|n| n.volume).sum()
    }

    pub fn subset(&self, keep: impl Fn(&Node) -> bool) -> Self {
        Self {
            nodes: self.nodes.iter().filter(|n| keep(n)).copied().collect(),
            support: self.support.clone(),
            lattice: self.lattice,
        }
    }
}

/// `n^3` cell-centred points covering the cube of half-side `radius` about `center`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisGrid {
    pub center: [f64; 3],
    pub radius: f64,
    pub n: usize,
}

impl SynthesisGrid {
    pub fn new(center: [f64; 3], radius: f64, n: usize) -> Result<Self> {
        if n < 8 {
            return Err(Error::InvalidArgument(format!("grid needs n >= 8, got {n}")));
        }
        if !(radius > 0.0) {
            return Err(Error::InvalidArgument(format!("grid radius must be positive, got {radius}")));
        }
        Ok(Self { center, radius, n })
    }

    /// Grid for `B_R`: `n = min(3R, cap)`, at least 8.
    pub fn for_ball(center: [f64; 3], r: f64, cap: usize) -> Result<Self> {
        let n = ((3.0 * r).ceil() as usize).min(cap).max(8);
        Self::new(center, r, n)
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.radius / self.n as f64
    }

    /// Spacing above 1/2 cannot resolve frequencies of size one.
    pub fn undersampled(&self) -> bool {
        self.spacing() > 0.5
    }

    pub fn coord(&self, axis: usize, m: usize) -> f64 {
        self.center[axis] - self.radius + (m as f64 + 0.5) * self.spacing()
    }

    pub fn point(&self, idx: usize) -> [f64; 3] {
        let n = self.n;
        [self.coord(0, idx / (n * n)), self.coord(1, (idx / n) % n), self.coord(2, idx % n)]
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Samples of `F` on a grid, indexed `i n^2 + j n + k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    pub grid: SynthesisGrid,
    pub values: Vec<C64>,
}

const BLOCK: usize = 2048;

/// Direct summation with separable phase tables.
pub fn synthesize_direct(data: &FourierData, grid: &SynthesisGrid) -> Field {
    let n = grid.n;
    let mut values = vec![C64::new(0.0, 0.0); grid.len()];
    for block in data.nodes.chunks(BLOCK) {
        let tables: Vec<[Vec<C64>; 3]> = block
            .iter()
            .map(|nd| {
                let z = nd.zeta();
                [0, 1, 2].map(|ax| (0..n).map(|m| e(grid.coord(ax, m) * z[ax])).collect())
            })
            .collect();
        values.par_chunks_mut(n * n).enumerate().for_each(|(i, slab)| {
            for (nd, t) in block.iter().zip(&tables) {
                let ai = nd.amp * nd.volume * t[0][i];
                for j in 0..n {
                    let aij = ai * t[1][j];
                    let row = &mut slab[j * n..(j + 1) * n];
                    for (v, z) in row.iter_mut().zip(&t[2]) {
                        *v += aij * z;
                    }
                }
            }
        });
    }
    Field { grid: *grid, values }
}

/// `F` at arbitrary points by direct summation.
pub fn eval_points(data: &FourierData, points: &[[f64; 3]]) -> Vec<C64> {
    points
        .par_iter()
        .map(|x| {
            data.nodes
                .iter()
                .map(|nd| nd.amp * nd.volume * e(x[0] * nd.xi[0] + x[1] * nd.xi[1] + x[2] * nd.eta))
                .sum()
        })
        .collect()
}

/// Multipliers `j_i` with `h step_i = j_i / n`, if the lattice is commensurate with the grid.
fn lattice_multipliers(lat: &Lattice, grid: &SynthesisGrid) -> Option<[i64; 3]> {
    let mut j = [0i64; 3];
    for i in 0..3 {
        let t = grid.spacing() * lat.step[i] * grid.n as f64;
        let r = t.round();
        if r < 1.0 || (t - r).abs() > 1e-9 * t.max(1.0) {
            return None;
        }
        j[i] = r as i64;
    }
    Some(j)
}

fn ifft3(buf: &mut [C64], n: usize) {
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_inverse(n);
    // Contiguous axis.
    buf.par_chunks_mut(n).for_each(|row| fft.process(row));
    // Middle axis, one slab at a time.
    buf.par_chunks_mut(n * n).for_each(|slab| {
        let mut col = vec![C64::new(0.0, 0.0); n];
        for k in 0..n {
            for j in 0..n {
                col[j] = slab[j * n + k];
            }
            fft.process(&mut col);
            for j in 0..n {
                slab[j * n + k] = col[j];
            }
        }
    });
    // Outer axis.
    let nn = n * n;
    let cols: Vec<Vec<C64>> = (0..nn)
        .into_par_iter()
        .map(|jk| {
            let mut col: Vec<C64> = (0..n).map(|i| buf[i * nn + jk]).collect();
            fft.process(&mut col);
            col
        })
        .collect();
    for (jk, col) in cols.into_iter().enumerate() {
        for (i, v) in col.into_iter().enumerate() {
            buf[i * nn + jk] = v;
        }
    }
}

/// Lattice path: bin the nodes modulo the grid and apply one inverse 3-D FFT.
/// Exact at the grid points up to rounding, whatever the grid spacing.
pub fn synthesize_lattice(data: &FourierData, grid: &SynthesisGrid) -> Result<Field> {
    let lat = data
        .lattice
        .ok_or_else(|| Error::InvalidArgument("data carries no lattice".into()))?;
    let j = lattice_multipliers(&lat, grid)
        .ok_or_else(|| Error::InvalidArgument("lattice step is not commensurate with the grid".into()))?;
    let n = grid.n;
    let x0 = [grid.coord(0, 0), grid.coord(1, 0), grid.coord(2, 0)];
    let mut bins = vec![C64::new(0.0, 0.0); grid.len()];
    for (idx, nd) in data.nodes.iter().enumerate() {
        let z = nd.zeta();
        let k = lat.index(z).ok_or_else(|| {
            Error::InvalidArgument(format!("node {idx} is off the declared lattice"))
        })?;
        let mut b = 0usize;
        let mut phase = 0.0;
        for i in 0..3 {
            b = b * n + (j[i] * k[i]).rem_euclid(n as i64) as usize;
            phase += x0[i] * lat.step[i] * k[i] as f64;
        }
        bins[b] += nd.amp * nd.volume * e(phase);
    }
    ifft3(&mut bins, n);
    bins.par_chunks_mut(n * n).enumerate().for_each(|(i, slab)| {
        for (r, v) in slab.iter_mut().enumerate() {
            let x = grid.point(i * n * n + r);
            *v *= e(x[0] * lat.origin[0] + x[1] * lat.origin[1] + x[2] * lat.origin[2]);
        }
    });
    Ok(Field { grid: *grid, values: bins })
}

/// Largest `nodes × grid points` product accepted by direct summation.
pub const DIRECT_BUDGET: usize = 20_000_000_000;

/// Lattice path when the data allow it, direct summation otherwise.
pub fn synthesize(data: &FourierData, grid: &SynthesisGrid) -> Result<Field> {
    if let Some(lat) = data.lattice {
        if lattice_multipliers(&lat, grid).is_some() {
            if let Ok(f) = synthesize_lattice(data, grid) {
                return Ok(f);
            }
        }
    }
    if data.nodes.len().saturating_mul(grid.len()) > DIRECT_BUDGET {
        return Err(Error::BudgetExceeded { cap: DIRECT_BUDGET, tol: 0.0 });
    }
    Ok(synthesize_direct(data, grid))
}

/// Weight used in the `L^p` norm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Weight {
    /// Indicator of the ball of radius `radius` about the grid centre.
    Ball { radius: f64 },
    /// `(1 + |x - c| / radius)^{-power}`.
    Decay { radius: f64, power: f64 },
}

impl Weight {
    pub fn at(&self, x: [f64; 3], c: [f64; 3]) -> f64 {
        let d = ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2) + (x[2] - c[2]).powi(2)).sqrt();
        match *self {
            Weight::Ball { radius } => f64::from(u8::from(d <= radius)),
            Weight::Decay { radius, power } => (1.0 + d / radius).powf(-power),
        }
    }
}

/// Weights `w(x_m) h^3` on the grid.
pub fn grid_weights(grid: &SynthesisGrid, w: &Weight) -> Vec<f64> {
    let h3 = grid.spacing().powi(3);
    (0..grid.len()).map(|i| w.at(grid.point(i), grid.center) * h3).collect()
}

/// Riemann sum `(Σ |F|^p w h^3)^{1/p}` with precomputed weights; `p = ∞` gives the
/// maximum over points of positive weight.
pub fn lp_norm_weighted(values: &[C64], weights: &[f64], p: f64) -> f64 {
    let live = values.iter().zip(weights).filter(|(_, &w)| w > 0.0);
    if p.is_infinite() {
        return live.map(|(v, _)| v.norm()).fold(0.0, f64::max);
    }
    let sum: f64 = if p == 2.0 {
        live.map(|(v, w)| v.norm_sqr() * w).sum()
    } else if p == 4.0 {
        live.map(|(v, w)| v.norm_sqr().powi(2) * w).sum()
    } else {
        live.map(|(v, w)| v.norm().powf(p) * w).sum()
    };
    sum.powf(1.0 / p)
}

pub fn lp_norm(field: &Field, p: f64, w: &Weight) -> f64 {
    lp_norm_weighted(&field.values, &grid_weights(&field.grid, w), p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_lattice_data(seed: u64, count: usize, step: f64) -> FourierData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lat = Lattice { origin: [0.5 * step, -0.5 * step, 0.25 * step], step: [step; 3] };
        let nodes = (0..count)
            .map(|_| {
                let k = [0, 1, 2].map(|_| rng.gen_range(-40i64..40));
                let z = lat.point(k);
                Node {
                    xi: [z[0], z[1]],
                    eta: z[2],
                    amp: e(rng.gen()),
                    volume: rng.gen_range(0.5..1.5),
                    cell: [0.0; 2],
                }
            })
            .collect();
        FourierData { nodes, support: None, lattice: Some(lat) }
    }

    #[test]
    fn single_node_is_a_plane_wave() {
        let d = FourierData::new(vec![Node {
            xi: [0.3, -0.2],
            eta: 0.1,
            amp: C64::new(2.0, 0.0),
            volume: 0.5,
            cell: [0.0; 2],
        }]);
        let g = SynthesisGrid::new([0.0; 3], 4.0, 8).unwrap();
        let f = synthesize_direct(&d, &g);
        for (i, v) in f.values.iter().enumerate() {
            let x = g.point(i);
            let want = e(0.3 * x[0] - 0.2 * x[1] + 0.1 * x[2]);
            assert!((v - want).norm() < 1e-13);
        }
    }

    #[test]
    fn origin_node_gives_constant_field() {
        let d = FourierData::new(vec![Node { xi: [0.0; 2], eta: 0.0, amp: C64::new(1.0, 0.0), volume: 0.25, cell: [0.0; 2] }]);
        let f = synthesize_direct(&d, &SynthesisGrid::new([1.0, 2.0, 3.0], 3.0, 8).unwrap());
        assert!(f.values.iter().all(|v| (v - C64::new(0.25, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn conjugate_pair_gives_real_field() {
        let a = C64::new(0.3, 0.7);
        let mk = |s: f64, amp: C64| Node { xi: [0.2 * s, -0.4 * s], eta: 0.1 * s, amp, volume: 1.0, cell: [0.0; 2] };
        let d = FourierData::new(vec![mk(1.0, a), mk(-1.0, a.conj())]);
        let f = synthesize_direct(&d, &SynthesisGrid::new([0.0; 3], 5.0, 10).unwrap());
        assert!(f.values.iter().all(|v| v.im.abs() < 1e-12));
    }

    #[test]
    fn plancherel_on_the_periodic_grid() {
        // Distinct lattice nodes inside one period land in distinct bins.
        let r = 4.0;
        let step = 1.0 / (2.0 * r);
        let lat = Lattice { origin: [0.0; 3], step: [step; 3] };
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut seen = std::collections::BTreeSet::new();
        let mut nodes = Vec::new();
        while nodes.len() < 60 {
            let k = [0, 1, 2].map(|_| rng.gen_range(0i64..16));
            if seen.insert(k) {
                let z = lat.point(k);
                nodes.push(Node { xi: [z[0], z[1]], eta: z[2], amp: e(rng.gen()), volume: 0.01, cell: [0.0; 2] });
            }
        }
        let d = FourierData { nodes, support: None, lattice: Some(lat) };
        let g = SynthesisGrid::new([0.0; 3], r, 16).unwrap();
        let f = synthesize_lattice(&d, &g).unwrap();
        let h3 = g.spacing().powi(3);
        let lhs: f64 = f.values.iter().map(|v| v.norm_sqr() * h3).sum();
        let rhs: f64 = (2.0 * r).powi(3) * d.nodes.iter().map(|n| (n.amp * n.volume).norm_sqr()).sum::<f64>();
        assert!((lhs / rhs - 1.0).abs() < 1e-8);
    }

    #[test]
    fn sup_norm_and_weight_ordering() {
        let g = SynthesisGrid::new([0.0; 3], 6.0, 12).unwrap();
        let values: Vec<C64> = (0..g.len()).map(|i| C64::new((i % 7) as f64, 1.0)).collect();
        let f = Field { grid: g, values };
        assert!((lp_norm(&f, f64::INFINITY, &Weight::Ball { radius: 100.0 }) - 37f64.sqrt()).abs() < 1e-12);
        let ones = Field { grid: g, values: vec![C64::new(1.0, 0.0); g.len()] };
        let ball = grid_weights(&g, &Weight::Ball { radius: 6.0 });
        let wb = grid_weights(&g, &Weight::Decay { radius: 6.0, power: 100.0 });
        for (b, w) in ball.iter().zip(&wb) {
            assert!(*w <= g.spacing().powi(3) * (1.0 + 1e-15));
            if *b > 0.0 {
                assert!(*w >= 2f64.powi(-100) * b);
            }
        }
        assert!(lp_norm(&ones, 2.0, &Weight::Decay { radius: 6.0, power: 100.0 }) > 0.0);
    }

    #[test]
    fn lattice_path_matches_direct_summation() {
        for (seed, r, n) in [(1u64, 8.0, 24usize), (2, 16.0, 16), (3, 5.0, 30)] {
            let step = 1.0 / (2.0 * r);
            let d = random_lattice_data(seed, 300, step);
            let g = SynthesisGrid::new([0.7, -1.3, 2.0], r, n).unwrap();
            let a = synthesize_direct(&d, &g);
            let b = synthesize_lattice(&d, &g).unwrap();
            let scale = d.l1_norm();
            let err = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            assert!(err < 1e-10 * scale, "seed {seed}: {err}");
        }
    }

    #[test]
    fn lattice_with_integer_multiplier() {
        // step = 2 / (2R): every node index doubles modulo n.
        let r = 6.0;
        let d = random_lattice_data(9, 100, 1.0 / r);
        let g = SynthesisGrid::new([0.0; 3], r, 12).unwrap();
        let a = synthesize_direct(&d, &g);
        let b = synthesize_lattice(&d, &g).unwrap();
        let err = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(err < 1e-10 * d.l1_norm());
    }

    #[test]
    fn incommensurate_lattice_is_rejected() {
        let d = random_lattice_data(4, 10, 0.037);
        let g = SynthesisGrid::new([0.0; 3], 8.0, 16).unwrap();
        assert!(synthesize_lattice(&d, &g).is_err());
        // The dispatcher falls back to direct summation.
        assert_eq!(synthesize(&d, &g).unwrap().values, synthesize_direct(&d, &g).values);
    }

    #[test]
    fn constant_field_norm_is_ball_volume() {
        let g = SynthesisGrid::new([0.0; 3], 10.0, 60).unwrap();
        let f = Field { grid: g, values: vec![C64::new(1.0, 0.0); g.len()] };
        for p in [2.0, 4.0] {
            let got = lp_norm(&f, p, &Weight::Ball { radius: 10.0 });
            let want = (4.0 / 3.0 * std::f64::consts::PI * 1000.0f64).powf(1.0 / p);
            assert!((got / want - 1.0).abs() < 0.02, "{got} vs {want}");
        }
    }

    #[test]
    fn grid_rules() {
        assert!(SynthesisGrid::new([0.0; 3], 1.0, 7).is_err());
        let g = SynthesisGrid::for_ball([0.0; 3], 128.0, 96).unwrap();
        assert_eq!(g.n, 96);
        assert!(g.undersampled());
        let g = SynthesisGrid::for_ball([0.0; 3], 2.0, 96).unwrap();
        assert_eq!(g.n, 8);
        assert!(!g.undersampled());
    }

    #[test]
    fn support_check_names_the_node() {
        let phi = Poly2::from_terms(2, [(2, 0, 0.5), (0, 2, 0.5)]);
        let mut d = FourierData::new(vec![
            Node { xi: [0.1, 0.1], eta: 0.01, amp: C64::new(1.0, 0.0), volume: 1.0, cell: [0.0; 2] },
            Node { xi: [0.1, 0.1], eta: 0.5, amp: C64::new(1.0, 0.0), volume: 1.0, cell: [0.0; 2] },
        ]);
        d.support = Some(Support { phi, delta: 0.1, region: vec![Parallelogram::unit_square()] });
        assert!(matches!(d.check_support(), Err(Error::NodeOutsideSupport { index: 1, .. })));
    }
}
