//! Decomposition of `[-1,1]^2` into admissible parallelograms grouped by dyadic σ.
//!
//! The pipeline covers the sublevel sets of `det D^2 φ`, sends near-flat pieces down a
//! one-dimensional strip path, and refines curved pieces by repeated induction steps on
//! `H(Ω)` until they are curved-admissible. Every branch is logged in a tree.

mod induction;
mod smooth;
mod validate;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyadic;
use crate::error::{Error, Result};
use crate::flat1d::{flat_partition, merge_to_min_width_by};
use crate::geometry::{
    abs_range, check_admissible, norm, AdmissibilityClass, AdmissibilityConstants, AdmissibilityVerdict,
    Parallelogram,
};
use crate::poly::Poly2;
use crate::sublevel::{sigma_map, sublevel_cover_with, tiny_k, SizeCase, SublevelOptions};

pub use induction::{first_stage, induction_step, normalized_phase, StepResult};
pub use smooth::{decompose_smooth, SmoothTile};
pub use validate::{validate, FamilyStats, LeafFailure, ValidationReport};

pub const FORMAT_VERSION: &str = "spec/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecomposeConfig {
    /// Curvature threshold: iteration stops once `H(Ω) >= 1/K`.
    #[serde(rename = "K")]
    pub k: f64,
    pub alpha: f64,
    /// Window slack of the initial sublevel cover.
    pub slack: f64,
    /// Cap on induction steps along one branch.
    pub max_steps: usize,
    /// Cap on consecutive bisections of a single piece.
    pub max_splits: usize,
    /// `C_ε` in the per-family overlap bound `C_ε σ^{-ε}` used by the validator.
    pub overlap_constant: f64,
    pub constants: Option<AdmissibilityConstants>,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        Self {
            k: 1024.0,
            alpha: 0.25,
            slack: 8.0,
            max_steps: 40,
            max_splits: 6,
            overlap_constant: 4096.0,
            constants: None,
        }
    }
}

impl DecomposeConfig {
    pub fn constants_for(&self, eps: f64) -> AdmissibilityConstants {
        self.constants.unwrap_or_else(|| AdmissibilityConstants::for_eps(eps))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Root,
    Iter,
    Stop,
    /// Bisection of a piece that failed its window or shape test.
    Split,
    /// Sub-strip of the flat path.
    Flat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    #[serde(rename = "H_reached")]
    HReached,
    #[serde(rename = "width_stop")]
    WidthStop,
    #[serde(rename = "flat_case_b")]
    FlatCaseB,
    #[serde(rename = "tiny_curvature")]
    TinyCurvature,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub branch: Branch,
    pub omega: Parallelogram,
    /// Certified `H(Ω)`, when it was computed.
    pub h: Option<f64>,
    /// Induction steps from the root; the decoupling cost grows like `C_ε` to this power.
    pub steps: usize,
    /// Smallest `λ` with `Ω ⊆ λ Ω_parent`, for induction children.
    pub containment: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionLeaf {
    #[serde(flatten)]
    pub parallelogram: Parallelogram,
    pub sigma: f64,
    /// Absent for leaves of the tiny family.
    pub verdict: Option<AdmissibilityVerdict>,
    /// Tree node ids from the root to this leaf.
    pub path: Vec<usize>,
    pub stop_reason: StopReason,
}

/// Structural checks on the logged tree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeStats {
    pub max_steps: usize,
    /// `max N log K / log(1/σ)` over branches rooted at `σ < 1`.
    pub c_alpha_measured: f64,
    /// Largest allowed depth `(6/α) max(log σ^{-1}, log K) / log K` over roots.
    pub depth_bound: f64,
    pub depth_ok: bool,
    /// Largest product of measured containment factors along a branch.
    pub containment_product: f64,
    /// Smallest `C` with `ω ⊆ (1 + C H(Ω)^{α/d}) Ω` over all induction steps.
    pub containment_c: f64,
    /// Largest `Π(1 + C H_k^{α/d})` along a branch with `C = containment_c`.
    pub telescoping: f64,
    /// Largest `Π(1 + H_k^{α/d})` along a branch.
    pub telescoping_alpha_d: f64,
    /// Largest `Π(1 + H_k^{α/k})` along a branch, `k` the step index.
    pub telescoping_alpha_k: f64,
    /// `min H(ω) / H(Ω)^{1-α/2}` over induction children.
    pub c_d_measured: Option<f64>,
    pub stop_nodes: usize,
    /// Stop nodes under roots with `σ >= R^{-2/5}`.
    pub stop_at_large_sigma: usize,
    /// `R` times the smallest and largest stop-node widths.
    pub stop_width_range: Option<[f64; 2]>,
    pub degraded_steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeLog {
    pub nodes: Vec<TreeNode>,
    pub stats: TreeStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionResult {
    pub version: String,
    #[serde(rename = "R")]
    pub r: f64,
    pub eps: f64,
    #[serde(rename = "P")]
    pub phi: Poly2,
    pub config: DecomposeConfig,
    pub constants: AdmissibilityConstants,
    /// Axis-aligned square that was decomposed.
    pub domain: [f64; 4],
    pub tiny_k: i32,
    #[serde(with = "sigma_map")]
    pub families: BTreeMap<i32, Vec<DecompositionLeaf>>,
    pub tree: TreeLog,
    pub events: Vec<String>,
}

impl DecompositionResult {
    pub fn leaves(&self) -> impl Iterator<Item = (i32, &DecompositionLeaf)> {
        self.families
            .iter()
            .flat_map(|(&k, v)| v.iter().map(move |l| (k, l)))
    }

    pub fn num_leaves(&self) -> usize {
        self.families.values().map(Vec::len).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serialises")
    }
}

struct Builder<'a> {
    phi: &'a Poly2,
    det: Poly2,
    r: f64,
    cfg: &'a DecomposeConfig,
    consts: AdmissibilityConstants,
    tiny_k: i32,
    degree: u32,
    nodes: Vec<TreeNode>,
    leaves: Vec<(i32, DecompositionLeaf)>,
    events: Vec<String>,
    degraded: usize,
}

impl<'a> Builder<'a> {
    fn node(&mut self, parent: Option<usize>, branch: Branch, omega: Parallelogram, steps: usize) -> usize {
        let id = self.nodes.len();
        let containment = match (branch, parent) {
            (Branch::Iter, Some(p)) => Some(omega.containment_factor(&self.nodes[p].omega)),
            _ => None,
        };
        self.nodes.push(TreeNode {
            id,
            parent,
            branch,
            omega,
            h: None,
            steps,
            containment,
        });
        id
    }

    fn path(&self, mut id: usize) -> Vec<usize> {
        let mut p = vec![id];
        while let Some(q) = self.nodes[id].parent {
            p.push(q);
            id = q;
        }
        p.reverse();
        p
    }

    fn leaf(&mut self, id: usize, k: i32, verdict: Option<AdmissibilityVerdict>, reason: StopReason) {
        if verdict.is_some_and(|v| v.class == AdmissibilityClass::NotAdmissible) {
            self.events.push(format!("node {id}: leaf is not admissible at sigma 2^-{k}"));
        }
        let leaf = DecompositionLeaf {
            parallelogram: self.nodes[id].omega,
            sigma: dyadic::value(k),
            verdict,
            path: self.path(id),
            stop_reason: reason,
        };
        self.leaves.push((k, leaf));
    }

    fn tiny(&self) -> f64 {
        dyadic::value(self.tiny_k)
    }

    /// Certified `sup_Ω |det D^2 φ| <= slack * 2^{-tiny_k}`.
    fn is_tiny(&self, omega: &Parallelogram) -> Result<bool> {
        let tiny = self.tiny();
        let r = crate::enclosure::range_enclosure(&self.det, omega, tiny)?.abs();
        Ok(r.upper <= self.cfg.slack * tiny)
    }

    fn verdict(&self, omega: &Parallelogram, k: i32) -> Result<AdmissibilityVerdict> {
        let mut k = k;
        for _ in 0..3 {
            match check_admissible(self.phi, omega, dyadic::value(k), self.r, &self.consts) {
                Err(Error::EnclosureTooLoose { .. }) => k -= 1,
                other => return other,
            }
        }
        check_admissible(self.phi, omega, dyadic::value(k), self.r, &self.consts)
    }

    /// Dyadic σ with `c3_lo σ <= lo` and `hi <= c3_hi σ`, if any, closest to `sqrt(lo hi)`.
    fn curved_k(&self, lo: f64, hi: f64) -> Option<i32> {
        if !(lo > 0.0) {
            return None;
        }
        let k_big = dyadic::floor(lo / self.consts.c3_lo);
        let k_small = dyadic::ceil(hi / self.consts.c3_hi);
        (k_big <= k_small).then(|| dyadic::nearest((lo * hi).sqrt()).clamp(k_big, k_small))
    }

    fn can_split(&self, omega: &Parallelogram, splits: usize) -> bool {
        splits < self.cfg.max_splits && 0.5 * omega.length() >= 1.0 / self.r
    }

    fn curved(&mut self, id: usize, k_in: i32, splits: usize) -> Result<()> {
        let omega = self.nodes[id].omega;
        let steps = self.nodes[id].steps;
        let (_, _, h) = normalized_phase(self.phi, &omega)?;
        self.nodes[id].h = Some(h);
        let range = abs_range(&self.det, &omega.dilate(2.0), 1e-4)?;
        if range.upper <= self.cfg.slack * self.tiny() && self.is_tiny(&omega)? {
            self.leaf(id, self.tiny_k, None, StopReason::TinyCurvature);
            return Ok(());
        }
        let k_fit = self.curved_k(range.lower, range.upper);
        if let Some(k) = k_fit {
            let v = self.verdict(&omega, k)?;
            if v.class != AdmissibilityClass::NotAdmissible {
                self.leaf(id, k, Some(v), StopReason::HReached);
                return Ok(());
            }
        }

        let threshold = (1.0 / self.cfg.k).max(self.consts.c4_lo);
        if h >= threshold {
            // Curved enough but the window or shape test failed.
            return self.split_or_flat(id, k_in, splits, true);
        }
        if steps >= self.cfg.max_steps {
            self.events.push(format!("node {id}: step cap reached"));
            return self.flat(id, StopReason::FlatCaseB);
        }
        let sigma = dyadic::value(k_fit.unwrap_or(k_in));
        let step = match induction_step(self.phi, &omega, sigma, self.r, self.cfg.alpha, 1.0 / threshold) {
            Err(Error::HPreconditionFails { h, floor }) => {
                self.events
                    .push(format!("node {id}: H = {h:e} below sigma^3 = {floor:e}, sent to the strip path"));
                return self.flat(id, StopReason::FlatCaseB);
            }
            other => other?,
        };
        if step.degraded {
            self.degraded += 1;
        }
        let stalled = step.stop.is_empty()
            && step.iter.len() == 1
            && step.iter[0].area() >= 0.99 * omega.area();
        if stalled {
            self.events.push(format!("node {id}: induction step made no progress"));
            return self.split_or_flat(id, k_in, splits, true);
        }
        for w in step.iter {
            let c = self.node(Some(id), Branch::Iter, w, steps + 1);
            self.curved(c, k_in, 0)?;
        }
        for w in step.stop {
            let c = self.node(Some(id), Branch::Stop, w, steps + 1);
            self.flat(c, StopReason::WidthStop)?;
        }
        Ok(())
    }

    fn split_or_flat(&mut self, id: usize, k_in: i32, splits: usize, curved: bool) -> Result<()> {
        let omega = self.nodes[id].omega;
        let steps = self.nodes[id].steps;
        if !self.can_split(&omega, splits) {
            return if curved {
                self.flat(id, StopReason::FlatCaseB)
            } else {
                let sup = abs_range(&self.det, &omega.dilate(2.0), 1e-4)?.upper;
                let k = self.flat_k(sup);
                let v = self.verdict(&omega, k)?;
                self.leaf(id, k, Some(v), StopReason::FlatCaseB);
                Ok(())
            };
        }
        for half in omega.bisect_long() {
            let c = self.node(Some(id), Branch::Split, half, steps);
            if curved {
                self.curved(c, k_in, splits + 1)?;
            } else {
                self.flat_piece(c, StopReason::FlatCaseB, splits + 1)?;
            }
        }
        Ok(())
    }

    fn flat_k(&self, sup: f64) -> i32 {
        if sup > 0.0 {
            dyadic::ceil(sup / self.consts.c1).min(self.tiny_k)
        } else {
            self.tiny_k
        }
    }

    /// Strip path: cut along the long direction into `1/R`-flat pieces of the restriction
    /// to the centre line, then bisect until flat-admissible.
    fn flat(&mut self, id: usize, reason: StopReason) -> Result<()> {
        let omega = self.nodes[id].omega;
        let steps = self.nodes[id].steps;
        let long_u = norm(omega.u()) >= norm(omega.v());
        let dir = if long_u { [1.0, 0.0] } else { [0.0, 1.0] };
        let line = self.phi.recentred(&omega.map).restrict_line([0.0, 0.0], dir);
        let (a, s) = induction::bounded_curvature_part(&line);
        let part = flat_partition(&a, ((1.0 / self.r) / s).min(1.0), (-1.0, 1.0))?;
        let sub = |a: f64, b: f64| {
            if long_u {
                omega.sub(a, b, -1.0, 1.0)
            } else {
                omega.sub(-1.0, 1.0, a, b)
            }
        };
        let part = merge_to_min_width_by(&part, 1.0 / self.r, |a, b| sub(a, b).w());
        if part.intervals.len() <= 1 {
            return self.flat_piece(id, reason, 0);
        }
        for iv in &part.intervals {
            let c = self.node(Some(id), Branch::Flat, sub(iv.a, iv.b), steps);
            self.flat_piece(c, reason, 0)?;
        }
        Ok(())
    }

    fn flat_piece(&mut self, id: usize, reason: StopReason, splits: usize) -> Result<()> {
        let omega = self.nodes[id].omega;
        let sup = abs_range(&self.det, &omega.dilate(2.0), 1e-4)?.upper;
        let k = self.flat_k(sup);
        if k == self.tiny_k && self.is_tiny(&omega)? {
            self.leaf(id, k, None, StopReason::TinyCurvature);
            return Ok(());
        }
        let v = self.verdict(&omega, k)?;
        if v.class != AdmissibilityClass::NotAdmissible {
            self.leaf(id, k, Some(v), reason);
            return Ok(());
        }
        if let Some(kc) = self.curved_k(v.witnesses.inf_det_2omega, v.witnesses.sup_det_2omega) {
            let vc = self.verdict(&omega, kc)?;
            if vc.class != AdmissibilityClass::NotAdmissible {
                self.leaf(id, kc, Some(vc), reason);
                return Ok(());
            }
        }
        self.split_or_flat(id, 0, splits, false)
    }
}

fn tree_stats(nodes: &[TreeNode], leaves: &[(i32, DecompositionLeaf)], r: f64, cfg: &DecomposeConfig, degree: u32, root_k: &BTreeMap<usize, i32>, degraded: usize) -> TreeStats {
    let log_k = cfg.k.ln();
    let alpha = cfg.alpha;
    let d = degree.max(1) as f64;
    let large_sigma = r.powf(-0.4);
    let mut st = TreeStats {
        max_steps: 0,
        c_alpha_measured: 0.0,
        depth_bound: 0.0,
        depth_ok: true,
        containment_product: 1.0,
        containment_c: 0.0,
        telescoping: 1.0,
        telescoping_alpha_d: 1.0,
        telescoping_alpha_k: 1.0,
        c_d_measured: None,
        stop_nodes: 0,
        stop_at_large_sigma: 0,
        stop_width_range: None,
        degraded_steps: degraded,
    };
    for n in nodes {
        if let (Branch::Iter, Some(p), Some(lam)) = (n.branch, n.parent, n.containment) {
            if let Some(hp) = nodes[p].h.filter(|&h| h > 0.0) {
                st.containment_c = st.containment_c.max((lam - 1.0).max(0.0) / hp.powf(alpha / d));
            }
        }
        if let (Branch::Iter, Some(p)) = (n.branch, n.parent) {
            if let (Some(hc), Some(hp)) = (n.h, nodes[p].h) {
                if hp < 1.0 {
                    let ratio = hc / hp.powf(1.0 - alpha / 2.0);
                    st.c_d_measured = Some(st.c_d_measured.map_or(ratio, |m: f64| m.min(ratio)));
                }
            }
        }
        if n.branch == Branch::Stop {
            st.stop_nodes += 1;
            let root = root_of(nodes, n.id);
            if dyadic::value(root_k[&root]) >= large_sigma {
                st.stop_at_large_sigma += 1;
            }
            let w = n.omega.w() * r;
            st.stop_width_range = Some(match st.stop_width_range {
                None => [w, w],
                Some([a, b]) => [a.min(w), b.max(w)],
            });
        }
    }
    for (_, leaf) in leaves {
        let root = leaf.path[0];
        let sigma = dyadic::value(root_k[&root]);
        let mut steps = 0usize;
        let (mut lam, mut tc, mut td, mut tk) = (1.0f64, 1.0f64, 1.0f64, 1.0f64);
        for &id in &leaf.path[1..] {
            let n = &nodes[id];
            if n.branch == Branch::Iter {
                steps += 1;
                lam *= n.containment.unwrap_or(1.0);
                let hp = n.parent.and_then(|p| nodes[p].h).unwrap_or(0.0);
                tc *= 1.0 + st.containment_c * hp.powf(alpha / d);
                td *= 1.0 + hp.powf(alpha / d);
                tk *= 1.0 + hp.powf(alpha / steps as f64);
            }
        }
        // Consecutive iter children share a parent; count distinct steps along the path.
        let distinct = leaf.path.iter().map(|&i| nodes[i].steps).max().unwrap_or(0);
        st.max_steps = st.max_steps.max(distinct);
        let bound = (6.0 / alpha) * (1.0 / sigma).ln().max(log_k) / log_k;
        st.depth_bound = st.depth_bound.max(bound);
        if distinct as f64 > bound {
            st.depth_ok = false;
        }
        if sigma < 1.0 {
            st.c_alpha_measured = st.c_alpha_measured.max(distinct as f64 * log_k / (1.0 / sigma).ln());
        }
        st.containment_product = st.containment_product.max(lam);
        st.telescoping = st.telescoping.max(tc);
        st.telescoping_alpha_d = st.telescoping_alpha_d.max(td);
        st.telescoping_alpha_k = st.telescoping_alpha_k.max(tk);
    }
    st
}

fn root_of(nodes: &[TreeNode], mut id: usize) -> usize {
    while let Some(p) = nodes[id].parent {
        id = p;
    }
    id
}

/// Builds the decomposition without validating it.
pub fn decompose_raw(phi: &Poly2, r: f64, eps: f64, cfg: &DecomposeConfig) -> Result<DecompositionResult> {
    decompose_on(phi, r, eps, cfg, [-1.0, 1.0, -1.0, 1.0])
}

/// [`decompose_raw`] on an axis-aligned square `[x0, x1, y0, y1]`.
pub fn decompose_on(phi: &Poly2, r: f64, eps: f64, cfg: &DecomposeConfig, domain: [f64; 4]) -> Result<DecompositionResult> {
    if !(eps > 0.0 && eps <= 0.5) {
        return Err(Error::InvalidArgument(format!("eps must lie in (0, 1/2], got {eps}")));
    }
    if !(cfg.k > 1.0 && cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::InvalidArgument("K must exceed 1 and alpha lie in (0, 1)".into()));
    }
    let det = phi.hessian_det();
    let opts = SublevelOptions {
        slack: cfg.slack,
        merge: true,
        domain,
    };
    let cover = sublevel_cover_with(&det, r, eps, &opts)?;
    let consts = cfg.constants_for(eps);
    let roots: Vec<(i32, SizeCase, Parallelogram)> =
        cover.pieces().map(|(k, p)| (k, p.case, p.parallelogram)).collect();

    let parts: Vec<Result<Builder>> = roots
        .par_iter()
        .map(|&(k, case, omega)| {
            let mut b = Builder {
                phi,
                det: det.clone(),
                r,
                cfg,
                consts,
                tiny_k: tiny_k(r),
                degree: phi.degree(),
                nodes: Vec::new(),
                leaves: Vec::new(),
                events: Vec::new(),
                degraded: 0,
            };
            let id = b.node(None, Branch::Root, omega, 0);
            match case {
                SizeCase::C => {
                    if b.is_tiny(&omega)? {
                        b.leaf(id, b.tiny_k, None, StopReason::TinyCurvature);
                    } else {
                        b.flat_piece(id, StopReason::FlatCaseB, 0)?;
                    }
                }
                SizeCase::B => b.flat(id, StopReason::FlatCaseB)?,
                SizeCase::A => b.curved(id, k, 0)?,
            }
            Ok(b)
        })
        .collect();

    let mut nodes = Vec::new();
    let mut leaves = Vec::new();
    let mut events = Vec::new();
    let mut root_k = BTreeMap::new();
    let mut degraded = 0;
    let mut degree = phi.degree();
    for (part, &(k, _, _)) in parts.into_iter().zip(&roots) {
        let b = part?;
        let off = nodes.len();
        root_k.insert(off, k);
        degree = b.degree;
        degraded += b.degraded;
        nodes.extend(b.nodes.into_iter().map(|mut n| {
            n.id += off;
            n.parent = n.parent.map(|p| p + off);
            n
        }));
        leaves.extend(b.leaves.into_iter().map(|(k, mut l)| {
            l.path.iter_mut().for_each(|i| *i += off);
            (k, l)
        }));
        events.extend(b.events.into_iter().map(|e| format!("root {off}: {e}")));
    }
    let stats = tree_stats(&nodes, &leaves, r, cfg, degree, &root_k, degraded);
    let mut families: BTreeMap<i32, Vec<DecompositionLeaf>> = BTreeMap::new();
    for (k, l) in leaves {
        families.entry(k).or_default().push(l);
    }
    Ok(DecompositionResult {
        version: FORMAT_VERSION.to_string(),
        r,
        eps,
        phi: phi.clone(),
        config: cfg.clone(),
        constants: consts,
        domain,
        tiny_k: tiny_k(r),
        families,
        tree: TreeLog { nodes, stats },
        events,
    })
}

/// Decomposes and validates; a failed validation returns the report inside the error.
pub fn decompose(phi: &Poly2, r: f64, eps: f64, cfg: &DecomposeConfig) -> Result<DecompositionResult> {
    let res = decompose_raw(phi, r, eps, cfg)?;
    let report = validate(&res, phi);
    if !report.pass {
        return Err(Error::ValidationFailed(serde_json::to_string(&report).expect("report serialises")));
    }
    Ok(res)
}
