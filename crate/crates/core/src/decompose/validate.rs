//! Independent re-check of a decomposition: coverage, per-family overlap,
//! admissibility of every leaf, the tiny-curvature family, and widths.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::DecompositionResult;
use crate::dyadic;
use crate::enclosure::range_enclosure;
use crate::geometry::{check_admissible, dilate_counts_on, AdmissibilityClass, Parallelogram};
use crate::poly::Poly2;

/// Grid resolution for coverage and overlap.
pub const GRID: usize = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyStats {
    pub sigma: f64,
    pub leaves: usize,
    pub max_overlap50: u32,
    pub overlap_times_sigma_eps: f64,
    pub min_width: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafFailure {
    pub sigma: f64,
    pub index: usize,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub coverage_fraction: f64,
    pub uncovered_witness: Option<[f64; 2]>,
    pub coverage_pass: bool,
    pub families: Vec<FamilyStats>,
    pub overlap_pass: bool,
    pub admissibility_failures: Vec<LeafFailure>,
    pub admissibility_pass: bool,
    pub tiny_failures: Vec<LeafFailure>,
    pub tiny_pass: bool,
    pub min_width: f64,
    pub width_failures: Vec<LeafFailure>,
    pub width_pass: bool,
    pub pass: bool,
}

fn grid_point(dom: [f64; 4], n: usize, idx: usize) -> [f64; 2] {
    let sx = (dom[1] - dom[0]) / (n - 1) as f64;
    let sy = (dom[3] - dom[2]) / (n - 1) as f64;
    [dom[0] + sx * (idx / n) as f64, dom[2] + sy * (idx % n) as f64]
}

pub fn validate(res: &DecompositionResult, phi: &Poly2) -> ValidationReport {
    let dom = res.domain;
    let all: Vec<Parallelogram> = res.leaves().map(|(_, l)| l.parallelogram).collect();
    let cover = dilate_counts_on(&all, 1.0, GRID, dom);
    let missing = cover.iter().filter(|&&c| c == 0).count();
    let uncovered_witness = cover.iter().position(|&c| c == 0).map(|i| grid_point(dom, GRID, i));

    let families: Vec<FamilyStats> = res
        .families
        .par_iter()
        .map(|(&k, leaves)| {
            let ps: Vec<Parallelogram> = leaves.iter().map(|l| l.parallelogram).collect();
            let ov = dilate_counts_on(&ps, 50.0, GRID, dom).into_iter().max().unwrap_or(0);
            let sigma = dyadic::value(k);
            FamilyStats {
                sigma,
                leaves: leaves.len(),
                max_overlap50: ov,
                overlap_times_sigma_eps: ov as f64 * sigma.powf(res.eps),
                min_width: ps.iter().map(Parallelogram::w).fold(f64::INFINITY, f64::min),
            }
        })
        .collect();
    let overlap_pass = families
        .iter()
        .all(|f| f.overlap_times_sigma_eps <= res.config.overlap_constant);

    let det = phi.hessian_det();
    let tiny = dyadic::value(res.tiny_k);
    let indexed: Vec<(i32, usize, &Parallelogram)> = res
        .families
        .iter()
        .flat_map(|(&k, v)| v.iter().enumerate().map(move |(i, l)| (k, i, &l.parallelogram)))
        .collect();
    let checks: Vec<(Option<LeafFailure>, Option<LeafFailure>)> = indexed
        .par_iter()
        .map(|&(k, i, p)| {
            let sigma = dyadic::value(k);
            let fail = |reason: String| LeafFailure { sigma, index: i, reason };
            if k >= res.tiny_k {
                let bad = match range_enclosure(&det, p, tiny) {
                    Ok(r) => {
                        let r = r.abs();
                        (r.upper > res.config.slack * tiny).then(|| fail(format!("sup |det| <= {:e}", r.upper)))
                    }
                    Err(e) => Some(fail(e.to_string())),
                };
                (None, bad)
            } else {
                let bad = match check_admissible(phi, p, sigma, res.r, &res.constants) {
                    Ok(v) if v.class != AdmissibilityClass::NotAdmissible => None,
                    Ok(v) => Some(fail(format!("not admissible: {:?}", v.witnesses))),
                    Err(e) => Some(fail(e.to_string())),
                };
                (bad, None)
            }
        })
        .collect();
    let mut admissibility_failures = Vec::new();
    let mut tiny_failures = Vec::new();
    for (a, t) in checks {
        admissibility_failures.extend(a);
        tiny_failures.extend(t);
    }

    let w_min = 0.5 / res.r;
    let mut width_failures = Vec::new();
    let mut min_width = f64::INFINITY;
    for (k, v) in &res.families {
        for (i, l) in v.iter().enumerate() {
            let w = l.parallelogram.w();
            min_width = min_width.min(w);
            if w < w_min * (1.0 - 1e-9) {
                width_failures.push(LeafFailure {
                    sigma: dyadic::value(*k),
                    index: i,
                    reason: format!("width {w:e} below {w_min:e}"),
                });
            }
        }
    }

    let coverage_pass = missing == 0;
    let admissibility_pass = admissibility_failures.is_empty();
    let tiny_pass = tiny_failures.is_empty();
    let width_pass = width_failures.is_empty();
    ValidationReport {
        coverage_fraction: 1.0 - missing as f64 / cover.len() as f64,
        uncovered_witness,
        coverage_pass,
        families,
        overlap_pass,
        admissibility_failures,
        admissibility_pass,
        tiny_failures,
        tiny_pass,
        min_width,
        width_failures,
        width_pass,
        pass: coverage_pass && overlap_pass && admissibility_pass && tiny_pass && width_pass,
    }
}

#[cfg(test)]
mod tests {
    use super::super::{decompose_raw, DecomposeConfig};
    use super::*;

    fn paraboloid() -> (Poly2, DecompositionResult) {
        let phi = Poly2::from_terms(2, [(2, 0, 0.5), (0, 2, 0.5)]);
        let res = decompose_raw(&phi, 64.0, 0.25, &DecomposeConfig::default()).unwrap();
        (phi, res)
    }

    #[test]
    fn paraboloid_passes() {
        let (phi, res) = paraboloid();
        let rep = validate(&res, &phi);
        assert!(rep.pass, "{rep:?}");
        assert_eq!(rep.coverage_fraction, 1.0);
        assert!(rep.families.iter().all(|f| f.max_overlap50 <= 4));
    }

    #[test]
    fn deleted_leaf_breaks_coverage() {
        let (phi, mut res) = paraboloid();
        let fam = res.families.values_mut().next().unwrap();
        fam.remove(0);
        let rep = validate(&res, &phi);
        assert!(!rep.coverage_pass && !rep.pass);
        assert!(rep.uncovered_witness.is_some());
    }

    #[test]
    fn shrunk_leaf_breaks_width() {
        let (phi, mut res) = paraboloid();
        let fam = res.families.values_mut().next().unwrap();
        let p = fam[0].parallelogram;
        let c = p.center();
        fam.push(super::super::DecompositionLeaf {
            parallelogram: Parallelogram::from_rect(c[0] - 0.1, c[0] + 0.1, c[1] - 0.001, c[1] + 0.001),
            ..fam[0].clone()
        });
        let rep = validate(&res, &phi);
        assert!(!rep.width_pass && !rep.pass);
        assert_eq!(rep.width_failures.len(), 1);
    }
}
