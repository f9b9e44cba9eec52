//! Numerical checks built on Fourier synthesis: restriction and decoupling ratios,
//! the tiny-curvature chain, the dyadic curvature split, and the counterexample scan.

mod counterexample;
mod decoupling;
mod restriction;
mod tiny;

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::fourier::SynthesisGrid;

pub use counterexample::{counterexample_scan, CounterexampleReport, CounterexampleRow};
pub use decoupling::{
    assign_nodes, decoupling_ensemble, decoupling_grid, decoupling_ratio, family_nodes, DecouplingEnsemble,
    DecouplingOptions, DecouplingReport,
};
pub use restriction::{
    fit_slope, lattice_nodes, restriction_ensemble, restriction_ratio, restriction_sweep, EnsembleOptions,
    RestrictionEnsemble, RestrictionSweep,
};
pub use tiny::{dyadic_split, tiny_curvature_check, DyadicSplit, TinyReport};

/// One measured ratio. `runtime` is kept out of the JSON so that artifacts are reproducible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub name: String,
    pub value: f64,
    pub inputs_hash: String,
    pub grid: Option<SynthesisGrid>,
    /// Both numerator and denominator vanished.
    #[serde(default)]
    pub zero_input: bool,
    #[serde(skip)]
    pub runtime: Duration,
}

/// FNV-1a of the JSON encoding, as 16 hex digits.
pub fn inputs_hash<T: Serialize + ?Sized>(inputs: &T) -> String {
    let bytes = serde_json::to_vec(inputs).unwrap_or_default();
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    format!("{h:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = inputs_hash(&(1.0, "x"));
        assert_eq!(a, inputs_hash(&(1.0, "x")));
        assert_ne!(a, inputs_hash(&(1.0, "y")));
        assert_eq!(a.len(), 16);
    }

    #[test]
    fn runtime_is_not_serialised() {
        let r = RatioReport {
            name: "r".into(),
            value: 1.0,
            inputs_hash: "0".into(),
            grid: None,
            zero_input: false,
            runtime: Duration::from_secs(3),
        };
        let s = serde_json::to_string(&r).unwrap();
        assert!(!s.contains("runtime"));
    }
}
