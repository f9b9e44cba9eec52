use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use affine_restriction::geometry::AdmissibilityConstants;
use affine_restriction::surfaces::SurfaceSpec;

/// Every knob a command can take. A config file may set any of them; command-line
/// flags win. The resolved config is echoed into each artifact, minus output paths.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub surface: Option<SurfaceSpec>,
    #[serde(rename = "R", skip_serializing_if = "Option::is_none")]
    pub r: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(rename = "K", skip_serializing_if = "Option::is_none")]
    pub big_k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constants: Option<AdmissibilityConstants>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overlap_constant: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spec: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_cap: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stratified: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decomposition: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nodes_per_piece: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    /// Inclusive range `a..b`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_step: Option<f64>,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Fields set in `flags` replace those in `self`.
    pub fn overlay(self, flags: RunConfig) -> RunConfig {
        macro_rules! pick {
            ($($f:ident),*) => { RunConfig { $($f: flags.$f.or(self.$f)),* } };
        }
        pick!(
            surface, r, eps, big_k, alpha, constants, overlap_constant, spec, trials, seed, grid_cap, window,
            stratified, decomposition, p, nodes_per_piece, grid_n, k, q, n, n_step, out
        )
    }

    pub fn single_r(&self) -> Result<f64> {
        match self.r.as_deref() {
            Some([r]) => Ok(*r),
            Some(_) => bail!("this command takes a single R"),
            None => bail!("R is required"),
        }
    }

    pub fn surface(&self) -> Result<&SurfaceSpec> {
        self.surface.as_ref().context("a surface is required")
    }
}

/// Parses `a..b` into the inclusive list `a, a + step, ..., b`.
pub fn parse_range(s: &str, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) {
        bail!("step must be positive");
    }
    let (a, b) = match s.split_once("..") {
        Some((a, b)) => (a.trim().parse::<f64>()?, b.trim().parse::<f64>()?),
        None => {
            let v = s.trim().parse::<f64>()?;
            (v, v)
        }
    };
    if b < a {
        bail!("empty range {s}");
    }
    let count = ((b - a) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|i| a + i as f64 * step).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_take_precedence() {
        let file = RunConfig { eps: Some(0.5), seed: Some(1), ..Default::default() };
        let flags = RunConfig { seed: Some(9), ..Default::default() };
        let c = file.overlay(flags);
        assert_eq!((c.eps, c.seed), (Some(0.5), Some(9)));
    }

    #[test]
    fn ranges() {
        assert_eq!(parse_range("5..8", 1.0).unwrap(), vec![5.0, 6.0, 7.0, 8.0]);
        assert_eq!(parse_range("7", 1.0).unwrap(), vec![7.0]);
        assert!(parse_range("8..5", 1.0).is_err());
    }

    #[test]
    fn out_is_not_echoed() {
        let c = RunConfig { out: Some("x.json".into()), eps: Some(0.25), ..Default::default() };
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(s, r#"{"eps":0.25}"#);
    }
}
