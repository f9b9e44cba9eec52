//! Built-in test surfaces and the `SurfaceSpec` used by configs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::Poly2;

/// Largest coefficient norm accepted for inline polynomials.
pub const INLINE_NORM_CAP: f64 = 10.0;

pub const BUILTIN: [&str; 6] = ["paraboloid", "saddle", "cylinder", "quartic", "monkey", "perturbed-flat"];

/// A surface by catalog name (`"saddle"`, `"random:SEED:DEGREE"`) or as an inline polynomial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SurfaceSpec {
    Name(String),
    Inline(Poly2),
}

impl SurfaceSpec {
    /// Reads a command-line value: inline JSON if it starts with `{`, a name otherwise.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.starts_with('{') {
            let p: Poly2 = serde_json::from_str(s)
                .map_err(|e| Error::InvalidArgument(format!("inline surface: {e}")))?;
            Ok(Self::Inline(p))
        } else {
            Ok(Self::Name(s.to_string()))
        }
    }

    pub fn resolve(&self) -> Result<Poly2> {
        match self {
            Self::Name(n) => named(n),
            Self::Inline(p) => {
                let norm = p.coeff_norm();
                if !(norm <= INLINE_NORM_CAP) {
                    return Err(Error::InvalidArgument(format!(
                        "inline surface has norm {norm} above {INLINE_NORM_CAP}"
                    )));
                }
                Ok(p.clone())
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Name(n) => n.clone(),
            Self::Inline(_) => "inline".into(),
        }
    }
}

pub fn named(name: &str) -> Result<Poly2> {
    let p = match name {
        "paraboloid" => Poly2::from_terms(2, [(2, 0, 0.5), (0, 2, 0.5)]),
        "saddle" => Poly2::from_terms(2, [(1, 1, 1.0)]),
        "cylinder" => Poly2::from_terms(2, [(2, 0, 0.5)]),
        "quartic" => Poly2::from_terms(4, [(4, 0, 1.0), (0, 2, 1.0)]),
        "monkey" => Poly2::from_terms(3, [(3, 0, 1.0), (1, 2, -3.0)]),
        "perturbed-flat" => Poly2::from_terms(2, [(2, 0, 0.5), (0, 2, 0.5 * 2f64.powi(-8))]),
        _ => {
            if let Some(rest) = name.strip_prefix("random:") {
                let mut it = rest.split(':');
                let seed = it.next().and_then(|s| s.parse::<u64>().ok());
                let degree = it.next().and_then(|s| s.parse::<u32>().ok());
                if let (Some(seed), Some(degree), None) = (seed, degree, it.next()) {
                    return random(seed, degree);
                }
            }
            return Err(Error::InvalidArgument(format!("unknown surface \"{name}\"")));
        }
    };
    Ok(p)
}

/// Coefficients uniform in `[-1, 1]` on every monomial of total degree `2..=degree`.
/// Affine terms are left out since they do not change the geometry.
pub fn random(seed: u64, degree: u32) -> Result<Poly2> {
    if !(2..=8).contains(&degree) {
        return Err(Error::InvalidArgument(format!("random surface degree must lie in 2..=8, got {degree}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut terms = Vec::new();
    for total in 2..=degree {
        for a1 in (0..=total).rev() {
            terms.push((a1, total - a1, rng.gen_range(-1.0..=1.0)));
        }
    }
    Ok(Poly2::from_terms(degree, terms))
}
