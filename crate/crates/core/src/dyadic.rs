//! Dyadic numbers `2^{-k}`, indexed by the exponent `k`.

/// `2^{-k}`.
pub fn value(k: i32) -> f64 {
    2f64.powi(-k)
}

/// Exponent of the dyadic number nearest to `x` on a log scale.
pub fn nearest(x: f64) -> i32 {
    (-x.log2()).round() as i32
}

/// Exponent of the smallest dyadic `>= x`.
pub fn ceil(x: f64) -> i32 {
    (-x.log2()).floor() as i32
}

/// Exponent of the largest dyadic `<= x`.
pub fn floor(x: f64) -> i32 {
    (-x.log2()).ceil() as i32
}
