//! Test functions on `[-1, 1]^d` and the relative discrete l2 error.

use crate::error::{Error, Result};

/// Rational test function `1 / sum_i (0.5 + 0.1 z_i)`.
pub fn f1(z: &[f64]) -> f64 {
    1.0 / z.iter().map(|zi| 0.5 + 0.1 * zi).sum::<f64>()
}

/// Corner-peak test function
/// `(1 + (1/2d) sum_i ((i - 1/2)/d)(z_i + 1))^{-(d+1)}`, with `i` 1-based.
pub fn f2(z: &[f64]) -> f64 {
    let d = z.len() as f64;
    let s: f64 = z
        .iter()
        .enumerate()
        .map(|(i, zi)| (i as f64 + 0.5) / d * (zi + 1.0))
        .sum();
    (1.0 + s / (2.0 * d)).powf(-(d + 1.0))
}

/// `||approx - truth||_2 / ||truth||_2`, i.e. the ratio of root-mean-squares.
pub fn relative_l2_error(approx: &[f64], truth: &[f64]) -> Result<f64> {
    if approx.len() != truth.len() {
        return Err(Error::Dimension {
            expected: truth.len(),
            got: approx.len(),
            context: "approximation vs reference length",
        });
    }
    let den: f64 = truth.iter().map(|t| t * t).sum::<f64>().sqrt();
    if den == 0.0 {
        return Err(Error::Domain("reference values are all zero".into()));
    }
    let num: f64 = approx
        .iter()
        .zip(truth)
        .map(|(a, t)| (a - t) * (a - t))
        .sum::<f64>()
        .sqrt();
    Ok(num / den)
}
