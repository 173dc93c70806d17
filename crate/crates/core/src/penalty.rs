//! The transformed-l1 (TL1) penalty and the pieces of its difference-of-convex
//! splitting used by the solvers.
//!
//! For a shape parameter `a > 0` the scalar penalty is
//! `rho_a(t) = (a + 1)|t| / (a + |t|)`. Small `a` pushes it towards the l0
//! counting function, large `a` towards `|t|`. The vector penalty `P_a` is the
//! componentwise sum and splits as
//! `P_a(x) = ((a + 1)/a)||x||_1 - h(x)` with `h` convex.

use nalgebra::DVector;

use crate::error::{check_finite, Error, Result};

/// TL1 shape parameter, always strictly positive and finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyParam(f64);

impl PenaltyParam {
    pub fn new(a: f64) -> Result<Self> {
        if a.is_finite() && a > 0.0 {
            Ok(Self(a))
        } else {
            Err(Error::Domain(format!("TL1 parameter must be positive, got {a}")))
        }
    }

    pub fn a(self) -> f64 {
        self.0
    }

    /// `(a + 1) / a`, the weight of the l1 term in the DC splitting.
    pub fn l1_weight(self) -> f64 {
        (self.0 + 1.0) / self.0
    }
}

/// `sgn` with `sgn(0) = 0`.
#[inline]
pub fn sgn(t: f64) -> f64 {
    if t > 0.0 {
        1.0
    } else if t < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[inline]
fn rho_unchecked(t: f64, a: f64) -> f64 {
    let m = t.abs();
    (a + 1.0) * m / (a + m)
}

/// Scalar TL1 penalty `rho_a(t)`.
pub fn rho(t: f64, p: PenaltyParam) -> Result<f64> {
    if !t.is_finite() {
        return Err(Error::Domain(format!("rho_a argument is not finite: {t}")));
    }
    Ok(rho_unchecked(t, p.a()))
}

/// `P_a(x) = sum_i rho_a(x_i)`.
pub fn penalty(x: &[f64], p: PenaltyParam) -> Result<f64> {
    check_finite(x, "x")?;
    Ok(penalty_unchecked(x, p))
}

pub(crate) fn penalty_unchecked(x: &[f64], p: PenaltyParam) -> f64 {
    x.iter().map(|&t| rho_unchecked(t, p.a())).sum()
}

/// Gradient of the convex part `h(x) = ((a+1)/a)||x||_1 - P_a(x)`, evaluated
/// with the literal three-term formula of the DCA linearization:
///
/// `z_i = (a+1)/a sgn(x_i) - (a+1) sgn(x_i)/(a+|x_i|) + (a+1) x_i/(a+|x_i|)^2`
///
/// Every term vanishes at `x_i = 0`.
pub fn dc_subgradient(x: &[f64], p: PenaltyParam) -> Result<DVector<f64>> {
    check_finite(x, "x")?;
    Ok(dc_subgradient_unchecked(x, p))
}

pub(crate) fn dc_subgradient_unchecked(x: &[f64], p: PenaltyParam) -> DVector<f64> {
    let a = p.a();
    let w = p.l1_weight();
    DVector::from_iterator(
        x.len(),
        x.iter().map(|&xi| {
            let s = sgn(xi);
            let den = a + xi.abs();
            w * s - (a + 1.0) * s / den + (a + 1.0) * xi / (den * den)
        }),
    )
}

/// Soft thresholding, `sgn(x_i) max(|x_i| - r, 0)`.
pub fn shrink(x: &[f64], r: f64) -> Result<DVector<f64>> {
    if r.is_nan() || r < 0.0 || !r.is_finite() {
        return Err(Error::Domain(format!("shrink threshold must be >= 0, got {r}")));
    }
    check_finite(x, "x")?;
    let mut out = DVector::zeros(x.len());
    shrink_into(x, r, out.as_mut_slice());
    Ok(out)
}

#[inline]
pub(crate) fn shrink_into(x: &[f64], r: f64, out: &mut [f64]) {
    for (o, &xi) in out.iter_mut().zip(x) {
        *o = sgn(xi) * (xi.abs() - r).max(0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(a: f64) -> PenaltyParam {
        PenaltyParam::new(a).unwrap()
    }

    #[test]
    fn rejects_bad_parameter() {
        assert!(PenaltyParam::new(0.0).is_err());
        assert!(PenaltyParam::new(-1.0).is_err());
        assert!(PenaltyParam::new(f64::NAN).is_err());
        assert!(PenaltyParam::new(f64::INFINITY).is_err());
    }

    #[test]
    fn rho_examples() {
        assert_eq!(rho(0.0, p(1.0)).unwrap(), 0.0);
        assert_eq!(rho(1.0, p(1.0)).unwrap(), 1.0);
        assert!((rho(-2.0, p(0.5)).unwrap() - 1.2).abs() < 1e-15);
        assert!(rho(f64::NAN, p(1.0)).is_err());
        assert!(rho(f64::NEG_INFINITY, p(1.0)).is_err());
    }

    #[test]
    fn penalty_examples() {
        assert_eq!(penalty(&[0.0, 0.0, 0.0], p(3.0)).unwrap(), 0.0);
        assert_eq!(penalty(&[1.0, -1.0], p(1.0)).unwrap(), 2.0);
        assert!((penalty(&[3.0, 4.0, 0.0], p(2.0)).unwrap() - 3.8).abs() < 1e-14);
        assert!(penalty(&[1.0, f64::NAN], p(1.0)).is_err());
    }

    #[test]
    fn subgradient_examples() {
        let z = dc_subgradient(&[0.0, 0.0], p(0.7)).unwrap();
        assert_eq!(z.as_slice(), &[0.0, 0.0]);
        let z = dc_subgradient(&[1.0], p(1.0)).unwrap();
        assert!((z[0] - 1.5).abs() < 1e-15);
        let a = 0.3;
        let z = dc_subgradient(&[1e6, -1e6], p(a)).unwrap();
        let lim = (a + 1.0) / a;
        assert!((z[0] - lim).abs() < 1e-5);
        assert!((z[1] + lim).abs() < 1e-5);
    }

    #[test]
    fn subgradient_matches_simplified_form() {
        for &a in &[0.05, 0.3, 1.0, 7.0] {
            for &x in &[-3.0, -0.2, 1e-8, 0.4, 12.0] {
                let z = dc_subgradient(&[x], p(a)).unwrap()[0];
                let alt = (a + 1.0) / a * sgn(x) - a * (a + 1.0) * sgn(x) / (a + x.abs()).powi(2);
                assert!((z - alt).abs() < 1e-12 * (1.0 + alt.abs()), "a={a} x={x}");
            }
        }
    }

    #[test]
    fn shrink_examples() {
        assert_eq!(shrink(&[3.0], 1.0).unwrap().as_slice(), &[2.0]);
        assert_eq!(shrink(&[-0.5], 1.0).unwrap().as_slice(), &[0.0]);
        let y = shrink(&[-3.0, 0.2, 5.0], 0.2).unwrap();
        let want = [-2.8, 0.0, 4.8];
        for (g, w) in y.iter().zip(want) {
            assert!((g - w).abs() < 1e-15);
        }
        assert!(shrink(&[1.0], -0.1).is_err());
    }

    #[test]
    fn not_absolutely_scalable() {
        let pa = p(1.0);
        let c = 2.0;
        let x = 1.0;
        let lhs = rho(c * x, pa).unwrap();
        let rhs = c * rho(x, pa).unwrap();
        assert!((lhs - rhs).abs() > 0.1, "{lhs} vs {rhs}");
    }

    #[test]
    fn monotone_and_concave_on_grid() {
        for &a in &[0.01, 0.3, 1.0, 10.0, 100.0] {
            let h = 1e-3;
            let vals: Vec<f64> = (0..5000).map(|i| rho(i as f64 * h, p(a)).unwrap()).collect();
            for w in vals.windows(3) {
                assert!(w[1] >= w[0]);
                assert!(w[2] - 2.0 * w[1] + w[0] <= 1e-12);
            }
            assert!(*vals.last().unwrap() < a + 1.0);
        }
    }
}
