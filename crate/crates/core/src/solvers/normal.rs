use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Applies `(A^T A + I)^{-1}` to right-hand sides of the form `A^T c + w`.
///
/// For wide matrices (`M < N`) the inverse goes through the Woodbury identity
/// `(A^T A + I)^{-1} = I - A^T (I + A A^T)^{-1} A`, so only the `M x M` matrix
/// `I + A A^T` is factored and every step costs `O(MN)`. Otherwise the
/// `N x N` matrix `A^T A + I` is factored directly.
///
/// With caching the Cholesky factor is computed once. Without it the factor
/// is rebuilt on every solve from the stored matrix, which yields the same
/// bits at a much higher cost.
pub struct NormalSystem {
    kind: Kind,
    spd: DMatrix<f64>,
    factor: Option<Cholesky<f64, Dyn>>,
}

enum Kind {
    /// `spd = I + A A^T`, also keeps `A A^T`
    Woodbury { aat: DMatrix<f64> },
    /// `spd = A^T A + I`
    Direct,
}

impl NormalSystem {
    pub fn new(a: &DMatrix<f64>, cache: bool) -> Result<Self> {
        let (m, n) = a.shape();
        let (kind, spd) = if m < n {
            let aat = a * a.transpose();
            let spd = &aat + DMatrix::<f64>::identity(m, m);
            (Kind::Woodbury { aat }, spd)
        } else {
            (Kind::Direct, a.tr_mul(a) + DMatrix::<f64>::identity(n, n))
        };
        let factor = if cache { Some(factorize(&spd)?) } else { None };
        Ok(Self { kind, spd, factor })
    }

    fn with_factor<T>(&self, f: impl FnOnce(&Cholesky<f64, Dyn>) -> T) -> Result<T> {
        match &self.factor {
            Some(c) => Ok(f(c)),
            None => Ok(f(&factorize(&self.spd)?)),
        }
    }

    /// Solves `(A^T A + I) x = A^T c + w` and returns `x` together with `A x`.
    pub fn solve(
        &self,
        a: &DMatrix<f64>,
        c: &DVector<f64>,
        w: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        match &self.kind {
            Kind::Woodbury { aat } => {
                // A (A^T c + w) = (A A^T) c + A w
                let aw = a * w;
                let mut q = aat * c + &aw;
                self.with_factor(|f| f.solve_mut(&mut q))?;
                // x = A^T (c - q) + w,  A x = (A A^T)(c - q) + A w
                let cq = c - q;
                let mut x = w.clone();
                x.gemv_tr(1.0, a, &cq, 1.0);
                let ax = aat * cq + aw;
                Ok((x, ax))
            }
            Kind::Direct => {
                let mut x = w.clone();
                x.gemv_tr(1.0, a, c, 1.0);
                self.with_factor(|f| f.solve_mut(&mut x))?;
                let ax = a * &x;
                Ok((x, ax))
            }
        }
    }
}

fn factorize(spd: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(spd.clone()).ok_or(Error::NonFinite {
        stage: "normal-system factorization",
        iteration: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check(m: usize, n: usize) {
        let a = DMatrix::from_fn(m, n, |i, j| ((i * 31 + j * 17) % 13) as f64 / 7.0 - 0.8);
        let c = DVector::from_fn(m, |i, _| i as f64 * 0.3 - 1.0);
        let w = DVector::from_fn(n, |j, _| (j as f64).sin());
        let sys = NormalSystem::new(&a, true).unwrap();
        let (x, ax) = sys.solve(&a, &c, &w).unwrap();
        let lhs = (a.tr_mul(&a) + DMatrix::<f64>::identity(n, n)) * &x;
        let rhs = a.tr_mul(&c) + &w;
        assert!((lhs - rhs).amax() < 1e-10);
        assert!((&a * &x - &ax).amax() < 1e-10);

        let uncached = NormalSystem::new(&a, false).unwrap();
        let (x2, ax2) = uncached.solve(&a, &c, &w).unwrap();
        assert_eq!(x, x2);
        assert_eq!(ax, ax2);
    }

    #[test]
    fn wide_and_tall_systems() {
        check(4, 9);
        check(9, 4);
        check(5, 5);
    }
}
