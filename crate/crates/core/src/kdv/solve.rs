use nalgebra::{DMatrix, DVector};

use super::grid::KdVGrid;
use super::kl::{integrated_force, KLExpansion};
use crate::error::{Error, Result};

/// Amplitude above which a run is declared blown up.
const BLOWUP_LIMIT: f64 = 1e6;

/// `(3 nu / 2) sech^2(sqrt(nu) (x - x0) / 2)`.
pub fn soliton(x: f64, nu: f64, x0: f64) -> f64 {
    let s = 1.0 / (0.5 * nu.sqrt() * (x - x0)).cosh();
    1.5 * nu * s * s
}

/// Final state of a KdV run.
#[derive(Debug, Clone)]
pub struct KdvSolution {
    /// Values on all grid nodes.
    pub u: DVector<f64>,
    pub t: f64,
    pub steps: usize,
}

/// Time stepper for `u_t + 2 u u_x + u_xxx = f(t)` on a fixed grid.
///
/// A spatially uniform force only moves the far field, so the solver
/// evolves `w = u - F(t)` with `F(t) = int_0^t f`, which satisfies
/// `w_t + 2 (w + F) w_x + w_xxx = 0` with `w = 0` at both ends and
/// `w_x = 0` at the right end. Dispersion is Crank–Nicolson, convection is
/// third-order Adams–Bashforth after two Strang-split startup steps whose
/// explicit half steps use SSP-RK3. The implicit operator is inverted once.
#[derive(Debug, Clone)]
pub struct KdvSolver {
    grid: KdVGrid,
    d1: DMatrix<f64>,
    /// `(I + dt/2 D3)^-1 (I - dt/2 D3)` on the interior.
    propagator: DMatrix<f64>,
    /// `(I + dt/2 D3)^-1` on the interior.
    implicit_inv: DMatrix<f64>,
}

impl KdvSolver {
    pub fn new(grid: KdVGrid) -> Result<Self> {
        let d3 = grid.clamped_d3();
        let m = d3.nrows();
        let h = 0.5 * grid.dt();
        let implicit_inv = (DMatrix::identity(m, m) + &d3 * h)
            .try_inverse()
            .ok_or_else(|| Error::Domain("Crank-Nicolson operator is singular".into()))?;
        let propagator = &implicit_inv * (DMatrix::identity(m, m) - d3 * h);
        Ok(Self {
            d1: grid.interior_d1(),
            grid,
            propagator,
            implicit_inv,
        })
    }

    pub fn grid(&self) -> &KdVGrid {
        &self.grid
    }

    /// `-2 (w + far) w_x`.
    fn convection(&self, w: &DVector<f64>, far: f64) -> DVector<f64> {
        let mut c = &self.d1 * w;
        c.zip_apply(w, |c, w| *c *= -2.0 * (w + far));
        c
    }

    fn rk3_half(&self, w: &DVector<f64>, t: f64, h: f64, far: &dyn Fn(f64) -> Result<f64>) -> Result<DVector<f64>> {
        let euler = |v: &DVector<f64>, s: f64| -> Result<DVector<f64>> { Ok(v + self.convection(v, far(s)?) * h) };
        let w1 = euler(w, t)?;
        let w2 = w * 0.75 + euler(&w1, t + h)? * 0.25;
        Ok(w / 3.0 + euler(&w2, t + 0.5 * h)? * (2.0 / 3.0))
    }

    /// Advances `u0` (values on all nodes, decayed at both ends) to the
    /// final time. `far(t)` is the accumulated force `int_0^t f`.
    pub fn run(&self, u0: &DVector<f64>, far: &dyn Fn(f64) -> Result<f64>) -> Result<KdvSolution> {
        let n = self.grid.n_x();
        if u0.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: u0.len(),
                context: "initial state vs grid",
            });
        }
        let dt = self.grid.dt();
        let steps = self.grid.steps();
        let mut w: DVector<f64> = u0.rows(1, n - 2).into_owned();
        let mut history = [self.convection(&w, far(0.0)?), DVector::zeros(0), DVector::zeros(0)];
        for step in 0..steps {
            let t = step as f64 * dt;
            if step < 2 {
                let half = self.rk3_half(&w, t, 0.5 * dt, far)?;
                w = self.rk3_half(&(&self.propagator * half), t + 0.5 * dt, 0.5 * dt, far)?;
                history[step + 1] = self.convection(&w, far(t + dt)?);
            } else {
                let [n2, n1, n0] = &history;
                let ab = (n0 * 23.0 - n1 * 16.0 + n2 * 5.0) * (dt / 12.0);
                let mut next = &self.propagator * &w;
                next.gemv(1.0, &self.implicit_inv, &ab, 1.0);
                w = next;
                history.rotate_left(1);
                history[2] = self.convection(&w, far(t + dt)?);
            }
            if !w.iter().all(|v| v.is_finite() && v.abs() < BLOWUP_LIMIT) {
                return Err(Error::Blowup { step: step + 1 });
            }
        }
        let t_end = steps as f64 * dt;
        let f_end = far(t_end)?;
        let mut u = DVector::from_element(n, f_end);
        u.rows_mut(1, n - 2).zip_apply(&w, |u, w| *u += w);
        Ok(KdvSolution { u, t: t_end, steps })
    }

    /// Soliton initial condition on the grid.
    pub fn initial_state(&self, nu: f64, x0: f64) -> Result<DVector<f64>> {
        if !(nu.is_finite() && nu > 0.0) {
            return Err(Error::Domain(format!("nu must be positive, got {nu}")));
        }
        if !x0.is_finite() {
            return Err(Error::Domain(format!("x0 must be finite, got {x0}")));
        }
        Ok(self.grid.nodes().map(|x| soliton(x, nu, x0)))
    }

    /// Solution at the final time for random input `xi`, soliton initial
    /// data.
    pub fn solve(&self, nu: f64, x0: f64, kl: &KLExpansion, xi: &[f64]) -> Result<KdvSolution> {
        if xi.len() != kl.dim() {
            return Err(Error::Dimension {
                expected: kl.dim(),
                got: xi.len(),
                context: "random input vs KL modes",
            });
        }
        if kl.horizon() + 1e-12 < self.grid.t_final() {
            return Err(Error::Domain(format!(
                "KL horizon {} is shorter than the final time {}",
                kl.horizon(),
                self.grid.t_final()
            )));
        }
        let u0 = self.initial_state(nu, x0)?;
        if kl.sigma() == 0.0 || xi.iter().all(|&x| x == 0.0) {
            return self.run(&u0, &|_| Ok(0.0));
        }
        let horizon = kl.horizon();
        self.run(&u0, &|t| integrated_force(kl, xi, t.min(horizon)))
    }
}

/// One-shot solve; builds the time stepper first.
pub fn kdv_solve(grid: &KdVGrid, nu: f64, x0: f64, kl: &KLExpansion, xi: &[f64]) -> Result<KdvSolution> {
    KdvSolver::new(grid.clone())?.solve(nu, x0, kl, xi)
}
