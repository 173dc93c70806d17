use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const DEFAULT_HALF_WIDTH: f64 = 70.0;

/// Chebyshev–Gauss–Lobatto collocation grid on `[-L, L]` with time step
/// settings.
#[derive(Debug, Clone)]
pub struct KdVGrid {
    half_width: f64,
    dt: f64,
    t_final: f64,
    nodes: DVector<f64>,
    bary: Vec<f64>,
    d1: DMatrix<f64>,
    d3: DMatrix<f64>,
}

impl KdVGrid {
    pub fn new(n_x: usize, dt: f64, t_final: f64) -> Result<Self> {
        Self::with_half_width(n_x, DEFAULT_HALF_WIDTH, dt, t_final)
    }

    pub fn with_half_width(n_x: usize, half_width: f64, dt: f64, t_final: f64) -> Result<Self> {
        if n_x < 4 {
            return Err(Error::Domain(format!("need at least 4 grid points, got {n_x}")));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::Domain(format!("half width must be positive, got {half_width}")));
        }
        if !(dt.is_finite() && dt > 0.0 && t_final.is_finite() && t_final > 0.0 && dt <= t_final) {
            return Err(Error::Domain(format!("invalid time settings dt = {dt}, T = {t_final}")));
        }
        let n = n_x - 1;
        let theta: Vec<f64> = (0..n_x).map(|j| PI * j as f64 / n as f64).collect();
        // -L cos(theta_j), written with sin for exact symmetry
        let nodes = DVector::from_fn(n_x, |j, _| {
            half_width * (PI * (2.0 * j as f64 - n as f64) / (2.0 * n as f64)).sin()
        });
        let bary: Vec<f64> = (0..n_x)
            .map(|j| {
                let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                if j == 0 || j == n {
                    0.5 * s
                } else {
                    s
                }
            })
            .collect();
        let mut d1 = DMatrix::zeros(n_x, n_x);
        for i in 0..n_x {
            let mut diag = 0.0;
            for j in 0..n_x {
                if i != j {
                    let diff =
                        2.0 * half_width * (0.5 * (theta[i] + theta[j])).sin() * (0.5 * (theta[i] - theta[j])).sin();
                    let v = bary[j] / bary[i] / diff;
                    d1[(i, j)] = v;
                    diag -= v;
                }
            }
            d1[(i, i)] = diag;
        }
        let d3 = &d1 * &d1 * &d1;
        Ok(Self {
            half_width,
            dt,
            t_final,
            nodes,
            bary,
            d1,
            d3,
        })
    }

    pub fn n_x(&self) -> usize {
        self.nodes.len()
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    /// Number of time steps, `T / dt` rounded.
    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn nodes(&self) -> &DVector<f64> {
        &self.nodes
    }

    pub fn d1(&self) -> &DMatrix<f64> {
        &self.d1
    }

    pub fn d3(&self) -> &DMatrix<f64> {
        &self.d3
    }

    /// First derivative on the interior nodes for functions vanishing at both
    /// endpoints.
    pub fn interior_d1(&self) -> DMatrix<f64> {
        let m = self.n_x() - 2;
        self.d1.view((1, 1), (m, m)).into_owned()
    }

    /// Third derivative on the interior nodes for functions with
    /// `u(-L) = u(L) = u_x(L) = 0`.
    ///
    /// Such a function is written as `phi * q` with
    /// `phi(s) = (1 - s)^2 (1 + s)` in the reference variable `s = x / L` and
    /// `q` the interpolant through the interior nodes; the operator is the
    /// Leibniz expansion of `(phi q)'''`.
    pub fn clamped_d3(&self) -> DMatrix<f64> {
        let n = self.n_x() - 1;
        let m = n - 1;
        let angle = |j: usize| PI * (2.0 * j as f64 - n as f64) / (2.0 * n as f64);
        let s: Vec<f64> = (1..n).map(|j| angle(j).sin()).collect();
        let w: Vec<f64> = (1..n)
            .map(|j| {
                let c = angle(j).cos();
                if j % 2 == 0 {
                    c * c
                } else {
                    -c * c
                }
            })
            .collect();
        let mut dq = DMatrix::zeros(m, m);
        for i in 0..m {
            let mut diag = 0.0;
            for j in 0..m {
                if i != j {
                    let (ai, aj) = (angle(i + 1), angle(j + 1));
                    let diff = 2.0 * (0.5 * (ai - aj)).sin() * (0.5 * (ai + aj)).cos();
                    let v = w[j] / w[i] / diff;
                    dq[(i, j)] = v;
                    diag -= v;
                }
            }
            dq[(i, i)] = diag;
        }
        let dq2 = &dq * &dq;
        let dq3 = &dq2 * &dq;
        let scale = self.half_width.powi(3);
        DMatrix::from_fn(m, m, |i, j| {
            let x = s[i];
            let phi = (1.0 - x) * (1.0 - x) * (1.0 + x);
            let p1 = -1.0 - 2.0 * x + 3.0 * x * x;
            let p2 = -2.0 + 6.0 * x;
            let p3 = 6.0;
            let id = if i == j { p3 } else { 0.0 };
            let phi_j = (1.0 - s[j]) * (1.0 - s[j]) * (1.0 + s[j]);
            (id + 3.0 * p2 * dq[(i, j)] + 3.0 * p1 * dq2[(i, j)] + phi * dq3[(i, j)]) / phi_j / scale
        })
    }

    /// Clenshaw–Curtis weights matching the nodes.
    pub fn quadrature_weights(&self) -> Vec<f64> {
        let n = self.n_x() - 1;
        let nf = n as f64;
        let mut w = vec![0.0; n + 1];
        let end = if n.is_multiple_of(2) { 1.0 / (nf * nf - 1.0) } else { 1.0 / (nf * nf) };
        w[0] = end;
        w[n] = end;
        for (j, wj) in w.iter_mut().enumerate().take(n).skip(1) {
            let theta = PI * j as f64 / nf;
            let mut v = 1.0;
            for k in 1..=(n - 1) / 2 {
                let kf = k as f64;
                v -= 2.0 * (2.0 * kf * theta).cos() / (4.0 * kf * kf - 1.0);
            }
            if n.is_multiple_of(2) {
                v -= (nf * theta).cos() / (nf * nf - 1.0);
            }
            *wj = 2.0 * v / nf;
        }
        w.iter().map(|w| w * self.half_width).collect()
    }

    /// Barycentric interpolation of grid values at `x`.
    pub fn interpolate(&self, values: &[f64], x: f64) -> Result<f64> {
        if values.len() != self.n_x() {
            return Err(Error::Dimension {
                expected: self.n_x(),
                got: values.len(),
                context: "grid values",
            });
        }
        if x.is_nan() || x.abs() > self.half_width {
            return Err(Error::Domain(format!("x = {x} outside [-{0}, {0}]", self.half_width)));
        }
        let (mut num, mut den) = (0.0, 0.0);
        for ((&xj, &wj), &vj) in self.nodes.iter().zip(&self.bary).zip(values) {
            let diff = x - xj;
            if diff == 0.0 {
                return Ok(vj);
            }
            let c = wj / diff;
            num += c * vj;
            den += c;
        }
        Ok(num / den)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn differentiation_matrix_identities() {
        let g = KdVGrid::new(256, 1e-4, 1.0).unwrap();
        let ones = DVector::from_element(256, 1.0);
        assert!((g.d1() * &ones).amax() < 1e-8);
        let dx = g.d1() * g.nodes();
        assert!((dx - &ones).amax() < 1e-6);
        let third = g.d1() * (g.d1() * (g.d1() * g.nodes().map(|x| x.powi(3) / 1e4)));
        assert!((third.map(|v| v - 6.0 / 1e4)).amax() < 1e-6);
    }

    #[test]
    fn clamped_d3_is_accurate_and_dissipative() {
        let g = KdVGrid::new(128, 1e-4, 1.0).unwrap();
        let t = g.clamped_d3();
        let x = &g.nodes().as_slice()[1..127];
        // u = (L - x)^2 (L + x) x^2 / L^5 satisfies the three conditions
        let l = 70.0_f64;
        let u = DVector::from_iterator(126, x.iter().map(|&x| (l - x).powi(2) * (l + x) * x * x / l.powi(5)));
        // expanded: (L^3 x^2 - L^2 x^3 - L x^4 + x^5) / L^5
        let exact: Vec<f64> = x
            .iter()
            .map(|&x| (-6.0 * l * l - 24.0 * l * x + 60.0 * x * x) / l.powi(5))
            .collect();
        let got = &t * u;
        for (g, e) in got.iter().zip(&exact) {
            assert!((g - e).abs() < 1e-10, "{g} {e}");
        }
        let ev = t.complex_eigenvalues();
        assert!(ev.iter().all(|z| z.re > -1e-6), "{:?}", ev.iter().map(|z| z.re).fold(f64::MAX, f64::min));
    }

    #[test]
    fn nodes_are_symmetric_and_ascending() {
        let g = KdVGrid::new(17, 1e-3, 1.0).unwrap();
        let x = g.nodes();
        assert_eq!(x[0], -70.0);
        assert_eq!(x[16], 70.0);
        assert_eq!(x[8], 0.0);
        for j in 0..17 {
            assert_eq!(x[j], -x[16 - j]);
        }
        assert!(x.as_slice().windows(2).all(|p| p[1] > p[0]));
    }

    #[test]
    fn clenshaw_curtis_integrates_polynomials() {
        for n_x in [16, 17] {
            let g = KdVGrid::with_half_width(n_x, 1.0, 0.1, 1.0).unwrap();
            let w = g.quadrature_weights();
            for p in 0..(n_x as i32 - 1) {
                let q: f64 = g.nodes().iter().zip(&w).map(|(x, w)| w * x.powi(p)).sum();
                let exact = if p % 2 == 0 { 2.0 / (p + 1) as f64 } else { 0.0 };
                assert!((q - exact).abs() < 1e-13, "{n_x} {p}");
            }
        }
    }

    #[test]
    fn interpolation_is_exact_for_polynomials() {
        let g = KdVGrid::with_half_width(12, 2.0, 0.1, 1.0).unwrap();
        let v: Vec<f64> = g.nodes().iter().map(|x| 1.0 - x + 0.5 * x.powi(5)).collect();
        for &x in &[-1.3, 0.0, 0.77, 2.0] {
            let exact = 1.0 - x + 0.5 * f64::powi(x, 5);
            assert!((g.interpolate(&v, x).unwrap() - exact).abs() < 1e-12);
        }
        assert!(g.interpolate(&v, 2.5).is_err());
        assert!(g.interpolate(&v[1..], 0.0).is_err());
    }

    #[test]
    fn rejects_bad_settings() {
        assert!(KdVGrid::new(3, 1e-4, 1.0).is_err());
        assert!(KdVGrid::new(64, 0.0, 1.0).is_err());
        assert!(KdVGrid::new(64, 2.0, 1.0).is_err());
    }
}
