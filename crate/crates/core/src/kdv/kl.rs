use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Gauss–Legendre nodes and weights on `[lo, hi]`, nodes ascending.
pub fn gauss_legendre(n: usize, lo: f64, hi: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(Error::Domain("quadrature needs at least one node".into()));
    }
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(Error::Domain(format!("invalid interval [{lo}, {hi}]")));
    }
    let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, t);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * t * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { t } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (t * p - pm1) / (t * t - 1.0);
            let step = p / dp;
            t -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - t * t) * dp * dp);
        nodes[i] = mid - half * t;
        nodes[n - 1 - i] = mid + half * t;
        weights[i] = half * w;
        weights[n - 1 - i] = half * w;
    }
    Ok((nodes, weights))
}

/// Truncated Karhunen–Loève expansion of the exponential kernel
/// `exp(-|t - t'| / corr_length)` on `[0, T]`.
#[derive(Debug, Clone)]
pub struct KLExpansion {
    corr_length: f64,
    sigma: f64,
    horizon: f64,
    eigenvalues: Vec<f64>,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// `modes[i][j] = phi_i(nodes[j])`.
    modes: Vec<Vec<f64>>,
}

fn kernel(t: f64, s: f64, corr_length: f64) -> f64 {
    (-(t - s).abs() / corr_length).exp()
}

/// `int_0^T exp(-|t - s| / l) ds`.
fn kernel_row_integral(t: f64, horizon: f64, l: f64) -> f64 {
    l * (2.0 - (-t / l).exp() - (-(horizon - t) / l).exp())
}

/// Symmetrized Nyström matrix `W^1/2 K W^1/2` with the kink of the kernel
/// on the diagonal handled by subtracting `phi(t_i)` under the integral and
/// integrating the kernel row exactly.
fn nystrom_matrix(corr_length: f64, horizon: f64, n_quad: usize) -> Result<(DMatrix<f64>, Vec<f64>, Vec<f64>)> {
    if !(corr_length.is_finite() && corr_length > 0.0) {
        return Err(Error::Domain(format!("correlation length must be positive, got {corr_length}")));
    }
    let (nodes, weights) = gauss_legendre(n_quad, 0.0, horizon)?;
    let sw: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let mut k = DMatrix::from_fn(n_quad, n_quad, |i, j| kernel(nodes[i], nodes[j], corr_length));
    for i in 0..n_quad {
        let row: f64 = (0..n_quad).map(|j| weights[j] * k[(i, j)]).sum();
        k[(i, i)] += (kernel_row_integral(nodes[i], horizon, corr_length) - row) / weights[i];
    }
    let sym = DMatrix::from_fn(n_quad, n_quad, |i, j| sw[i] * k[(i, j)] * sw[j]);
    Ok((sym, nodes, weights))
}

/// Full discrete spectrum of the kernel operator, descending.
pub fn kl_spectrum(corr_length: f64, horizon: f64, n_quad: usize) -> Result<Vec<f64>> {
    let (sym, _, _) = nystrom_matrix(corr_length, horizon, n_quad)?;
    let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    Ok(ev)
}

/// Nyström eigenpairs of the exponential kernel; the leading `d` modes are
/// kept, normalized in `L2(0, T)` and signed so that `phi_i(0) > 0`.
pub fn kl_eigenpairs(corr_length: f64, horizon: f64, d: usize, n_quad: usize) -> Result<KLExpansion> {
    if d == 0 {
        return Err(Error::Domain("at least one KL mode is required".into()));
    }
    if n_quad < 4 * d {
        return Err(Error::Domain(format!("n_quad = {n_quad} must be at least 4d = {}", 4 * d)));
    }
    let (sym, nodes, weights) = nystrom_matrix(corr_length, horizon, n_quad)?;
    let sw: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n_quad).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

    let mut kl = KLExpansion {
        corr_length,
        sigma: 0.0,
        horizon,
        eigenvalues: Vec::with_capacity(d),
        nodes,
        weights,
        modes: Vec::with_capacity(d),
    };
    for &idx in order.iter().take(d) {
        let lambda = eig.eigenvalues[idx];
        if lambda.is_nan() || lambda <= 0.0 {
            return Err(Error::Domain(format!(
                "only {} positive KL eigenvalues available, {d} requested",
                kl.eigenvalues.len()
            )));
        }
        let v: DVector<f64> = eig.eigenvectors.column(idx).into_owned();
        let phi: Vec<f64> = v.iter().zip(&sw).map(|(v, s)| v / s).collect();
        kl.eigenvalues.push(lambda);
        kl.modes.push(phi);
        let i = kl.modes.len() - 1;
        if kl.nystrom(i, 0.0) < 0.0 {
            kl.modes[i].iter_mut().for_each(|p| *p = -*p);
        }
    }
    Ok(kl)
}

impl KLExpansion {
    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn corr_length(&self) -> f64 {
        self.corr_length
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Values of `phi_i` at the quadrature nodes.
    pub fn mode_values(&self, i: usize) -> &[f64] {
        &self.modes[i]
    }

    /// Solves the discrete eigen equation at `t` for `phi_i(t)`; equals the
    /// node values at the nodes.
    fn nystrom(&self, i: usize, t: f64) -> f64 {
        let (mut num, mut mass) = (0.0, 0.0);
        for ((&tj, &wj), &pj) in self.nodes.iter().zip(&self.weights).zip(&self.modes[i]) {
            let c = wj * kernel(t, tj, self.corr_length);
            num += c * pj;
            mass += c;
        }
        num / (self.eigenvalues[i] - kernel_row_integral(t, self.horizon, self.corr_length) + mass)
    }

    /// `phi_i(t)` by Nyström interpolation.
    pub fn eigenfunction(&self, i: usize, t: f64) -> Result<f64> {
        if i >= self.dim() {
            return Err(Error::Domain(format!("mode {i} out of range ({} modes)", self.dim())));
        }
        self.check_time(t)?;
        Ok(self.nystrom(i, t))
    }

    /// `int_0^t phi_i(s) ds`, from `lambda phi = K phi` integrated in `t`
    /// with the kernel integral in closed form.
    pub fn integrated_eigenfunction(&self, i: usize, t: f64) -> Result<f64> {
        if i >= self.dim() {
            return Err(Error::Domain(format!("mode {i} out of range ({} modes)", self.dim())));
        }
        self.check_time(t)?;
        let l = self.corr_length;
        let s: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .zip(&self.modes[i])
            .map(|((&tj, &wj), &pj)| {
                let k = if t <= tj {
                    l * ((-(tj - t) / l).exp() - (-tj / l).exp())
                } else {
                    l * (2.0 - (-tj / l).exp() - (-(t - tj) / l).exp())
                };
                wj * k * pj
            })
            .sum();
        Ok(s / self.eigenvalues[i])
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let tol = 1e-12 * self.horizon.max(1.0);
        if !(t >= -tol && t <= self.horizon + tol) {
            return Err(Error::Domain(format!("t = {t} outside [0, {}]", self.horizon)));
        }
        Ok(())
    }
}

/// `f(t; xi) = sigma * sum_i sqrt(lambda_i) phi_i(t) xi_i`.
pub fn random_force(kl: &KLExpansion, xi: &[f64], t: f64) -> Result<f64> {
    if xi.len() != kl.dim() {
        return Err(Error::Dimension {
            expected: kl.dim(),
            got: xi.len(),
            context: "random input vs KL modes",
        });
    }
    kl.check_time(t)?;
    if kl.sigma == 0.0 || xi.iter().all(|&x| x == 0.0) {
        return Ok(0.0);
    }
    let mut f = 0.0;
    for (i, &x) in xi.iter().enumerate() {
        if x != 0.0 {
            f += kl.eigenvalues[i].sqrt() * kl.nystrom(i, t) * x;
        }
    }
    Ok(kl.sigma * f)
}

/// `int_0^t f(s; xi) ds`.
pub fn integrated_force(kl: &KLExpansion, xi: &[f64], t: f64) -> Result<f64> {
    if xi.len() != kl.dim() {
        return Err(Error::Dimension {
            expected: kl.dim(),
            got: xi.len(),
            context: "random input vs KL modes",
        });
    }
    kl.check_time(t)?;
    if kl.sigma == 0.0 || xi.iter().all(|&x| x == 0.0) {
        return Ok(0.0);
    }
    let mut f = 0.0;
    for (i, &x) in xi.iter().enumerate() {
        if x != 0.0 {
            f += kl.eigenvalues[i].sqrt() * kl.integrated_eigenfunction(i, t)? * x;
        }
    }
    Ok(kl.sigma * f)
}
