use nalgebra::{DMatrix, DVector};

use super::{sparsity, Init, Method, NormalSystem, SolverConfig, SolverResult};
use crate::error::{Error, Result};
use crate::penalty::{dc_subgradient_unchecked, penalty_unchecked, shrink_into, PenaltyParam};

/// Regularizer written as `w ||x||_1 - h(x)` with `h` convex.
#[derive(Debug, Clone, Copy)]
enum Regularizer {
    Tl1(PenaltyParam),
    L1,
    L1Minus2,
}

impl Regularizer {
    fn l1_weight(self) -> f64 {
        match self {
            Regularizer::Tl1(p) => p.l1_weight(),
            Regularizer::L1 | Regularizer::L1Minus2 => 1.0,
        }
    }

    /// Gradient of `h` at `x`.
    fn linearize(self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Regularizer::Tl1(p) => dc_subgradient_unchecked(x.as_slice(), p),
            Regularizer::L1 => DVector::zeros(x.len()),
            Regularizer::L1Minus2 => {
                let norm = x.norm();
                if norm > 0.0 {
                    x / norm
                } else {
                    DVector::zeros(x.len())
                }
            }
        }
    }

    fn objective(self, x: &DVector<f64>) -> f64 {
        match self {
            Regularizer::Tl1(p) => penalty_unchecked(x.as_slice(), p),
            Regularizer::L1 => x.lp_norm(1),
            Regularizer::L1Minus2 => x.lp_norm(1) - x.norm(),
        }
    }

    fn method(self) -> Method {
        match self {
            Regularizer::Tl1(_) => Method::Tl1,
            Regularizer::L1 => Method::L1,
            Regularizer::L1Minus2 => Method::L1Minus2,
        }
    }
}

/// Minimum-norm least-squares solution of `Ax = b` (`A^T (A A^T)^{-1} b` for
/// full row rank).
pub fn min_norm_solution(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * f64::EPSILON * a.nrows().max(a.ncols()) as f64;
    svd.solve(b, eps)
        .map_err(|e| Error::Domain(format!("least-squares initialization failed: {e}")))
}

fn check_inputs(a: &DMatrix<f64>, b: &DVector<f64>, cfg: &SolverConfig) -> Result<()> {
    cfg.validate()?;
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::Domain("measurement matrix is empty".into()));
    }
    if b.len() != a.nrows() {
        return Err(Error::Dimension {
            expected: a.nrows(),
            got: b.len(),
            context: "right-hand side length vs matrix rows",
        });
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite entry in A or b".into()));
    }
    Ok(())
}

struct InnerOutcome {
    x: DVector<f64>,
    iters: usize,
    converged: bool,
}

/// Inner splitting loop for `min w||y||_1 - z^T x  s.t.  Ax = b, x = y`,
/// warm-started at `x_start` with zero multipliers.
#[allow(clippy::too_many_arguments)]
fn inner_loop(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    normal: &NormalSystem,
    z: &DVector<f64>,
    threshold: f64,
    x_start: &DVector<f64>,
    cfg: &SolverConfig,
    outer: usize,
) -> Result<InnerOutcome> {
    let n = a.ncols();
    let m = a.nrows();
    let delta = cfg.delta;
    let mut x = x_start.clone();
    let mut y = x_start.clone();
    let mut u = DVector::<f64>::zeros(n);
    let mut v = DVector::<f64>::zeros(m);
    let mut c = DVector::<f64>::zeros(m);
    let mut w = DVector::<f64>::zeros(n);
    let mut shifted = DVector::<f64>::zeros(n);
    // the first stopping test compares x_1 with x_0 = 0
    let mut step = x.norm();
    let mut split = 0.0;
    let mut infeasibility = 0.0;
    let mut iters = 0;
    // A feasible warm start with z = 0 is a stationary point of the x-update
    // alone, so the step test is paired with the primal residuals
    // ||x - y|| and ||Ax - b||.
    while step > cfg.eps_inner || split > cfg.eps_inner || infeasibility > cfg.eps_inner {
        if iters == cfg.max_inner {
            return Ok(InnerOutcome { x, iters, converged: false });
        }
        iters += 1;

        // A^T b + y + (z - u - A^T v)/delta = A^T (b - v/delta) + (y + (z - u)/delta)
        for i in 0..m {
            c[i] = b[i] - v[i] / delta;
        }
        for i in 0..n {
            w[i] = y[i] + (z[i] - u[i]) / delta;
        }
        let (x_new, ax) = normal.solve(a, &c, &w)?;
        if x_new.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                stage: "inner x-update",
                iteration: outer * cfg.max_inner + iters,
            });
        }
        step = (&x_new - &x).norm();
        x = x_new;

        for i in 0..n {
            shifted[i] = x[i] + u[i] / delta;
        }
        shrink_into(shifted.as_slice(), threshold, y.as_mut_slice());
        for i in 0..n {
            u[i] += delta * (x[i] - y[i]);
        }
        split = (&x - &y).norm();
        infeasibility = 0.0;
        for i in 0..m {
            let r = ax[i] - b[i];
            infeasibility += r * r;
            v[i] += delta * r;
        }
        infeasibility = infeasibility.sqrt();
    }
    Ok(InnerOutcome { x, iters, converged: true })
}

fn run_dca(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    cfg: &SolverConfig,
    reg: Regularizer,
    single_pass: bool,
) -> Result<SolverResult> {
    check_inputs(a, b, cfg)?;
    let normal = NormalSystem::new(a, cfg.cache_factorization)?;
    let threshold = reg.l1_weight() / cfg.delta;
    let max_outer = if single_pass { 1 } else { cfg.max_outer };

    // x^0 = 0, x^1 = minimum-norm least squares
    let mut x_prev = DVector::<f64>::zeros(a.ncols());
    let mut x = min_norm_solution(a, b)?;
    let mut inner_total = 0;
    let mut converged = true;
    if cfg.init == Init::L1 && !single_pass && x.norm() > 0.0 {
        let z = DVector::zeros(a.ncols());
        let inner = inner_loop(a, b, &normal, &z, 1.0 / cfg.delta, &x, cfg, 0)?;
        inner_total += inner.iters;
        converged &= inner.converged;
        x = inner.x;
    }
    let mut trace = vec![reg.objective(&x)];
    let mut outer_iters = 0;

    while (&x - &x_prev).norm() > cfg.eps_outer {
        if outer_iters == max_outer {
            // l1 is convex, one pass is the whole solve
            converged = single_pass && converged;
            break;
        }
        outer_iters += 1;
        let z = reg.linearize(&x);
        let inner = inner_loop(a, b, &normal, &z, threshold, &x, cfg, outer_iters)?;
        inner_total += inner.iters;
        converged &= inner.converged;
        x_prev = std::mem::replace(&mut x, inner.x);
        trace.push(reg.objective(&x));
    }

    let residual = (a * &x - b).norm();
    Ok(SolverResult {
        sparsity: sparsity(x.as_slice()),
        x,
        outer_iters,
        inner_iters_total: inner_total,
        converged,
        residual,
        method: reg.method(),
        a_used: match reg {
            Regularizer::Tl1(p) => Some(p.a()),
            _ => None,
        },
        objective_trace: trace,
    })
}

/// DCA for `min P_a(x) s.t. Ax = b`.
pub fn dca_tl1(a: &DMatrix<f64>, b: &DVector<f64>, cfg: &SolverConfig) -> Result<SolverResult> {
    run_dca(a, b, cfg, Regularizer::Tl1(cfg.a), false)
}

/// Runs [`dca_tl1`] for every candidate `a` and keeps the sparsest result.
/// Ties keep the earlier candidate.
pub fn adaptive_dca_tl1(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    candidates: &[f64],
    cfg: &SolverConfig,
) -> Result<SolverResult> {
    if candidates.is_empty() {
        return Err(Error::Config("adaptive TL1 needs at least one candidate a".into()));
    }
    let mut best: Option<SolverResult> = None;
    let mut last_err = None;
    let mut inner_total = 0;
    for &cand in candidates {
        let run = cfg.clone().with_a(cand).and_then(|c| dca_tl1(a, b, &c));
        match run {
            Ok(r) => {
                inner_total += r.inner_iters_total;
                let better = best.as_ref().is_none_or(|cur| r.sparsity < cur.sparsity);
                if better {
                    best = Some(r);
                }
            }
            Err(e) => {
                log::warn!("adaptive TL1: candidate a = {cand} failed: {e}");
                last_err = Some(e);
            }
        }
    }
    match best {
        Some(mut r) => {
            r.method = Method::AdaptiveTl1;
            r.inner_iters_total = inner_total;
            Ok(r)
        }
        None => Err(last_err.expect("non-empty candidates without result must have failed")),
    }
}

/// Basis pursuit, `min ||x||_1 s.t. Ax = b`: the inner loop with `z = 0` and
/// threshold `1/delta`, run once.
pub fn l1_basis_pursuit(a: &DMatrix<f64>, b: &DVector<f64>, cfg: &SolverConfig) -> Result<SolverResult> {
    run_dca(a, b, cfg, Regularizer::L1, true)
}

/// DCA for `min ||x||_1 - ||x||_2 s.t. Ax = b`.
pub fn l12_dca(a: &DMatrix<f64>, b: &DVector<f64>, cfg: &SolverConfig) -> Result<SolverResult> {
    run_dca(a, b, cfg, Regularizer::L1Minus2, false)
}
