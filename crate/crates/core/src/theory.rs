//! Computable parts of the TL1 recovery theory: brute-force restricted
//! isometry constants, the admissibility threshold, the error-bound constants
//! `C0`/`C1`, and an empirical check of the noiseless error bound.

use std::f64::consts::SQRT_2;
use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::basis::binomial;
use crate::error::{Error, Result};
use crate::penalty::{penalty, PenaltyParam};
use crate::solvers::{dca_tl1, SolverConfig, SolverResult};

/// Default limit on the number of supports enumerated by [`ric_bruteforce`].
pub const DEFAULT_SUPPORT_CAP: u128 = 1_000_000;

/// Slack on `||x_hat - x||_2 <= C0 s^{-1/2} P_a(x - x_s)`; an exactly sparse
/// target has a zero right side, so this is the exact-recovery tolerance.
pub const BOUND_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RicEstimate {
    pub s: usize,
    pub delta_s: f64,
    pub n_supports: u128,
}

/// Restricted isometry constant of order `s` by enumerating every support of
/// size exactly `s`. Smaller supports are principal submatrices of some size-s
/// support, so their spectra are interlaced inside.
pub fn ric_bruteforce(b: &DMatrix<f64>, s: usize) -> Result<RicEstimate> {
    ric_bruteforce_capped(b, s, DEFAULT_SUPPORT_CAP)
}

pub fn ric_bruteforce_capped(b: &DMatrix<f64>, s: usize, cap: u128) -> Result<RicEstimate> {
    let (m, n) = b.shape();
    if s == 0 || s > m.min(n) {
        return Err(Error::Domain(format!(
            "sparsity level {s} must lie in 1..={} for a {m}x{n} matrix",
            m.min(n)
        )));
    }
    let count = binomial(n as u64, s as u64).unwrap_or(u128::MAX);
    if count > cap {
        return Err(Error::Size {
            what: "number of supports",
            requested: count,
            cap,
        });
    }
    let gram = b.tr_mul(b);
    // max is exact, so the parallel reduction does not depend on the schedule
    let delta_s = (0..=n - s)
        .into_par_iter()
        .map(|first| {
            let mut support = Vec::with_capacity(s);
            support.push(first);
            let mut worst = 0.0f64;
            visit_supports(&mut support, s, n, &mut |t| {
                worst = worst.max(support_deviation(&gram, t));
            });
            worst
        })
        .reduce(|| 0.0, f64::max);
    Ok(RicEstimate {
        s,
        delta_s,
        n_supports: count,
    })
}

fn visit_supports(support: &mut Vec<usize>, s: usize, n: usize, f: &mut impl FnMut(&[usize])) {
    if support.len() == s {
        f(support);
        return;
    }
    let start = support.last().map_or(0, |&l| l + 1);
    let remaining = s - support.len();
    for j in start..=n - remaining {
        support.push(j);
        visit_supports(support, s, n, f);
        support.pop();
    }
}

/// `max(lambda_max - 1, 1 - lambda_min)` of the Gram block on `support`.
fn support_deviation(gram: &DMatrix<f64>, support: &[usize]) -> f64 {
    if support.len() == 1 {
        let g = gram[(support[0], support[0])];
        return (g - 1.0).abs();
    }
    let k = support.len();
    let sub = DMatrix::from_fn(k, k, |i, j| gram[(support[i], support[j])]);
    let eig = SymmetricEigen::new(sub).eigenvalues;
    (eig.max() - 1.0).max(1.0 - eig.min()).max(0.0)
}

/// Writes `s,delta_s,n_supports` rows for `s = 1..=s_max`.
pub fn write_ric_table<W: Write>(mut w: W, b: &DMatrix<f64>, s_max: usize) -> Result<Vec<RicEstimate>> {
    writeln!(w, "s,delta_s,n_supports")?;
    let mut out = Vec::with_capacity(s_max);
    for s in 1..=s_max {
        let r = ric_bruteforce(b, s)?;
        writeln!(w, "{},{},{}", r.s, r.delta_s, r.n_supports)?;
        out.push(r);
    }
    Ok(out)
}

fn check_a(a: f64) -> Result<()> {
    PenaltyParam::new(a).map(|_| ())
}

/// Largest `delta_2s` admitted by the noiseless/noisy TL1 error bounds,
/// `1 / (1 + sqrt(2) (a + 1) / a)`.
pub fn tl1_rip_threshold(a: f64) -> Result<f64> {
    check_a(a)?;
    Ok(1.0 / (1.0 + SQRT_2 * (a + 1.0) / a))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConstants {
    pub a: f64,
    pub delta2s: f64,
    /// Multiplier of `s^{-1/2} P_a(x - x_s)`.
    pub c0: f64,
    /// Multiplier of the noise level.
    pub c1: f64,
    pub admissible: bool,
}

/// `C0` and `C1` of the TL1 error bounds. Inadmissible inputs are still
/// evaluated; the constants are then meaningless and `admissible` is false.
pub fn error_constants(a: f64, delta2s: f64) -> Result<BoundConstants> {
    check_a(a)?;
    if !(0.0..1.0).contains(&delta2s) {
        return Err(Error::Domain(format!("delta_2s must lie in [0, 1), got {delta2s}")));
    }
    let d = delta2s;
    let den = a - ((SQRT_2 + 1.0) * a + SQRT_2) * d;
    let c0 = ((6.0 * SQRT_2 * a - 2.0 * a + 2.0 * SQRT_2) * d + 2.0 * a) / den;
    let c1 = 2.0 * (2.0 * a + 1.0) * (1.0 + d).sqrt() / den;
    Ok(BoundConstants {
        a,
        delta2s,
        c0,
        c1,
        admissible: d < tl1_rip_threshold(a)?,
    })
}

/// Sufficient condition for TL1 = l0 equivalence at large `a`:
/// `delta_R + (R/|T|) a^2/(a+1)^2 delta_{R+|T|} < (R/|T|) a^2/(a+1)^2 - 1`.
pub fn zhang_xin_condition(r: usize, t_size: usize, a: f64, delta_r: f64, delta_rt: f64) -> Result<bool> {
    Ok(zhang_xin_margin(r, t_size, a, delta_r, delta_rt)? > 0.0)
}

/// Right side minus left side of [`zhang_xin_condition`].
pub fn zhang_xin_margin(r: usize, t_size: usize, a: f64, delta_r: f64, delta_rt: f64) -> Result<f64> {
    check_a(a)?;
    if t_size == 0 || r <= t_size {
        return Err(Error::Domain(format!("need R > |T| >= 1, got R = {r}, |T| = {t_size}")));
    }
    let ratio = a / (a + 1.0);
    let k = r as f64 / t_size as f64 * ratio * ratio;
    Ok(k - 1.0 - delta_r - k * delta_rt)
}

/// `C delta^{-2} 3^P s log^3(2s) log(N)` with natural logarithms.
pub fn sample_complexity(delta: f64, p: u32, s: usize, n: usize, c: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("delta must lie in (0, 1), got {delta}")));
    }
    if s == 0 || n < 2 {
        return Err(Error::Domain(format!("need s >= 1 and N >= 2, got s = {s}, N = {n}")));
    }
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::Domain(format!("constant C must be positive, got {c}")));
    }
    let sf = s as f64;
    Ok(c / (delta * delta) * 3f64.powi(p as i32) * sf * (2.0 * sf).ln().powi(3) * (n as f64).ln())
}

/// Best `s`-term approximation: keeps the `s` largest magnitudes, earlier
/// indices first on ties.
pub fn best_s_term(x: &[f64], s: usize) -> DVector<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&i, &j| x[j].abs().total_cmp(&x[i].abs()).then(i.cmp(&j)));
    let mut out = DVector::zeros(x.len());
    for &i in order.iter().take(s) {
        out[i] = x[i];
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundStatus {
    Holds,
    /// The solver reached a penalty no larger than the target's, yet the
    /// bound fails.
    Violated,
    /// The bound fails but the solver's point has a larger penalty than the
    /// target, so it is not a global minimizer and the bound does not apply.
    SolverSuboptimal,
}

#[derive(Debug, Clone)]
pub struct BoundReport {
    pub ric: RicEstimate,
    pub constants: BoundConstants,
    /// `||x_hat - x||_2`
    pub lhs: f64,
    /// `C0 s^{-1/2} P_a(x - x_s)`
    pub rhs: f64,
    pub penalty_hat: f64,
    pub penalty_true: f64,
    /// `P_a(x_hat) <= P_a(x)`
    pub certified: bool,
    pub status: BoundStatus,
    pub solve: SolverResult,
}

/// Runs DCA-TL1 on `b = B x_true` and compares the recovery error with the
/// noiseless bound. Refuses when `delta_2s` of `B` is not admissible for `a`.
pub fn verify_noiseless_bound(
    b_mat: &DMatrix<f64>,
    x_true: &DVector<f64>,
    s: usize,
    a: f64,
    cfg: &SolverConfig,
) -> Result<BoundReport> {
    if x_true.len() != b_mat.ncols() {
        return Err(Error::Dimension {
            expected: b_mat.ncols(),
            got: x_true.len(),
            context: "target length vs matrix columns",
        });
    }
    let ric = ric_bruteforce(b_mat, 2 * s)?;
    let constants = error_constants(a, ric.delta_s.min(1.0 - f64::EPSILON))?;
    if !constants.admissible || ric.delta_s >= 1.0 {
        return Err(Error::Inadmissible {
            a,
            delta: ric.delta_s,
            threshold: tl1_rip_threshold(a)?,
        });
    }
    let pa = PenaltyParam::new(a)?;
    let rhs_vec = b_mat * x_true;
    let solve = dca_tl1(b_mat, &rhs_vec, &cfg.clone().with_a(a)?)?;

    let tail = x_true - best_s_term(x_true.as_slice(), s);
    let rhs = constants.c0 / (s as f64).sqrt() * penalty(tail.as_slice(), pa)?;
    let lhs = (&solve.x - x_true).norm();
    let penalty_hat = penalty(solve.x.as_slice(), pa)?;
    let penalty_true = penalty(x_true.as_slice(), pa)?;
    let certified = penalty_hat <= penalty_true + 1e-12 * (1.0 + penalty_true);
    let status = if lhs <= rhs + BOUND_SLACK {
        BoundStatus::Holds
    } else if certified {
        BoundStatus::Violated
    } else {
        BoundStatus::SolverSuboptimal
    };
    Ok(BoundReport {
        ric,
        constants,
        lhs,
        rhs,
        penalty_hat,
        penalty_true,
        certified,
        status,
        solve,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyTarget {
    /// `s` standard normal entries on a uniformly random support.
    Sparse,
    /// `x_j = 2^-j` on a random permutation of the indices, random signs.
    Compressible,
}

#[derive(Debug, Clone)]
pub struct BoundTrial {
    pub trial: usize,
    pub seed: u64,
    pub delta2s: f64,
    pub threshold: f64,
    /// `None` when `delta_2s` is not admissible.
    pub report: Option<BoundReport>,
}

/// Gaussian `m x n` matrix with unit-norm columns.
pub fn unit_column_gaussian(m: usize, n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = DMatrix::from_fn(m, n, |_, _| StandardNormal.sample(&mut rng));
    for mut c in b.column_iter_mut() {
        let norm = c.norm();
        if norm > 0.0 {
            c /= norm;
        }
    }
    b
}

/// Noiseless bound check over seeded random instances. Instances whose
/// `delta_2s` is not admissible are recorded without a report.
#[allow(clippy::too_many_arguments)]
pub fn bound_study(
    m: usize,
    n: usize,
    s: usize,
    a: f64,
    target: StudyTarget,
    trials: usize,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<Vec<BoundTrial>> {
    let threshold = tl1_rip_threshold(a)?;
    (0..trials)
        .map(|trial| {
            let tseed = crate::harness::trial_seed(seed, 0, trial);
            let b = unit_column_gaussian(m, n, tseed);
            let mut rng = ChaCha8Rng::seed_from_u64(crate::harness::sub_seed(tseed, 1));
            let mut x = DVector::zeros(n);
            match target {
                StudyTarget::Sparse => {
                    for i in rand::seq::index::sample(&mut rng, n, s.min(n)).into_iter() {
                        x[i] = StandardNormal.sample(&mut rng);
                    }
                }
                StudyTarget::Compressible => {
                    let perm = rand::seq::index::sample(&mut rng, n, n).into_vec();
                    for (j, &i) in perm.iter().enumerate() {
                        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                        x[i] = sign * 0.5f64.powi(j as i32);
                    }
                }
            }
            match verify_noiseless_bound(&b, &x, s, a, cfg) {
                Ok(report) => Ok(BoundTrial {
                    trial,
                    seed: tseed,
                    delta2s: report.ric.delta_s,
                    threshold,
                    report: Some(report),
                }),
                Err(Error::Inadmissible { delta, .. }) => Ok(BoundTrial {
                    trial,
                    seed: tseed,
                    delta2s: delta,
                    threshold,
                    report: None,
                }),
                Err(e) => Err(e),
            }
        })
        .collect()
}

pub fn write_bound_study<W: Write>(mut w: W, rows: &[BoundTrial]) -> Result<()> {
    writeln!(w, "trial,seed,delta_2s,threshold,admissible,lhs,rhs,penalty_hat,penalty_true,certified,status")?;
    for r in rows {
        match &r.report {
            Some(rep) => writeln!(
                w,
                "{},{},{},{},1,{},{},{},{},{},{}",
                r.trial,
                r.seed,
                r.delta2s,
                r.threshold,
                rep.lhs,
                rep.rhs,
                rep.penalty_hat,
                rep.penalty_true,
                u8::from(rep.certified),
                match rep.status {
                    BoundStatus::Holds => "holds",
                    BoundStatus::Violated => "violated",
                    BoundStatus::SolverSuboptimal => "solver_suboptimal",
                }
            )?,
            None => writeln!(w, "{},{},{},{},0,,,,,,inadmissible", r.trial, r.seed, r.delta2s, r.threshold)?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ric_examples() {
        let id = DMatrix::<f64>::identity(5, 5);
        for s in 1..=5 {
            assert_eq!(ric_bruteforce(&id, s).unwrap().delta_s, 0.0);
        }
        let d = DMatrix::from_row_slice(2, 2, &[SQRT_2, 0.0, 0.0, 1.0]);
        assert!((ric_bruteforce(&d, 1).unwrap().delta_s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ric_rejects_bad_levels_and_caps() {
        let b = DMatrix::<f64>::identity(4, 6);
        assert!(ric_bruteforce(&b, 0).is_err());
        assert!(ric_bruteforce(&b, 5).is_err());
        assert!(matches!(
            ric_bruteforce_capped(&b, 3, 10),
            Err(Error::Size { requested: 20, .. })
        ));
        assert_eq!(ric_bruteforce(&b, 3).unwrap().n_supports, 20);
    }

    #[test]
    fn threshold_examples() {
        assert!((tl1_rip_threshold(1e12).unwrap() - 1.0 / (1.0 + SQRT_2)).abs() < 1e-9);
        assert!((tl1_rip_threshold(1.0).unwrap() - 1.0 / (1.0 + 2.0 * SQRT_2)).abs() < 1e-15);
        let grid: Vec<f64> = (1..200).map(|i| tl1_rip_threshold(i as f64 * 0.05).unwrap()).collect();
        assert!(grid.windows(2).all(|w| w[1] > w[0]));
        assert!(tl1_rip_threshold(0.0).is_err());
    }

    #[test]
    fn constants_at_zero_delta() {
        for &a in &[0.1, 1.0, 3.0] {
            let c = error_constants(a, 0.0).unwrap();
            assert!((c.c0 - 2.0).abs() < 1e-14);
            assert!((c.c1 - 2.0 * (2.0 * a + 1.0) / a).abs() < 1e-13);
            assert!(c.admissible);
        }
        assert!((error_constants(1.0, 0.0).unwrap().c1 - 6.0).abs() < 1e-14);
        assert!(error_constants(1.0, 1.0).is_err());
        assert!(error_constants(1.0, -0.1).is_err());
    }

    #[test]
    fn inadmissible_constants_are_flagged() {
        let c = error_constants(1.0, 0.3).unwrap();
        assert!(!c.admissible);
        assert!(c.c0 < 0.0);
    }

    #[test]
    fn zhang_xin_examples() {
        // R = 3|T| and a -> infinity reduce to delta_3T + 3 delta_4T < 2
        assert!(zhang_xin_condition(3, 1, 1e6, 0.4, 0.4).unwrap());
        assert!(!zhang_xin_condition(2, 1, 1.0, 0.0, 0.0).unwrap());
        assert!(zhang_xin_condition(2, 2, 1.0, 0.0, 0.0).is_err());
        // right side non-positive
        assert!(!zhang_xin_condition(4, 1, 1.0, 0.0, 0.0).unwrap());
    }

    #[test]
    fn sample_complexity_examples() {
        let v = sample_complexity(0.25, 2, 4, 231, 1.0).unwrap();
        let want = 16.0 * 9.0 * 4.0 * 8f64.ln().powi(3) * 231f64.ln();
        assert!((v - want).abs() < 1e-9 * want);
        assert!((v - 28_187.366_474).abs() < 1e-3, "{v}");
        assert!(sample_complexity(1.0, 2, 4, 231, 1.0).is_err());
        assert!(sample_complexity(0.0, 2, 4, 231, 1.0).is_err());
        assert!(sample_complexity(0.5, 2, 0, 231, 1.0).is_err());
        let base = sample_complexity(0.5, 2, 3, 100, 1.0).unwrap();
        assert!(sample_complexity(0.5, 3, 3, 100, 1.0).unwrap() > base);
        assert!(sample_complexity(0.5, 2, 4, 100, 1.0).unwrap() > base);
        assert!(sample_complexity(0.4, 2, 3, 100, 1.0).unwrap() > base);
    }

    #[test]
    fn best_s_term_breaks_ties_by_index() {
        let x = [1.0, -3.0, 3.0, 0.5, -1.0];
        assert_eq!(best_s_term(&x, 2).as_slice(), &[0.0, -3.0, 3.0, 0.0, 0.0]);
        assert_eq!(best_s_term(&x, 3).as_slice(), &[1.0, -3.0, 3.0, 0.0, 0.0]);
        assert_eq!(best_s_term(&x, 0).as_slice(), &[0.0; 5]);
    }

    #[test]
    fn bound_on_orthonormal_matrix() {
        // orthonormal columns give delta = 0, the most favourable case
        let b = DMatrix::<f64>::identity(6, 6);
        let x = DVector::from_vec(vec![0.0, 1.5, 0.0, -0.7, 0.0, 0.0]);
        let cfg = SolverConfig {
            eps_inner: 1e-12,
            eps_outer: 1e-11,
            ..SolverConfig::default()
        };
        let rep = verify_noiseless_bound(&b, &x, 2, 0.3, &cfg).unwrap();
        assert_eq!(rep.status, BoundStatus::Holds, "lhs {}", rep.lhs);
        assert_eq!(rep.rhs, 0.0);
        assert!(rep.lhs < 1e-6);

        let zero = DVector::zeros(6);
        let rep = verify_noiseless_bound(&b, &zero, 2, 0.3, &cfg).unwrap();
        assert_eq!(rep.lhs, 0.0);
        assert_eq!(rep.rhs, 0.0);
    }

    #[test]
    fn bound_refuses_inadmissible_matrix() {
        let b = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.8, 0.0, 1.0, 0.6]);
        let x = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let err = verify_noiseless_bound(&b, &x, 1, 0.3, &SolverConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Inadmissible { .. }));
    }
}
