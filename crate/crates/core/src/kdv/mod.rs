//! Stochastic KdV demo: a Chebyshev collocation solver driven by a
//! Karhunen–Loève random force, and surrogate fits of a point value of the
//! solution with the sparse solvers.

mod grid;
mod kl;
mod solve;

pub use grid::{KdVGrid, DEFAULT_HALF_WIDTH};
pub use kl::{gauss_legendre, integrated_force, kl_eigenpairs, kl_spectrum, random_force, KLExpansion};
pub use solve::{kdv_solve, soliton, KdvSolution, KdvSolver};

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;

use crate::basis::{Basis, MeasurementMatrix, SampleSet};
use crate::error::{Error, Result};
use crate::harness::{default_candidates, relative_l2_error, solve_with, sub_seed, trial_seed, ExperimentRecord};
use crate::solvers::{Method, SolverConfig, DEFAULT_A};

/// Location of the quantity of interest `u(x, T)`.
pub const QOI_X: f64 = -6.5878;

#[derive(Debug, Clone, PartialEq)]
pub struct KdvParams {
    pub nu: f64,
    pub x0: f64,
    pub sigma: f64,
    pub corr_length: f64,
    pub n_x: usize,
    pub dt: f64,
    pub t_final: f64,
    pub n_quad: usize,
}

impl Default for KdvParams {
    fn default() -> Self {
        Self {
            nu: 1.0,
            x0: 0.0,
            sigma: 0.1,
            corr_length: 0.25,
            n_x: 256,
            dt: 1e-4,
            t_final: 1.0,
            n_quad: 128,
        }
    }
}

/// Point value `u(QOI_X, T; xi)` for many inputs, sharing one stepper.
pub struct QoiModel {
    params: KdvParams,
    solver: KdvSolver,
    kl: KLExpansion,
}

impl QoiModel {
    pub fn new(params: KdvParams, d: usize) -> Result<Self> {
        let grid = KdVGrid::new(params.n_x, params.dt, params.t_final)?;
        let kl = kl_eigenpairs(params.corr_length, params.t_final, d, params.n_quad.max(4 * d))?
            .with_sigma(params.sigma);
        Ok(Self {
            solver: KdvSolver::new(grid)?,
            kl,
            params,
        })
    }

    pub fn kl(&self) -> &KLExpansion {
        &self.kl
    }

    pub fn solver(&self) -> &KdvSolver {
        &self.solver
    }

    pub fn eval(&self, xi: &[f64]) -> Result<f64> {
        let sol = self.solver.solve(self.params.nu, self.params.x0, &self.kl, xi)?;
        self.solver.grid().interpolate(sol.u.as_slice(), QOI_X)
    }

    /// QoI at every sample; failures carry the sample index.
    pub fn eval_all(&self, samples: &SampleSet) -> Result<Vec<f64>> {
        (0..samples.len())
            .into_par_iter()
            .map(|i| {
                self.eval(&samples.point(i)).map_err(|e| Error::Evaluation {
                    index: i,
                    reason: e.to_string(),
                })
            })
            .collect()
    }
}

/// ADMM penalty used for the KdV fits.
pub const KDV_DELTA: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq)]
pub struct KdvExperimentSpec {
    pub d: usize,
    pub k: u32,
    pub m_grid: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub a: f64,
    pub candidates: Option<Vec<f64>>,
    pub validation_size: usize,
    pub params: KdvParams,
    pub solver: SolverConfig,
    pub timing: bool,
}

impl Default for KdvExperimentSpec {
    fn default() -> Self {
        Self {
            d: 2,
            k: 20,
            m_grid: vec![30],
            trials: 10,
            seed: 0,
            methods: vec![Method::AdaptiveTl1, Method::L1Minus2, Method::L1],
            a: DEFAULT_A,
            candidates: None,
            validation_size: 100,
            params: KdvParams::default(),
            solver: SolverConfig {
                delta: KDV_DELTA,
                ..SolverConfig::default()
            },
            timing: false,
        }
    }
}

impl KdvExperimentSpec {
    /// Applies one `key = value` setting; keys match the CLI flag names.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.trim()
                .parse()
                .map_err(|_| Error::Config(format!("invalid value `{v}` for `{key}`")))
        }
        fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
            v.split(',').filter(|p| !p.trim().is_empty()).map(|p| num(key, p)).collect()
        }
        let key = key.trim().replace('-', "_");
        match key.as_str() {
            "d" => self.d = num(&key, value)?,
            "k" => self.k = num(&key, value)?,
            "m_grid" => self.m_grid = list(&key, value)?,
            "m" => self.m_grid = vec![num(&key, value)?],
            "trials" => self.trials = num(&key, value)?,
            "seed" => self.seed = num(&key, value)?,
            "methods" => {
                self.methods = value.split(',').map(str::parse).collect::<Result<_>>()?
            }
            "a" => self.a = num(&key, value)?,
            "candidates" => self.candidates = Some(list(&key, value)?),
            "q" | "validation_size" => self.validation_size = num(&key, value)?,
            "nu" => self.params.nu = num(&key, value)?,
            "x0" => self.params.x0 = num(&key, value)?,
            "sigma" => self.params.sigma = num(&key, value)?,
            "corr_length" => self.params.corr_length = num(&key, value)?,
            "nx" | "n_x" => self.params.n_x = num(&key, value)?,
            "dt" => self.params.dt = num(&key, value)?,
            "t_final" => self.params.t_final = num(&key, value)?,
            "n_quad" => self.params.n_quad = num(&key, value)?,
            "eps_outer" => self.solver.eps_outer = num(&key, value)?,
            "eps_inner" => self.solver.eps_inner = num(&key, value)?,
            "delta" => self.solver.delta = num(&key, value)?,
            "max_outer" => self.solver.max_outer = num(&key, value)?,
            "max_inner" => self.solver.max_inner = num(&key, value)?,
            "timing" => self.timing = num(&key, value)?,
            other => return Err(Error::Config(format!("unknown setting `{other}`"))),
        }
        Ok(())
    }
}

/// Recovered coefficient magnitudes of one fit.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientRow {
    pub method: Method,
    pub m: usize,
    pub trial: usize,
    pub index: usize,
    pub magnitude: f64,
}

#[derive(Debug, Clone, Default)]
pub struct KdvExperimentOutput {
    pub records: Vec<ExperimentRecord>,
    pub coefficients: Vec<CoefficientRow>,
}

impl KdvExperimentOutput {
    pub fn coefficients_for(&self, method: Method) -> impl Iterator<Item = &CoefficientRow> {
        self.coefficients.iter().filter(move |r| r.method == method)
    }
}

pub fn write_coefficients<W: Write>(mut w: W, rows: impl Iterator<Item = impl std::borrow::Borrow<CoefficientRow>>) -> Result<()> {
    writeln!(w, "M,trial,index,magnitude")?;
    for r in rows {
        let r = r.borrow();
        writeln!(w, "{},{},{},{}", r.m, r.trial, r.index, r.magnitude)?;
    }
    Ok(())
}

/// Surrogate error (reRMSE on fresh validation inputs) and sparsity of each
/// method for the KdV point value, over an `M` grid.
pub fn kdv_uq_experiment(spec: &KdvExperimentSpec) -> Result<KdvExperimentOutput> {
    if spec.trials == 0 || spec.trials > 100 {
        return Err(Error::Config(format!("trials must be in 1..=100, got {}", spec.trials)));
    }
    if spec.m_grid.is_empty() || spec.m_grid.windows(2).any(|w| w[1] <= w[0]) || spec.m_grid[0] == 0 {
        return Err(Error::Config("M grid must be positive and strictly increasing".into()));
    }
    if spec.methods.is_empty() || spec.validation_size == 0 {
        return Err(Error::Config("need at least one method and one validation sample".into()));
    }
    spec.solver.validate()?;
    let basis = Basis::total_degree(spec.d, spec.k)?;
    let model = QoiModel::new(spec.params.clone(), spec.d)?;
    let candidates = spec.candidates.clone().unwrap_or_else(|| default_candidates(spec.d));

    let mut out = KdvExperimentOutput::default();
    for (g, &m) in spec.m_grid.iter().enumerate() {
        for trial in 0..spec.trials {
            let seed = trial_seed(spec.seed, g, trial);
            let samples = SampleSet::uniform(spec.d, m, seed)?;
            let validation = SampleSet::uniform(spec.d, spec.validation_size, sub_seed(seed, 2))?;
            let evaluated = model
                .eval_all(&samples)
                .and_then(|b| model.eval_all(&validation).map(|t| (b, t)));
            let (b, truth) = match evaluated {
                Ok(v) => v,
                Err(e) => {
                    log::error!("KdV trial {trial} at M = {m} aborted: {e}");
                    return Err(e);
                }
            };
            let a = MeasurementMatrix::assemble(&basis, &samples, false)?;
            let v = MeasurementMatrix::assemble(&basis, &validation, false)?;
            let b = nalgebra::DVector::from_vec(b);
            for &method in &spec.methods {
                let start = Instant::now();
                let r = solve_with(method, a.entries(), &b, &spec.solver, spec.a, &candidates)?;
                let approx = v.entries() * &r.x;
                out.records.push(ExperimentRecord {
                    method,
                    sweep_name: "M",
                    sweep_value: m,
                    trial,
                    seed,
                    success: None,
                    rel_error: Some(relative_l2_error(approx.as_slice(), &truth)?),
                    wall_ms: spec.timing.then(|| start.elapsed().as_secs_f64() * 1e3),
                    sparsity: Some(r.sparsity),
                });
                out.coefficients.extend(r.x.iter().enumerate().map(|(index, c)| CoefficientRow {
                    method,
                    m,
                    trial,
                    index,
                    magnitude: c.abs(),
                }));
            }
        }
    }
    Ok(out)
}
