//! Seeded, reproducible recovery experiments and their CSV output.
//!
//! Every `(grid point, trial)` pair gets its own seed derived from the base
//! seed, and all methods within a pair see the same samples and target.
//! Jobs run on the current rayon pool; records are sorted by grid point,
//! trial and method before they are returned, so output does not depend on
//! the worker count.

mod config;
mod functions;

pub use config::parse_config;
pub use functions::{f1, f2, relative_l2_error};

use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::basis::{assemble_rhs, Basis, MeasurementMatrix, SampleSet};
use crate::error::{Error, Result};
use crate::penalty::{penalty, PenaltyParam};
use crate::solvers::{
    adaptive_dca_tl1, dca_tl1, l12_dca, l1_basis_pursuit, Method, SolverConfig, SolverResult,
    DEFAULT_A, HIGH_DIM_CANDIDATES, LOW_DIM_CANDIDATES,
};

/// Sup-norm error below which a sparse recovery counts as successful.
pub const SUCCESS_TOLERANCE: f64 = 1e-3;
/// Validation points for function experiments.
pub const DEFAULT_VALIDATION_SIZE: usize = 2000;
/// Environment variable that sets the number of worker threads.
pub const WORKERS_ENV: &str = "SPARSE_PCE_WORKERS";

pub const CSV_HEADER: &str = "method,sweep_name,sweep_value,trial,seed,success,rel_error,wall_ms";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    SuccessVsM,
    SuccessVsS,
    ErrorVsM,
}

impl ExperimentKind {
    pub fn sweep_name(self) -> &'static str {
        match self {
            ExperimentKind::SuccessVsM | ExperimentKind::ErrorVsM => "M",
            ExperimentKind::SuccessVsS => "s",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    PlantedSparse,
    F1,
    F2,
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "planted" | "planted_sparse" | "sparse" => Ok(Target::PlantedSparse),
            "f1" => Ok(Target::F1),
            "f2" => Ok(Target::F2),
            other => Err(Error::Config(format!("unknown target `{other}`"))),
        }
    }
}

/// Candidate set for adaptive TL1: the short list for `d <= 2`, the long
/// list otherwise.
pub fn default_candidates(d: usize) -> Vec<f64> {
    if d <= 2 {
        LOW_DIM_CANDIDATES.to_vec()
    } else {
        HIGH_DIM_CANDIDATES.to_vec()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub d: usize,
    pub k: u32,
    /// Values of `M` or `s`, strictly increasing.
    pub sweep: Vec<usize>,
    /// Sparsity for `M` sweeps (planted targets), sample count for `s` sweeps.
    pub held: usize,
    pub trials: usize,
    pub methods: Vec<Method>,
    /// `a` for plain TL1.
    pub a: f64,
    /// Candidates for adaptive TL1; `None` picks [`default_candidates`].
    pub candidates: Option<Vec<f64>>,
    pub seed: u64,
    pub target: Target,
    pub validation_size: usize,
    pub solver: SolverConfig,
    /// Fill the `wall_ms` column. Off by default since timings are not
    /// reproducible.
    pub timing: bool,
}

impl ExperimentSpec {
    pub fn new(kind: ExperimentKind) -> Self {
        let (sweep, held, methods, target) = match kind {
            ExperimentKind::SuccessVsM => (
                vec![30, 40, 50, 60, 70, 80],
                10,
                vec![Method::Tl1, Method::L1Minus2, Method::L1],
                Target::PlantedSparse,
            ),
            ExperimentKind::SuccessVsS => (
                vec![2, 4, 6, 8, 10, 12, 14, 16],
                45,
                vec![Method::Tl1, Method::L1Minus2, Method::L1],
                Target::PlantedSparse,
            ),
            ExperimentKind::ErrorVsM => (
                vec![40, 60, 80, 100, 120],
                10,
                vec![Method::AdaptiveTl1, Method::L1Minus2, Method::L1],
                Target::F2,
            ),
        };
        Self {
            kind,
            d: 2,
            k: 20,
            sweep,
            held,
            trials: 100,
            methods,
            a: DEFAULT_A,
            candidates: None,
            seed: 0,
            target,
            validation_size: DEFAULT_VALIDATION_SIZE,
            solver: SolverConfig::default(),
            timing: false,
        }
    }

    pub fn candidates(&self) -> Vec<f64> {
        self.candidates.clone().unwrap_or_else(|| default_candidates(self.d))
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        if self.sweep.is_empty() || self.sweep.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("sweep grid must be non-empty and strictly increasing".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        if self.sweep.contains(&0) || self.d == 0 {
            return Err(Error::Config("sweep values and d must be positive".into()));
        }
        PenaltyParam::new(self.a)?;
        let cands = self.candidates();
        if cands.is_empty() {
            return Err(Error::Config("candidate list is empty".into()));
        }
        for &c in &cands {
            PenaltyParam::new(c)?;
        }
        if self.kind == ExperimentKind::ErrorVsM && self.validation_size == 0 {
            return Err(Error::Config("validation size must be >= 1".into()));
        }
        self.solver.validate()
    }

    /// Applies one `key = value` setting; keys match the CLI flag names.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.trim()
                .parse()
                .map_err(|_| Error::Config(format!("invalid value `{v}` for `{key}`")))
        }
        fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
            v.split(',').filter(|p| !p.trim().is_empty()).map(|p| num(key, p)).collect()
        }
        let key = key.trim().replace('-', "_");
        match key.as_str() {
            "d" => self.d = num(&key, value)?,
            "k" => self.k = num(&key, value)?,
            "s" => self.set_scalar_held(num(&key, value)?, "s")?,
            "m" => self.set_scalar_held(num(&key, value)?, "m")?,
            "m_grid" | "s_grid" => self.sweep = list(&key, value)?,
            "trials" => self.trials = num(&key, value)?,
            "methods" => {
                self.methods = value.split(',').map(Method::from_str).collect::<Result<_>>()?
            }
            "a" => self.a = num(&key, value)?,
            "candidates" => self.candidates = Some(list(&key, value)?),
            "seed" => self.seed = num(&key, value)?,
            "target" => self.target = value.parse()?,
            "q" | "validation_size" => self.validation_size = num(&key, value)?,
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

    fn set_scalar_held(&mut self, v: usize, which: &str) -> Result<()> {
        // `s` is the held value of M sweeps, `m` the held value of s sweeps
        match (self.kind, which) {
            (ExperimentKind::SuccessVsS, "m") | (ExperimentKind::SuccessVsM | ExperimentKind::ErrorVsM, "s") => {
                self.held = v;
                Ok(())
            }
            _ => Err(Error::Config(format!(
                "`{which}` is the swept quantity of this experiment; use the grid setting"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub method: Method,
    pub sweep_name: &'static str,
    pub sweep_value: usize,
    pub trial: usize,
    pub seed: u64,
    pub success: Option<bool>,
    pub rel_error: Option<f64>,
    pub wall_ms: Option<f64>,
    /// Nonzero count of the recovered coefficients.
    pub sparsity: Option<usize>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one `(grid point, trial)` job: `base ^ hash(grid, trial)`.
pub fn trial_seed(base: u64, grid_index: usize, trial: usize) -> u64 {
    base ^ splitmix64(splitmix64(grid_index as u64) ^ trial as u64)
}

/// Seed for a secondary stream of the same job (targets, validation sets).
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream))
}

/// `s`-sparse coefficient vector: uniformly random support, standard normal
/// values.
pub fn plant_sparse_target(basis: &Basis, s: usize, seed: u64) -> Result<DVector<f64>> {
    let n = basis.len();
    if s > n {
        return Err(Error::Domain(format!("sparsity {s} exceeds basis size {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DVector::zeros(n);
    for i in sample(&mut rng, n, s).into_iter() {
        x[i] = StandardNormal.sample(&mut rng);
    }
    Ok(x)
}

/// Runs `method` on `Ax = b`.
pub fn solve_with(
    method: Method,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    solver: &SolverConfig,
    tl1_a: f64,
    candidates: &[f64],
) -> Result<SolverResult> {
    match method {
        Method::Tl1 => dca_tl1(a, b, &solver.clone().with_a(tl1_a)?),
        Method::AdaptiveTl1 => adaptive_dca_tl1(a, b, candidates, solver),
        Method::L1 => l1_basis_pursuit(a, b, solver),
        Method::L1Minus2 => l12_dca(a, b, solver),
    }
}

fn jobs(spec: &ExperimentSpec) -> Vec<(usize, usize)> {
    (0..spec.sweep.len())
        .flat_map(|g| (0..spec.trials).map(move |t| (g, t)))
        .collect()
}

fn sort_records(records: &mut [ExperimentRecord], methods: &[Method]) {
    let rank = |m: Method| methods.iter().position(|&x| x == m).unwrap_or(usize::MAX);
    records.sort_by_key(|r| (r.sweep_value, r.trial, rank(r.method)));
}

fn elapsed_ms(start: Instant, timing: bool) -> Option<f64> {
    timing.then(|| start.elapsed().as_secs_f64() * 1e3)
}

/// Success-rate experiment over an `M` or `s` grid with planted sparse
/// targets. Solver failures are logged and counted as unsuccessful.
pub fn run_success_experiment(spec: &ExperimentSpec) -> Result<Vec<ExperimentRecord>> {
    spec.validate()?;
    if !matches!(spec.kind, ExperimentKind::SuccessVsM | ExperimentKind::SuccessVsS) {
        return Err(Error::Config("success experiment needs kind success_vs_m or success_vs_s".into()));
    }
    let basis = Basis::total_degree(spec.d, spec.k)?;
    let candidates = spec.candidates();
    let per_job = jobs(spec)
        .into_par_iter()
        .map(|(g, trial)| -> Result<Vec<ExperimentRecord>> {
            let (m, s) = match spec.kind {
                ExperimentKind::SuccessVsS => (spec.held, spec.sweep[g]),
                _ => (spec.sweep[g], spec.held),
            };
            let seed = trial_seed(spec.seed, g, trial);
            let samples = SampleSet::uniform(spec.d, m, seed)?;
            let a = MeasurementMatrix::assemble(&basis, &samples, false)?;
            let x_true = plant_sparse_target(&basis, s, sub_seed(seed, 1))?;
            let b = a.entries() * &x_true;
            let mut out = Vec::with_capacity(spec.methods.len());
            for &method in &spec.methods {
                let start = Instant::now();
                let res = solve_with(method, a.entries(), &b, &spec.solver, spec.a, &candidates);
                let (success, sparsity) = match res {
                    Ok(r) => ((&r.x - &x_true).amax() < SUCCESS_TOLERANCE, Some(r.sparsity)),
                    Err(e) => {
                        log::warn!("{method} failed on grid point {g}, trial {trial}: {e}");
                        (false, None)
                    }
                };
                out.push(ExperimentRecord {
                    method,
                    sweep_name: spec.kind.sweep_name(),
                    sweep_value: spec.sweep[g],
                    trial,
                    seed,
                    success: Some(success),
                    rel_error: None,
                    wall_ms: elapsed_ms(start, spec.timing),
                    sparsity,
                });
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut records: Vec<_> = per_job.into_iter().flatten().collect();
    sort_records(&mut records, &spec.methods);
    Ok(records)
}

/// Approximation-error experiment over an `M` grid for `f1`, `f2` or a
/// planted sparse expansion, measured on fresh validation samples.
pub fn run_function_experiment(spec: &ExperimentSpec) -> Result<Vec<ExperimentRecord>> {
    spec.validate()?;
    if spec.kind != ExperimentKind::ErrorVsM {
        return Err(Error::Config("function experiment needs kind error_vs_m".into()));
    }
    let basis = Basis::total_degree(spec.d, spec.k)?;
    let candidates = spec.candidates();
    let per_job = jobs(spec)
        .into_par_iter()
        .map(|(g, trial)| -> Result<Vec<ExperimentRecord>> {
            let m = spec.sweep[g];
            let seed = trial_seed(spec.seed, g, trial);
            let samples = SampleSet::uniform(spec.d, m, seed)?;
            let validation = SampleSet::uniform(spec.d, spec.validation_size, sub_seed(seed, 2))?;
            let a = MeasurementMatrix::assemble(&basis, &samples, false)?;
            let planted = match spec.target {
                Target::PlantedSparse => Some(plant_sparse_target(&basis, spec.held, sub_seed(seed, 1))?),
                _ => None,
            };
            let eval = |z: &[f64]| -> Result<f64> {
                match (spec.target, &planted) {
                    (Target::F1, _) => Ok(f1(z)),
                    (Target::F2, _) => Ok(f2(z)),
                    (Target::PlantedSparse, Some(x)) => basis.eval_expansion(x.as_slice(), z),
                    (Target::PlantedSparse, None) => unreachable!("planted target is built above"),
                }
            };
            let b = assemble_rhs(eval, &samples)?;
            let truth = assemble_rhs(eval, &validation)?;
            let v = MeasurementMatrix::assemble(&basis, &validation, false)?;
            let mut out = Vec::with_capacity(spec.methods.len());
            for &method in &spec.methods {
                let start = Instant::now();
                let r = solve_with(method, a.entries(), &b, &spec.solver, spec.a, &candidates)
                    .map_err(|e| {
                        log::error!("{method} failed on grid point {g}, trial {trial}: {e}");
                        e
                    })?;
                let approx = v.entries() * &r.x;
                out.push(ExperimentRecord {
                    method,
                    sweep_name: spec.kind.sweep_name(),
                    sweep_value: m,
                    trial,
                    seed,
                    success: None,
                    rel_error: Some(relative_l2_error(approx.as_slice(), truth.as_slice())?),
                    wall_ms: elapsed_ms(start, spec.timing),
                    sparsity: Some(r.sparsity),
                });
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut records: Vec<_> = per_job.into_iter().flatten().collect();
    sort_records(&mut records, &spec.methods);
    Ok(records)
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<ExperimentRecord>> {
    match spec.kind {
        ExperimentKind::ErrorVsM => run_function_experiment(spec),
        _ => run_success_experiment(spec),
    }
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn format_record(r: &ExperimentRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        r.method,
        r.sweep_name,
        r.sweep_value,
        r.trial,
        r.seed,
        opt(r.success.map(u8::from)),
        opt(r.rel_error),
        opt(r.wall_ms),
    )
}

pub fn write_records<W: Write>(mut w: W, records: &[ExperimentRecord]) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        writeln!(w, "{}", format_record(r))?;
    }
    Ok(())
}

/// One aggregated value per `(method, sweep value)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub method: Method,
    pub sweep_value: usize,
    pub trials: usize,
    /// Success rate for sparse experiments, mean relative error otherwise.
    pub value: f64,
}

pub fn summarize(records: &[ExperimentRecord]) -> Vec<Summary> {
    let mut groups: Vec<((usize, Method), Vec<&ExperimentRecord>)> = Vec::new();
    for r in records {
        let key = (r.sweep_value, r.method);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    groups
        .into_iter()
        .map(|((sweep_value, method), rs)| {
            let n = rs.len();
            let value = if rs.iter().all(|r| r.success.is_some()) {
                rs.iter().filter(|r| r.success == Some(true)).count() as f64 / n as f64
            } else {
                rs.iter().filter_map(|r| r.rel_error).sum::<f64>() / n as f64
            };
            Summary {
                method,
                sweep_value,
                trials: n,
                value,
            }
        })
        .collect()
}

/// `(x1, x2, P_a(x1, x2), |x1| + |x2|)` on a uniform grid over
/// `[-h, h]^2`, for contour plots.
pub fn emit_contour_grid(p: PenaltyParam, half_width: f64, resolution: usize) -> Result<String> {
    if resolution < 2 {
        return Err(Error::Domain("contour resolution must be >= 2".into()));
    }
    if !(half_width.is_finite() && half_width > 0.0) {
        return Err(Error::Domain(format!("half width must be positive, got {half_width}")));
    }
    let step = 2.0 * half_width / (resolution - 1) as f64;
    let mut out = String::from("x1,x2,tl1,l1\n");
    for i in 0..resolution {
        let x1 = -half_width + i as f64 * step;
        for j in 0..resolution {
            let x2 = -half_width + j as f64 * step;
            let tl1 = penalty(&[x1, x2], p)?;
            writeln!(out, "{x1},{x2},{tl1},{}", x1.abs() + x2.abs()).expect("String write");
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_target_sparsity() {
        let basis = Basis::total_degree(2, 5).unwrap();
        assert_eq!(plant_sparse_target(&basis, 0, 3).unwrap().amax(), 0.0);
        let full = plant_sparse_target(&basis, basis.len(), 3).unwrap();
        assert!(full.iter().all(|v| *v != 0.0));
        for seed in 0..1000 {
            let x = plant_sparse_target(&basis, 4, seed).unwrap();
            assert_eq!(x.iter().filter(|v| **v != 0.0).count(), 4);
        }
        assert!(plant_sparse_target(&basis, basis.len() + 1, 0).is_err());
    }

    #[test]
    fn trial_seeds_differ() {
        let mut seen = std::collections::HashSet::new();
        for g in 0..10 {
            for t in 0..100 {
                assert!(seen.insert(trial_seed(42, g, t)));
            }
        }
    }

    #[test]
    fn spec_settings() {
        let mut spec = ExperimentSpec::new(ExperimentKind::SuccessVsM);
        spec.set("m-grid", "10,20,30").unwrap();
        spec.set("s", "3").unwrap();
        spec.set("methods", "TL1,L1").unwrap();
        spec.set("candidates", "0.1,1").unwrap();
        assert_eq!(spec.sweep, vec![10, 20, 30]);
        assert_eq!(spec.held, 3);
        assert_eq!(spec.methods, vec![Method::Tl1, Method::L1]);
        assert_eq!(spec.candidates(), vec![0.1, 1.0]);
        assert!(spec.set("m", "5").is_err());
        assert!(spec.set("bogus", "1").is_err());
        assert!(spec.set("trials", "x").is_err());
        spec.set("m_grid", "30,20").unwrap();
        assert!(spec.validate().is_err());
    }

    #[test]
    fn contour_grid_values() {
        let csv = emit_contour_grid(PenaltyParam::new(1.0).unwrap(), 1.0, 3).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "x1,x2,tl1,l1");
        assert_eq!(lines.len(), 10);
        assert_eq!(lines[5], "0,0,0,0");
        assert!(emit_contour_grid(PenaltyParam::new(1.0).unwrap(), 1.0, 1).is_err());

        // small a: P_a(1, 1) = 2 (a + 1)/(a + 1)
        let p = PenaltyParam::new(0.01).unwrap();
        assert!((penalty(&[1.0, 1.0], p).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn contour_large_a_approaches_l1() {
        let csv = emit_contour_grid(PenaltyParam::new(100.0).unwrap(), 1.0, 41).unwrap();
        let worst = csv
            .lines()
            .skip(1)
            .map(|l| {
                let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
                (v[2] - v[3]).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst < 0.02, "{worst}");
    }
}
