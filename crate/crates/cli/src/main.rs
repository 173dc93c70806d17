use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use sparse_pce::harness::{
    emit_contour_grid, parse_config, run_experiment, summarize, write_records, ExperimentKind, ExperimentSpec,
    WORKERS_ENV,
};
use sparse_pce::kdv::{kdv_uq_experiment, write_coefficients, KdvExperimentSpec};
use sparse_pce::penalty::PenaltyParam;
use sparse_pce::solvers::SolverConfig;
use sparse_pce::theory::{bound_study, unit_column_gaussian, write_bound_study, write_ric_table, StudyTarget};

#[derive(Parser)]
#[command(name = "sparse-pce", version, about = "Sparse polynomial chaos recovery experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Success rate of planted sparse recovery against the sample count M.
    SuccessVsM(ExperimentArgs),
    /// Success rate of planted sparse recovery against the sparsity s.
    SuccessVsS(ExperimentArgs),
    /// Relative validation error against M for f1, f2 or a planted target.
    ErrorVsM(ExperimentArgs),
    /// TL1 and l1 penalty values on a 2-D grid.
    Contour(ContourArgs),
    /// Restricted isometry constants and the noiseless bound check.
    Ric(RicArgs),
    /// Surrogates of a stochastic KdV point value.
    Kdv(KdvArgs),
}

#[derive(Args)]
struct Output {
    /// `key = value` settings applied before the command line flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    output: Output,
    #[arg(long)]
    d: Option<String>,
    #[arg(long)]
    k: Option<String>,
    /// Sparsity held fixed in M sweeps.
    #[arg(long)]
    s: Option<String>,
    /// Sample count held fixed in s sweeps.
    #[arg(long)]
    m: Option<String>,
    #[arg(long)]
    m_grid: Option<String>,
    #[arg(long)]
    s_grid: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    /// Comma separated: TL1, adaptiveTL1, L1, L1minus2.
    #[arg(long)]
    methods: Option<String>,
    /// Parameter of plain TL1.
    #[arg(long)]
    a: Option<String>,
    /// Candidate parameters of adaptive TL1.
    #[arg(long)]
    candidates: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// planted, f1 or f2.
    #[arg(long)]
    target: Option<String>,
    /// Validation samples for error sweeps.
    #[arg(long)]
    q: Option<String>,
    /// Fill the wall_ms column.
    #[arg(long)]
    timing: bool,
}

impl ExperimentArgs {
    fn settings(&self) -> Vec<(&'static str, Option<&String>)> {
        vec![
            ("d", self.d.as_ref()),
            ("k", self.k.as_ref()),
            ("s", self.s.as_ref()),
            ("m", self.m.as_ref()),
            ("m_grid", self.m_grid.as_ref()),
            ("s_grid", self.s_grid.as_ref()),
            ("trials", self.trials.as_ref()),
            ("methods", self.methods.as_ref()),
            ("a", self.a.as_ref()),
            ("candidates", self.candidates.as_ref()),
            ("seed", self.seed.as_ref()),
            ("target", self.target.as_ref()),
            ("q", self.q.as_ref()),
        ]
    }
}

#[derive(Args)]
struct ContourArgs {
    #[command(flatten)]
    output: Output,
    #[arg(long)]
    a: Option<f64>,
    /// The grid covers [-h, h]^2.
    #[arg(long)]
    half_width: Option<f64>,
    /// Points per axis.
    #[arg(long)]
    resolution: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum RicMode {
    /// delta_s for s = 1..=s_max of one matrix.
    Table,
    /// Noiseless error bound over seeded instances.
    Bound,
}

#[derive(Args)]
struct RicArgs {
    #[command(flatten)]
    output: Output,
    #[arg(long, value_enum)]
    mode: Option<RicMode>,
    /// Rows of the Gaussian matrix.
    #[arg(long)]
    m: Option<usize>,
    /// Columns of the Gaussian matrix.
    #[arg(long)]
    n: Option<usize>,
    /// Sparsity of the bound check.
    #[arg(long)]
    s: Option<usize>,
    /// Largest level of the table.
    #[arg(long)]
    s_max: Option<usize>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Use geometrically decaying targets instead of exactly sparse ones.
    #[arg(long)]
    compressible: bool,
}

#[derive(Args)]
struct KdvArgs {
    #[command(flatten)]
    output: Output,
    #[arg(long)]
    d: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    m_grid: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    #[arg(long)]
    nu: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<String>,
    #[arg(long)]
    sigma: Option<String>,
    #[arg(long)]
    corr_length: Option<String>,
    #[arg(long)]
    nx: Option<String>,
    #[arg(long)]
    dt: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    candidates: Option<String>,
    /// Validation samples per trial.
    #[arg(long)]
    q: Option<String>,
    /// Directory for coef_<method>.csv; defaults to the directory of --out.
    #[arg(long)]
    coef_dir: Option<PathBuf>,
    #[arg(long)]
    timing: bool,
}

impl KdvArgs {
    fn settings(&self) -> Vec<(&'static str, Option<&String>)> {
        vec![
            ("d", self.d.as_ref()),
            ("k", self.k.as_ref()),
            ("m_grid", self.m_grid.as_ref()),
            ("trials", self.trials.as_ref()),
            ("nu", self.nu.as_ref()),
            ("x0", self.x0.as_ref()),
            ("sigma", self.sigma.as_ref()),
            ("corr_length", self.corr_length.as_ref()),
            ("nx", self.nx.as_ref()),
            ("dt", self.dt.as_ref()),
            ("seed", self.seed.as_ref()),
            ("methods", self.methods.as_ref()),
            ("candidates", self.candidates.as_ref()),
            ("q", self.q.as_ref()),
        ]
    }
}

fn read_config(path: Option<&Path>) -> Result<Vec<(String, String)>> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(parse_config(&text)?)
        }
        None => Ok(Vec::new()),
    }
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn configure_workers() -> Result<()> {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .with_context(|| format!("{WORKERS_ENV} must be a positive integer, got `{v}`"))?;
        if n == 0 {
            bail!("{WORKERS_ENV} must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn experiment(kind: ExperimentKind, args: &ExperimentArgs) -> Result<()> {
    let mut spec = ExperimentSpec::new(kind);
    for (k, v) in read_config(args.output.config.as_deref())? {
        spec.set(&k, &v).with_context(|| format!("config setting `{k}`"))?;
    }
    for (k, v) in args.settings() {
        if let Some(v) = v {
            spec.set(k, v).with_context(|| format!("--{}", k.replace('_', "-")))?;
        }
    }
    spec.timing |= args.timing;
    let records = run_experiment(&spec)?;
    for s in summarize(&records) {
        log::info!("{} {}={}: {:.4} over {} trials", s.method, kind.sweep_name(), s.sweep_value, s.value, s.trials);
    }
    let mut out = open_output(args.output.out.as_deref())?;
    write_records(&mut out, &records)?;
    out.flush()?;
    Ok(())
}

fn contour(args: &ContourArgs) -> Result<()> {
    let (mut a, mut half, mut res) = (1.0, 2.0, 101usize);
    for (k, v) in read_config(args.output.config.as_deref())? {
        match k.replace('-', "_").as_str() {
            "a" => a = v.parse()?,
            "half_width" => half = v.parse()?,
            "resolution" => res = v.parse()?,
            other => bail!("unknown setting `{other}`"),
        }
    }
    a = args.a.unwrap_or(a);
    half = args.half_width.unwrap_or(half);
    res = args.resolution.unwrap_or(res);
    let text = emit_contour_grid(PenaltyParam::new(a)?, half, res)?;
    let mut out = open_output(args.output.out.as_deref())?;
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn ric(args: &RicArgs) -> Result<()> {
    let (mut mode, mut m, mut n, mut s, mut s_max, mut a, mut trials, mut seed, mut compressible) =
        (RicMode::Bound, 10usize, 20usize, 2usize, 4usize, 0.3, 100usize, 0u64, false);
    for (k, v) in read_config(args.output.config.as_deref())? {
        match k.replace('-', "_").as_str() {
            "mode" => mode = RicMode::from_str(&v, true).map_err(anyhow::Error::msg)?,
            "m" => m = v.parse()?,
            "n" => n = v.parse()?,
            "s" => s = v.parse()?,
            "s_max" => s_max = v.parse()?,
            "a" => a = v.parse()?,
            "trials" => trials = v.parse()?,
            "seed" => seed = v.parse()?,
            "compressible" => compressible = v.parse()?,
            other => bail!("unknown setting `{other}`"),
        }
    }
    mode = args.mode.unwrap_or(mode);
    m = args.m.unwrap_or(m);
    n = args.n.unwrap_or(n);
    s = args.s.unwrap_or(s);
    s_max = args.s_max.unwrap_or(s_max);
    a = args.a.unwrap_or(a);
    trials = args.trials.unwrap_or(trials);
    seed = args.seed.unwrap_or(seed);
    compressible |= args.compressible;

    let mut out = open_output(args.output.out.as_deref())?;
    match mode {
        RicMode::Table => {
            let b = unit_column_gaussian(m, n, seed);
            write_ric_table(&mut out, &b, s_max)?;
        }
        RicMode::Bound => {
            let target = if compressible { StudyTarget::Compressible } else { StudyTarget::Sparse };
            let rows = bound_study(m, n, s, a, target, trials, seed, &SolverConfig::default())?;
            let admissible = rows.iter().filter(|r| r.report.is_some()).count();
            log::info!("{admissible} of {} instances admissible", rows.len());
            write_bound_study(&mut out, &rows)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn kdv(args: &KdvArgs) -> Result<()> {
    let mut spec = KdvExperimentSpec::default();
    for (k, v) in read_config(args.output.config.as_deref())? {
        spec.set(&k, &v).with_context(|| format!("config setting `{k}`"))?;
    }
    for (k, v) in args.settings() {
        if let Some(v) = v {
            spec.set(k, v).with_context(|| format!("--{}", k.replace('_', "-")))?;
        }
    }
    spec.timing |= args.timing;
    let output = kdv_uq_experiment(&spec)?;
    for s in summarize(&output.records) {
        log::info!("{} M={}: reRMSE {:.4e} over {} trials", s.method, s.sweep_value, s.value, s.trials);
    }
    let mut out = open_output(args.output.out.as_deref())?;
    write_records(&mut out, &output.records)?;
    out.flush()?;

    let dir = match (&args.coef_dir, &args.output.out) {
        (Some(d), _) => d.clone(),
        (None, Some(p)) => p.parent().map(Path::to_path_buf).unwrap_or_default(),
        (None, None) => PathBuf::from("."),
    };
    for &method in &spec.methods {
        let path = dir.join(format!("coef_{method}.csv"));
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(file);
        write_coefficients(&mut w, output.coefficients_for(method))?;
        w.flush()?;
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    configure_workers()?;
    match &cli.command {
        Command::SuccessVsM(a) => experiment(ExperimentKind::SuccessVsM, a),
        Command::SuccessVsS(a) => experiment(ExperimentKind::SuccessVsS, a),
        Command::ErrorVsM(a) => experiment(ExperimentKind::ErrorVsM, a),
        Command::Contour(a) => contour(a),
        Command::Ric(a) => ric(a),
        Command::Kdv(a) => kdv(a),
    }
}
