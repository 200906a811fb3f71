//! Command-line front end.
//!
//! Every subcommand writes its JSON artifact to `-o PATH`, or to stdout when
//! no path is given; with a path, stdout gets a one-line summary instead.
//! `--config FILE` reads `key = value` lines; keys before any `[section]` and
//! keys under `[<subcommand>]` become flags, and flags on the command line win.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::approx::{jackson_approximate, ApproxReport};
use crate::attractor::{
    default_beta, default_starts_1d, default_starts_dd, graph_test, graph_transform_1d, graph_transform_dd,
    iterate_cloud, AttractorReport, CloudMap, SimulationParameters, TransformOutcome, TransformStatus,
    DEFAULT_TOL_GRAPH, GOLDEN_ROTATION,
};
use crate::error::Error;
use crate::herman::{
    derivative_identity_residual_1d, destruction_verdict_1d_with_margin, destruction_verdict_dd_with_margin,
    herman_residual_1d, herman_residual_dd, standard_map_threshold, CriterionMode, CriterionReport, HermanReport,
    ThresholdReport, DEFAULT_MARGIN,
};
use crate::maps::{
    standard_map_potential, CandidateGraph, MapParams1D, MapParamsDD, PerturbedMap1D, PerturbedMapDD,
};
use crate::perturb::{
    build_model_bump, ck_norm_estimate, construct_bundle, delta_of_lambda, BumpSpec, PerturbationBundle,
};
use crate::trigpoly::{GridFn, TrigPoly};

pub const THREADS_ENV: &str = "GRAPHBREAK_THREADS";

#[derive(Debug)]
pub enum CliError {
    UnknownCommand(String),
    BadConfig(String),
    Io(String),
    Numeric(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numeric(e) if !e.is_validation() => 3,
            _ => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::UnknownCommand(_) => "UnknownCommand",
            CliError::BadConfig(_) => "BadConfig",
            CliError::Io(_) => "Io",
            CliError::Numeric(e) => e.kind(),
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::UnknownCommand(m) | CliError::BadConfig(m) | CliError::Io(m) => m.clone(),
            CliError::Numeric(e) => e.to_string(),
        }
    }

    /// Machine-readable form written to stderr.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": self.kind(),
            "message": self.message(),
            "exit_code": self.exit_code(),
        })
        .to_string()
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Numeric(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn bad(msg: impl Into<String>) -> CliError {
    CliError::BadConfig(msg.into())
}

#[derive(Parser, Debug)]
#[command(name = "graphbreak", version, about = "Perturbations that destroy invariant graphs of dissipative twist maps")]
#[command(args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a perturbation bundle.
    Construct(ConstructArgs),
    /// Evaluate the destruction criterion.
    Criterion(CriterionArgs),
    /// Herman-formula residuals of a candidate graph.
    Herman(HermanArgs),
    /// Standard-map thresholds over a grid of contractions.
    Threshold(ThresholdArgs),
    /// Attractor simulation and graph test.
    Simulate(SimulateArgs),
    /// Jackson approximation of a test function.
    Approx(ApproxArgs),
}

#[derive(Args, Debug)]
struct ConstructArgs {
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(long, default_value_t = 1)]
    dim: usize,
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Sampled potential and derivative as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Samples per axis for the CSV (default 1024 in one dimension, 64 otherwise).
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DdMode {
    Exact,
    Paper,
}

#[derive(Args, Debug)]
struct CriterionArgs {
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    m: Option<f64>,
    #[arg(long = "big-m", alias = "M")]
    big_m: Option<f64>,
    /// Read (lambda, m, M) and the dimension from a bundle.
    #[arg(long)]
    bundle: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    dim: usize,
    #[arg(long, value_enum, default_value_t = DdMode::Exact)]
    mode: DdMode,
    #[arg(long, default_value_t = DEFAULT_MARGIN)]
    margin: f64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct HermanArgs {
    /// Candidate graph JSON (as written by `simulate --graph-out`).
    #[arg(long)]
    graph: PathBuf,
    /// Potential from a bundle; otherwise `--k`, otherwise zero.
    #[arg(long)]
    bundle: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    k: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = GOLDEN_ROTATION, allow_hyphen_values = true)]
    alpha1: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    alpha2: f64,
    /// Comma-separated drift for higher dimensions.
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<String>,
    /// Comma-separated row-major symmetric matrix.
    #[arg(long, allow_hyphen_values = true)]
    a: Option<String>,
    /// Finite-difference step of the derivative identity.
    #[arg(long, default_value_t = 1e-5)]
    h: f64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ThresholdArgs {
    /// `start:stop:step`, inclusive.
    #[arg(long = "lambda-grid", default_value = "0.1:0.9:0.1")]
    lambda_grid: String,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MapKind {
    Std,
    Bundle,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = MapKind::Std)]
    map: MapKind,
    #[arg(long)]
    bundle: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    k: Option<f64>,
    #[arg(long, default_value_t = GOLDEN_ROTATION, allow_hyphen_values = true)]
    alpha1: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    alpha2: f64,
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    a: Option<String>,
    #[arg(long, default_value_t = 500)]
    transient: usize,
    #[arg(long, default_value_t = 200)]
    keep: usize,
    /// Starts per axis (default 64 in one dimension, 16 otherwise).
    #[arg(long)]
    starts: Option<usize>,
    /// Bins per axis (default 4096 in one dimension, 64 otherwise).
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long = "tol-graph", default_value_t = DEFAULT_TOL_GRAPH)]
    tol_graph: f64,
    /// Grid of the graph transform (default scales with the degree of the perturbation).
    #[arg(long = "transform-resolution")]
    transform_resolution: Option<usize>,
    #[arg(long = "max-iter", default_value_t = 500)]
    max_iter: usize,
    #[arg(long = "transform-tol", default_value_t = 1e-12)]
    transform_tol: f64,
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Point cloud CSV.
    #[arg(long)]
    cloud: Option<PathBuf>,
    /// Converged graph-transform fixed point, for `herman`.
    #[arg(long = "graph-out")]
    graph_out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TestFunction {
    /// `exp(sum_j sin 2 pi x_j)`.
    ExpSin,
    /// The plateau bump for `(n, lambda, eps)`.
    Bump,
    /// Values read from `--input`.
    Samples,
}

#[derive(Args, Debug)]
struct ApproxArgs {
    #[arg(long, value_enum, default_value_t = TestFunction::ExpSin)]
    func: TestFunction,
    #[arg(long, default_value_t = 1)]
    dim: usize,
    #[arg(long, default_value_t = 32)]
    degree: usize,
    #[arg(long)]
    resolution: Option<usize>,
    /// Smoothness order of the reported bound.
    #[arg(long, default_value_t = 2)]
    k: u32,
    #[arg(long, default_value_t = 32)]
    n: usize,
    #[arg(long, default_value_t = 0.75)]
    lambda: f64,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    /// Whitespace or comma separated samples on the uniform grid, row-major.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

/// Parses `key = value` lines under optional `[section]` headers.
pub fn parse_config(text: &str) -> CliResult<Vec<(Option<String>, String, String)>> {
    let mut section = None;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = Some(name.trim().to_string());
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("config line {}: expected key = value", i + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(bad(format!("config line {}: empty key", i + 1)));
        }
        out.push((section.clone(), k.replace('_', "-"), v.trim().to_string()));
    }
    Ok(out)
}

/// Pulls `--config FILE` out of `argv` and splices its entries in as flags
/// right after the subcommand, so later command-line flags override them.
fn expand_config(argv: Vec<String>) -> CliResult<Vec<String>> {
    let mut rest = Vec::with_capacity(argv.len());
    let mut config = None;
    let mut it = argv.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            config = Some(it.next().ok_or_else(|| bad("--config needs a path"))?);
        } else if let Some(p) = a.strip_prefix("--config=") {
            config = Some(p.to_string());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = config else { return Ok(rest) };
    let text = fs::read_to_string(&path).map_err(|e| bad(format!("cannot read config {path}: {e}")))?;
    let entries = parse_config(&text)?;
    let Some(pos) = rest.iter().skip(1).position(|a| !a.starts_with('-')).map(|p| p + 1) else {
        return Ok(rest);
    };
    let cmd = rest[pos].clone();
    let mut flags = Vec::new();
    for (section, key, value) in entries {
        if section.as_ref().is_some_and(|s| *s != cmd) {
            continue;
        }
        let flag = format!("--{key}");
        match value.as_str() {
            "true" => flags.push(flag),
            "false" => {}
            _ => flags.push(format!("{flag}={value}")),
        }
    }
    rest.splice(pos + 1..pos + 1, flags);
    Ok(rest)
}

fn configure_threads() -> CliResult<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| bad(format!("{THREADS_ENV}={v} is not a positive integer")))?;
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Entry point of the binary. Returns the process exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    match run_inner(argv.into_iter().map(Into::into).collect()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}

fn run_inner(argv: Vec<String>) -> CliResult<()> {
    configure_threads()?;
    let argv = expand_config(argv)?;
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind as K;
            return match e.kind() {
                K::DisplayHelp | K::DisplayVersion | K::DisplayHelpOnMissingArgumentOrSubcommand => {
                    print!("{e}");
                    Ok(())
                }
                K::InvalidSubcommand | K::MissingSubcommand => Err(CliError::UnknownCommand(e.to_string())),
                _ => Err(bad(e.to_string())),
            };
        }
    };
    match cli.command {
        Command::Construct(a) => construct(a),
        Command::Criterion(a) => criterion(a),
        Command::Herman(a) => herman(a),
        Command::Threshold(a) => threshold(a),
        Command::Simulate(a) => simulate(a),
        Command::Approx(a) => approx(a),
    }
}

fn check_open_unit(name: &'static str, v: f64) -> CliResult<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name,
            value: v,
            range: "(0, 1)",
        }
        .into())
    }
}

fn check_positive(name: &'static str, v: f64) -> CliResult<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name,
            value: v,
            range: "(0, inf)",
        }
        .into())
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| bad(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| CliError::Io(e.to_string()))
}

/// Writes the artifact to `path` and prints `summary`, or prints the
/// artifact itself when there is no path.
fn emit<T: Serialize>(value: &T, path: Option<&Path>, summary: &str) -> CliResult<()> {
    let json = to_json(value)?;
    match path {
        Some(p) => {
            fs::write(p, json).map_err(|e| io_err(p, e))?;
            println!("{summary}");
        }
        None => print!("{json}"),
    }
    Ok(())
}

fn create(path: &Path) -> CliResult<BufWriter<fs::File>> {
    fs::File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

fn parse_list(name: &str, s: &str) -> CliResult<Vec<f64>> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| bad(format!("{name}: cannot parse {t:?}"))))
        .collect()
}

fn load_bundle(path: &Path) -> CliResult<PerturbationBundle> {
    let b: PerturbationBundle = read_json(path)?;
    if b.potential.dim() != b.d {
        return Err(bad(format!("{}: potential dimension {} != d = {}", path.display(), b.potential.dim(), b.d)));
    }
    Ok(b)
}

fn construct(a: ConstructArgs) -> CliResult<()> {
    check_open_unit("lambda", a.lambda)?;
    check_open_unit("eps", a.eps)?;
    let bundle = construct_bundle(a.lambda, a.n, a.eps, a.dim)?;
    if let Some(path) = &a.csv {
        write_sampled_curve(&bundle, a.samples, path)?;
    }
    let summary = format!(
        "construct: d={} n={} lambda={} delta={:.6} N={}/{} min={:.6} max={:.6} |phi|_C0={:.3e}",
        bundle.d,
        bundle.n,
        bundle.lambda,
        bundle.delta,
        bundle.n_theoretical,
        bundle.n_achieved,
        bundle.extrema.min,
        bundle.extrema.max,
        bundle.norms.c0
    );
    emit(&bundle, a.output.as_deref(), &summary)
}

fn write_sampled_curve(bundle: &PerturbationBundle, samples: Option<usize>, path: &Path) -> CliResult<()> {
    let d = bundle.d;
    let res = samples.unwrap_or(if d == 1 { 1024 } else { 64 });
    if res == 0 {
        return Err(bad("samples must be positive"));
    }
    let pot = bundle.potential.to_grid(res);
    let der = bundle.derivative.to_grid(res);
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
    header.push("potential".into());
    header.push("derivative".into());
    let csv_io = |e: csv::Error| io_err(path, e);
    w.write_record(&header).map_err(csv_io)?;
    for flat in 0..pot.len() {
        let mut row: Vec<String> = pot.point(flat).iter().map(f64::to_string).collect();
        row.push(pot.values[flat].to_string());
        row.push(der.values[flat].to_string());
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn criterion(a: CriterionArgs) -> CliResult<()> {
    let (lambda, m, big_m, dim) = match &a.bundle {
        Some(path) => {
            let b = load_bundle(path)?;
            // the bundle's extrema are of Dphi (d = 1) or of T (d > 1)
            (a.lambda.unwrap_or(b.lambda), b.extrema.min.min(0.0), b.extrema.max.max(0.0), b.d)
        }
        None => {
            let need = |v: Option<f64>, name: &str| v.ok_or_else(|| bad(format!("criterion needs --{name} or --bundle")));
            (need(a.lambda, "lambda")?, need(a.m, "m")?, need(a.big_m, "big-m")?, a.dim)
        }
    };
    check_open_unit("lambda", lambda)?;
    check_positive("margin", a.margin)?;
    let report: CriterionReport = if dim == 1 {
        destruction_verdict_1d_with_margin(lambda, m, big_m, a.margin)?
    } else {
        let mode = match a.mode {
            DdMode::Exact => CriterionMode::ExactDD,
            DdMode::Paper => CriterionMode::PaperAsymptoticDD,
        };
        destruction_verdict_dd_with_margin(lambda, m, big_m, mode, a.margin)?
    };
    let summary = format!(
        "criterion: d={dim} lambda={lambda} m={m:.6} M={big_m:.6} verdict={:?}",
        report.verdict
    );
    emit(&report, a.output.as_deref(), &summary)
}

#[derive(Serialize, Deserialize)]
struct HermanOutput {
    #[serde(flatten)]
    report: HermanReport,
    /// One dimension only.
    derivative_identity: Option<f64>,
    curl: Option<f64>,
}

fn herman(a: HermanArgs) -> CliResult<()> {
    let graph: CandidateGraph = read_json(&a.graph)?;
    graph.validate()?;
    let d = graph.dim;
    let bundle = a.bundle.as_deref().map(load_bundle).transpose()?;
    let phi = match (&bundle, a.k) {
        (Some(b), _) => b.potential.clone(),
        (None, Some(k)) => standard_map_potential(k),
        (None, None) => TrigPoly::zero(d),
    };
    let lambda = a
        .lambda
        .or(bundle.as_ref().map(|b| b.lambda))
        .ok_or_else(|| bad("herman needs --lambda or --bundle"))?;
    check_open_unit("lambda", lambda)?;
    let out = if d == 1 {
        let p = MapParams1D::new(lambda, a.alpha1, a.alpha2)?;
        let report = herman_residual_1d(&p, &phi, &graph)?;
        let ident = derivative_identity_residual_1d(&p, &phi, &graph, a.h)?;
        HermanOutput {
            report,
            derivative_identity: Some(ident),
            curl: None,
        }
    } else {
        let p = dd_params(lambda, d, a.beta.as_deref(), a.a.as_deref())?;
        let report = herman_residual_dd(&p, &phi, &graph)?;
        HermanOutput {
            report,
            derivative_identity: None,
            curl: Some(graph.curl()?),
        }
    };
    let summary = format!(
        "herman: d={d} resolution={} formula={:.3e} invariance={:.3e} min_slope={:.6}",
        out.report.resolution, out.report.residual_formula, out.report.residual_invariance, out.report.min_slope
    );
    emit(&out, a.output.as_deref(), &summary)
}

fn dd_params(lambda: f64, d: usize, beta: Option<&str>, a: Option<&str>) -> CliResult<MapParamsDD> {
    let beta = match beta {
        Some(s) => parse_list("beta", s)?,
        None => default_beta(d),
    };
    if beta.len() != d {
        return Err(Error::WrongDimension {
            expected: d,
            got: beta.len(),
        }
        .into());
    }
    let a = a.map(|s| parse_list("a", s)).transpose()?;
    Ok(MapParamsDD::new(lambda, beta, a)?)
}

/// Inclusive `start:stop:step` grid, snapped to 12 decimals.
fn parse_grid(s: &str) -> CliResult<Vec<f64>> {
    let parts = parse_list_sep(s)?;
    let [start, stop, step] = parts[..] else {
        return Err(bad(format!("lambda-grid {s:?}: expected start:stop:step")));
    };
    if !(step > 0.0) || stop < start {
        return Err(bad(format!("lambda-grid {s:?}: need step > 0 and stop >= start")));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

fn parse_list_sep(s: &str) -> CliResult<Vec<f64>> {
    s.split(':')
        .map(|t| t.trim().parse::<f64>().map_err(|_| bad(format!("cannot parse {t:?}"))))
        .collect()
}

fn threshold(a: ThresholdArgs) -> CliResult<()> {
    let grid = parse_grid(&a.lambda_grid)?;
    let rows: Vec<ThresholdReport> = grid.iter().map(|&l| standard_map_threshold(l)).collect::<Result<_, _>>()?;
    let worst = rows.iter().map(|r| r.abs_diff).fold(0.0, f64::max);
    let summary = format!("threshold: {} rows, max |k0 - closed form| = {worst:.3e}", rows.len());
    emit(&rows, a.output.as_deref(), &summary)
}

fn simulate(a: SimulateArgs) -> CliResult<()> {
    check_positive("tol-graph", a.tol_graph)?;
    check_positive("transform-tol", a.transform_tol)?;
    let (phi, lambda, label) = match a.map {
        MapKind::Std => {
            let k = a.k.ok_or_else(|| bad("simulate --map std needs --k"))?;
            let lambda = a.lambda.ok_or_else(|| bad("simulate --map std needs --lambda"))?;
            (standard_map_potential(k), lambda, format!("std:k={k}"))
        }
        MapKind::Bundle => {
            let path = a.bundle.as_deref().ok_or_else(|| bad("simulate --map bundle needs --bundle"))?;
            let b = load_bundle(path)?;
            let label = format!("bundle:d={},n={},eps={},lambda={}", b.d, b.n, b.epsilon, b.lambda);
            (b.potential, a.lambda.unwrap_or(b.lambda), label)
        }
    };
    check_open_unit("lambda", lambda)?;
    let d = phi.dim();
    let starts_per_axis = a.starts.unwrap_or(if d == 1 { 64 } else { 16 });
    let bins = a.bins.unwrap_or(if d == 1 { 4096 } else { 64 });
    // the transform grid must resolve the perturbation, or folds are smoothed away
    let res = a.transform_resolution.unwrap_or(if d == 1 {
        (4 * phi.degree()).next_power_of_two().max(128)
    } else {
        (2 * phi.degree() + 2).next_power_of_two().clamp(16, 64)
    });
    if starts_per_axis == 0 || a.keep == 0 {
        return Err(bad("starts and keep must be positive"));
    }

    let (mut report, transform) = if d == 1 {
        let p = MapParams1D::new(lambda, a.alpha1, a.alpha2)?;
        let map = PerturbedMap1D::new(p, Some(&phi))?;
        let y_star = p.invariant_height();
        let report = cloud_report(&map, default_starts_1d(y_star, starts_per_axis), &a, bins)?;
        let psi0 = CandidateGraph::constant(res, &[y_star])?;
        (report, graph_transform_1d(&p, Some(&phi), &psi0, a.max_iter, a.transform_tol))
    } else {
        let p = dd_params(lambda, d, a.beta.as_deref(), a.a.as_deref())?;
        let map = PerturbedMapDD::new(p.clone(), Some(&phi))?;
        let report = cloud_report(&map, default_starts_dd(d, starts_per_axis), &a, bins)?;
        let psi0 = CandidateGraph::constant(res, &vec![0.0; d])?;
        (report, graph_transform_dd(&p, Some(&phi), &psi0, a.max_iter, a.transform_tol))
    };
    report.parameters = SimulationParameters {
        lambda,
        alpha: (d == 1).then_some([a.alpha1, a.alpha2]),
        beta: (d > 1).then(|| dd_params(lambda, d, a.beta.as_deref(), None).map(|p| p.beta)).transpose()?,
        perturbation: label,
    };

    // a transform that neither folds nor converges leaves the cloud verdict alone
    let transform: Option<TransformOutcome> = match transform {
        Ok(t) => Some(t),
        Err(Error::MaxIterExceeded { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    let fold = transform.as_ref().is_some_and(|t| t.status == TransformStatus::FoldDetected);
    report.set_fold_detected(fold);
    if let Some(path) = &a.graph_out {
        match &transform {
            Some(t) if t.status == TransformStatus::Converged => {
                fs::write(path, to_json(&t.graph)?).map_err(|e| io_err(path, e))?;
            }
            _ => return Err(Error::InvalidGraph("graph transform has no fixed point to write".into()).into()),
        }
    }
    let status = transform.map_or("no-convergence".to_string(), |t| format!("{:?}", t.status));
    let summary = format!(
        "simulate: {} lambda={lambda} points={} max_extent={:.3e} empty={:.3} transform={status} verdict={:?}",
        report.parameters.perturbation, report.points, report.max_extent, report.empty_fraction, report.verdict
    );
    emit(&report, a.output.as_deref(), &summary)
}

fn cloud_report<M: CloudMap>(
    map: &M,
    starts: Vec<(Vec<f64>, Vec<f64>)>,
    a: &SimulateArgs,
    bins: usize,
) -> CliResult<AttractorReport> {
    let cloud = iterate_cloud(map, &starts, a.transient, a.keep)?;
    if let Some(path) = &a.cloud {
        let mut w = create(path)?;
        cloud.write_csv(&mut w)?;
        w.flush().map_err(|e| io_err(path, e))?;
    }
    let mut report = graph_test(&cloud, bins, a.tol_graph)?;
    report.transient = a.transient;
    report.keep = a.keep;
    Ok(report)
}

fn approx(a: ApproxArgs) -> CliResult<()> {
    if a.dim == 0 {
        return Err(bad("dim must be positive"));
    }
    let default_res = (4 * a.degree + 2).max(256).next_power_of_two();
    let f = match a.func {
        TestFunction::ExpSin => {
            let res = a.resolution.unwrap_or(default_res);
            let two_pi = 2.0 * std::f64::consts::PI;
            GridFn::from_fn(a.dim, res, |x| x.iter().map(|v| (two_pi * v).sin()).sum::<f64>().exp())
        }
        TestFunction::Bump => {
            check_open_unit("lambda", a.lambda)?;
            check_open_unit("eps", a.eps)?;
            let spec = BumpSpec::new(a.n, a.dim, delta_of_lambda(a.lambda)?, a.eps)?;
            let res = a.resolution.unwrap_or_else(|| spec.model_resolution(a.degree));
            build_model_bump(&spec, res)?
        }
        TestFunction::Samples => {
            let path = a.input.as_deref().ok_or_else(|| bad("approx --func samples needs --input"))?;
            let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            samples_grid(&parse_list("input", &text)?, a.dim)?
        }
    };
    let norms: Vec<f64> = (0..=a.k).map(|j| ck_norm_estimate(&f, j)).collect::<Result<_, _>>()?;
    let (_, report): (_, ApproxReport) = jackson_approximate(&f, a.degree, a.k, Some(&norms))?;
    let summary = format!(
        "approx: d={} N={} resolution={} error={:.3e} bound={}",
        a.dim,
        a.degree,
        f.resolution,
        report.achieved_error,
        report.bound.map_or("n/a".into(), |b| format!("{b:.3e}"))
    );
    emit(&report, a.output.as_deref(), &summary)
}

fn samples_grid(values: &[f64], dim: usize) -> CliResult<GridFn> {
    let res = (values.len() as f64).powf(1.0 / dim as f64).round() as usize;
    if res == 0 || res.pow(dim as u32) != values.len() {
        return Err(bad(format!("{} samples do not form a {dim}-dimensional square grid", values.len())));
    }
    Ok(GridFn {
        dim,
        resolution: res,
        values: values.to_vec(),
    })
}
