//! Command-line interface.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::boundaries::boundary_row;
use crate::error::{Error, Result};
use crate::estimate::{spectral_mean_estimate, SpectralEstimator};
use crate::model::{gen_label_config, gen_paired_sample, Calibration, ModelParams, PairedSample};
use crate::sim::{phase_sweep, with_threads, MethodProcedure};
use crate::stats::survival_rs_event;
use crate::testing::{run_test, Method, TestOptions, DEFAULT_DELTA};

pub const DEFAULT_SEED: u64 = 20_240_917;
pub const SEED_ENV: &str = "CLUSTEQ_SEED";

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "clusteq", version, about = "Testing equality of clustering structures in paired Gaussian mixtures")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a paired two-cluster sample.
    Gen(GenArgs),
    /// Run a test on data files and print its report as JSON.
    Test(TestArgs),
    /// Tabulate detection boundaries.
    Boundary(BoundaryArgs),
    /// Evaluate the null survival function.
    Survival(SurvivalArgs),
    /// Spectral estimate of the mean of a data file.
    Estimate(EstimateArgs),
    /// Simulated risk over an (r, beta) grid.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub r: f64,
    #[arg(long, default_value_t = 0.0)]
    pub s: f64,
    #[arg(long, default_value_t = 0.5)]
    pub beta: f64,
    #[arg(long, default_value_t = 2)]
    pub p: usize,
    #[arg(long, default_value_t = 2)]
    pub q: usize,
    /// Number of flipped labels; defaults to max(2⌈n·n^-beta⌉, 2) with
    /// --alternative and to 0 otherwise.
    #[arg(long)]
    pub flips: Option<usize>,
    #[arg(long)]
    pub alternative: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for x.csv, y.csv, theta.csv, eta.csv, labels.csv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[arg(long)]
    pub x: Option<PathBuf>,
    #[arg(long)]
    pub y: Option<PathBuf>,
    #[arg(long)]
    pub theta: Option<PathBuf>,
    #[arg(long)]
    pub eta: Option<PathBuf>,
    /// Estimate the means from the data (ada-bonf, ada-hc).
    #[arg(long)]
    pub adaptive: bool,
    /// One of diff, sum, comb, general, bonferroni, estimation, ada-bonf, ada-hc.
    #[arg(long)]
    pub method: Method,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    pub delta: f64,
    /// Loss level of the estimation baseline.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BoundaryArgs {
    /// Value or lo:hi:steps.
    #[arg(long)]
    pub r: String,
    /// Value or lo:hi:steps.
    #[arg(long, default_value = "0")]
    pub s: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SurvivalArgs {
    #[arg(long)]
    pub r: f64,
    #[arg(long, default_value_t = 0.0)]
    pub s: f64,
    #[arg(long)]
    pub n: usize,
    /// Threshold; repeatable.
    #[arg(long = "t", required = true, allow_negative_numbers = true)]
    pub t: Vec<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, default_value_t = 0.0)]
    pub s: f64,
    #[arg(long)]
    pub n: usize,
    /// lo:hi:steps.
    #[arg(long)]
    pub r: String,
    /// lo:hi:steps.
    #[arg(long)]
    pub beta: String,
    #[arg(long, default_value = "general")]
    pub method: Method,
    #[arg(long, default_value_t = crate::sim::DEFAULT_REPS)]
    pub reps: usize,
    #[arg(long, default_value_t = 2)]
    pub p: usize,
    #[arg(long, default_value_t = 2)]
    pub q: usize,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    pub delta: f64,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Exit status for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Bracket { .. } | Error::NoConvergence { .. } | Error::DegenerateProbability { .. } | Error::Estimator(_) => {
            EXIT_NUMERIC
        }
        _ => EXIT_INVALID,
    }
}

fn resolve_seed(flag: Option<u64>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Invalid(format!("{SEED_ENV}: '{v}' is not a 64-bit unsigned integer"))),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

/// `17` significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// A single value, or `lo:hi:steps` for `steps` evenly spaced points.
pub fn parse_range(flag: &str, spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::Invalid(format!("{flag}: expected a number or lo:hi:steps, got '{spec}'"));
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        [v] => Ok(vec![v.trim().parse().map_err(|_| bad())?]),
        [lo, hi, steps] => {
            let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
            let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
            let k: usize = steps.trim().parse().map_err(|_| bad())?;
            if k == 0 || !lo.is_finite() || !hi.is_finite() {
                return Err(bad());
            }
            if k == 1 {
                return Ok(vec![lo]);
            }
            Ok((0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect())
        }
        _ => Err(bad()),
    }
}

fn with_flag<T>(flag: &str, path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Invalid(format!("{flag}: {}: {e}", path.display())))
}

/// Matrix with a header row, one observation per line.
pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let cols = rdr.headers()?.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec?;
        for field in rec.iter() {
            data.push(
                field
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Invalid(format!("line {}: '{field}' is not a number", rows + 2)))?,
            );
        }
        rows += 1;
    }
    if rows == 0 || cols == 0 {
        return Err(Error::Invalid("no data rows".into()));
    }
    Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::Dimension(e.to_string()))
}

pub fn write_matrix<W: Write>(w: W, prefix: &str, m: &Array2<f64>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record((1..=m.ncols()).map(|j| format!("{prefix}{j}")))?;
    for row in m.rows() {
        wtr.write_record(row.iter().map(|&v| fmt_f64(v)))?;
    }
    wtr.flush()?;
    Ok(())
}

/// A vector stored as a one-column or one-row matrix.
pub fn read_vector(path: &Path) -> Result<Array1<f64>> {
    let m = read_matrix(path)?;
    match m.dim() {
        (_, 1) => Ok(m.column(0).to_owned()),
        (1, _) => Ok(m.row(0).to_owned()),
        (r, c) => Err(Error::Dimension(format!("expected a vector, found a {r}x{c} matrix"))),
    }
}

pub fn write_vector<W: Write>(w: W, name: &str, v: &Array1<f64>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([name])?;
    for &x in v {
        wtr.write_record([fmt_f64(x)])?;
    }
    wtr.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::Invalid(format!("cannot write {}: {e}", path.display())))
}

/// Writes to the file if given, otherwise to stdout.
fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_json<T: Serialize>(out: &Option<PathBuf>, value: &T) -> Result<()> {
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

fn cmd_gen(a: &GenArgs) -> Result<()> {
    let seed = resolve_seed(a.seed)?;
    let cal = Calibration::new(a.n, a.r, a.s, a.beta)?;
    let flips = a.flips.unwrap_or(if a.alternative { cal.alternative_flips() } else { 0 });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = ModelParams::from_calibration(&cal, a.p, a.q, &mut rng)?;
    let labels = gen_label_config(a.n, flips, &mut rng)?;
    let sample = gen_paired_sample(&params, &labels, &mut rng);
    fs::create_dir_all(&a.out).map_err(|e| Error::Invalid(format!("--out: {}: {e}", a.out.display())))?;
    write_matrix(create(&a.out.join("x.csv"))?, "x", &sample.x)?;
    write_matrix(create(&a.out.join("y.csv"))?, "y", &sample.y)?;
    write_vector(create(&a.out.join("theta.csv"))?, "theta", &params.theta)?;
    write_vector(create(&a.out.join("eta.csv"))?, "eta", &params.eta)?;
    let mut wtr = csv::Writer::from_writer(create(&a.out.join("labels.csv"))?);
    wtr.write_record(["z", "sigma"])?;
    for (z, s) in labels.z.iter().zip(&labels.sigma) {
        wtr.write_record([z.to_string(), s.to_string()])?;
    }
    wtr.flush()?;
    println!(
        "wrote n = {} rows (p = {}, q = {}) to {}; loss = {}, seed = {seed}",
        a.n,
        a.p,
        a.q,
        a.out.display(),
        labels.loss()
    );
    Ok(())
}

pub fn load_sample(x: &Path, y: &Path) -> Result<PairedSample> {
    let xm = with_flag("--x", x, read_matrix(x))?;
    let ym = with_flag("--y", y, read_matrix(y))?;
    PairedSample::new(xm, ym)
}

fn cmd_test(a: &TestArgs) -> Result<()> {
    let x = a.x.as_ref().ok_or_else(|| Error::Invalid("--x is required".into()))?;
    let y = a.y.as_ref().ok_or_else(|| Error::Invalid("--y is required".into()))?;
    let adaptive = a.method.is_adaptive();
    if a.adaptive && !adaptive {
        return Err(Error::Invalid(format!(
            "--adaptive: method '{}' uses known means; pass --theta and --eta",
            a.method
        )));
    }
    if adaptive && (a.theta.is_some() || a.eta.is_some()) {
        return Err(Error::Invalid(format!(
            "--theta/--eta: method '{}' estimates the means from the data",
            a.method
        )));
    }
    let params = if adaptive {
        None
    } else {
        let theta = a.theta.as_ref().ok_or_else(|| Error::Invalid(format!("--theta is required for method '{}'", a.method)))?;
        let eta = a.eta.as_ref().ok_or_else(|| Error::Invalid(format!("--eta is required for method '{}'", a.method)))?;
        Some(ModelParams::new(
            with_flag("--theta", theta, read_vector(theta))?,
            with_flag("--eta", eta, read_vector(eta))?,
        )?)
    };
    if a.method == Method::Estimation && a.epsilon.is_none() {
        return Err(Error::Invalid("--epsilon is required for method 'estimation'".into()));
    }
    let sample = load_sample(x, y)?;
    if let Some(p) = &params {
        if p.theta.len() != sample.x.ncols() || p.eta.len() != sample.y.ncols() {
            return Err(Error::Invalid(format!(
                "--theta/--eta: lengths {}/{} do not match the data widths {}/{}",
                p.theta.len(),
                p.eta.len(),
                sample.x.ncols(),
                sample.y.ncols()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(resolve_seed(a.seed)?);
    let opts = TestOptions {
        delta: a.delta,
        epsilon: a.epsilon,
    };
    let report = run_test(a.method, &sample, params.as_ref(), &SpectralEstimator::default(), &opts, &mut rng)?;
    write_json(&a.out, &report)?;
    if a.out.is_some() {
        println!(
            "{}: reject = {}, statistics = ({}, {}), threshold = {}",
            report.method, report.reject, report.statistic_minus, report.statistic_plus, report.threshold
        );
    }
    Ok(())
}

fn cmd_boundary(a: &BoundaryArgs) -> Result<()> {
    let rs = parse_range("--r", &a.r)?;
    let ss = parse_range("--s", &a.s)?;
    let mut wtr = csv::Writer::from_writer(sink(&a.out)?);
    wtr.write_record(["r", "s", "region", "beta_idj", "beta_bar", "beta_star", "t_star", "detectable"])?;
    for &s in &ss {
        for &r in &rs {
            let row = boundary_row(r, s)?;
            wtr.write_record([
                fmt_f64(row.r),
                fmt_f64(row.s),
                row.region.to_string(),
                fmt_f64(row.beta_idj),
                fmt_f64(row.beta_bar),
                fmt_f64(row.beta_star),
                fmt_f64(row.t_star),
                row.detectable.to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

fn cmd_survival(a: &SurvivalArgs) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(sink(&a.out)?);
    wtr.write_record(["t", "S", "log_S"])?;
    for &t in &a.t {
        let e = survival_rs_event(a.r, a.s, a.n, t)?;
        wtr.write_record([fmt_f64(t), fmt_f64(e.p()), fmt_f64(e.ln_p)])?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct EstimateOut {
    theta_hat: Vec<f64>,
    lambda1: f64,
    iterations: usize,
    residual: f64,
}

fn cmd_estimate(a: &EstimateArgs) -> Result<()> {
    let x = with_flag("--x", &a.x, read_matrix(&a.x))?;
    let est = spectral_mean_estimate(x.view())?;
    write_json(
        &a.out,
        &EstimateOut {
            theta_hat: est.theta_hat.to_vec(),
            lambda1: est.lambda1,
            iterations: est.iterations,
            residual: est.residual,
        },
    )
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let rs = parse_range("--r", &a.r)?;
    let betas = parse_range("--beta", &a.beta)?;
    if a.reps == 0 {
        return Err(Error::Invalid("--reps must be at least 1".into()));
    }
    let seed = resolve_seed(a.seed)?;
    let procedure = MethodProcedure::new(a.method).with_delta(a.delta);
    let run = || phase_sweep(a.s, a.n, &rs, &betas, (a.p, a.q), &procedure, a.reps, seed);
    let grid = match a.threads {
        Some(0) => return Err(Error::Invalid("--threads must be at least 1".into())),
        Some(k) => with_threads(k, run)??,
        None => run()?,
    };
    let mut wtr = csv::Writer::from_writer(sink(&a.out)?);
    wtr.write_record(["r", "beta", "risk", "type1", "type2", "se", "beta_star"])?;
    for row in grid.rows() {
        wtr.write_record([row.r, row.beta, row.risk, row.type1, row.type2, row.se, row.beta_star].map(fmt_f64))?;
    }
    wtr.flush()?;
    if a.out.is_some() {
        println!(
            "{} cells, {} replicates each, method {}, seed {seed}",
            grid.cells.len(),
            a.reps,
            a.method
        );
    }
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Test(a) => cmd_test(a),
        Command::Boundary(a) => cmd_boundary(a),
        Command::Survival(a) => cmd_survival(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Sweep(a) => cmd_sweep(a),
    }
}

/// Parse arguments, run, and return the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
