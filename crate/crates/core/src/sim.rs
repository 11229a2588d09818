//! Seeded Monte Carlo harness.
//!
//! Work is split into (cell, replicate) tasks. Each task owns a ChaCha8
//! generator seeded from `(seed, cell, replicate)`, and results are reduced in
//! task order, so the output does not depend on the number of worker threads.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundaries::beta_star_general;
use crate::error::{Error, Result};
use crate::estimate::{MeanEstimator, SpectralEstimator};
use crate::model::{gen_label_config, gen_mixture_pair_with, gen_paired_sample, Calibration, Hypothesis, LabelPair, ModelParams, PairedSample};
use crate::testing::{run_test, Method, TestOptions};

pub const DEFAULT_REPS: usize = 200;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of the generator for one (cell, replicate) task.
pub fn child_seed(seed: u64, cell: u64, rep: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ cell) ^ rep.rotate_left(32))
}

pub fn child_rng(seed: u64, cell: u64, rep: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(child_seed(seed, cell, rep))
}

/// Run `f` on a dedicated pool with `threads` workers.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Invalid(format!("cannot build a pool with {threads} threads: {e}")))?;
    Ok(pool.install(f))
}

/// One draw handed to a test procedure.
pub struct TestContext<'a> {
    pub cal: &'a Calibration,
    pub params: &'a ModelParams,
    pub sample: &'a PairedSample,
}

/// A test seen by the harness: data in, decision out.
pub trait Procedure: Sync {
    fn reject(&self, ctx: &TestContext<'_>, rng: &mut ChaCha8Rng) -> Result<bool>;
}

impl<F> Procedure for F
where
    F: Fn(&TestContext<'_>, &mut ChaCha8Rng) -> Result<bool> + Sync,
{
    fn reject(&self, ctx: &TestContext<'_>, rng: &mut ChaCha8Rng) -> Result<bool> {
        self(ctx, rng)
    }
}

/// One of the library's tests with fixed options. The estimation baseline
/// uses the calibration's `ε`.
#[derive(Debug, Clone, Copy)]
pub struct MethodProcedure {
    pub method: Method,
    pub delta: f64,
    pub estimator: SpectralEstimator,
}

impl MethodProcedure {
    pub fn new(method: Method) -> Self {
        MethodProcedure {
            method,
            delta: crate::testing::DEFAULT_DELTA,
            estimator: SpectralEstimator::default(),
        }
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }
}

impl Procedure for MethodProcedure {
    fn reject(&self, ctx: &TestContext<'_>, rng: &mut ChaCha8Rng) -> Result<bool> {
        let opts = TestOptions {
            delta: self.delta,
            epsilon: Some(ctx.cal.epsilon()),
        };
        let est: &dyn MeanEstimator = &self.estimator;
        Ok(run_test(self.method, ctx.sample, Some(ctx.params), est, &opts, rng)?.reject)
    }
}

/// Label configurations used to approximate the worst case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelScenario {
    /// `σ = z`.
    Equal,
    /// `σ = -z`.
    Switched,
    /// `m` labels flipped.
    Flipped,
    /// `n - m` labels flipped.
    NearSwitch,
    /// A given number of labels flipped.
    FixedFlips(usize),
}

impl LabelScenario {
    pub const ALL: [LabelScenario; 4] = [
        LabelScenario::Equal,
        LabelScenario::Switched,
        LabelScenario::Flipped,
        LabelScenario::NearSwitch,
    ];

    pub fn is_null(self) -> bool {
        matches!(
            self,
            LabelScenario::Equal | LabelScenario::Switched | LabelScenario::FixedFlips(0)
        )
    }

    fn stream(self) -> u64 {
        match self {
            LabelScenario::Equal => 0,
            LabelScenario::Switched => 1,
            LabelScenario::Flipped => 2,
            LabelScenario::NearSwitch => 3,
            LabelScenario::FixedFlips(_) => 4,
        }
    }

    pub fn labels<R: Rng + ?Sized>(self, cal: &Calibration, rng: &mut R) -> Result<LabelPair> {
        let m = cal.alternative_flips();
        Ok(match self {
            LabelScenario::Equal => gen_label_config(cal.n, 0, rng)?,
            LabelScenario::Switched => gen_label_config(cal.n, 0, rng)?.switched(),
            LabelScenario::Flipped => gen_label_config(cal.n, m, rng)?,
            LabelScenario::NearSwitch => gen_label_config(cal.n, m, rng)?.switched(),
            LabelScenario::FixedFlips(k) => gen_label_config(cal.n, k, rng)?,
        })
    }
}

/// Draw fresh means, labels and data for `scenario`, then run the test.
/// The stream of `rng` is set to the scenario index, so each scenario's
/// draws are independent of the others within one replicate.
pub fn run_scenario(
    cal: &Calibration,
    dims: (usize, usize),
    procedure: &dyn Procedure,
    scenario: LabelScenario,
    rng: &mut ChaCha8Rng,
) -> Result<bool> {
    rng.set_stream(scenario.stream());
    rng.set_word_pos(0);
    let params = ModelParams::from_calibration(cal, dims.0, dims.1, rng)?;
    let labels = scenario.labels(cal, rng)?;
    let sample = gen_paired_sample(&params, &labels, rng);
    procedure.reject(
        &TestContext {
            cal,
            params: &params,
            sample: &sample,
        },
        rng,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub type1: f64,
    pub type2: f64,
    /// `type1 + type2`; may exceed 1.
    pub risk: f64,
    pub n_rep: usize,
    /// Binomial standard error of `risk`, treating the two rates as
    /// independent proportions.
    pub se: f64,
    /// Rejection rates under `σ = z` and `σ = -z`.
    pub null_reject: [f64; 2],
    /// Acceptance rates under `m` and `n - m` flips.
    pub alt_accept: [f64; 2],
}

impl RiskEstimate {
    fn from_counts(counts: [usize; 4], n_rep: usize) -> Self {
        let k = n_rep as f64;
        let null_reject = [counts[0] as f64 / k, counts[1] as f64 / k];
        let alt_accept = [1.0 - counts[2] as f64 / k, 1.0 - counts[3] as f64 / k];
        let type1 = null_reject[0].max(null_reject[1]);
        let type2 = alt_accept[0].max(alt_accept[1]);
        let se = ((type1 * (1.0 - type1) + type2 * (1.0 - type2)) / k).sqrt();
        RiskEstimate {
            type1,
            type2,
            risk: type1 + type2,
            n_rep,
            se,
            null_reject,
            alt_accept,
        }
    }
}

fn run_task(cal: &Calibration, dims: (usize, usize), procedure: &dyn Procedure, seed: u64, cell: u64, rep: u64) -> Result<[bool; 4]> {
    let mut rng = child_rng(seed, cell, rep);
    let mut out = [false; 4];
    for (slot, sc) in out.iter_mut().zip(LabelScenario::ALL) {
        *slot = run_scenario(cal, dims, procedure, sc, &mut rng)?;
    }
    Ok(out)
}

fn risk_cells(cells: &[Calibration], dims: (usize, usize), procedure: &dyn Procedure, n_rep: usize, seed: u64) -> Result<Vec<RiskEstimate>> {
    if n_rep == 0 {
        return Err(Error::Domain("n_rep must be at least 1".into()));
    }
    if dims.0 == 0 || dims.1 == 0 {
        return Err(Error::Domain("dimensions must be positive".into()));
    }
    for c in cells {
        c.validate()?;
    }
    let tasks: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..n_rep).map(move |r| (c, r))).collect();
    let results: Vec<[bool; 4]> = tasks
        .par_iter()
        .map(|&(c, r)| run_task(&cells[c], dims, procedure, seed, c as u64, r as u64))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(cells.len());
    for chunk in results.chunks(n_rep) {
        let mut counts = [0usize; 4];
        for d in chunk {
            for (c, &rej) in counts.iter_mut().zip(d) {
                *c += rej as usize;
            }
        }
        out.push(RiskEstimate::from_counts(counts, n_rep));
    }
    Ok(out)
}

/// Approximate worst-case risk of `procedure` at `cal`.
pub fn estimate_risk(cal: &Calibration, dims: (usize, usize), procedure: &dyn Procedure, n_rep: usize, seed: u64) -> Result<RiskEstimate> {
    Ok(risk_cells(std::slice::from_ref(cal), dims, procedure, n_rep, seed)?.remove(0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub rate: f64,
    pub se: f64,
    pub n_rep: usize,
}

/// Rejection rate of `procedure` under one label scenario. Replicate `k`
/// uses the same generator as replicate `k` of [`estimate_risk`].
pub fn rejection_rate(
    cal: &Calibration,
    dims: (usize, usize),
    procedure: &dyn Procedure,
    scenario: LabelScenario,
    n_rep: usize,
    seed: u64,
) -> Result<RateEstimate> {
    if n_rep == 0 {
        return Err(Error::Domain("n_rep must be at least 1".into()));
    }
    cal.validate()?;
    let hits: Vec<bool> = (0..n_rep)
        .into_par_iter()
        .map(|rep| run_scenario(cal, dims, procedure, scenario, &mut child_rng(seed, 0, rep as u64)))
        .collect::<Result<_>>()?;
    let rate = hits.iter().filter(|&&h| h).count() as f64 / n_rep as f64;
    Ok(RateEstimate {
        rate,
        se: (rate * (1.0 - rate) / n_rep as f64).sqrt(),
        n_rep,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub s: f64,
    pub n: usize,
    pub r_values: Vec<f64>,
    pub beta_values: Vec<f64>,
    /// Indexed `[r, beta]`.
    pub risk: Array2<f64>,
    /// `β*(r, s)` per r.
    pub boundary: Vec<f64>,
    /// Row-major over `(r, beta)`.
    pub cells: Vec<RiskEstimate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub r: f64,
    pub beta: f64,
    pub risk: f64,
    pub type1: f64,
    pub type2: f64,
    pub se: f64,
    pub beta_star: f64,
}

impl PhaseGrid {
    pub fn rows(&self) -> Vec<GridRow> {
        let nb = self.beta_values.len();
        let mut out = Vec::with_capacity(self.cells.len());
        for (i, &r) in self.r_values.iter().enumerate() {
            for (j, &beta) in self.beta_values.iter().enumerate() {
                let c = &self.cells[i * nb + j];
                out.push(GridRow {
                    r,
                    beta,
                    risk: c.risk,
                    type1: c.type1,
                    type2: c.type2,
                    se: c.se,
                    beta_star: self.boundary[i],
                });
            }
        }
        out
    }
}

/// Risk over an `(r, β)` grid at fixed `s`. Cell `(i, j)` uses cell index
/// `i·|β grid| + j` for seeding, so a 1×1 grid matches [`estimate_risk`].
pub fn phase_sweep(
    s: f64,
    n: usize,
    r_grid: &[f64],
    beta_grid: &[f64],
    dims: (usize, usize),
    procedure: &dyn Procedure,
    n_rep: usize,
    seed: u64,
) -> Result<PhaseGrid> {
    if r_grid.is_empty() || beta_grid.is_empty() {
        return Err(Error::Domain("grids must be nonempty".into()));
    }
    let mut cals = Vec::with_capacity(r_grid.len() * beta_grid.len());
    for &r in r_grid {
        for &beta in beta_grid {
            cals.push(Calibration::new(n, r, s, beta)?);
        }
    }
    let boundary = r_grid.iter().map(|&r| beta_star_general(r, s)).collect::<Result<Vec<_>>>()?;
    let cells = risk_cells(&cals, dims, procedure, n_rep, seed)?;
    let risk = Array2::from_shape_fn((r_grid.len(), beta_grid.len()), |(i, j)| cells[i * beta_grid.len() + j].risk);
    Ok(PhaseGrid {
        s,
        n,
        r_values: r_grid.to_vec(),
        beta_values: beta_grid.to_vec(),
        risk,
        boundary,
        cells,
    })
}

fn surrogate(u: f64, v: f64, r: f64, s: f64) -> f64 {
    (r.sqrt() * u + s.sqrt() * v).abs() - (r + s).sqrt() * v.abs()
}

fn check_rs(r: f64, s: f64) -> Result<()> {
    if !(r > 0.0) || !(s >= 0.0) || !r.is_finite() || !s.is_finite() {
        return Err(Error::Domain(format!("need r > 0 and s >= 0, got r = {r}, s = {s}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxStatSummary {
    pub mean: f64,
    pub sd: f64,
    pub values_above: usize,
    pub n_rep: usize,
}

/// Maximum of the null surrogate `|√r U + √s V| - √(r+s)|V|` over `n` draws,
/// divided by `√(2 log n)`, once per replicate.
pub fn max_stat_values(r: f64, s: f64, n: usize, n_rep: usize, seed: u64) -> Result<Vec<f64>> {
    check_rs(r, s)?;
    if n < 1000 {
        return Err(Error::Domain(format!("the max-statistic diagnostic needs n >= 1000, got {n}")));
    }
    if n_rep == 0 {
        return Err(Error::Domain("n_rep must be at least 1".into()));
    }
    let norm = (2.0 * (n as f64).ln()).sqrt();
    Ok((0..n_rep)
        .into_par_iter()
        .map(|rep| {
            let mut rng = child_rng(seed, 0, rep as u64);
            let pair = gen_mixture_pair_with(n, r, s, 0.0, Hypothesis::Null, &mut rng);
            pair.u
                .iter()
                .zip(&pair.v)
                .map(|(&u, &v)| surrogate(u, v, r, s))
                .fold(f64::NEG_INFINITY, f64::max)
                / norm
        })
        .collect())
}

/// Mean and standard deviation of [`max_stat_values`]; `values_above`
/// counts replicates exceeding `t*(r, s) + 0.1`.
pub fn max_stat_diagnostic(r: f64, s: f64, n: usize, n_rep: usize, seed: u64) -> Result<MaxStatSummary> {
    let vals = max_stat_values(r, s, n, n_rep, seed)?;
    let ts = crate::boundaries::t_star(r, s)?;
    let k = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / k;
    let sd = if vals.len() > 1 {
        (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(MaxStatSummary {
        mean,
        sd,
        values_above: vals.iter().filter(|&&v| v > ts + 0.1).count(),
        n_rep,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSurvival {
    pub p: f64,
    pub se: f64,
    pub n_samples: usize,
}

const MC_CHUNK: usize = 1 << 16;

/// Empirical `P(|√r U + √s V| - √(r+s)|V| > t)` under the null mixture with
/// the calibration `(n, r, s)`.
pub fn mc_survival(r: f64, s: f64, n: usize, t: f64, n_samples: usize, seed: u64) -> Result<McSurvival> {
    check_rs(r, s)?;
    if n < 3 {
        return Err(Error::Domain(format!("n must be at least 3, got {n}")));
    }
    if n_samples == 0 {
        return Err(Error::Domain("n_samples must be at least 1".into()));
    }
    let chunks = n_samples.div_ceil(MC_CHUNK);
    let hits: usize = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = MC_CHUNK.min(n_samples - c * MC_CHUNK);
            let mut rng = child_rng(seed, 0, c as u64);
            let mu = ((r + s) * 2.0 * (n as f64).ln()).sqrt();
            let mut k = 0;
            for _ in 0..len {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let u: f64 = rng.sample(rand_distr::StandardNormal);
                let zv: f64 = rng.sample(rand_distr::StandardNormal);
                if surrogate(u, sign * mu + zv, r, s) > t {
                    k += 1;
                }
            }
            k
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    let p = hits as f64 / n_samples as f64;
    Ok(McSurvival {
        p,
        se: (p * (1.0 - p) / n_samples as f64).sqrt(),
        n_samples,
    })
}
