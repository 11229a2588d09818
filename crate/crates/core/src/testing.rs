//! Hypothesis tests for equality of two clustering structures.
//!
//! Every test returns a [`TestReport`]. For the two-sided tests the
//! `statistic_minus` side is the evidence against `z = σ` and
//! `statistic_plus` the evidence against `z = -σ`; the null is rejected only
//! when both exceed the threshold.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::boundaries::t_star;
use crate::error::{Error, Result};
use crate::estimate::MeanEstimator;
use crate::model::{hamming_loss, norm, scales_to_rs, ModelParams, PairedSample, ProjectedSample};
use crate::numerics::{chisq1, noncentral_chisq1};
use crate::stats::{
    abs_diff_event, c_minus, c_plus, hc_pvalue_form, hc_sup, project, HcConfig, HcDenominator, HcDirection,
    HcRange, SurvivalSpec,
};

pub const DEFAULT_DELTA: f64 = 1.0;
const SPLIT_RETRIES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Diff,
    Sum,
    Comb,
    General,
    Bonferroni,
    Estimation,
    AdaBonf,
    AdaHc,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Diff,
        Method::Sum,
        Method::Comb,
        Method::General,
        Method::Bonferroni,
        Method::Estimation,
        Method::AdaBonf,
        Method::AdaHc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Diff => "diff",
            Method::Sum => "sum",
            Method::Comb => "comb",
            Method::General => "general",
            Method::Bonferroni => "bonferroni",
            Method::Estimation => "estimation",
            Method::AdaBonf => "ada-bonf",
            Method::AdaHc => "ada-hc",
        }
    }

    pub fn is_adaptive(self) -> bool {
        matches!(self, Method::AdaBonf | Method::AdaHc)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub method: Method,
    pub reject: bool,
    pub statistic_minus: f64,
    pub statistic_plus: f64,
    pub threshold: f64,
    pub meta: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl TestReport {
    fn new(method: Method, minus: f64, plus: f64, threshold: f64) -> Self {
        TestReport {
            method,
            reject: minus.min(plus) > threshold,
            statistic_minus: minus,
            statistic_plus: plus,
            threshold,
            meta: BTreeMap::new(),
            flags: Vec::new(),
        }
    }

    fn with(mut self, key: &str, value: f64) -> Self {
        self.meta.insert(key.to_string(), value);
        self
    }

    fn flagged(mut self, flag: &str) -> Self {
        self.flags.push(flag.to_string());
        self
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::Domain(format!("delta must be positive, got {delta}")));
    }
    Ok(())
}

/// `√(2(1+δ) log log n)`.
pub fn hc_threshold(n: usize, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if n < 3 {
        return Err(Error::Domain(format!("the HC threshold needs n >= 3, got {n}")));
    }
    Ok((2.0 * (1.0 + delta) * (n as f64).ln().ln()).sqrt())
}

fn check_norm(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::Domain(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

/// Counts of `(X̃ ∓ Ỹ)²/2 > t`, `t > 0`, against the central chi-square tail.
pub fn test_equal_diff(proj: &ProjectedSample, delta: f64) -> Result<TestReport> {
    let n = proj.n();
    let threshold = hc_threshold(n, delta)?;
    let cfg = HcConfig {
        range: HcRange::Positive,
        denominator: HcDenominator::SOneMinusS,
        direction: HcDirection::UpperTailCount,
    };
    let prob = |t: f64| Ok(chisq1(t)?.complement());
    let minus: Vec<f64> = proj.x.iter().zip(&proj.y).map(|(x, y)| (x - y).powi(2) / 2.0).collect();
    let plus: Vec<f64> = proj.x.iter().zip(&proj.y).map(|(x, y)| (x + y).powi(2) / 2.0).collect();
    let tm = hc_sup(&minus, prob, &cfg)?;
    let tp = hc_sup(&plus, prob, &cfg)?;
    Ok(TestReport::new(Method::Diff, tm, tp, threshold)
        .with("delta", delta)
        .with("n", n as f64))
}

/// Counts of `(X̃ ∓ Ỹ)²/2 ≤ t`, `t > 0`, against `n·P(χ²₁(2‖θ‖²) ≤ t)`.
pub fn test_equal_sum(proj: &ProjectedSample, theta_norm: f64, delta: f64) -> Result<TestReport> {
    check_norm("theta_norm", theta_norm)?;
    let n = proj.n();
    let threshold = hc_threshold(n, delta)?;
    let cfg = HcConfig {
        range: HcRange::Positive,
        denominator: HcDenominator::SOneMinusS,
        direction: HcDirection::LowerTailCount,
    };
    let lambda = 2.0 * theta_norm * theta_norm;
    let prob = |t: f64| noncentral_chisq1(t, lambda);
    let minus: Vec<f64> = proj.x.iter().zip(&proj.y).map(|(x, y)| (x - y).powi(2) / 2.0).collect();
    let plus: Vec<f64> = proj.x.iter().zip(&proj.y).map(|(x, y)| (x + y).powi(2) / 2.0).collect();
    let tm = hc_sup(&minus, prob, &cfg)?;
    let tp = hc_sup(&plus, prob, &cfg)?;
    Ok(TestReport::new(Method::Sum, tm, tp, threshold)
        .with("delta", delta)
        .with("n", n as f64)
        .with("theta_norm", theta_norm))
}

/// Counts of `|X̃ ∓ Ỹ| - |X̃ ± Ỹ| > √2·t`, `t ∈ ℝ`, against
/// `P(|U| - |V| > t)` with `U ~ N(0,1)`, `V ~ N(√2‖θ‖, 1)`.
pub fn test_equal_comb(proj: &ProjectedSample, theta_norm: f64, delta: f64) -> Result<TestReport> {
    check_norm("theta_norm", theta_norm)?;
    let n = proj.n();
    let threshold = hc_threshold(n, delta)?;
    let cfg = HcConfig {
        range: HcRange::AllReal,
        denominator: HcDenominator::SOneMinusS,
        direction: HcDirection::UpperTailCount,
    };
    let mu = std::f64::consts::SQRT_2 * theta_norm;
    let prob = |t: f64| Ok(abs_diff_event(0.0, mu, t));
    let s2 = std::f64::consts::SQRT_2;
    let minus: Vec<f64> = proj
        .x
        .iter()
        .zip(&proj.y)
        .map(|(x, y)| ((x - y).abs() - (x + y).abs()) / s2)
        .collect();
    let plus: Vec<f64> = minus.iter().map(|v| -v).collect();
    let tm = hc_sup(&minus, prob, &cfg)?;
    let tp = hc_sup(&plus, prob, &cfg)?;
    Ok(TestReport::new(Method::Comb, tm, tp, threshold)
        .with("delta", delta)
        .with("n", n as f64)
        .with("theta_norm", theta_norm))
}

/// The HC statistics of the general test on projected data with known norms.
pub fn general_hc_statistics(proj: &ProjectedSample, a: f64, b: f64) -> Result<(f64, f64)> {
    check_norm("a", a)?;
    check_norm("b", b)?;
    let n = proj.n();
    let spec = SurvivalSpec::new(a, b, a, b, n)?;
    let sq = spec.sqrt_2_log_n();
    let cfg = HcConfig {
        range: HcRange::AllReal,
        denominator: HcDenominator::SOneMinusS,
        direction: HcDirection::UpperTailCount,
    };
    let minus: Vec<f64> = proj.x.iter().zip(&proj.y).map(|(&x, &y)| c_minus(x, y, a, b) / sq).collect();
    let plus: Vec<f64> = proj.x.iter().zip(&proj.y).map(|(&x, &y)| c_plus(x, y, a, b) / sq).collect();
    let prob = |t: f64| Ok(spec.event(t));
    Ok((hc_sup(&minus, prob, &cfg)?, hc_sup(&plus, prob, &cfg)?))
}

/// Counts of `C∓ > t√(2 log n)`, `t ∈ ℝ`, against `S₍r,s₎(t)`.
pub fn test_general_hc(sample: &PairedSample, params: &ModelParams, delta: f64) -> Result<TestReport> {
    let n = sample.n();
    let threshold = hc_threshold(n, delta)?;
    let proj = project(sample, &params.theta, &params.eta)?;
    let (a, b) = (params.theta_norm(), params.eta_norm());
    let (tm, tp) = general_hc_statistics(&proj, a, b)?;
    let (r, s) = scales_to_rs(a, b, n);
    Ok(TestReport::new(Method::General, tm, tp, threshold)
        .with("delta", delta)
        .with("n", n as f64)
        .with("r", r)
        .with("s", s))
}

/// `max C⁻ ∧ max C⁺ > 2·t*(r,s)·log n`.
pub fn test_bonferroni(sample: &PairedSample, params: &ModelParams) -> Result<TestReport> {
    let n = sample.n();
    if n < 3 {
        return Err(Error::Domain(format!("the Bonferroni test needs n >= 3, got {n}")));
    }
    let xs = sample.x.dot(&params.theta);
    let ys = sample.y.dot(&params.eta);
    let (mut cm, mut cp) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (&u, &v) in xs.iter().zip(&ys) {
        cm = cm.max(c_minus(u, v, 1.0, 1.0));
        cp = cp.max(c_plus(u, v, 1.0, 1.0));
    }
    let (r, s) = params.rs(n);
    let ts = t_star(r, s)?;
    let log_n = (n as f64).ln();
    Ok(TestReport::new(Method::Bonferroni, cm, cp, 2.0 * ts * log_n)
        .with("n", n as f64)
        .with("r", r)
        .with("s", s)
        .with("t_star", ts))
}

fn sign_labels(v: &Array1<f64>) -> Vec<i8> {
    v.iter().map(|&c| if c < 0.0 { -1 } else { 1 }).collect()
}

/// Estimate both label vectors by the sign of the known-direction
/// projections and reject when their loss exceeds `ε/2`.
pub fn test_estimation_baseline(sample: &PairedSample, params: &ModelParams, epsilon: f64) -> Result<TestReport> {
    if !(epsilon >= 0.0) {
        return Err(Error::Domain(format!("epsilon must be nonnegative, got {epsilon}")));
    }
    let z_hat = sign_labels(&sample.x.dot(&params.theta));
    let s_hat = sign_labels(&sample.y.dot(&params.eta));
    let loss = hamming_loss(&z_hat, &s_hat)?;
    Ok(TestReport::new(Method::Estimation, loss, loss, epsilon / 2.0)
        .with("n", sample.n() as f64)
        .with("epsilon", epsilon))
}

/// Disjoint index sets covering `0..n`, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPartition {
    pub parts: Vec<Vec<usize>>,
}

impl SplitPartition {
    pub fn sizes(&self) -> Vec<usize> {
        self.parts.iter().map(Vec::len).collect()
    }
}

fn split_k<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<SplitPartition> {
    if n < 6 {
        return Err(Error::Domain(format!("splitting needs n >= 6, got {n}")));
    }
    for _ in 0..SPLIT_RETRIES {
        let mut parts = vec![Vec::with_capacity(n / k + 1); k];
        for i in 0..n {
            parts[rng.random_range(0..k)].push(i);
        }
        if parts.iter().all(|p| !p.is_empty()) {
            return Ok(SplitPartition { parts });
        }
    }
    Err(Error::EmptySplit(SPLIT_RETRIES))
}

/// Independent fair Bernoulli assignment of each index to one of two parts.
pub fn split_two<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<SplitPartition> {
    split_k(n, 2, rng)
}

/// Independent uniform assignment of each index to one of three parts.
pub fn split_three<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<SplitPartition> {
    split_k(n, 3, rng)
}

fn raw_contrasts(x: ArrayView2<f64>, y: ArrayView2<f64>, theta: &Array1<f64>, eta: &Array1<f64>) -> (f64, f64) {
    let xs = x.dot(theta);
    let ys = y.dot(eta);
    let (mut cm, mut cp) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (&u, &v) in xs.iter().zip(&ys) {
        cm = cm.max(c_minus(u, v, 1.0, 1.0));
        cp = cp.max(c_plus(u, v, 1.0, 1.0));
    }
    (cm, cp)
}

/// Two-way split with cross-fitted maxima, combined according to whether
/// the two halves' estimates agree in sign.
pub fn test_ada_bonferroni<R: Rng + ?Sized>(
    sample: &PairedSample,
    estimator: &dyn MeanEstimator,
    rng: &mut R,
) -> Result<TestReport> {
    let n = sample.n();
    let split = split_two(n, rng)?;
    let halves: Vec<PairedSample> = split.parts.iter().map(|idx| sample.select(idx)).collect();
    let mut est = Vec::with_capacity(2);
    for h in &halves {
        est.push(estimator.estimate(h.x.view(), h.y.view())?);
    }
    let log_n = (n as f64).ln();
    let (c0m, c0p) = raw_contrasts(halves[0].x.view(), halves[0].y.view(), &est[1].0, &est[1].1);
    let (c1m, c1p) = raw_contrasts(halves[1].x.view(), halves[1].y.view(), &est[0].0, &est[0].1);
    let d_theta = norm(&(&est[0].0 - &est[1].0));
    let d_eta = norm(&(&est[0].1 - &est[1].1));
    let agree = (d_theta <= 1.0) == (d_eta <= 1.0);
    let (cm, cp) = if agree {
        (c0m.max(c1m), c0p.max(c1p))
    } else {
        (c0m.max(c1p), c0p.max(c1m))
    };
    let factor = 2.0 * (1.0 + 1.0 / log_n.sqrt()) * log_n;
    let sizes = split.sizes();
    let mut t_sum = 0.0;
    let mut degenerate = false;
    for (th, et) in &est {
        let (r, s) = scales_to_rs(norm(th), norm(et), n);
        if r > 0.0 {
            t_sum += t_star(r, s)?;
        } else {
            degenerate = true;
        }
    }
    let t_hat = t_sum / 2.0;
    let report = TestReport::new(Method::AdaBonf, cm, cp, factor * t_hat)
        .with("n", n as f64)
        .with("t_hat", t_hat)
        .with("split_0", sizes[0] as f64)
        .with("split_1", sizes[1] as f64)
        .with("agree", if agree { 1.0 } else { 0.0 });
    if degenerate {
        let mut r = report.flagged("zero_mean_estimate");
        r.reject = false;
        return Ok(r);
    }
    Ok(report)
}

/// Three-way split: directions from the first part, the projected scales
/// `â`, `b̂` from the second, and HC statistics with the `√(m·S)`
/// denominator over `|t| ≤ log n` on the third.
pub fn test_ada_hc<R: Rng + ?Sized>(
    sample: &PairedSample,
    estimator: &dyn MeanEstimator,
    rng: &mut R,
) -> Result<TestReport> {
    let n = sample.n();
    if n < 9 {
        return Err(Error::Domain(format!("the adaptive HC test needs n >= 9, got {n}")));
    }
    let split = split_three(n, rng)?;
    let sizes = split.sizes();
    let log_n = (n as f64).ln();
    let threshold = log_n.powi(3);
    let d0 = sample.select(&split.parts[0]);
    let (theta_hat, eta_hat) = estimator.estimate(d0.x.view(), d0.y.view())?;
    let base = |r: TestReport| {
        r.with("n", n as f64)
            .with("split_0", sizes[0] as f64)
            .with("split_1", sizes[1] as f64)
            .with("split_2", sizes[2] as f64)
    };
    if !(norm(&theta_hat) > 0.0) || !(norm(&eta_hat) > 0.0) {
        let mut r = base(TestReport::new(Method::AdaHc, 0.0, 0.0, threshold)).flagged("zero_mean_estimate");
        r.reject = false;
        return Ok(r);
    }
    let p1 = project(&sample.select(&split.parts[1]), &theta_hat, &eta_hat)?;
    let p2 = project(&sample.select(&split.parts[2]), &theta_hat, &eta_hat)?;
    let mean_sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64;
    let a_hat = (mean_sq(&p1.x) - 1.0).max(0.0).sqrt();
    let b_hat = (mean_sq(&p1.y) - 1.0).max(0.0).sqrt();
    if a_hat == 0.0 || b_hat == 0.0 {
        let mut r = base(TestReport::new(Method::AdaHc, 0.0, 0.0, threshold))
            .with("a_hat", a_hat)
            .with("b_hat", b_hat)
            .flagged("zero_scale_estimate");
        r.reject = false;
        return Ok(r);
    }
    let (r_hat, s_hat) = scales_to_rs(a_hat, b_hat, n);
    let stats = ada_hc_statistics(&p2, a_hat, b_hat, n)?;
    let report = TestReport::new(Method::AdaHc, stats.minus, stats.plus, threshold);
    Ok(base(report)
        .with("a_hat", a_hat)
        .with("b_hat", b_hat)
        .with("r_hat", r_hat)
        .with("s_hat", s_hat)
        .with("pvalue_minus", stats.pvalue_minus)
        .with("pvalue_plus", stats.pvalue_plus)
        .with("guard", if stats.guard { 1.0 } else { 0.0 }))
}

/// Adaptive HC statistics on one part, in both the supremum and the
/// order-statistic form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaHcStatistics {
    pub minus: f64,
    pub plus: f64,
    pub pvalue_minus: f64,
    pub pvalue_plus: f64,
    /// Every normalized contrast lies within `±log n`.
    pub guard: bool,
}

pub fn ada_hc_statistics(proj: &ProjectedSample, a_hat: f64, b_hat: f64, n: usize) -> Result<AdaHcStatistics> {
    let spec = SurvivalSpec::new(a_hat, b_hat, a_hat, b_hat, n)?;
    let sq = spec.sqrt_2_log_n();
    let log_n = (n as f64).ln();
    let cfg = HcConfig {
        range: HcRange::Bounded(log_n),
        denominator: HcDenominator::SOnly,
        direction: HcDirection::UpperTailCount,
    };
    let minus: Vec<f64> = proj
        .x
        .iter()
        .zip(&proj.y)
        .map(|(&x, &y)| c_minus(x, y, a_hat, b_hat) / sq)
        .collect();
    let plus: Vec<f64> = proj
        .x
        .iter()
        .zip(&proj.y)
        .map(|(&x, &y)| c_plus(x, y, a_hat, b_hat) / sq)
        .collect();
    let prob = |t: f64| Ok(spec.event(t));
    Ok(AdaHcStatistics {
        minus: hc_sup(&minus, prob, &cfg)?,
        plus: hc_sup(&plus, prob, &cfg)?,
        pvalue_minus: hc_pvalue_form(&minus, prob)?,
        pvalue_plus: hc_pvalue_form(&plus, prob)?,
        guard: minus.iter().all(|v| v.abs() <= log_n),
    })
}

/// Settings shared by every method in [`run_test`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestOptions {
    pub delta: f64,
    /// Required by the estimation baseline only.
    pub epsilon: Option<f64>,
}

impl Default for TestOptions {
    fn default() -> Self {
        TestOptions {
            delta: DEFAULT_DELTA,
            epsilon: None,
        }
    }
}

/// Run `method` on `sample`. Known-parameter methods need `params`; the
/// adaptive methods ignore it and estimate the means with `estimator`.
pub fn run_test<R: Rng + ?Sized>(
    method: Method,
    sample: &PairedSample,
    params: Option<&ModelParams>,
    estimator: &dyn MeanEstimator,
    opts: &TestOptions,
    rng: &mut R,
) -> Result<TestReport> {
    let need = || params.ok_or_else(|| Error::Invalid(format!("method '{method}' needs the mean vectors")));
    match method {
        Method::AdaBonf => test_ada_bonferroni(sample, estimator, rng),
        Method::AdaHc => test_ada_hc(sample, estimator, rng),
        Method::General => test_general_hc(sample, need()?, opts.delta),
        Method::Bonferroni => test_bonferroni(sample, need()?),
        Method::Estimation => {
            let eps = opts
                .epsilon
                .ok_or_else(|| Error::Invalid("method 'estimation' needs epsilon".into()))?;
            test_estimation_baseline(sample, need()?, eps)
        }
        Method::Diff | Method::Sum | Method::Comb => {
            let params = need()?;
            let proj = project(sample, &params.theta, &params.eta)?;
            match method {
                Method::Diff => test_equal_diff(&proj, opts.delta),
                Method::Sum => test_equal_sum(&proj, params.theta_norm(), opts.delta),
                _ => test_equal_comb(&proj, params.theta_norm(), opts.delta),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::{OracleEstimator, SpectralEstimator};
    use crate::model::{gen_label_config, gen_paired_sample, Calibration, LabelPair};
    use ndarray::{array, Array2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(n: usize, r: f64, s: f64, flips: usize, p: usize, seed: u64) -> (PairedSample, ModelParams, LabelPair) {
        let cal = Calibration::new(n, r, s, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = ModelParams::from_calibration(&cal, p, p, &mut rng).unwrap();
        let labels = gen_label_config(n, flips, &mut rng).unwrap();
        let sample = gen_paired_sample(&params, &labels, &mut rng);
        (sample, params, labels)
    }

    fn negate_x(s: &PairedSample) -> PairedSample {
        PairedSample::new(-&s.x, s.y.clone()).unwrap()
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
            let j = serde_json::to_string(&m).unwrap();
            assert_eq!(j, format!("\"{}\"", m.name()));
        }
        assert!("bogus".parse::<Method>().is_err());
    }

    #[test]
    fn threshold_values() {
        let t = hc_threshold(10_000, 1.0).unwrap();
        assert!((t - (4.0 * 10_000f64.ln().ln()).sqrt()).abs() < 1e-15);
        assert!(hc_threshold(2, 1.0).is_err());
        assert!(hc_threshold(100, 0.0).is_err());
    }

    #[test]
    fn diff_on_identical_projections() {
        let x: Vec<f64> = (0..50).map(|i| i as f64 * 0.1 - 2.0).collect();
        let proj = ProjectedSample::new(x.clone(), x).unwrap();
        let rep = test_equal_diff(&proj, 1.0).unwrap();
        assert_eq!(rep.statistic_minus, 0.0);
        assert!(rep.statistic_plus > 0.0);
        assert!(!rep.reject);
    }

    #[test]
    fn comb_matches_general_at_equal_snr() {
        let (sample, params, _) = setup(2000, 0.5, 0.0, 20, 3, 7);
        let proj = project(&sample, &params.theta, &params.eta).unwrap();
        let comb = test_equal_comb(&proj, params.theta_norm(), 1.0).unwrap();
        let gen = test_general_hc(&sample, &params, 1.0).unwrap();
        assert!((comb.statistic_minus - gen.statistic_minus).abs() <= 1e-9 * gen.statistic_minus.max(1.0));
        assert!((comb.statistic_plus - gen.statistic_plus).abs() <= 1e-9 * gen.statistic_plus.max(1.0));
        assert_eq!(comb.reject, gen.reject);
    }

    #[test]
    fn label_switch_swaps_sides() {
        let (sample, params, labels) = setup(1500, 0.6, 0.1, 30, 3, 11);
        let neg = negate_x(&sample);
        let proj = project(&sample, &params.theta, &params.eta).unwrap();
        let projn = project(&neg, &params.theta, &params.eta).unwrap();
        let a = params.theta_norm();
        let pairs = [
            (test_equal_diff(&proj, 1.0).unwrap(), test_equal_diff(&projn, 1.0).unwrap()),
            (test_equal_sum(&proj, a, 1.0).unwrap(), test_equal_sum(&projn, a, 1.0).unwrap()),
            (test_equal_comb(&proj, a, 1.0).unwrap(), test_equal_comb(&projn, a, 1.0).unwrap()),
            (test_general_hc(&sample, &params, 1.0).unwrap(), test_general_hc(&neg, &params, 1.0).unwrap()),
            (test_bonferroni(&sample, &params).unwrap(), test_bonferroni(&neg, &params).unwrap()),
            (
                test_estimation_baseline(&sample, &params, 0.01).unwrap(),
                test_estimation_baseline(&neg, &params, 0.01).unwrap(),
            ),
        ];
        for (p, q) in pairs {
            assert!((p.statistic_minus - q.statistic_plus).abs() <= 1e-9 * p.statistic_minus.abs().max(1.0), "{:?}", p.method);
            assert!((p.statistic_plus - q.statistic_minus).abs() <= 1e-9 * p.statistic_plus.abs().max(1.0), "{:?}", p.method);
            assert_eq!(p.reject, q.reject);
        }
        let est = SpectralEstimator::default();
        let a1 = test_ada_bonferroni(&sample, &est, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let a2 = test_ada_bonferroni(&neg, &est, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!((a1.statistic_minus - a2.statistic_plus).abs() < 1e-8);
        assert_eq!(a1.reject, a2.reject);
        let h1 = test_ada_hc(&sample, &est, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let h2 = test_ada_hc(&neg, &est, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert!((h1.statistic_minus - h2.statistic_plus).abs() <= 1e-8 * h1.statistic_minus.max(1.0));
        assert_eq!(h1.reject, h2.reject);
        let _ = labels;
    }

    #[test]
    fn delta_monotone() {
        let (sample, params, _) = setup(2000, 0.5, 0.2, 40, 2, 3);
        let mut prev = true;
        for d in [0.1, 0.5, 1.0, 2.0, 5.0] {
            let rep = test_general_hc(&sample, &params, d).unwrap();
            assert!(prev || !rep.reject);
            prev = rep.reject;
        }
    }

    #[test]
    fn estimation_noiseless() {
        let n = 100;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let labels = gen_label_config(n, 3, &mut rng).unwrap();
        let theta = array![1.0, 2.0];
        let eta = array![3.0];
        let x = Array2::from_shape_fn((n, 2), |(i, j)| labels.z[i] as f64 * theta[j]);
        let y = Array2::from_shape_fn((n, 1), |(i, _)| labels.sigma[i] as f64 * eta[0]);
        let s = PairedSample::new(x, y).unwrap();
        let p = ModelParams::new(theta, eta).unwrap();
        let rep = test_estimation_baseline(&s, &p, 0.1).unwrap();
        assert_eq!(rep.statistic_minus, labels.loss());
        assert!(!rep.reject);
        assert!(test_estimation_baseline(&s, &p, 0.05).unwrap().reject);
    }

    #[test]
    fn splits() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [6, 9, 100, 1001] {
            for sp in [split_two(n, &mut rng).unwrap(), split_three(n, &mut rng).unwrap()] {
                let mut all: Vec<usize> = sp.parts.iter().flatten().copied().collect();
                all.sort();
                assert_eq!(all, (0..n).collect::<Vec<_>>());
                assert!(sp.parts.iter().all(|p| !p.is_empty()));
            }
        }
        let a = split_three(500, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = split_three(500, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
        assert!(split_two(5, &mut rng).is_err());
        let n = 10_000;
        let mut ok = 0;
        for _ in 0..200 {
            let sp = split_three(n, &mut rng).unwrap();
            if sp.sizes().iter().all(|&s| (s as f64 - n as f64 / 3.0).abs() <= 4.0 * (n as f64).sqrt()) {
                ok += 1;
            }
        }
        assert!(ok >= 198);
    }

    #[test]
    fn ada_bonferroni_oracle_reduces_to_plugin() {
        let (sample, params, _) = setup(2000, 1.2, 0.0, 1, 4, 21);
        let oracle = OracleEstimator {
            theta: params.theta.clone(),
            eta: params.eta.clone(),
        };
        let ada = test_ada_bonferroni(&sample, &oracle, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let bon = test_bonferroni(&sample, &params).unwrap();
        assert!((ada.statistic_minus - bon.statistic_minus).abs() < 1e-9 * bon.statistic_minus.abs().max(1.0));
        assert!((ada.statistic_plus - bon.statistic_plus).abs() < 1e-9 * bon.statistic_plus.abs().max(1.0));
        let log_n = (2000f64).ln();
        let ratio = ada.threshold / bon.threshold;
        assert!((ratio - (1.0 + 1.0 / log_n.sqrt())).abs() < 1e-9);
    }

    #[test]
    fn ada_hc_zero_scale_is_flagged() {
        let n = 90;
        let x = Array2::from_shape_fn((n, 2), |(i, j)| if (i + j) % 2 == 0 { 0.1 } else { -0.1 });
        let y = x.clone();
        let s = PairedSample::new(x, y).unwrap();
        let oracle = OracleEstimator {
            theta: array![1.0, 0.0],
            eta: array![0.0, 1.0],
        };
        let rep = test_ada_hc(&s, &oracle, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(!rep.reject);
        assert_eq!(rep.flags, vec!["zero_scale_estimate".to_string()]);
        assert!(test_ada_hc(&s.select(&[0, 1, 2, 3, 4, 5, 6, 7]), &oracle, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }

    #[test]
    fn report_json_round_trip() {
        let (sample, params, _) = setup(500, 0.5, 0.2, 5, 2, 2);
        let rep = test_general_hc(&sample, &params, 1.0).unwrap();
        let j = serde_json::to_string(&rep).unwrap();
        let back: TestReport = serde_json::from_str(&j).unwrap();
        assert_eq!(back, rep);
    }
}
