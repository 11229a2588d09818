//! Data model: the `(n, r, s, β)` calibration and its inverse, labels and
//! the clustering loss, and the data generators.

use ndarray::{Array1, Array2};
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Signal and sparsity calibration. `r` is the joint signal strength, `s`
/// the SNR imbalance between the two samples and `beta` the sparsity
/// exponent of the disagreeing fraction `ε = n^(-β)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub n: usize,
    pub r: f64,
    pub s: f64,
    pub beta: f64,
}

impl Calibration {
    pub fn new(n: usize, r: f64, s: f64, beta: f64) -> Result<Self> {
        let cal = Calibration { n, r, s, beta };
        cal.validate()?;
        Ok(cal)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(Error::Domain(format!("calibration needs n >= 3, got {}", self.n)));
        }
        if !(self.r > 0.0) || !self.r.is_finite() {
            return Err(Error::Domain(format!("r must be positive, got {}", self.r)));
        }
        if !(self.s >= 0.0) || !self.s.is_finite() {
            return Err(Error::Domain(format!("s must be nonnegative, got {}", self.s)));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::Domain(format!("beta must lie in (0, 1], got {}", self.beta)));
        }
        Ok(())
    }

    pub fn log_n(&self) -> f64 {
        (self.n as f64).ln()
    }

    pub fn epsilon(&self) -> f64 {
        (self.n as f64).powf(-self.beta)
    }

    /// `(‖θ‖, ‖η‖)` with the larger norm first.
    pub fn scales(&self) -> (f64, f64) {
        scales_from_log_n(self.log_n(), self.r, self.s)
    }

    /// Label flips used for the alternative in risk experiments:
    /// `max(2⌈nε⌉, 2)`, capped at `⌊n/2⌋`.
    pub fn alternative_flips(&self) -> usize {
        let m = (2.0 * (self.n as f64 * self.epsilon()).ceil()).max(2.0) as usize;
        m.min(self.n / 2)
    }
}

/// `A = r + s - √s·√(r+s)`, the minimal squared scale in units of `log n`.
pub fn min_scale_sq(r: f64, s: f64) -> f64 {
    r + s - s.sqrt() * (r + s).sqrt()
}

/// `r + s + √s·√(r+s)`, the maximal squared scale in units of `log n`.
pub fn max_scale_sq(r: f64, s: f64) -> f64 {
    r + s + s.sqrt() * (r + s).sqrt()
}

pub(crate) fn scales_from_log_n(log_n: f64, r: f64, s: f64) -> (f64, f64) {
    let a = (max_scale_sq(r, s) * log_n).sqrt();
    let b = (min_scale_sq(r, s).max(0.0) * log_n).sqrt();
    (a, b)
}

/// Norms `(a, b)`, `a ≥ b`, matching a calibration `(n, r, s)`.
pub fn calibrate_scales(n: usize, r: f64, s: f64) -> Result<(f64, f64)> {
    if n < 3 {
        return Err(Error::Domain(format!("calibration needs n >= 3, got {n}")));
    }
    if !(r > 0.0) || !(s >= 0.0) {
        return Err(Error::Domain(format!("need r > 0 and s >= 0, got r = {r}, s = {s}")));
    }
    Ok(scales_from_log_n((n as f64).ln(), r, s))
}

/// Inverse of [`calibrate_scales`]: `r = (2ab)² / (2 log n (a²+b²))`,
/// `s = (a²-b²)² / (2 log n (a²+b²))`.
pub fn scales_to_rs(a: f64, b: f64, n: usize) -> (f64, f64) {
    rs_from_log_n(a, b, (n as f64).ln())
}

pub(crate) fn rs_from_log_n(a: f64, b: f64, log_n: f64) -> (f64, f64) {
    let (a2, b2) = (a * a, b * b);
    let denom = 2.0 * log_n * (a2 + b2);
    if denom == 0.0 {
        return (0.0, 0.0);
    }
    ((2.0 * a * b).powi(2) / denom, (a2 - b2).powi(2) / denom)
}

/// Cluster means of the two samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub theta: Array1<f64>,
    pub eta: Array1<f64>,
}

impl ModelParams {
    pub fn new(theta: Array1<f64>, eta: Array1<f64>) -> Result<Self> {
        if !(norm(&theta) > 0.0) || !(norm(&eta) > 0.0) {
            return Err(Error::Domain("theta and eta must both be nonzero".into()));
        }
        Ok(ModelParams { theta, eta })
    }

    /// Means with norms given by the calibration, pointing in independent
    /// uniformly random directions. `theta` carries the larger norm.
    pub fn from_calibration<R: Rng + ?Sized>(
        cal: &Calibration,
        p: usize,
        q: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if p == 0 || q == 0 {
            return Err(Error::Domain("dimensions p and q must be positive".into()));
        }
        let (a, b) = cal.scales();
        let theta = random_unit(p, rng) * a;
        let eta = random_unit(q, rng) * b;
        ModelParams::new(theta, eta)
    }

    pub fn theta_norm(&self) -> f64 {
        norm(&self.theta)
    }

    pub fn eta_norm(&self) -> f64 {
        norm(&self.eta)
    }

    /// `(r, s)` implied by the mean norms at sample size `n`.
    pub fn rs(&self, n: usize) -> (f64, f64) {
        scales_to_rs(self.theta_norm(), self.eta_norm(), n)
    }
}

pub(crate) fn norm(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt()
}

fn random_unit<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Array1<f64> {
    loop {
        let v: Array1<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let nv = norm(&v);
        if nv > 1e-12 {
            return v / nv;
        }
    }
}

/// Cluster labels of the two samples, entries in `{-1, +1}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelPair {
    pub z: Vec<i8>,
    pub sigma: Vec<i8>,
}

impl LabelPair {
    pub fn new(z: Vec<i8>, sigma: Vec<i8>) -> Result<Self> {
        check_labels(&z, &sigma)?;
        Ok(LabelPair { z, sigma })
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn loss(&self) -> f64 {
        hamming_loss(&self.z, &self.sigma).expect("validated on construction")
    }

    /// The same pair with every `sigma` label switched.
    pub fn switched(&self) -> Self {
        LabelPair {
            z: self.z.clone(),
            sigma: self.sigma.iter().map(|&l| -l).collect(),
        }
    }
}

fn check_labels(z: &[i8], sigma: &[i8]) -> Result<()> {
    if z.len() != sigma.len() {
        return Err(Error::Dimension(format!(
            "label vectors have lengths {} and {}",
            z.len(),
            sigma.len()
        )));
    }
    if z.iter().chain(sigma).any(|&l| l != 1 && l != -1) {
        return Err(Error::Invalid("labels must be -1 or +1".into()));
    }
    Ok(())
}

/// Fraction of disagreeing labels, minimized over a global label switch.
pub fn hamming_loss(z: &[i8], sigma: &[i8]) -> Result<f64> {
    check_labels(z, sigma)?;
    if z.is_empty() {
        return Ok(0.0);
    }
    let n = z.len();
    let disagree = z.iter().zip(sigma).filter(|(a, b)| a != b).count();
    Ok(disagree.min(n - disagree) as f64 / n as f64)
}

/// `z` uniform on `{-1,1}ⁿ`; `sigma` equal to `z` except on a uniformly
/// chosen set of `m_flips` indices.
pub fn gen_label_config<R: Rng + ?Sized>(n: usize, m_flips: usize, rng: &mut R) -> Result<LabelPair> {
    if 2 * m_flips > n {
        return Err(Error::Domain(format!(
            "cannot flip {m_flips} of {n} labels: the loss is capped at 1/2"
        )));
    }
    let z: Vec<i8> = (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
    let mut sigma = z.clone();
    for i in index::sample(rng, n, m_flips) {
        sigma[i] = -sigma[i];
    }
    Ok(LabelPair { z, sigma })
}

/// Two data matrices with one observation per row.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    pub x: Array2<f64>,
    pub y: Array2<f64>,
}

impl PairedSample {
    pub fn new(x: Array2<f64>, y: Array2<f64>) -> Result<Self> {
        if x.nrows() != y.nrows() {
            return Err(Error::Dimension(format!(
                "x has {} rows but y has {}",
                x.nrows(),
                y.nrows()
            )));
        }
        Ok(PairedSample { x, y })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// Rows restricted to `idx`, in the given order.
    pub fn select(&self, idx: &[usize]) -> PairedSample {
        PairedSample {
            x: self.x.select(ndarray::Axis(0), idx),
            y: self.y.select(ndarray::Axis(0), idx),
        }
    }
}

/// The two scalar reductions `θᵀXᵢ/‖θ‖` and `ηᵀYᵢ/‖η‖`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedSample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl ProjectedSample {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::Dimension(format!(
                "projections have lengths {} and {}",
                x.len(),
                y.len()
            )));
        }
        Ok(ProjectedSample { x, y })
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }
}

/// `Xᵢ ~ N(zᵢθ, I_p)`, `Yᵢ ~ N(σᵢη, I_q)`, all independent.
pub fn gen_paired_sample<R: Rng + ?Sized>(
    params: &ModelParams,
    labels: &LabelPair,
    rng: &mut R,
) -> PairedSample {
    let x = gen_block(&params.theta, &labels.z, rng);
    let y = gen_block(&params.eta, &labels.sigma, rng);
    PairedSample { x, y }
}

fn gen_block<R: Rng + ?Sized>(mean: &Array1<f64>, labels: &[i8], rng: &mut R) -> Array2<f64> {
    let dim = mean.len();
    let mut out = Array2::<f64>::zeros((labels.len(), dim));
    for (mut row, &l) in out.rows_mut().into_iter().zip(labels) {
        let sign = l as f64;
        for (v, m) in row.iter_mut().zip(mean) {
            *v = sign * m + rng.sample::<f64, _>(StandardNormal);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hypothesis {
    Null,
    Alternative,
}

/// Draws from the two-dimensional sparse mixture problem. No latent
/// component indicators are kept.
#[derive(Debug, Clone, PartialEq)]
pub struct MixturePairSample {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub hypothesis: Hypothesis,
}

/// Null: `(U, V) ~ ½N(0,1)⊗N(-μ,1) + ½N(0,1)⊗N(μ,1)` with
/// `μ = √(2(r+s) log n)`. Alternative: the same with weight `1-ε`, plus
/// `ε/2` each on `N(±√(2r log n),1)⊗N(±√(2s log n),1)`.
pub fn gen_mixture_pair<R: Rng + ?Sized>(
    cal: &Calibration,
    hypothesis: Hypothesis,
    rng: &mut R,
) -> MixturePairSample {
    gen_mixture_pair_with(cal.n, cal.r, cal.s, cal.epsilon(), hypothesis, rng)
}

/// [`gen_mixture_pair`] with an explicit signal fraction. Every draw
/// consumes the same random numbers under both hypotheses, so `eps = 0`
/// reproduces the null exactly.
pub fn gen_mixture_pair_with<R: Rng + ?Sized>(
    n: usize,
    r: f64,
    s: f64,
    eps: f64,
    hypothesis: Hypothesis,
    rng: &mut R,
) -> MixturePairSample {
    let two_log_n = 2.0 * (n as f64).ln();
    let mu_null = ((r + s) * two_log_n).sqrt();
    let mu_u = (r * two_log_n).sqrt();
    let mu_v = (s * two_log_n).sqrt();
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for _ in 0..n {
        let coin: f64 = rng.random();
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let zu: f64 = rng.sample(StandardNormal);
        let zv: f64 = rng.sample(StandardNormal);
        let signal = hypothesis == Hypothesis::Alternative && coin < eps;
        if signal {
            u.push(sign * mu_u + zu);
            v.push(sign * mu_v + zv);
        } else {
            u.push(zu);
            v.push(sign * mu_null + zv);
        }
    }
    MixturePairSample { u, v, hypothesis }
}
