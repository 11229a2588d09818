//! Projections, contrast statistics, exact null survival functions, the
//! higher criticism supremum, the likelihood ratio and tail exponents.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{calibrate_scales, min_scale_sq, max_scale_sq, norm, PairedSample, ProjectedSample};
use crate::numerics::{
    ln_add_exp, ln_std_normal_cdf, ln_std_normal_sf, ln_sub_exp, noncentral_chisq1, std_normal_cdf,
    std_normal_sf, EventProb,
};

/// `X̃ᵢ = θᵀXᵢ/‖θ‖`, `Ỹᵢ = ηᵀYᵢ/‖η‖`.
pub fn project(sample: &PairedSample, theta: &Array1<f64>, eta: &Array1<f64>) -> Result<ProjectedSample> {
    if theta.len() != sample.x.ncols() || eta.len() != sample.y.ncols() {
        return Err(Error::Dimension(format!(
            "directions of length ({}, {}) against data with ({}, {}) columns",
            theta.len(),
            eta.len(),
            sample.x.ncols(),
            sample.y.ncols()
        )));
    }
    let (nt, ne) = (norm(theta), norm(eta));
    if !(nt > 0.0) || !(ne > 0.0) {
        return Err(Error::Domain("projection directions must be nonzero".into()));
    }
    let x = sample.x.dot(theta) / nt;
    let y = sample.y.dot(eta) / ne;
    ProjectedSample::new(x.to_vec(), y.to_vec())
}

/// `|a·tx - b·ty| - |a·tx + b·ty|`.
pub fn c_minus(tx: f64, ty: f64, a: f64, b: f64) -> f64 {
    let (u, v) = (a * tx, b * ty);
    (u - v).abs() - (u + v).abs()
}

/// `|a·tx + b·ty| - |a·tx - b·ty|`.
pub fn c_plus(tx: f64, ty: f64, a: f64, b: f64) -> f64 {
    let (u, v) = (a * tx, b * ty);
    (u + v).abs() - (u - v).abs()
}

/// A normal law `N(mean, sd²)` with tail probabilities in log form.
#[derive(Debug, Clone, Copy)]
struct Gauss {
    mean: f64,
    sd: f64,
}

impl Gauss {
    fn z(&self, x: f64) -> f64 {
        (x - self.mean) / self.sd
    }

    fn ln_sf(&self, x: f64) -> f64 {
        ln_std_normal_sf(self.z(x))
    }

    fn ln_cdf(&self, x: f64) -> f64 {
        ln_std_normal_cdf(self.z(x))
    }

    /// `ln P(lo < X < hi)`.
    fn ln_between(&self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return f64::NEG_INFINITY;
        }
        let (zl, zh) = (self.z(lo), self.z(hi));
        if zl >= 0.0 {
            ln_sub_exp(ln_std_normal_sf(zl), ln_std_normal_sf(zh))
        } else if zh <= 0.0 {
            ln_sub_exp(ln_std_normal_cdf(zh), ln_std_normal_cdf(zl))
        } else {
            (-(std_normal_cdf(zl) + std_normal_sf(zh))).ln_1p()
        }
    }
}

fn ln_add3(a: f64, b: f64, c: f64) -> f64 {
    ln_add_exp(ln_add_exp(a, b), c)
}

/// `P(-2·sign(uv)·min(|u|,|v|) > τ)` and its complement for independent
/// normals `u`, `v`. Both sides are sums of nonnegative products over a
/// partition of the range of `u`, so neither loses relative accuracy.
fn contrast_event(u: Gauss, v: Gauss, tau: f64) -> EventProb {
    let h = tau.abs() / 2.0;
    if tau >= 0.0 {
        EventProb {
            ln_p: ln_add_exp(u.ln_sf(h) + v.ln_cdf(-h), u.ln_cdf(-h) + v.ln_sf(h)),
            ln_q: ln_add3(
                u.ln_between(-h, h),
                u.ln_sf(h) + v.ln_sf(-h),
                u.ln_cdf(-h) + v.ln_cdf(h),
            ),
        }
    } else {
        EventProb {
            ln_p: ln_add3(
                u.ln_between(-h, h),
                u.ln_cdf(-h) + v.ln_sf(-h),
                u.ln_sf(h) + v.ln_cdf(h),
            ),
            ln_q: ln_add_exp(u.ln_sf(h) + v.ln_sf(h), u.ln_cdf(-h) + v.ln_cdf(-h)),
        }
    }
}

/// Parameters `(a₁, b₁, a₂, b₂)` of the probability
/// `P(C⁻(Z₁+a₁, Z₂+b₁, a₂, b₂) > t√(2 log n))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalSpec {
    pub a1: f64,
    pub b1: f64,
    pub a2: f64,
    pub b2: f64,
    pub n: usize,
}

impl SurvivalSpec {
    pub fn new(a1: f64, b1: f64, a2: f64, b2: f64, n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::Domain(format!("survival spec needs n >= 3, got {n}")));
        }
        if a2 == 0.0 || b2 == 0.0 || ![a1, b1, a2, b2].iter().all(|x| x.is_finite()) {
            return Err(Error::Domain("a2 and b2 must be nonzero and all parameters finite".into()));
        }
        Ok(SurvivalSpec { a1, b1, a2, b2, n })
    }

    /// The null law of the contrast under the calibration `(n, r, s)`.
    pub fn null_rs(n: usize, r: f64, s: f64) -> Result<Self> {
        let (a, b) = calibrate_scales(n, r, s)?;
        if b == 0.0 {
            return Err(Error::Domain(format!("degenerate scales at r = {r}, s = {s}")));
        }
        SurvivalSpec::new(a, b, a, b, n)
    }

    /// The law of the contrast at a disagreeing index under `(n, r, s)`.
    pub fn signal_rs(n: usize, r: f64, s: f64) -> Result<Self> {
        let (a, b) = calibrate_scales(n, r, s)?;
        SurvivalSpec::new(a, -b, a, b, n)
    }

    pub fn sqrt_2_log_n(&self) -> f64 {
        (2.0 * (self.n as f64).ln()).sqrt()
    }

    /// Probability that the raw contrast exceeds `tau`.
    pub fn event_raw(&self, tau: f64) -> EventProb {
        let u = Gauss {
            mean: self.a1 * self.a2,
            sd: self.a2.abs(),
        };
        let v = Gauss {
            mean: self.b1 * self.b2,
            sd: self.b2.abs(),
        };
        contrast_event(u, v, tau)
    }

    /// Probability that the contrast exceeds `t√(2 log n)`.
    pub fn event(&self, t: f64) -> EventProb {
        self.event_raw(t * self.sqrt_2_log_n())
    }
}

/// `P(a₁,b₁,a₂,b₂,t)`.
pub fn pair_prob(spec: &SurvivalSpec, t: f64) -> f64 {
    spec.event(t).p()
}

/// Log form of [`survival_rs`] together with the log of its complement.
pub fn survival_rs_event(r: f64, s: f64, n: usize, t: f64) -> Result<EventProb> {
    Ok(SurvivalSpec::null_rs(n, r, s)?.event(t))
}

/// `S₍r,s₎(t) = P(|√r U + √s V| - √(r+s)|V| > t)` under the null mixture.
pub fn survival_rs(r: f64, s: f64, n: usize, t: f64) -> Result<f64> {
    Ok(survival_rs_event(r, s, n, t)?.p())
}

/// `P(|U| - |V| > tau)` for independent `U ~ N(mu_u, 1)`, `V ~ N(mu_v, 1)`.
///
/// With `p = (U+V)/2`, `q = (U-V)/2` (independent, variance ½),
/// `|U| - |V| = 2·sign(pq)·min(|p|,|q|)`.
pub fn abs_diff_event(mu_u: f64, mu_v: f64, tau: f64) -> EventProb {
    let sd = std::f64::consts::FRAC_1_SQRT_2;
    let p = Gauss {
        mean: (mu_u + mu_v) / 2.0,
        sd,
    };
    let neg_q = Gauss {
        mean: -(mu_u - mu_v) / 2.0,
        sd,
    };
    contrast_event(p, neg_q, tau)
}

/// Threshold range of an HC supremum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HcRange {
    AllReal,
    Positive,
    /// `|t| ≤ bound`.
    Bounded(f64),
}

impl HcRange {
    /// `(lo, lo_closed, hi, hi_closed)`.
    fn bounds(&self) -> (f64, bool, f64, bool) {
        match *self {
            HcRange::AllReal => (f64::NEG_INFINITY, false, f64::INFINITY, false),
            HcRange::Positive => (0.0, false, f64::INFINITY, false),
            HcRange::Bounded(b) => (-b, true, b, true),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HcDenominator {
    /// `√(m·S·(1-S))`
    SOneMinusS,
    /// `√(m·S)`
    SOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HcDirection {
    /// Count `#{w > t}` against `m·P(W > t)`.
    UpperTailCount,
    /// Count `#{w ≤ t}` against `m·P(W ≤ t)`.
    LowerTailCount,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HcConfig {
    pub range: HcRange,
    pub denominator: HcDenominator,
    pub direction: HcDirection,
}

struct SortedCounts {
    w: Vec<f64>,
}

impl SortedCounts {
    fn less(&self, t: f64) -> usize {
        self.w.partition_point(|&x| x < t)
    }

    fn less_eq(&self, t: f64) -> usize {
        self.w.partition_point(|&x| x <= t)
    }

    /// `(value at t, limit from the left at t)` of the counting function.
    fn counts(&self, t: f64, dir: HcDirection) -> (usize, usize) {
        let m = self.w.len();
        match dir {
            HcDirection::UpperTailCount => (m - self.less_eq(t), m - self.less(t)),
            HcDirection::LowerTailCount => (self.less_eq(t), self.less(t)),
        }
    }
}

/// ln of the standardized deviation `|N - m·p| / denom`; `None` when the
/// deviation is zero.
fn ln_deviation(count: usize, m: usize, ln_m: f64, ev: &EventProb, denom: HcDenominator) -> Option<f64> {
    let (p, q) = (ev.p(), ev.q());
    let (nf, mf) = (count as f64, m as f64);
    let num = if p <= 0.5 { nf - mf * p } else { (nf - mf) + mf * q };
    if num == 0.0 {
        return None;
    }
    let ln_den = match denom {
        HcDenominator::SOneMinusS => 0.5 * (ln_m + ev.ln_p + ev.ln_q),
        HcDenominator::SOnly => 0.5 * (ln_m + ev.ln_p),
    };
    Some(num.abs().ln() - ln_den)
}

fn denominator_vanishes(ev: &EventProb, denom: HcDenominator) -> bool {
    ev.ln_p == f64::NEG_INFINITY
        || ev.ln_p.is_nan()
        || (denom == HcDenominator::SOneMinusS && (ev.ln_q == f64::NEG_INFINITY || ev.ln_q.is_nan()))
}

/// Supremum over thresholds `t` in `cfg.range` of the standardized
/// deviation between the count of `values` beyond `t` and its null
/// expectation.
///
/// `prob(t)` returns the null probability of the counted event: `P(W > t)`
/// for upper-tail counts, `P(W ≤ t)` for lower-tail counts, with its
/// complement. On every interval where the count is constant the deviation
/// is quasiconvex in the null probability, so the supremum is attained at
/// interval ends. The candidates are the range endpoints and, at every
/// sample point inside the range, both the value and the left limit of the
/// count. Infinite endpoints contribute zero. An open endpoint where the
/// denominator vanishes is skipped; a vanishing denominator anywhere else is
/// an error. The result is capped at `f64::MAX`.
pub fn hc_sup<F>(values: &[f64], prob: F, cfg: &HcConfig) -> Result<f64>
where
    F: Fn(f64) -> Result<EventProb>,
{
    if values.is_empty() {
        return Err(Error::Invalid("hc_sup needs at least one value".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("hc_sup values must be finite".into()));
    }
    let mut w = values.to_vec();
    w.sort_by(f64::total_cmp);
    let counts = SortedCounts { w };
    let m = values.len();
    let ln_m = (m as f64).ln();
    let (lo, lo_closed, hi, hi_closed) = cfg.range.bounds();
    let mut best = f64::NEG_INFINITY;

    let mut consider = |t: f64, ns: &[usize], closed: bool| -> Result<()> {
        let ev = prob(t)?;
        if denominator_vanishes(&ev, cfg.denominator) {
            if closed {
                return Err(Error::DegenerateProbability {
                    t,
                    what: "null probability is 0 or 1 where the statistic is evaluated",
                });
            }
            return Ok(());
        }
        for &c in ns {
            if let Some(d) = ln_deviation(c, m, ln_m, &ev, cfg.denominator) {
                best = best.max(d);
            }
        }
        Ok(())
    };

    if lo.is_finite() {
        let (val, _) = counts.counts(lo, cfg.direction);
        consider(lo, &[val], lo_closed)?;
    }
    let start = if lo.is_finite() { counts.less_eq(lo) } else { 0 };
    let mut i = start;
    while i < m {
        let t = counts.w[i];
        if t >= hi {
            break;
        }
        let (val, left) = counts.counts(t, cfg.direction);
        consider(t, &[val, left], true)?;
        i = counts.less_eq(t);
    }
    if hi.is_finite() {
        let (val, left) = counts.counts(hi, cfg.direction);
        if hi_closed {
            consider(hi, &[val, left], true)?;
        } else {
            consider(hi, &[left], false)?;
        }
    }
    Ok(if best == f64::NEG_INFINITY {
        0.0
    } else {
        best.exp().min(f64::MAX)
    })
}

/// `max_i √m·|i/m - p₍ᵢ₎| / √p₍ᵢ₎` over the ascending order statistics of
/// the null upper-tail probabilities `p_j = P(W > w_j)`.
pub fn hc_pvalue_form<F>(values: &[f64], upper_prob: F) -> Result<f64>
where
    F: Fn(f64) -> Result<EventProb>,
{
    if values.is_empty() {
        return Err(Error::Invalid("hc_pvalue_form needs at least one value".into()));
    }
    let mut ln_p = values
        .iter()
        .map(|&v| upper_prob(v).map(|e| e.ln_p))
        .collect::<Result<Vec<f64>>>()?;
    ln_p.sort_by(f64::total_cmp);
    let m = ln_p.len();
    let ln_m = (m as f64).ln();
    let mut best = f64::NEG_INFINITY;
    for (k, &lp) in ln_p.iter().enumerate() {
        if lp == f64::NEG_INFINITY || lp.is_nan() {
            return Err(Error::DegenerateProbability {
                t: values[k],
                what: "p-value is zero",
            });
        }
        let i = (k + 1) as f64;
        let num = (i - m as f64 * lp.exp()).abs();
        if num > 0.0 {
            best = best.max(num.ln() - 0.5 * (ln_m + lp));
        }
    }
    Ok(if best == f64::NEG_INFINITY {
        0.0
    } else {
        best.exp().min(f64::MAX)
    })
}

/// `ln(2 cosh x)`.
fn ln_two_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p()
}

/// Log likelihood ratio of the alternative signal component against the
/// null mixture at `(u, v)`.
pub fn llr_exact(u: f64, v: f64, r: f64, s: f64, n: usize) -> f64 {
    let two_log_n = 2.0 * (n as f64).ln();
    let alpha = u * (r * two_log_n).sqrt() + v * (s * two_log_n).sqrt();
    let gamma = v * ((r + s) * two_log_n).sqrt();
    ln_two_cosh(alpha) - ln_two_cosh(gamma)
}

/// `√(2 log n)·(|√r u + √s v| - √(r+s)|v|)`.
pub fn llr_approx(u: f64, v: f64, r: f64, s: f64, n: usize) -> f64 {
    let sq = (2.0 * (n as f64).ln()).sqrt();
    sq * ((r.sqrt() * u + s.sqrt() * v).abs() - (r + s).sqrt() * v.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TailRegime {
    /// The far tail, where both coordinates must deviate.
    Upper,
    /// The intermediate regime.
    Middle,
    /// The probability is of order one.
    Bulk,
}

/// Polynomial rate `n^(-exponent)` of a tail probability, prefactors dropped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailExponent {
    pub exponent: f64,
    pub regime: TailRegime,
}

fn check_tail_args(r: f64, s: f64, t: f64) -> Result<()> {
    if !(r > 0.0) || !(s >= 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("tail exponent needs r > 0, s >= 0, finite t; got ({r}, {s}, {t})")));
    }
    Ok(())
}

/// `P(U² ≤ 2t log n)` for `U² ~ χ²₁ with noncentrality 2r log n`.
pub fn tail_exponent_easy_chisq(r: f64, t: f64) -> Result<TailExponent> {
    check_tail_args(r, 0.0, t)?;
    if !(t > 0.0) {
        return Err(Error::Domain(format!("the chi-square lower tail needs t > 0, got {t}")));
    }
    Ok(if t < r {
        TailExponent {
            exponent: (r.sqrt() - t.sqrt()).powi(2),
            regime: TailRegime::Middle,
        }
    } else {
        TailExponent {
            exponent: 0.0,
            regime: TailRegime::Bulk,
        }
    })
}

/// `P(|U| - |V| > t√(2 log n))` for `U ~ N(√(2r log n),1)`, `V ~ N(√(2s log n),1)`.
pub fn tail_exponent_easy(r: f64, s: f64, t: f64) -> Result<TailExponent> {
    check_tail_args(r, s, t)?;
    let (sr, ss) = (r.sqrt(), s.sqrt());
    Ok(if t > sr + ss {
        TailExponent {
            exponent: (t - sr).powi(2) + s,
            regime: TailRegime::Upper,
        }
    } else if t > sr - ss {
        TailExponent {
            exponent: 0.5 * (t - sr + ss).powi(2),
            regime: TailRegime::Middle,
        }
    } else {
        TailExponent {
            exponent: 0.0,
            regime: TailRegime::Bulk,
        }
    })
}

/// Null tail `P(|√r U + √s V| - √(r+s)|V| > t√(2 log n))`.
pub fn tail_exponent_comp0(r: f64, s: f64, t: f64) -> Result<TailExponent> {
    check_tail_args(r, s, t)?;
    let a = min_scale_sq(r, s);
    let big = max_scale_sq(r, s);
    Ok(if t > big {
        TailExponent {
            exponent: (t * t + r * (r + s)) / r,
            regime: TailRegime::Upper,
        }
    } else if t > -a {
        TailExponent {
            exponent: (t + a).powi(2) / (2.0 * a),
            regime: TailRegime::Middle,
        }
    } else {
        TailExponent {
            exponent: 0.0,
            regime: TailRegime::Bulk,
        }
    })
}

/// Signal-component tail of the same surrogate.
pub fn tail_exponent_comp1(r: f64, s: f64, t: f64) -> Result<TailExponent> {
    check_tail_args(r, s, t)?;
    let a = min_scale_sq(r, s);
    let big = max_scale_sq(r, s);
    Ok(if t > big {
        TailExponent {
            exponent: ((t - r).powi(2) + r * s) / r,
            regime: TailRegime::Upper,
        }
    } else if t > a {
        TailExponent {
            exponent: (t - a).powi(2) / (2.0 * a),
            regime: TailRegime::Middle,
        }
    } else {
        TailExponent {
            exponent: 0.0,
            regime: TailRegime::Bulk,
        }
    })
}

/// Exact log probabilities matching the tail exponents above.
pub mod exact_tails {
    use super::*;

    pub fn easy_chisq(r: f64, n: usize, t: f64) -> Result<f64> {
        let ln = (n as f64).ln();
        Ok(noncentral_chisq1(2.0 * t * ln, 2.0 * r * ln)?.ln_p)
    }

    pub fn easy(r: f64, s: f64, n: usize, t: f64) -> f64 {
        let two_ln = 2.0 * (n as f64).ln();
        abs_diff_event((r * two_ln).sqrt(), (s * two_ln).sqrt(), t * two_ln.sqrt()).ln_p
    }

    pub fn comp0(r: f64, s: f64, n: usize, t: f64) -> Result<f64> {
        let spec = SurvivalSpec::null_rs(n, r, s)?;
        Ok(spec.event(t * spec.sqrt_2_log_n()).ln_p)
    }

    pub fn comp1(r: f64, s: f64, n: usize, t: f64) -> Result<f64> {
        let spec = SurvivalSpec::signal_rs(n, r, s)?;
        Ok(spec.event(t * spec.sqrt_2_log_n()).ln_p)
    }
}
