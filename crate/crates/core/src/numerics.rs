//! Special functions shared by every other module: the standard normal
//! density, distribution and tail functions (linear and log forms), the
//! noncentral chi-square distribution with one degree of freedom, Gaussian
//! tail bounds, and a bracketing root finder.
//!
//! `erf`/`erfc` come from `libm`; everything past the point where the
//! linear tail underflows is evaluated through the Mills ratio.

use std::f64::consts::{LN_2, PI, SQRT_2};

use libm::{erf, erfc};

use crate::error::{Error, Result};

/// ln(√(2π))
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Beyond this argument the upper tail is evaluated with the Mills ratio.
const MILLS_CUTOFF: f64 = 30.0;

const BISECT_MAX_ITER: usize = 200;

/// A probability carried together with its natural logarithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prob {
    pub value: f64,
    pub ln: f64,
}

impl Prob {
    pub fn from_ln(ln: f64) -> Self {
        Prob { value: ln.exp(), ln }
    }
}

/// Log-probabilities of an event and of its complement.
///
/// Keeping both sides in log form lets callers form `p(1-p)` without
/// cancellation when `p` is within rounding of 0 or 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventProb {
    pub ln_p: f64,
    pub ln_q: f64,
}

impl EventProb {
    pub fn p(&self) -> f64 {
        self.ln_p.exp()
    }

    pub fn q(&self) -> f64 {
        self.ln_q.exp()
    }

    pub fn complement(self) -> Self {
        EventProb {
            ln_p: self.ln_q,
            ln_q: self.ln_p,
        }
    }
}

/// Bracketing of the standard normal upper tail `1 - Φ(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailBounds {
    pub lower: f64,
    pub upper: f64,
}

pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

pub fn ln_std_normal_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Upper tail `1 - Φ(x)`.
pub fn std_normal_sf(x: f64) -> f64 {
    if x >= 0.0 {
        if x > MILLS_CUTOFF {
            ln_std_normal_sf(x).exp()
        } else {
            0.5 * erfc(x / SQRT_2)
        }
    } else {
        1.0 - 0.5 * erfc(-x / SQRT_2)
    }
}

/// `Φ(x)`, computed as the upper tail at `-x` so that `Φ(x) + Φ(-x) = 1`
/// holds to rounding.
pub fn std_normal_cdf(x: f64) -> f64 {
    std_normal_sf(-x)
}

/// `ln(1 - Φ(x))`, finite for every finite `x`.
pub fn ln_std_normal_sf(x: f64) -> f64 {
    if x > MILLS_CUTOFF {
        ln_std_normal_pdf(x) + mills_ratio(x).ln()
    } else if x < -5.0 {
        (-std_normal_sf(-x)).ln_1p()
    } else {
        (0.5 * erfc(x / SQRT_2)).ln()
    }
}

pub fn ln_std_normal_cdf(x: f64) -> f64 {
    ln_std_normal_sf(-x)
}

pub fn std_normal_cdf_prob(x: f64) -> Prob {
    Prob {
        value: std_normal_cdf(x),
        ln: ln_std_normal_cdf(x),
    }
}

pub fn std_normal_sf_prob(x: f64) -> Prob {
    Prob {
        value: std_normal_sf(x),
        ln: ln_std_normal_sf(x),
    }
}

/// Mills ratio `(1 - Φ(x)) / φ(x)` by backward evaluation of the
/// continued fraction `1/(x + 1/(x + 2/(x + 3/(x + ...))))`. Only used for
/// large `x`, where 60 terms are far more than enough.
fn mills_ratio(x: f64) -> f64 {
    let mut f = x;
    for k in (1..=60).rev() {
        f = x + k as f64 / f;
    }
    1.0 / f
}

/// `(1-t⁻²)₊·φ(t)/t < 1-Φ(t) < (1-t⁻²+3t⁻⁴)·φ(t)/t` for `t > 0`.
pub fn gaussian_tail_bounds(t: f64) -> Result<TailBounds> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("tail bounds need t > 0, got {t}")));
    }
    let base = std_normal_pdf(t) / t;
    let inv2 = 1.0 / (t * t);
    Ok(TailBounds {
        lower: (1.0 - inv2).max(0.0) * base,
        upper: (1.0 - inv2 + 3.0 * inv2 * inv2) * base,
    })
}

/// `ln(e^a + e^b)`.
pub fn ln_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(1 - e^d)` for `d ≤ 0`.
pub fn ln_one_minus_exp(d: f64) -> f64 {
    if d >= 0.0 {
        f64::NEG_INFINITY
    } else if d > -LN_2 {
        (-d.exp_m1()).ln()
    } else {
        (-d.exp()).ln_1p()
    }
}

/// `ln(e^a - e^b)` for `a ≥ b`.
pub fn ln_sub_exp(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        return a;
    }
    a + ln_one_minus_exp(b - a)
}

fn check_chisq_args(t: f64, lambda: f64) -> Result<()> {
    if !(t >= 0.0) || !(lambda >= 0.0) {
        return Err(Error::Domain(format!(
            "noncentral chi-square needs t >= 0 and lambda >= 0, got t = {t}, lambda = {lambda}"
        )));
    }
    Ok(())
}

/// Log CDF and log survival of `(Z + √λ)²`, `Z ~ N(0,1)`, at `t`.
pub fn noncentral_chisq1(t: f64, lambda: f64) -> Result<EventProb> {
    check_chisq_args(t, lambda)?;
    let rt = t.sqrt();
    let rl = lambda.sqrt();
    if lambda == 0.0 {
        // Central case: CDF = erf(√(t/2)), survival = 2(1 - Φ(√t)).
        return Ok(EventProb {
            ln_p: erf(rt / SQRT_2).ln(),
            ln_q: LN_2 + ln_std_normal_sf(rt),
        });
    }
    // CDF = Φ(√t-√λ) - Φ(-√t-√λ) = (1-Φ(√λ-√t)) - (1-Φ(√λ+√t))
    let upper = ln_std_normal_sf(rl - rt);
    let lower = ln_std_normal_sf(rl + rt);
    Ok(EventProb {
        ln_p: ln_sub_exp(upper, lower),
        ln_q: ln_add_exp(ln_std_normal_sf(rt - rl), lower),
    })
}

/// `P((Z + √λ)² ≤ t) = Φ(√t - √λ) - Φ(-√t - √λ)`.
pub fn noncentral_chisq1_cdf(t: f64, lambda: f64) -> Result<f64> {
    check_chisq_args(t, lambda)?;
    if t == 0.0 {
        return Ok(0.0);
    }
    let rt = t.sqrt();
    let rl = lambda.sqrt();
    if lambda == 0.0 {
        return Ok(erf(rt / SQRT_2));
    }
    let d = std_normal_sf(rl - rt) - std_normal_sf(rl + rt);
    if d > 1e-3 {
        Ok(d)
    } else {
        Ok(noncentral_chisq1(t, lambda)?.p())
    }
}

/// Log CDF and log survival of the central chi-square with one degree of
/// freedom.
pub fn chisq1(t: f64) -> Result<EventProb> {
    noncentral_chisq1(t, 0.0)
}

/// Bisection on `[lo, hi]` until the bracket is narrower than `tol`, capped
/// at 200 halvings.
pub fn bisect_root<F>(f: F, lo: f64, hi: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("bisection tolerance must be positive, got {tol}")));
    }
    let (mut lo, mut hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.is_nan() || f_hi.is_nan() || f_lo.signum() == f_hi.signum() {
        return Err(Error::Bracket {
            lo,
            hi,
            sign_lo: f_lo.signum(),
            sign_hi: f_hi.signum(),
        });
    }
    for _ in 0..BISECT_MAX_ITER {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `1/√(2π)`
pub fn inv_sqrt_2pi() -> f64 {
    1.0 / (2.0 * PI).sqrt()
}
