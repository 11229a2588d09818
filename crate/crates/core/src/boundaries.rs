//! Detection boundaries of the phase diagram and related critical constants.
//!
//! Differences of square roots are evaluated in the rationalized form
//! `√(r+s) - √s = r / (√(r+s) + √s)` so the functions stay accurate for very
//! large `s`.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};
use crate::numerics::bisect_root;

/// The five branches of `β*(r, s)`, in the order they are listed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegionId {
    R1,
    R2,
    R3,
    R4,
    R5,
}

impl RegionId {
    pub fn index(self) -> u8 {
        match self {
            RegionId::R1 => 1,
            RegionId::R2 => 2,
            RegionId::R3 => 3,
            RegionId::R4 => 4,
            RegionId::R5 => 5,
        }
    }

    pub const ALL: [RegionId; 5] = [RegionId::R1, RegionId::R2, RegionId::R3, RegionId::R4, RegionId::R5];
}

impl fmt::Display for RegionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

fn check_r(r: f64) -> Result<()> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::Domain(format!("r must be positive and finite, got {r}")));
    }
    Ok(())
}

fn check_rs(r: f64, s: f64) -> Result<()> {
    check_r(r)?;
    if !(s >= 0.0) || !s.is_finite() {
        return Err(Error::Domain(format!("s must be nonnegative and finite, got {s}")));
    }
    Ok(())
}

/// `√(r+s) - √s`.
fn root_gap(r: f64, s: f64) -> f64 {
    r / ((r + s).sqrt() + s.sqrt())
}

/// `A = r + s - √s·√(r+s)`.
pub fn min_signal(r: f64, s: f64) -> f64 {
    (r + s).sqrt() * root_gap(r, s)
}

/// Boundary of the higher criticism test that sees only one of the two
/// samples, as a function of the per-sample signal `r`.
pub fn beta_idj(r: f64) -> Result<f64> {
    check_r(r)?;
    Ok(if r <= 0.25 {
        0.5 + r
    } else {
        1.0 - (1.0 - r.sqrt()).max(0.0).powi(2)
    })
}

/// Equal-SNR boundary for tests using the `V` sequence only.
pub fn beta_bar_equal(r: f64) -> Result<f64> {
    check_r(r)?;
    Ok(((r + 1.0) / 2.0).min(1.0))
}

/// Equal-SNR detection boundary.
pub fn beta_star_equal(r: f64) -> Result<f64> {
    check_r(r)?;
    Ok(if r <= 0.2 {
        (1.0 + 3.0 * r) / 2.0
    } else {
        (1.0 - (1.0 - 2.0 * r).max(0.0).powi(2)).sqrt()
    })
}

/// Boundary for tests using only one of the two mixture coordinates.
pub fn beta_bar_general(r: f64, s: f64) -> Result<f64> {
    check_rs(r, s)?;
    let g = root_gap(r, s);
    let d = g * g;
    Ok(if 3.0 * s > r && d <= 0.25 {
        0.5 + r - 2.0 * s.sqrt() * g
    } else if 3.0 * s <= r && r + s <= 1.0 {
        (1.0 + r - s) / 2.0
    } else if r + s > 1.0 && d > 0.25 && d <= 1.0 {
        r - 2.0 * g * ((r + s).sqrt() - 1.0)
    } else {
        1.0
    })
}

/// Which branch of `β*(r, s)` applies. Ties go to the earlier branch.
pub fn region_of(r: f64, s: f64) -> Result<RegionId> {
    check_rs(r, s)?;
    let a = min_signal(r, s);
    Ok(if 3.0 * s > r && a <= 0.125 {
        RegionId::R1
    } else if 3.0 * s <= r && 5.0 * r + s <= 1.0 {
        RegionId::R2
    } else if a > 0.5 {
        RegionId::R5
    } else if 2.0 * (1.0 - r - s) * a > r {
        RegionId::R3
    } else {
        RegionId::R4
    })
}

/// The formula of one branch of `β*(r, s)`, evaluated regardless of whether
/// `(r, s)` lies in that branch's region.
pub fn beta_star_branch(region: RegionId, r: f64, s: f64) -> f64 {
    let a = min_signal(r, s);
    match region {
        RegionId::R1 => 0.5 + 2.0 * a,
        RegionId::R2 => (1.0 + 3.0 * r - s) / 2.0,
        RegionId::R3 => 2.0 * r.sqrt() * (1.0 - r - s).max(0.0).sqrt(),
        RegionId::R4 => 2.0 * (2.0 * a).sqrt() - 2.0 * a,
        RegionId::R5 => 1.0,
    }
}

/// Detection boundary `β*(r, s)`.
pub fn beta_star_general(r: f64, s: f64) -> Result<f64> {
    let region = region_of(r, s)?;
    Ok(beta_star_branch(region, r, s))
}

/// Normalized limit of the largest null surrogate `t*(r, s)`.
pub fn t_star(r: f64, s: f64) -> Result<f64> {
    check_rs(r, s)?;
    let a = min_signal(r, s);
    let big = r + s + s.sqrt() * (r + s).sqrt();
    if 2.0 * (r + s) * big <= r && r + s <= 1.0 {
        Ok((r * (1.0 - r - s)).sqrt())
    } else {
        Ok((2.0 * a).sqrt() - a)
    }
}

/// The root `r ∈ [3/16, 1/2]` of `2(1-r-s)·A(r, s) = r`, separating the
/// third and fourth branches of `β*` for small `s`.
pub fn root_of_s(s: f64) -> Result<f64> {
    if !(s > 0.0 && s < 1.0 / 16.0) {
        return Err(Error::Domain(format!("root_of_s needs s in (0, 1/16), got {s}")));
    }
    let f = |r: f64| 2.0 * (1.0 - r - s) * min_signal(r, s) - r;
    bisect_root(f, 3.0 / 16.0, 0.5, 1e-13)
}

/// Exact equality of the two clusterings is testable iff `A > 1/2`.
pub fn exact_equality_detectable(r: f64, s: f64) -> Result<bool> {
    check_rs(r, s)?;
    Ok(min_signal(r, s) > 0.5)
}

/// One row of the `boundary` table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRow {
    pub r: f64,
    pub s: f64,
    pub region: u8,
    pub beta_idj: f64,
    pub beta_bar: f64,
    pub beta_star: f64,
    pub t_star: f64,
    pub detectable: bool,
}

pub fn boundary_row(r: f64, s: f64) -> Result<BoundaryRow> {
    Ok(BoundaryRow {
        r,
        s,
        region: region_of(r, s)?.index(),
        beta_idj: beta_idj(r)?,
        beta_bar: beta_bar_general(r, s)?,
        beta_star: beta_star_general(r, s)?,
        t_star: t_star(r, s)?,
        detectable: exact_equality_detectable(r, s)?,
    })
}
