use std::fmt;

use super::Grid;
use crate::error::{Error, Result};

fn check_finite(a: f64, what: &str) -> Result<()> {
    if a.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidValue(format!("{what} is not finite: {a}")))
    }
}

fn signed_point(grid: &Grid, negative: bool, n: i64) -> f64 {
    if negative {
        grid.point(-n)
    } else {
        grid.point(n)
    }
}

/// Nearest grid point to `a` after clipping to `[-1, 1]`; exact ties go away from zero.
pub fn round_nearest(a: f64, grid: &Grid) -> Result<f64> {
    check_finite(a, "value")?;
    let a = a.clamp(-1.0, 1.0);
    // f64::round rounds half away from zero, and we round the magnitude.
    let n = grid.scaled_magnitude(a).round() as i64;
    Ok(signed_point(grid, a < 0.0, n))
}

/// Randomized rounding of `a` to one of its two neighbouring grid points.
///
/// With `q = |a|/ε` and `p = q - ⌊q⌋`, the result is `sign(a)·ε·⌈q⌉` when
/// `p > u` and `sign(a)·ε·⌊q⌋` otherwise, so its expectation over
/// `u ~ U[0,1)` is `a`. No clipping happens here: for `|a| > 1` the result may
/// lie beyond the grid's range.
pub fn rr(a: f64, grid: &Grid, u: f64) -> Result<f64> {
    check_finite(a, "value")?;
    let q = grid.scaled_magnitude(a);
    let floor = q.floor();
    let p = q - floor;
    let n = if p > u { floor + 1.0 } else { floor } as i64;
    Ok(signed_point(grid, a < 0.0, n))
}

/// Rounds a probability to the nearest of `levels` uniform values `j/(levels-1)`; ties round up.
pub fn quantize_probability(p: f64, levels: u64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidValue(format!("probability {p} outside [0, 1]")));
    }
    if levels < 2 {
        return Err(Error::InvalidArgument(format!(
            "probability resolution needs at least 2 levels, got {levels}"
        )));
    }
    let steps = (levels - 1) as f64;
    Ok((p * steps + 0.5).floor() / steps)
}

/// [`rr`] with the rounding probability itself held at `levels` levels.
pub fn rr_coarse(a: f64, grid: &Grid, levels: u64, u: f64) -> Result<f64> {
    check_finite(a, "value")?;
    let q = grid.scaled_magnitude(a);
    let floor = q.floor();
    let p = quantize_probability(q - floor, levels)?;
    let n = if p > u { floor + 1.0 } else { floor } as i64;
    Ok(signed_point(grid, a < 0.0, n))
}

/// The rounding rule applied to every weight update.
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum QuantPolicy {
    /// Unquantized reference; weights are kept at single precision.
    Float32Baseline,
    /// Deterministic rounding to the nearest grid point ("online rounding").
    NearestOnline(Grid),
    /// Randomized rounding.
    RandomizedRounding(Grid),
    /// Randomized rounding with a low-resolution rounding probability.
    CoarsePRR { grid: Grid, prob_levels: u64 },
}

impl QuantPolicy {
    /// Coarse-p with as many probability levels as the grid has points.
    pub fn coarse_p(grid: Grid) -> Self {
        QuantPolicy::CoarsePRR {
            grid,
            prob_levels: grid.num_points(),
        }
    }

    pub fn grid(&self) -> Option<Grid> {
        match *self {
            QuantPolicy::Float32Baseline => None,
            QuantPolicy::NearestOnline(g) | QuantPolicy::RandomizedRounding(g) => Some(g),
            QuantPolicy::CoarsePRR { grid, .. } => Some(grid),
        }
    }

    /// Whether [`QuantPolicy::round`] consumes its uniform draw.
    pub fn is_stochastic(&self) -> bool {
        matches!(
            self,
            QuantPolicy::RandomizedRounding(_) | QuantPolicy::CoarsePRR { .. }
        )
    }

    /// Applies the policy's rounding, without clipping.
    pub fn round(&self, c: f64, u: f64) -> Result<f64> {
        match *self {
            QuantPolicy::Float32Baseline => {
                check_finite(c, "value")?;
                Ok(c as f32 as f64)
            }
            QuantPolicy::NearestOnline(g) => round_nearest(c, &g),
            QuantPolicy::RandomizedRounding(g) => rr(c, &g, u),
            QuantPolicy::CoarsePRR { grid, prob_levels } => rr_coarse(c, &grid, prob_levels, u),
        }
    }
}

impl fmt::Debug for QuantPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuantPolicy::Float32Baseline => f.write_str("Float32Baseline"),
            QuantPolicy::NearestOnline(g) => write!(f, "NearestOnline({} bits)", g.bits()),
            QuantPolicy::RandomizedRounding(g) => {
                write!(f, "RandomizedRounding({} bits)", g.bits())
            }
            QuantPolicy::CoarsePRR { grid, prob_levels } => {
                write!(f, "CoarsePRR({} bits, {prob_levels} levels)", grid.bits())
            }
        }
    }
}

/// One gradient step on a single parameter: round `θ - η·dθ` with the policy,
/// then clip to `[-1, 1]`.
pub fn quantized_update(theta: f64, dtheta: f64, eta: f64, policy: &QuantPolicy, u: f64) -> Result<f64> {
    check_finite(dtheta, "gradient")?;
    let candidate = theta - eta * dtheta;
    Ok(policy.round(candidate, u)?.clamp(-1.0, 1.0))
}
