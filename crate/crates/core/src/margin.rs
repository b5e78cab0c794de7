//! Ground-truth frequency security margin of the full-order model.

use serde::{Deserialize, Serialize};

use crate::error::{FncError, Result};
use crate::scalar::Scalar;
use crate::sfr::{find_nadir, simulate_response, CommitmentScenario, SimOptions, SystemModel};

/// Settings for the margin search.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginSpec<T> {
    /// Allowed nadir depth in pu frequency (0.01 pu is 0.5 Hz at 50 Hz).
    pub delta_f_max_pu: T,
    /// Final bracket width on ΔP in pu.
    pub tol_pu: T,
    /// Initial upper bracket in pu.
    pub dp_hi: T,
    /// Largest disturbance tried before giving up.
    pub cap_pu: T,
    pub sim: SimOptions<T>,
}

impl<T: Scalar> Default for MarginSpec<T> {
    fn default() -> Self {
        Self {
            delta_f_max_pu: T::lit(0.01),
            tol_pu: T::lit(1e-4),
            dp_hi: T::lit(0.05),
            cap_pu: T::one(),
            sim: SimOptions::default(),
        }
    }
}

impl<T: Scalar> MarginSpec<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(FncError::InvalidParameter(m));
        if !(self.delta_f_max_pu > T::zero()) {
            return bad(format!("delta_f_max = {} must be > 0", self.delta_f_max_pu));
        }
        if !(self.tol_pu > T::zero()) {
            return bad(format!("tol = {} must be > 0", self.tol_pu));
        }
        if !(self.dp_hi > self.tol_pu) {
            return bad(format!("dp_hi = {} must exceed tol", self.dp_hi));
        }
        if !(self.cap_pu >= self.dp_hi) || !self.cap_pu.is_finite() {
            return bad(format!("cap = {} must be >= dp_hi", self.cap_pu));
        }
        self.sim.validate()
    }
}

/// Result of [`margin_bisect`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarginOutcome<T> {
    pub margin_pu: T,
    /// Even the cap did not violate the limit; `margin_pu` is the cap.
    pub unbounded: bool,
    /// Number of simulations run.
    pub evaluations: usize,
}

/// Nadir depth (non-negative) after a step loss of `dp`.
pub fn nadir_depth<T: Scalar>(
    model: &SystemModel<T>,
    scenario: &CommitmentScenario<T>,
    dp: T,
    sim: &SimOptions<T>,
) -> Result<T> {
    let trace = simulate_response(model, scenario, dp, sim)?;
    Ok(find_nadir(&trace)?.magnitude())
}

/// Largest step loss, within `tol_pu`, whose nadir stays within the limit.
///
/// The upper bracket is doubled until the limit is violated. The bracket is
/// then narrowed with interpolated probe pairs placed a fraction of `tol`
/// either side of the predicted crossing, falling back to halving whenever a
/// pair fails to halve the bracket. The safe end of the final bracket is
/// returned, so `margin + tol` always violates and `margin` never does.
pub fn margin_bisect<T: Scalar>(
    model: &SystemModel<T>,
    scenario: &CommitmentScenario<T>,
    spec: &MarginSpec<T>,
) -> Result<MarginOutcome<T>> {
    spec.validate()?;
    let limit = spec.delta_f_max_pu;
    let mut evaluations = 0usize;
    let mut depth = |dp: T| {
        evaluations += 1;
        nadir_depth(model, scenario, dp, &spec.sim)
    };
    let non_monotone = |dp_lo: T, nadir_lo: T, dp_hi: T, nadir_hi: T| FncError::MonotonicityViolated {
        dp_lo: dp_lo.as_f64(),
        nadir_lo: nadir_lo.as_f64(),
        dp_hi: dp_hi.as_f64(),
        nadir_hi: nadir_hi.as_f64(),
    };

    let (mut lo, mut d_lo) = (T::zero(), T::zero());
    let mut hi = spec.dp_hi;
    let mut d_hi = depth(hi)?;
    while d_hi <= limit {
        if d_hi < d_lo {
            return Err(non_monotone(lo, d_lo, hi, d_hi));
        }
        if hi >= spec.cap_pu {
            return Ok(MarginOutcome {
                margin_pu: spec.cap_pu,
                unbounded: true,
                evaluations,
            });
        }
        lo = hi;
        d_lo = d_hi;
        hi = (hi + hi).min(spec.cap_pu);
        d_hi = depth(hi)?;
    }
    if d_hi < d_lo {
        return Err(non_monotone(lo, d_lo, hi, d_hi));
    }

    let tol = spec.tol_pu;
    let offset = T::lit(0.4) * tol;
    let half = T::lit(0.5);
    while lo + tol < hi {
        let width = hi - lo;
        let guess = if d_hi > d_lo {
            lo + (limit - d_lo) * width / (d_hi - d_lo)
        } else {
            lo + half * width
        };
        for probe in [guess - offset, guess + offset] {
            if !(lo + tol < hi) {
                break;
            }
            let margin_in = width * T::lit(1e-3);
            let x = probe.max(lo + margin_in).min(hi - margin_in);
            let d = depth(x)?;
            if d < d_lo || d > d_hi {
                return Err(non_monotone(lo, d_lo, x, d));
            }
            if d <= limit {
                lo = x;
                d_lo = d;
            } else {
                hi = x;
                d_hi = d;
            }
        }
        if lo + tol < hi && hi - lo > half * width {
            let x = lo + half * (hi - lo);
            let d = depth(x)?;
            if d < d_lo || d > d_hi {
                return Err(non_monotone(lo, d_lo, x, d));
            }
            if d <= limit {
                lo = x;
                d_lo = d;
            } else {
                hi = x;
                d_hi = d;
            }
        }
    }
    Ok(MarginOutcome {
        margin_pu: lo,
        unbounded: false,
        evaluations,
    })
}

/// Outcome of [`verify_monotone`].
#[derive(Clone, Debug, PartialEq)]
pub struct MonotoneReport<T> {
    pub monotone: bool,
    /// First pair of grid points `(dp_a, dp_b)` where the depth decreased.
    pub first_violation: Option<(T, T)>,
    pub depths: Vec<T>,
}

/// Simulate every point of an ascending disturbance grid and check that the
/// nadir depth never decreases.
pub fn verify_monotone<T: Scalar>(
    model: &SystemModel<T>,
    scenario: &CommitmentScenario<T>,
    dp_grid: &[T],
    sim: &SimOptions<T>,
) -> Result<MonotoneReport<T>> {
    if dp_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(FncError::InvalidParameter("disturbance grid must ascend".into()));
    }
    let depths = dp_grid
        .iter()
        .map(|&dp| nadir_depth(model, scenario, dp, sim))
        .collect::<Result<Vec<_>>>()?;
    let first_violation = depths
        .windows(2)
        .position(|w| w[1] < w[0])
        .map(|k| (dp_grid[k], dp_grid[k + 1]));
    Ok(MonotoneReport {
        monotone: first_violation.is_none(),
        first_violation,
        depths,
    })
}
