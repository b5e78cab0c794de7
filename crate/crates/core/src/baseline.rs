//! Two-step fitting baseline.
//!
//! Step one replaces each scenario's full-order response by its second-order
//! aggregate and takes the closed-form security margin. Step two fits a
//! many-segment min-of-affine function of the decision-scaled raw unit
//! parameters to those margins by least absolute error, with no one-sided
//! constraint. Both the reduction error and the fitting error end up in its
//! predictions of the full-order margin.

use serde::{Deserialize, Serialize};

use crate::elm::{RES_PARAMS, TG_PARAMS};
use crate::error::{FncError, Result};
use crate::pwl::{fit_min_affine, FitKind, PwlOptions, Segment};
use crate::reduced::{aggregate, reduced_margin};
use crate::scalar::Scalar;
use crate::sfr::{system_inertia, CommitmentScenario, SystemModel};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineOptions<T> {
    pub pwl: PwlOptions<T>,
    pub delta_f_max_pu: T,
    /// Step for the simulated fallback when the aggregate is overdamped.
    pub dt: T,
}

impl<T: Scalar> Default for BaselineOptions<T> {
    fn default() -> Self {
        Self {
            pwl: PwlOptions {
                segments: 40,
                seed: 0,
                max_iters: 30,
                restarts: 3,
                coef_bound: T::lit(1e3),
            },
            delta_f_max_pu: T::lit(0.01),
            dt: T::lit(1e-3),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel<T> {
    segments: Vec<Segment<T>>,
    n_tg: usize,
    n_res: usize,
}

impl<T: Scalar> BaselineModel<T> {
    pub fn segments(&self) -> &[Segment<T>] {
        &self.segments
    }
}

/// Decision-scaled raw parameters: per TG `x_i (S_i/S_base) Φ_i`, per RES
/// `x_j (P_j/S_base) Φ_j`, then total inertia.
pub fn raw_features<T: Scalar>(model: &SystemModel<T>, scenario: &CommitmentScenario<T>) -> Vec<T> {
    let s_base = model.s_base_mva();
    let mut z = Vec::with_capacity(model.n_tg() * TG_PARAMS + model.n_res() * RES_PARAMS + 1);
    for (tg, &on) in model.tgs().iter().zip(scenario.tg_on()) {
        let w = if on { tg.capacity_mva / s_base } else { T::zero() };
        z.extend(tg.phi().iter().map(|&p| w * p));
    }
    for ((res, &part), &p) in model
        .ress()
        .iter()
        .zip(scenario.res_participates())
        .zip(scenario.res_power_mw())
    {
        let w = if part { p / s_base } else { T::zero() };
        z.extend(res.phi().iter().map(|&v| w * v));
    }
    z.push(system_inertia(model, scenario));
    z
}

/// Step one alone: the reduced-model margin of every scenario.
pub fn analytic_targets<T: Scalar>(
    model: &SystemModel<T>,
    scenarios: &[CommitmentScenario<T>],
    delta_f_max_pu: T,
    dt: T,
) -> Result<Vec<T>> {
    scenarios
        .iter()
        .map(|s| reduced_margin(&aggregate(model, s)?, delta_f_max_pu, dt))
        .collect()
}

pub fn train_baseline<T: Scalar>(
    model: &SystemModel<T>,
    scenarios: &[CommitmentScenario<T>],
    opts: &BaselineOptions<T>,
) -> Result<BaselineModel<T>> {
    if scenarios.is_empty() {
        return Err(FncError::EmptyDataset);
    }
    let targets = analytic_targets(model, scenarios, opts.delta_f_max_pu, opts.dt)?;
    let features: Vec<Vec<T>> = scenarios.iter().map(|s| raw_features(model, s)).collect();
    let (segments, _, _) = fit_min_affine(FitKind::LeastAbsolute, &features, &targets, &opts.pwl)?;
    Ok(BaselineModel {
        segments,
        n_tg: model.n_tg(),
        n_res: model.n_res(),
    })
}

pub fn predict_baseline<T: Scalar>(
    bm: &BaselineModel<T>,
    model: &SystemModel<T>,
    scenario: &CommitmentScenario<T>,
) -> Result<T> {
    if model.n_tg() != bm.n_tg || model.n_res() != bm.n_res {
        return Err(FncError::DimensionMismatch {
            expected: bm.n_tg + bm.n_res,
            found: model.n_tg() + model.n_res(),
        });
    }
    let z = raw_features(model, scenario);
    Ok(bm
        .segments
        .iter()
        .map(|s| s.value(&z))
        .fold(T::infinity(), T::min))
}
