//! Per-outage linear frequency nadir constraints.
//!
//! For fixed hidden weights the feature vector is affine in the decisions,
//! so each segment `c_l·z + h_l` becomes an affine function of `x_i` and
//! `x_j·P_j`. Requiring the minimum over segments to cover the tripped
//! unit's output is the same as requiring every segment to cover it, which
//! gives one linear row per segment and no auxiliary binaries.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::elm::{ElmWeights, FeatureMap};
use crate::error::{FncError, Result};
use crate::margin::{margin_bisect, MarginSpec};
use crate::pwl::PwlModel;
use crate::scalar::{dot, Scalar};
use crate::sfr::{CommitmentScenario, SystemModel};

/// `constant + Σ tg_coefs[k]·x_k + Σ res_coefs[j]·(x_j P_j / S_base)`, in pu.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintRow<T> {
    pub tg_coefs: Vec<T>,
    pub res_coefs: Vec<T>,
    pub constant: T,
}

impl<T: Scalar> ConstraintRow<T> {
    pub fn value(&self, x_tg: &[T], res_pu: &[T]) -> T {
        self.constant + dot(&self.tg_coefs, x_tg) + dot(&self.res_coefs, res_pu)
    }
}

/// Rows that must all be at least `P_i` (pu) when unit `contingency_tg`
/// trips.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearConstraintBlock<T> {
    pub contingency_tg: usize,
    pub rows: Vec<ConstraintRow<T>>,
}

impl<T: Scalar> LinearConstraintBlock<T> {
    /// Smallest row value, i.e. the predicted post-outage margin.
    pub fn margin(&self, x_tg: &[T], res_pu: &[T]) -> T {
        self.rows
            .iter()
            .map(|r| r.value(x_tg, res_pu))
            .fold(T::infinity(), T::min)
    }

    pub fn satisfied(&self, x_tg: &[T], res_pu: &[T], p_pu: T) -> bool {
        self.rows.iter().all(|r| r.value(x_tg, res_pu) >= p_pu)
    }
}

/// One block per TG, with that TG's own decision substituted by zero.
pub fn emit_constraints<T: Scalar>(
    pwl: &PwlModel<T>,
    weights: &ElmWeights<T>,
    model: &SystemModel<T>,
) -> Result<Vec<LinearConstraintBlock<T>>> {
    let map = FeatureMap::new(weights, model)?;
    if map.constant.len() != pwl.feature_dim() {
        return Err(FncError::DimensionMismatch {
            expected: pwl.feature_dim(),
            found: map.constant.len(),
        });
    }
    let base: Vec<ConstraintRow<T>> = pwl
        .segments()
        .iter()
        .map(|s| ConstraintRow {
            tg_coefs: map.tg_dirs.iter().map(|d| dot(&s.c, d)).collect(),
            res_coefs: map.res_dirs.iter().map(|d| dot(&s.c, d)).collect(),
            constant: dot(&s.c, &map.constant) + s.h,
        })
        .collect();
    Ok((0..model.n_tg())
        .into_par_iter()
        .map(|i| LinearConstraintBlock {
            contingency_tg: i,
            rows: base
                .iter()
                .map(|r| {
                    let mut r = r.clone();
                    r.tg_coefs[i] = T::zero();
                    r
                })
                .collect(),
        })
        .collect())
}

/// Scenario plus the scheduled output of every TG, in MW.
#[derive(Clone, Debug, PartialEq)]
pub struct AuditCase<T> {
    pub scenario: CommitmentScenario<T>,
    pub dispatch_mw: Vec<T>,
}

/// Split the load net of renewable output over the online TGs in
/// proportion to capacity, capped at capacity.
pub fn proportional_dispatch<T: Scalar>(
    model: &SystemModel<T>,
    scenario: &CommitmentScenario<T>,
    load_mw: T,
) -> Vec<T> {
    let net = (load_mw - scenario.res_power_mw().iter().copied().sum::<T>()).max(T::zero());
    let online: T = model
        .tgs()
        .iter()
        .zip(scenario.tg_on())
        .filter(|(_, &on)| on)
        .map(|(t, _)| t.capacity_mva)
        .sum();
    let share = if online > T::zero() { (net / online).min(T::one()) } else { T::zero() };
    model
        .tgs()
        .iter()
        .zip(scenario.tg_on())
        .map(|(t, &on)| if on { share * t.capacity_mva } else { T::zero() })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AuditReport {
    /// Scenario and outage pairs checked.
    pub checks: usize,
    /// Pairs whose constraint block is satisfied.
    pub satisfied: usize,
    /// Block satisfied although the simulated margin does not cover `P_i`.
    pub false_safe: usize,
    /// Block violated although the simulated margin covers `P_i`.
    pub conservative: usize,
    /// Pairs whose simulated margin could not be determined.
    pub skipped: usize,
}

impl AuditReport {
    pub fn false_safe_rate(&self) -> f64 {
        rate(self.false_safe, self.checks)
    }

    pub fn conservative_rate(&self) -> f64 {
        rate(self.conservative, self.checks)
    }
}

fn rate(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

/// Compare each block against the simulated post-outage margin for every
/// online unit of every case.
pub fn audit_constraints<T: Scalar>(
    blocks: &[LinearConstraintBlock<T>],
    model: &SystemModel<T>,
    cases: &[AuditCase<T>],
    spec: &MarginSpec<T>,
) -> Result<AuditReport> {
    if blocks.len() != model.n_tg() {
        return Err(FncError::DimensionMismatch {
            expected: model.n_tg(),
            found: blocks.len(),
        });
    }
    if let Some(c) = cases.iter().find(|c| c.dispatch_mw.len() != model.n_tg()) {
        return Err(FncError::DimensionMismatch {
            expected: model.n_tg(),
            found: c.dispatch_mw.len(),
        });
    }
    let pairs: Vec<(usize, usize)> = cases
        .iter()
        .enumerate()
        .flat_map(|(k, c)| {
            c.scenario
                .tg_on()
                .iter()
                .enumerate()
                .filter(|(_, &on)| on)
                .map(move |(i, _)| (k, i))
        })
        .collect();
    let s_base = model.s_base_mva();
    let outcomes: Vec<Option<(bool, bool)>> = pairs
        .par_iter()
        .map(|&(k, i)| {
            let case = &cases[k];
            let post = case.scenario.with_tg(i, false);
            let p_pu = case.dispatch_mw[i] / s_base;
            let (x, u) = FeatureMap::decisions(model, &post);
            let predicted = blocks[i].satisfied(&x, &u, p_pu);
            let truth = margin_bisect(model, &post, spec).ok()?;
            Some((predicted, truth.margin_pu >= p_pu))
        })
        .collect();
    let mut report = AuditReport {
        checks: pairs.len(),
        ..AuditReport::default()
    };
    for o in outcomes {
        match o {
            None => report.skipped += 1,
            Some((pred, truth)) => {
                report.satisfied += usize::from(pred);
                report.false_safe += usize::from(pred && !truth);
                report.conservative += usize::from(!pred && truth);
            }
        }
    }
    Ok(report)
}

fn term(out: &mut String, coef: f64, var: &str) {
    if out.is_empty() {
        let _ = write!(out, "{coef}*{var}");
    } else if coef < 0.0 {
        let _ = write!(out, " - {}*{var}", -coef);
    } else {
        let _ = write!(out, " + {coef}*{var}");
    }
}

/// Human-readable export in MW. Variables are `xg_k` (TG commitment, 0/1)
/// and `pv_j` (RES output in MW while participating, 0 otherwise).
pub fn render_constraints<T: Scalar>(blocks: &[LinearConstraintBlock<T>], model: &SystemModel<T>) -> String {
    let sb = model.s_base_mva().as_f64();
    let mut out = String::new();
    let _ = writeln!(out, "# frequency nadir constraints, one block per single-TG outage");
    let _ = writeln!(out, "# every row of block i must be >= P_i, the scheduled output of TG i in MW");
    let _ = writeln!(out, "# xg_k: commitment of TG k (0/1)");
    let _ = writeln!(out, "# pv_j: output of RES j in MW when it participates in regulation, else 0");
    let _ = writeln!(
        out,
        "# block i sets xg_i = 0 everywhere, including in the system inertia feature"
    );
    let _ = writeln!(out, "# s_base_mva = {sb}");
    let _ = writeln!(out, "# segments = {}", blocks.first().map_or(0, |b| b.rows.len()));
    for b in blocks {
        let i = b.contingency_tg;
        let _ = writeln!(out);
        let _ = writeln!(out, "[contingency {i}]");
        for r in &b.rows {
            let mut line = String::new();
            for (k, &a) in r.tg_coefs.iter().enumerate() {
                if k != i {
                    term(&mut line, a.as_f64() * sb, &format!("xg_{k}"));
                }
            }
            for (j, &a) in r.res_coefs.iter().enumerate() {
                term(&mut line, a.as_f64(), &format!("pv_{j}"));
            }
            let c = r.constant.as_f64() * sb;
            if line.is_empty() {
                let _ = write!(line, "{c}");
            } else if c < 0.0 {
                let _ = write!(line, " - {}", -c);
            } else {
                let _ = write!(line, " + {c}");
            }
            let _ = writeln!(out, "{line} >= P_{i}");
        }
    }
    out
}

/// Same content as [`render_constraints`], one row per line:
/// `contingency,row,constant_mw,xg_0..,pv_0..`.
pub fn render_constraints_csv<T: Scalar>(blocks: &[LinearConstraintBlock<T>], model: &SystemModel<T>) -> String {
    let sb = model.s_base_mva().as_f64();
    let mut out = String::from("contingency,row,constant_mw");
    for k in 0..model.n_tg() {
        let _ = write!(out, ",xg_{k}");
    }
    for j in 0..model.n_res() {
        let _ = write!(out, ",pv_{j}");
    }
    out.push('\n');
    for b in blocks {
        for (l, r) in b.rows.iter().enumerate() {
            let _ = write!(out, "{},{},{}", b.contingency_tg, l, r.constant.as_f64() * sb);
            for &a in &r.tg_coefs {
                let _ = write!(out, ",{}", a.as_f64() * sb);
            }
            for &a in &r.res_coefs {
                let _ = write!(out, ",{}", a.as_f64());
            }
            out.push('\n');
        }
    }
    out
}
