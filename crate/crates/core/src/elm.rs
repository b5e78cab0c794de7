//! Random sigmoid embedding of unit parameters and the decision-scaled
//! feature vector.
//!
//! Each unit's raw parameter vector is min/max scaled, passed through a fixed
//! random layer `σ(a·φ + b)`, and the embedding is concatenated with the raw
//! parameters. The block is then multiplied by the unit's decision variable
//! and its capacity (TG) or output (RES) over the base power, and the total
//! inertia is appended. For fixed weights the result is affine in
//! `(x_i, x_j·P_j)`.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FncError, Result};
use crate::scalar::Scalar;
use crate::sfr::{system_inertia, CommitmentScenario, SystemModel};

/// Number of raw TG parameters: `(T_r, T_g, T_c, F, R, H)`.
pub const TG_PARAMS: usize = 6;
/// Number of raw RES parameters: `(T_v, R_v, H_v)`.
pub const RES_PARAMS: usize = 3;

pub const TG_PARAM_NAMES: [&str; TG_PARAMS] =
    ["t_reheat", "t_governor", "t_turbine", "hp_fraction", "droop", "inertia"];
pub const RES_PARAM_NAMES: [&str; RES_PARAMS] = ["t_converter", "droop", "inertia"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnitKind {
    Tg,
    Res,
}

/// Per-column affine map of raw parameters onto `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamScaler<T> {
    pub tg_min: Vec<T>,
    pub tg_max: Vec<T>,
    pub res_min: Vec<T>,
    pub res_max: Vec<T>,
}

fn column_range<T: Scalar>(rows: impl Iterator<Item = Vec<T>>, width: usize) -> (Vec<T>, Vec<T>) {
    let mut lo = vec![T::infinity(); width];
    let mut hi = vec![T::neg_infinity(); width];
    for row in rows {
        for (c, v) in row.into_iter().enumerate() {
            lo[c] = lo[c].min(v);
            hi[c] = hi[c].max(v);
        }
    }
    let half = T::lit(0.5);
    for c in 0..width {
        if !lo[c].is_finite() {
            lo[c] = T::zero();
            hi[c] = T::one();
        } else if hi[c] - lo[c] <= T::epsilon() * lo[c].abs().max(T::one()) {
            // constant column: centre it at 0.5
            lo[c] -= half;
            hi[c] += half;
        }
    }
    (lo, hi)
}

impl<T: Scalar> ParamScaler<T> {
    pub fn from_model(model: &SystemModel<T>) -> Self {
        let (tg_min, tg_max) = column_range(model.tgs().iter().map(|t| t.phi().to_vec()), TG_PARAMS);
        let (res_min, res_max) =
            column_range(model.ress().iter().map(|r| r.phi().to_vec()), RES_PARAMS);
        Self {
            tg_min,
            tg_max,
            res_min,
            res_max,
        }
    }

    pub fn scale(&self, phi: &[T], kind: UnitKind) -> Vec<T> {
        let (lo, hi) = match kind {
            UnitKind::Tg => (&self.tg_min, &self.tg_max),
            UnitKind::Res => (&self.res_min, &self.res_max),
        };
        phi.iter()
            .zip(lo.iter().zip(hi))
            .map(|(&v, (&l, &h))| (v - l) / (h - l))
            .collect()
    }

    fn validate(&self) -> Result<()> {
        let ok = |lo: &[T], hi: &[T], n: usize| {
            lo.len() == n
                && hi.len() == n
                && lo.iter().zip(hi).all(|(&l, &h)| l.is_finite() && h.is_finite() && l < h)
        };
        if ok(&self.tg_min, &self.tg_max, TG_PARAMS) && ok(&self.res_min, &self.res_max, RES_PARAMS) {
            Ok(())
        } else {
            Err(FncError::InvalidParameter(
                "scaler needs finite min < max for every column".into(),
            ))
        }
    }
}

/// Fixed random hidden layer, one weight set for TGs and one for RESs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElmWeights<T> {
    n_hidden: usize,
    seed: u64,
    /// `n_hidden × 6`, row-major.
    a_g: Vec<T>,
    b_g: Vec<T>,
    /// `n_hidden × 3`, row-major.
    a_v: Vec<T>,
    b_v: Vec<T>,
    scaler: ParamScaler<T>,
}

/// Draw weights i.i.d. uniform on `[-1, 1]` from a ChaCha stream seeded by
/// `seed`, and fit the scaler to the model's parameter columns.
pub fn init_weights<T: Scalar>(
    n_hidden: usize,
    seed: u64,
    model: &SystemModel<T>,
) -> Result<ElmWeights<T>> {
    if n_hidden == 0 {
        return Err(FncError::InvalidParameter("n_hidden must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |n: usize| -> Vec<T> {
        (0..n)
            .map(|_| T::lit(rng.gen_range(-1.0f64..=1.0)))
            .collect()
    };
    let a_g = draw(n_hidden * TG_PARAMS);
    let b_g = draw(n_hidden);
    let a_v = draw(n_hidden * RES_PARAMS);
    let b_v = draw(n_hidden);
    Ok(ElmWeights {
        n_hidden,
        seed,
        a_g,
        b_g,
        a_v,
        b_v,
        scaler: ParamScaler::from_model(model),
    })
}

#[inline]
fn sigmoid<T: Scalar>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

impl<T: Scalar> ElmWeights<T> {
    /// Assemble from stored parts, checking every dimension.
    pub fn from_parts(
        n_hidden: usize,
        seed: u64,
        a_g: Vec<T>,
        b_g: Vec<T>,
        a_v: Vec<T>,
        b_v: Vec<T>,
        scaler: ParamScaler<T>,
    ) -> Result<Self> {
        if n_hidden == 0 {
            return Err(FncError::InvalidParameter("n_hidden must be >= 1".into()));
        }
        for (v, n) in [
            (&a_g, n_hidden * TG_PARAMS),
            (&b_g, n_hidden),
            (&a_v, n_hidden * RES_PARAMS),
            (&b_v, n_hidden),
        ] {
            if v.len() != n {
                return Err(FncError::DimensionMismatch {
                    expected: n,
                    found: v.len(),
                });
            }
            if !v.iter().all(|x| x.is_finite()) {
                return Err(FncError::InvalidParameter("non-finite weight".into()));
            }
        }
        scaler.validate()?;
        Ok(Self {
            n_hidden,
            seed,
            a_g,
            b_g,
            a_v,
            b_v,
            scaler,
        })
    }

    pub fn n_hidden(&self) -> usize {
        self.n_hidden
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn a_g(&self) -> &[T] {
        &self.a_g
    }

    pub fn b_g(&self) -> &[T] {
        &self.b_g
    }

    pub fn a_v(&self) -> &[T] {
        &self.a_v
    }

    pub fn b_v(&self) -> &[T] {
        &self.b_v
    }

    pub fn scaler(&self) -> &ParamScaler<T> {
        &self.scaler
    }

    /// Hidden-layer output `σ(a·scale(φ) + b)` for one unit; every entry lies
    /// in `(0, 1)`.
    pub fn embed_unit(&self, phi: &[T], kind: UnitKind) -> Result<Vec<T>> {
        let (a, b, width) = match kind {
            UnitKind::Tg => (&self.a_g, &self.b_g, TG_PARAMS),
            UnitKind::Res => (&self.a_v, &self.b_v, RES_PARAMS),
        };
        if phi.len() != width {
            return Err(FncError::DimensionMismatch {
                expected: width,
                found: phi.len(),
            });
        }
        let scaled = self.scaler.scale(phi, kind);
        Ok(a
            .chunks_exact(width)
            .zip(b)
            .map(|(row, &bias)| sigmoid(crate::scalar::dot(row, &scaled) + bias))
            .collect())
    }

    pub fn layout(&self, model: &SystemModel<T>) -> FeatureLayout {
        FeatureLayout {
            n_tg: model.n_tg(),
            n_res: model.n_res(),
            n_hidden: self.n_hidden,
        }
    }
}

/// Position of every block in a feature vector:
/// per-TG `[Ψ', Φ']`, per-RES `[Ψ', Φ']`, then `H`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FeatureLayout {
    pub n_tg: usize,
    pub n_res: usize,
    pub n_hidden: usize,
}

impl FeatureLayout {
    pub fn tg_width(&self) -> usize {
        self.n_hidden + TG_PARAMS
    }

    pub fn res_width(&self) -> usize {
        self.n_hidden + RES_PARAMS
    }

    pub fn dim(&self) -> usize {
        self.n_tg * self.tg_width() + self.n_res * self.res_width() + 1
    }

    pub fn tg_block(&self, i: usize) -> Range<usize> {
        let s = i * self.tg_width();
        s..s + self.tg_width()
    }

    pub fn res_block(&self, j: usize) -> Range<usize> {
        let s = self.n_tg * self.tg_width() + j * self.res_width();
        s..s + self.res_width()
    }

    pub fn inertia_index(&self) -> usize {
        self.dim() - 1
    }
}

/// Input of the min-of-affine layer.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector<T> {
    pub values: Vec<T>,
}

impl<T> FeatureVector<T> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Feature vector of one commitment scenario.
pub fn feature_vector<T: Scalar>(
    weights: &ElmWeights<T>,
    model: &SystemModel<T>,
    scenario: &CommitmentScenario<T>,
) -> Result<FeatureVector<T>> {
    if scenario.tg_on().len() != model.n_tg() {
        return Err(FncError::DimensionMismatch {
            expected: model.n_tg(),
            found: scenario.tg_on().len(),
        });
    }
    if scenario.res_participates().len() != model.n_res() {
        return Err(FncError::DimensionMismatch {
            expected: model.n_res(),
            found: scenario.res_participates().len(),
        });
    }
    let layout = weights.layout(model);
    let s_base = model.s_base_mva();
    let mut values = vec![T::zero(); layout.dim()];
    for (i, tg) in model.tgs().iter().enumerate() {
        if !scenario.tg_on()[i] {
            continue;
        }
        let w = tg.capacity_mva / s_base;
        let phi = tg.phi();
        let psi = weights.embed_unit(&phi, UnitKind::Tg)?;
        let block = &mut values[layout.tg_block(i)];
        for (dst, &src) in block.iter_mut().zip(psi.iter().chain(phi.iter())) {
            *dst = w * src;
        }
    }
    for (j, res) in model.ress().iter().enumerate() {
        if !scenario.res_participates()[j] {
            continue;
        }
        let w = scenario.res_power_mw()[j] / s_base;
        let phi = res.phi();
        let psi = weights.embed_unit(&phi, UnitKind::Res)?;
        let block = &mut values[layout.res_block(j)];
        for (dst, &src) in block.iter_mut().zip(psi.iter().chain(phi.iter())) {
            *dst = w * src;
        }
    }
    values[layout.inertia_index()] = system_inertia(model, scenario);
    Ok(FeatureVector { values })
}

/// The scenario-to-feature map written as
/// `z = constant + Σ_i x_i·tg_dirs[i] + Σ_j (x_j·P_j/S_base)·res_dirs[j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap<T> {
    pub constant: Vec<T>,
    pub tg_dirs: Vec<Vec<T>>,
    /// Per pu of participating RES output.
    pub res_dirs: Vec<Vec<T>>,
}

impl<T: Scalar> FeatureMap<T> {
    pub fn new(weights: &ElmWeights<T>, model: &SystemModel<T>) -> Result<Self> {
        let layout = weights.layout(model);
        let dim = layout.dim();
        let hi = layout.inertia_index();
        let s_base = model.s_base_mva();

        let mut constant = vec![T::zero(); dim];
        constant[hi] = model
            .others()
            .iter()
            .map(|e| e.inertia * e.capacity_mva)
            .sum::<T>()
            / s_base;

        let mut tg_dirs = Vec::with_capacity(model.n_tg());
        for (i, tg) in model.tgs().iter().enumerate() {
            let w = tg.capacity_mva / s_base;
            let phi = tg.phi();
            let psi = weights.embed_unit(&phi, UnitKind::Tg)?;
            let mut dir = vec![T::zero(); dim];
            for (dst, &src) in dir[layout.tg_block(i)].iter_mut().zip(psi.iter().chain(phi.iter())) {
                *dst = w * src;
            }
            dir[hi] = tg.inertia * w;
            tg_dirs.push(dir);
        }

        let mut res_dirs = Vec::with_capacity(model.n_res());
        for (j, res) in model.ress().iter().enumerate() {
            let phi = res.phi();
            let psi = weights.embed_unit(&phi, UnitKind::Res)?;
            let mut dir = vec![T::zero(); dim];
            for (dst, &src) in dir[layout.res_block(j)].iter_mut().zip(psi.iter().chain(phi.iter())) {
                *dst = src;
            }
            dir[hi] = res.inertia;
            res_dirs.push(dir);
        }
        Ok(Self {
            constant,
            tg_dirs,
            res_dirs,
        })
    }

    /// Decision coordinates of a scenario: `x_i` per TG and `x_j·P_j/S_base`
    /// per RES.
    pub fn decisions(model: &SystemModel<T>, scenario: &CommitmentScenario<T>) -> (Vec<T>, Vec<T>) {
        let x_tg = scenario
            .tg_on()
            .iter()
            .map(|&on| if on { T::one() } else { T::zero() })
            .collect();
        let res = scenario
            .res_participates()
            .iter()
            .zip(scenario.res_power_mw())
            .map(|(&part, &p)| if part { p / model.s_base_mva() } else { T::zero() })
            .collect();
        (x_tg, res)
    }

    pub fn apply(&self, x_tg: &[T], res_pu: &[T]) -> Vec<T> {
        let mut z = self.constant.clone();
        for (dir, &x) in self.tg_dirs.iter().zip(x_tg) {
            if x != T::zero() {
                for (zi, &d) in z.iter_mut().zip(dir) {
                    *zi += x * d;
                }
            }
        }
        for (dir, &u) in self.res_dirs.iter().zip(res_pu) {
            if u != T::zero() {
                for (zi, &d) in z.iter_mut().zip(dir) {
                    *zi += u * d;
                }
            }
        }
        z
    }
}
