//! Plant description and full-order multi-machine frequency response.
//!
//! The centralized model has a single swing equation
//! `2H dΔf/dt = ΣΔP_m + ΣΔP_v − D·Δf − ΔP`. Each online traditional
//! generator feeds it through droop, governor lag, turbine lag and a reheater
//! lead-lag, with a ramp deadband on the governor input. Each participating
//! renewable feeds it through droop and a first-order converter lag. All
//! quantities are per unit on `s_base_mva`, with the load damping held
//! constant in that base.

use serde::{Deserialize, Serialize};

use crate::error::{FncError, Result};
use crate::ode::Rk4;
use crate::scalar::Scalar;

/// Renewables producing below this fraction of installed capacity neither
/// regulate frequency nor contribute inertia.
pub const PARTICIPATION_THRESHOLD: f64 = 0.3;

/// Traditional generator parameters. Time constants in seconds, droop in pu
/// frequency per pu power on machine base, inertia in seconds on machine base.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TgParams<T> {
    pub t_reheat: T,
    pub t_governor: T,
    pub t_turbine: T,
    pub hp_fraction: T,
    pub droop: T,
    pub inertia: T,
    pub capacity_mva: T,
    /// Governor deadband half-width in pu frequency.
    pub deadband: T,
}

impl<T: Scalar> TgParams<T> {
    /// Raw parameter vector in the fixed order
    /// `(T_r, T_g, T_c, F, R, H)`.
    pub fn phi(&self) -> [T; 6] {
        [
            self.t_reheat,
            self.t_governor,
            self.t_turbine,
            self.hp_fraction,
            self.droop,
            self.inertia,
        ]
    }

    fn validate(&self, idx: usize) -> Result<()> {
        let bad = |what: &str| Err(FncError::InvalidParameter(format!("tg[{idx}]: {what}")));
        let all_finite = self.phi().iter().all(|v| v.is_finite())
            && self.capacity_mva.is_finite()
            && self.deadband.is_finite();
        if !all_finite {
            return bad("non-finite parameter");
        }
        if self.t_reheat <= T::zero() || self.t_governor <= T::zero() || self.t_turbine <= T::zero()
        {
            return bad("time constants must be > 0");
        }
        if self.hp_fraction <= T::zero() || self.hp_fraction >= T::one() {
            return bad("hp_fraction must lie in (0, 1)");
        }
        if self.droop <= T::zero() {
            return bad("droop must be > 0");
        }
        if self.inertia < T::zero() {
            return bad("inertia must be >= 0");
        }
        if self.capacity_mva <= T::zero() {
            return bad("capacity_mva must be > 0");
        }
        if self.deadband < T::zero() {
            return bad("deadband must be >= 0");
        }
        Ok(())
    }
}

/// Converter-interfaced renewable parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResParams<T> {
    pub t_converter: T,
    pub droop: T,
    /// Virtual inertia in seconds.
    pub inertia: T,
    pub capacity_mw: T,
}

impl<T: Scalar> ResParams<T> {
    /// Raw parameter vector in the fixed order `(T_v, R_v, H_v)`.
    pub fn phi(&self) -> [T; 3] {
        [self.t_converter, self.droop, self.inertia]
    }

    fn validate(&self, idx: usize) -> Result<()> {
        let bad = |what: &str| Err(FncError::InvalidParameter(format!("res[{idx}]: {what}")));
        if !(self.phi().iter().all(|v| v.is_finite()) && self.capacity_mw.is_finite()) {
            return bad("non-finite parameter");
        }
        if self.t_converter <= T::zero() {
            return bad("t_converter must be > 0");
        }
        if self.droop <= T::zero() {
            return bad("droop must be > 0");
        }
        if self.inertia < T::zero() {
            return bad("inertia must be >= 0");
        }
        if self.capacity_mw <= T::zero() {
            return bad("capacity_mw must be > 0");
        }
        Ok(())
    }
}

/// Motors, synchronous condensers and similar devices that only add inertia.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OtherInertiaDevice<T> {
    pub capacity_mva: T,
    pub inertia: T,
}

/// Immutable, validated plant description.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SystemModel<T> {
    tgs: Vec<TgParams<T>>,
    ress: Vec<ResParams<T>>,
    others: Vec<OtherInertiaDevice<T>>,
    damping: T,
    s_base_mva: T,
    f_base_hz: T,
}

/// Validating constructor for [`SystemModel`].
pub fn build_system<T: Scalar>(
    tgs: Vec<TgParams<T>>,
    ress: Vec<ResParams<T>>,
    others: Vec<OtherInertiaDevice<T>>,
    damping: T,
    s_base_mva: T,
    f_base_hz: T,
) -> Result<SystemModel<T>> {
    if tgs.is_empty() {
        return Err(FncError::InvalidParameter(
            "system needs at least one traditional generator".into(),
        ));
    }
    for (i, tg) in tgs.iter().enumerate() {
        tg.validate(i)?;
    }
    for (j, res) in ress.iter().enumerate() {
        res.validate(j)?;
    }
    for (e, dev) in others.iter().enumerate() {
        if !(dev.capacity_mva.is_finite() && dev.capacity_mva > T::zero()) {
            return Err(FncError::InvalidParameter(format!(
                "other[{e}]: capacity_mva must be > 0"
            )));
        }
        if !(dev.inertia.is_finite() && dev.inertia >= T::zero()) {
            return Err(FncError::InvalidParameter(format!(
                "other[{e}]: inertia must be >= 0"
            )));
        }
    }
    if !(damping.is_finite() && damping >= T::zero()) {
        return Err(FncError::InvalidParameter("damping must be >= 0".into()));
    }
    if !(s_base_mva.is_finite() && s_base_mva > T::zero()) {
        return Err(FncError::InvalidParameter("s_base_mva must be > 0".into()));
    }
    if !(f_base_hz.is_finite() && f_base_hz > T::zero()) {
        return Err(FncError::InvalidParameter("f_base_hz must be > 0".into()));
    }
    Ok(SystemModel {
        tgs,
        ress,
        others,
        damping,
        s_base_mva,
        f_base_hz,
    })
}

impl<T: Scalar> SystemModel<T> {
    pub fn tgs(&self) -> &[TgParams<T>] {
        &self.tgs
    }

    pub fn ress(&self) -> &[ResParams<T>] {
        &self.ress
    }

    pub fn others(&self) -> &[OtherInertiaDevice<T>] {
        &self.others
    }

    pub fn damping(&self) -> T {
        self.damping
    }

    pub fn s_base_mva(&self) -> T {
        self.s_base_mva
    }

    pub fn f_base_hz(&self) -> T {
        self.f_base_hz
    }

    pub fn n_tg(&self) -> usize {
        self.tgs.len()
    }

    pub fn n_res(&self) -> usize {
        self.ress.len()
    }

    /// Copy of this model with every field passed through `f` before
    /// re-validation. Used to derive parameter variants in experiments.
    pub fn map_tgs(&self, f: impl Fn(usize, &TgParams<T>) -> TgParams<T>) -> Result<Self> {
        let tgs = self.tgs.iter().enumerate().map(|(i, tg)| f(i, tg)).collect();
        build_system(
            tgs,
            self.ress.clone(),
            self.others.clone(),
            self.damping,
            self.s_base_mva,
            self.f_base_hz,
        )
    }

    /// Copy of this model with extra inertia-only devices appended.
    pub fn with_others(&self, extra: &[OtherInertiaDevice<T>]) -> Result<Self> {
        let mut others = self.others.clone();
        others.extend_from_slice(extra);
        build_system(
            self.tgs.clone(),
            self.ress.clone(),
            others,
            self.damping,
            self.s_base_mva,
            self.f_base_hz,
        )
    }
}

/// Decision-variable snapshot for one scheduling interval.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CommitmentScenario<T> {
    tg_on: Vec<bool>,
    res_participates: Vec<bool>,
    res_power_mw: Vec<T>,
}

impl<T: Scalar> CommitmentScenario<T> {
    /// Validate against `model`: lengths, power bounds and the participation
    /// threshold.
    pub fn new(
        model: &SystemModel<T>,
        tg_on: Vec<bool>,
        res_participates: Vec<bool>,
        res_power_mw: Vec<T>,
    ) -> Result<Self> {
        if tg_on.len() != model.n_tg() {
            return Err(FncError::DimensionMismatch {
                expected: model.n_tg(),
                found: tg_on.len(),
            });
        }
        if res_participates.len() != model.n_res() || res_power_mw.len() != model.n_res() {
            return Err(FncError::DimensionMismatch {
                expected: model.n_res(),
                found: res_participates.len().max(res_power_mw.len()),
            });
        }
        let threshold = T::lit(PARTICIPATION_THRESHOLD);
        for (j, res) in model.ress().iter().enumerate() {
            let p = res_power_mw[j];
            if !(p.is_finite() && p >= T::zero() && p <= res.capacity_mw) {
                return Err(FncError::InvalidParameter(format!(
                    "res[{j}]: power {p} MW outside [0, {}]",
                    res.capacity_mw
                )));
            }
            if res_participates[j] && p < threshold * res.capacity_mw {
                return Err(FncError::InvalidParameter(format!(
                    "res[{j}]: participates below {PARTICIPATION_THRESHOLD} pu of capacity"
                )));
            }
        }
        Ok(Self {
            tg_on,
            res_participates,
            res_power_mw,
        })
    }

    /// Every TG on, every RES at full output and participating.
    pub fn all_on(model: &SystemModel<T>) -> Self {
        Self {
            tg_on: vec![true; model.n_tg()],
            res_participates: vec![true; model.n_res()],
            res_power_mw: model.ress().iter().map(|r| r.capacity_mw).collect(),
        }
    }

    pub fn tg_on(&self) -> &[bool] {
        &self.tg_on
    }

    pub fn res_participates(&self) -> &[bool] {
        &self.res_participates
    }

    pub fn res_power_mw(&self) -> &[T] {
        &self.res_power_mw
    }

    /// Same scenario with TG `i` switched to `on`.
    pub fn with_tg(&self, i: usize, on: bool) -> Self {
        let mut next = self.clone();
        next.tg_on[i] = on;
        next
    }

    pub fn n_online_tg(&self) -> usize {
        self.tg_on.iter().filter(|&&x| x).count()
    }
}

/// Frequency deviation samples on a uniform grid starting at `t = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyTrace<T> {
    pub dt: T,
    pub samples: Vec<T>,
    /// Step disturbance in pu; positive means generation loss.
    pub disturbance_pu: T,
}

impl<T: Scalar> FrequencyTrace<T> {
    pub fn time(&self, k: usize) -> T {
        self.dt * T::from_count(k)
    }
}

/// Integration settings for [`simulate_response`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimOptions<T> {
    pub dt: T,
    pub horizon_s: T,
    /// Stop this long after the first local minimum; `None` runs the full
    /// horizon.
    pub early_stop_s: Option<T>,
}

impl<T: Scalar> Default for SimOptions<T> {
    fn default() -> Self {
        Self {
            dt: T::lit(1e-3),
            horizon_s: T::lit(30.0),
            early_stop_s: Some(T::lit(2.0)),
        }
    }
}

impl<T: Scalar> SimOptions<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > T::zero() && self.dt <= T::lit(0.01)) {
            return Err(FncError::InvalidParameter(format!(
                "dt = {} must lie in (0, 0.01]",
                self.dt
            )));
        }
        if !(self.horizon_s >= T::lit(5.0)) || !self.horizon_s.is_finite() {
            return Err(FncError::InvalidParameter(format!(
                "horizon = {} must be >= 5 s",
                self.horizon_s
            )));
        }
        if let Some(e) = self.early_stop_s {
            if !(e >= T::zero()) {
                return Err(FncError::InvalidParameter("early stop must be >= 0".into()));
            }
        }
        Ok(())
    }
}

/// Total system inertia in seconds on `s_base_mva` for this commitment.
pub fn system_inertia<T: Scalar>(model: &SystemModel<T>, scenario: &CommitmentScenario<T>) -> T {
    let mut energy = T::zero();
    for (tg, &on) in model.tgs().iter().zip(scenario.tg_on()) {
        if on {
            energy += tg.inertia * tg.capacity_mva;
        }
    }
    for ((res, &part), &p) in model
        .ress()
        .iter()
        .zip(scenario.res_participates())
        .zip(scenario.res_power_mw())
    {
        if part {
            energy += res.inertia * p;
        }
    }
    for dev in model.others() {
        energy += dev.inertia * dev.capacity_mva;
    }
    energy / model.s_base_mva()
}

/// Ramp deadband: zero inside `[-db, db]`, shifted linear outside.
#[inline]
pub fn ramp_deadband<T: Scalar>(x: T, db: T) -> T {
    if x > db {
        x - db
    } else if x < -db {
        x + db
    } else {
        T::zero()
    }
}

struct ActiveTg<T> {
    gain: T,
    t_gov: T,
    t_turb: T,
    t_reheat: T,
    hp: T,
    db: T,
}

struct ActiveRes<T> {
    gain: T,
    t_conv: T,
}

fn check_scenario<T: Scalar>(model: &SystemModel<T>, scenario: &CommitmentScenario<T>) -> Result<()> {
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
    Ok(())
}

/// Simulate the frequency deviation after a step generation loss of
/// `disturbance_pu`.
///
/// Fast lags are sub-stepped so that every internal step is at most half of
/// the smallest active time constant; samples are still recorded every `dt`.
pub fn simulate_response<T: Scalar>(
    model: &SystemModel<T>,
    scenario: &CommitmentScenario<T>,
    disturbance_pu: T,
    opts: &SimOptions<T>,
) -> Result<FrequencyTrace<T>> {
    opts.validate()?;
    check_scenario(model, scenario)?;
    if !(disturbance_pu >= T::zero()) || !disturbance_pu.is_finite() {
        return Err(FncError::InvalidParameter(format!(
            "disturbance {disturbance_pu} must be a finite value >= 0"
        )));
    }
    let s_base = model.s_base_mva();
    let two_h = T::lit(2.0) * system_inertia(model, scenario);
    if two_h <= T::zero() {
        return Err(FncError::ZeroInertia);
    }

    let tgs: Vec<ActiveTg<T>> = model
        .tgs()
        .iter()
        .zip(scenario.tg_on())
        .filter(|(_, &on)| on)
        .map(|(tg, _)| ActiveTg {
            gain: tg.capacity_mva / s_base / tg.droop,
            t_gov: tg.t_governor,
            t_turb: tg.t_turbine,
            t_reheat: tg.t_reheat,
            hp: tg.hp_fraction,
            db: tg.deadband,
        })
        .collect();
    let ress: Vec<ActiveRes<T>> = model
        .ress()
        .iter()
        .zip(scenario.res_participates())
        .zip(scenario.res_power_mw())
        .filter(|((_, &part), _)| part)
        .map(|((res, _), &p)| ActiveRes {
            gain: p / s_base / res.droop,
            t_conv: res.t_converter,
        })
        .collect();

    let mut tau_min = T::infinity();
    for tg in &tgs {
        tau_min = tau_min.min(tg.t_gov).min(tg.t_turb).min(tg.t_reheat);
    }
    for res in &ress {
        tau_min = tau_min.min(res.t_conv);
    }
    let half = T::lit(0.5);
    let n_sub = if tau_min.is_finite() {
        (opts.dt / (half * tau_min)).ceil().to_usize().unwrap_or(1).max(1)
    } else {
        1
    };
    let h = opts.dt / T::from_count(n_sub);

    // Layout: [Δf, (gov, turb, reheat) per TG, conv per RES]
    let dim = 1 + 3 * tgs.len() + ress.len();
    let res_off = 1 + 3 * tgs.len();
    let damping = model.damping();
    let rhs = |x: &[T], dx: &mut [T]| {
        let df = x[0];
        let mut mech = T::zero();
        for (u, tg) in tgs.iter().enumerate() {
            let base = 1 + 3 * u;
            let (gov, turb, reheat) = (x[base], x[base + 1], x[base + 2]);
            let demand = -tg.gain * ramp_deadband(df, tg.db);
            dx[base] = (demand - gov) / tg.t_gov;
            dx[base + 1] = (gov - turb) / tg.t_turb;
            dx[base + 2] = (turb - reheat) / tg.t_reheat;
            mech += tg.hp * turb + (T::one() - tg.hp) * reheat;
        }
        for (v, res) in ress.iter().enumerate() {
            let s = x[res_off + v];
            dx[res_off + v] = (-res.gain * df - s) / res.t_conv;
            mech += s;
        }
        dx[0] = (mech - damping * df - disturbance_pu) / two_h;
    };

    let n_steps = (opts.horizon_s / opts.dt).round().to_usize().unwrap_or(0);
    let stop_after = opts
        .early_stop_s
        .map(|e| (e / opts.dt).round().to_usize().unwrap_or(0));
    let mut x = vec![T::zero(); dim];
    let mut rk = Rk4::new(dim);
    let mut samples = Vec::with_capacity(n_steps.min(40_000) + 1);
    samples.push(T::zero());
    let mut first_min: Option<usize> = None;

    for k in 1..=n_steps {
        for _ in 0..n_sub {
            rk.step(&mut x, h, &rhs);
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(FncError::NonFinite { step: k });
        }
        samples.push(x[0]);
        if first_min.is_none() && x[0] > samples[k - 1] && samples[k - 1] < T::zero() {
            first_min = Some(k - 1);
        }
        if let (Some(m), Some(extra)) = (first_min, stop_after) {
            if k >= m + extra {
                break;
            }
        }
    }

    Ok(FrequencyTrace {
        dt: opts.dt,
        samples,
        disturbance_pu,
    })
}

/// Location of the frequency nadir within a trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Nadir<T> {
    pub t_s: T,
    pub delta_f_pu: T,
    pub index: usize,
    /// The trace never turned upward: the endpoint was returned.
    pub monotone: bool,
}

impl<T: Scalar> Nadir<T> {
    /// Nadir depth as a non-negative number.
    pub fn magnitude(&self) -> T {
        (-self.delta_f_pu).max(T::zero())
    }
}

/// First local minimum of the trace.
///
/// A trace that never drops returns its first sample. A trace that drops
/// and never turns back up returns its endpoint with `monotone` set.
pub fn find_nadir<T: Scalar>(trace: &FrequencyTrace<T>) -> Result<Nadir<T>> {
    let s = &trace.samples;
    if s.is_empty() {
        return Err(FncError::EmptyTrace);
    }
    let mut best = 0;
    for k in 1..s.len() {
        if s[k] < s[best] {
            best = k;
        } else if s[k] > s[k - 1] && s[best] < s[0] {
            return Ok(Nadir {
                t_s: trace.time(best),
                delta_f_pu: s[best],
                index: best,
                monotone: false,
            });
        }
    }
    let monotone = best > 0;
    Ok(Nadir {
        t_s: trace.time(best),
        delta_f_pu: s[best],
        index: best,
        monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn single_tg(deadband: f64) -> SystemModel<f64> {
        build_system(
            vec![TgParams {
                t_reheat: 8.0,
                t_governor: 0.2,
                t_turbine: 0.3,
                hp_fraction: 0.3,
                droop: 0.05,
                inertia: 4.0,
                capacity_mva: 100.0,
                deadband,
            }],
            vec![],
            vec![],
            1.0,
            100.0,
            50.0,
        )
        .unwrap()
    }

    #[test]
    fn minimal_model_is_valid() {
        let m = single_tg(0.0);
        assert_eq!(m.n_tg(), 1);
        assert_eq!(m.n_res(), 0);
    }

    #[test]
    fn rejects_zero_governor_time_constant() {
        let err = build_system(
            vec![TgParams {
                t_governor: 0.0,
                ..single_tg(0.0).tgs()[0].clone()
            }],
            vec![],
            vec![],
            1.0,
            100.0,
            50.0,
        );
        assert!(matches!(err, Err(FncError::InvalidParameter(_))));
    }

    #[test]
    fn rejects_empty_tg_list_and_bad_devices() {
        assert!(build_system::<f64>(vec![], vec![], vec![], 1.0, 100.0, 50.0).is_err());
        let tg = single_tg(0.0).tgs()[0].clone();
        let neg_h = OtherInertiaDevice {
            capacity_mva: 10.0,
            inertia: -1.0,
        };
        assert!(build_system(vec![tg.clone()], vec![], vec![neg_h], 1.0, 100.0, 50.0).is_err());
        let bad_res = ResParams {
            t_converter: 0.1,
            droop: 0.05,
            inertia: 0.0,
            capacity_mw: 0.0,
        };
        assert!(build_system(vec![tg], vec![bad_res], vec![], 1.0, 100.0, 50.0).is_err());
    }

    #[test]
    fn scenario_enforces_participation_threshold() {
        let tg = single_tg(0.0).tgs()[0].clone();
        let res = ResParams {
            t_converter: 0.1,
            droop: 0.05,
            inertia: 0.0,
            capacity_mw: 100.0,
        };
        let m = build_system(vec![tg], vec![res], vec![], 1.0, 100.0, 50.0).unwrap();
        assert!(CommitmentScenario::new(&m, vec![true], vec![true], vec![25.0]).is_err());
        assert!(CommitmentScenario::new(&m, vec![true], vec![false], vec![25.0]).is_ok());
        assert!(CommitmentScenario::new(&m, vec![true], vec![true], vec![30.0]).is_ok());
        assert!(CommitmentScenario::new(&m, vec![true], vec![false], vec![101.0]).is_err());
        assert!(CommitmentScenario::new(&m, vec![true, false], vec![false], vec![1.0]).is_err());
    }

    #[test]
    fn zero_disturbance_is_equilibrium() {
        let m = single_tg(0.001);
        let sc = CommitmentScenario::all_on(&m);
        let tr = simulate_response(&m, &sc, 0.0, &SimOptions::default()).unwrap();
        assert!(tr.samples.iter().all(|&v| v == 0.0));
        let n = find_nadir(&tr).unwrap();
        assert_eq!((n.t_s, n.delta_f_pu), (0.0, 0.0));
    }

    #[test]
    fn quasi_steady_state_matches_final_value() {
        let m = single_tg(0.0);
        let sc = CommitmentScenario::all_on(&m);
        let opts = SimOptions {
            dt: 1e-3,
            horizon_s: 120.0,
            early_stop_s: None,
        };
        let dp = 0.05;
        let tr = simulate_response(&m, &sc, dp, &opts).unwrap();
        let expected = -dp / (1.0 + 1.0 / 0.05);
        let last = *tr.samples.last().unwrap();
        assert!((last - expected).abs() < 1e-6, "{last} vs {expected}");
    }

    #[test]
    fn deadband_weakens_regulation() {
        let sc = CommitmentScenario::all_on(&single_tg(0.0));
        let opts = SimOptions {
            dt: 1e-3,
            horizon_s: 120.0,
            early_stop_s: None,
        };
        let a = simulate_response(&single_tg(0.0), &sc, 0.05, &opts).unwrap();
        let b = simulate_response(&single_tg(5e-4), &sc, 0.05, &opts).unwrap();
        let (sa, sb) = (a.samples.last().unwrap(), b.samples.last().unwrap());
        assert!(sb.abs() > sa.abs());
        // a ramp deadband shifts the governed band: |Δf| = (ΔP + K·db)/(D + K)
        let k = 20.0;
        assert!((sb.abs() - (0.05 + k * 5e-4) / (1.0 + k)).abs() < 1e-6);
    }

    #[test]
    fn offline_units_contribute_nothing() {
        let tg = single_tg(0.0).tgs()[0].clone();
        let m = build_system(
            vec![tg.clone(), tg],
            vec![],
            vec![],
            1.0,
            100.0,
            50.0,
        )
        .unwrap();
        let one = CommitmentScenario::new(&m, vec![true, false], vec![], vec![]).unwrap();
        let single = single_tg(0.0);
        let a = simulate_response(&m, &one, 0.03, &SimOptions::default()).unwrap();
        let b = simulate_response(
            &single,
            &CommitmentScenario::all_on(&single),
            0.03,
            &SimOptions::default(),
        )
        .unwrap();
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn zero_inertia_is_reported() {
        let tg = TgParams {
            inertia: 0.0,
            ..single_tg(0.0).tgs()[0].clone()
        };
        let m = build_system(vec![tg], vec![], vec![], 1.0, 100.0, 50.0).unwrap();
        let sc = CommitmentScenario::all_on(&m);
        assert!(matches!(
            simulate_response(&m, &sc, 0.01, &SimOptions::default()),
            Err(FncError::ZeroInertia)
        ));
    }

    #[test]
    fn rejects_bad_options() {
        let m = single_tg(0.0);
        let sc = CommitmentScenario::all_on(&m);
        let mut o = SimOptions::default();
        o.dt = 0.02;
        assert!(simulate_response(&m, &sc, 0.01, &o).is_err());
        o.dt = 1e-3;
        o.horizon_s = 4.0;
        assert!(simulate_response(&m, &sc, 0.01, &o).is_err());
        assert!(simulate_response(&m, &sc, -0.01, &SimOptions::default()).is_err());
    }

    #[test]
    fn nadir_of_monotone_and_empty_traces() {
        let tr = FrequencyTrace {
            dt: 0.1,
            samples: vec![0.0, -1.0, -2.0, -3.0],
            disturbance_pu: 1.0,
        };
        let n = find_nadir(&tr).unwrap();
        assert!(n.monotone);
        assert_eq!(n.index, 3);
        assert_eq!(n.delta_f_pu, -3.0);

        let dip = FrequencyTrace {
            dt: 0.5,
            samples: vec![0.0, -1.0, -2.0, -1.5, -2.5],
            disturbance_pu: 1.0,
        };
        let n = find_nadir(&dip).unwrap();
        assert!(!n.monotone);
        assert_eq!((n.index, n.t_s), (2, 1.0));

        let empty = FrequencyTrace::<f64> {
            dt: 0.1,
            samples: vec![],
            disturbance_pu: 0.0,
        };
        assert!(matches!(find_nadir(&empty), Err(FncError::EmptyTrace)));
    }

    #[test]
    fn early_stop_truncates_after_nadir() {
        let m = single_tg(0.0);
        let sc = CommitmentScenario::all_on(&m);
        let tr = simulate_response(&m, &sc, 0.05, &SimOptions::default()).unwrap();
        let n = find_nadir(&tr).unwrap();
        assert!(!n.monotone);
        assert_eq!(tr.samples.len() - 1, n.index + 2000);
    }

    #[test]
    fn runs_in_single_precision() {
        let m64 = single_tg(0.0);
        let tg = &m64.tgs()[0];
        let tg32 = TgParams {
            t_reheat: tg.t_reheat as f32,
            t_governor: tg.t_governor as f32,
            t_turbine: tg.t_turbine as f32,
            hp_fraction: tg.hp_fraction as f32,
            droop: tg.droop as f32,
            inertia: tg.inertia as f32,
            capacity_mva: tg.capacity_mva as f32,
            deadband: 0.0,
        };
        let m32 = build_system(vec![tg32], vec![], vec![], 1.0f32, 100.0, 50.0).unwrap();
        let n32 = find_nadir(
            &simulate_response(&m32, &CommitmentScenario::all_on(&m32), 0.05, &SimOptions::default())
                .unwrap(),
        )
        .unwrap();
        let n64 = find_nadir(
            &simulate_response(&m64, &CommitmentScenario::all_on(&m64), 0.05, &SimOptions::default())
                .unwrap(),
        )
        .unwrap();
        assert!((n32.delta_f_pu as f64 - n64.delta_f_pu).abs() < 1e-5);
    }
}
