//! Second-order aggregate of a committed system and its closed-form nadir.
//!
//! With governor and turbine lags dropped, one common reheat constant `T`
//! and instantaneous converters, the frequency response to a step loss is
//!
//! ```text
//!  Δf(s)         1 + sT
//! ------ = ---------------------------------------
//! -ΔP(s)    2HT s² + (2H + T(D + F)) s + (D + R)
//! ```
//!
//! so `ω_n² = (D + R)/(2HT)` and `2ζω_n = (2H + T(D + F))/(2HT)`.

use serde::{Deserialize, Serialize};

use crate::error::{FncError, Result};
use crate::ode::Rk4;
use crate::scalar::Scalar;
use crate::sfr::{find_nadir, system_inertia, CommitmentScenario, FrequencyTrace, SystemModel};

/// Aggregated second-order parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedModel<T> {
    pub h: T,
    pub d: T,
    /// Integrated regulation gain.
    pub r: T,
    /// Integrated fast (non-reheat) gain.
    pub f: T,
    pub t: T,
    pub zeta: T,
    pub omega_n: T,
}

impl<T: Scalar> ReducedModel<T> {
    /// Build from `(H, D, R, F, T)` and derive `ζ`, `ω_n`.
    pub fn from_parameters(h: T, d: T, r: T, f: T, t: T) -> Result<Self> {
        if !(h > T::zero()) {
            return Err(FncError::ZeroInertia);
        }
        if r < T::zero() || f < T::zero() || f > r {
            return Err(FncError::InvalidParameter(format!(
                "need 0 <= F <= R, got F = {f}, R = {r}"
            )));
        }
        if !(t > T::zero()) {
            return Err(FncError::InvalidParameter(format!("T = {t} must be > 0")));
        }
        if d + r <= T::zero() {
            return Err(FncError::UndampedSystem);
        }
        let two = T::lit(2.0);
        let two_ht = two * h * t;
        let omega_n = ((d + r) / two_ht).sqrt();
        let zeta = (two * h + t * (d + f)) / (two * (two_ht * (d + r)).sqrt());
        Ok(Self {
            h,
            d,
            r,
            f,
            t,
            zeta,
            omega_n,
        })
    }

    /// No regulation online: the response is first order.
    pub fn is_first_order(&self) -> bool {
        self.r == T::zero()
    }

    /// Steady-state deviation per pu of disturbance.
    pub fn steady_state_per_pu(&self) -> T {
        -T::one() / (self.d + self.r)
    }

    /// Denominator coefficients `(a2, a1, a0)` of the transfer function.
    pub fn denominator(&self) -> (T, T, T) {
        let two = T::lit(2.0);
        (
            two * self.h * self.t,
            two * self.h + self.t * (self.d + self.f),
            self.d + self.r,
        )
    }
}

/// Aggregate the online units of `scenario`.
///
/// `R` sums the regulation gains of online TGs and participating RESs. `F`
/// sums gain-weighted HP fractions of online TGs plus the RES gains, since a
/// converter with negligible lag passes its droop straight through like an HP
/// stage. `T` is the gain-weighted mean reheat constant of online TGs (the
/// plain mean over all TGs if none is online). `H` is the total inertia.
pub fn aggregate<T: Scalar>(
    model: &SystemModel<T>,
    scenario: &CommitmentScenario<T>,
) -> Result<ReducedModel<T>> {
    if scenario.tg_on().len() != model.n_tg() {
        return Err(FncError::DimensionMismatch {
            expected: model.n_tg(),
            found: scenario.tg_on().len(),
        });
    }
    let s_base = model.s_base_mva();
    let mut r = T::zero();
    let mut f = T::zero();
    let mut t_weighted = T::zero();
    let mut tg_gain = T::zero();
    for (tg, &on) in model.tgs().iter().zip(scenario.tg_on()) {
        if on {
            let gain = tg.capacity_mva / s_base / tg.droop;
            r += gain;
            f += gain * tg.hp_fraction;
            t_weighted += gain * tg.t_reheat;
            tg_gain += gain;
        }
    }
    for ((res, &part), &p) in model
        .ress()
        .iter()
        .zip(scenario.res_participates())
        .zip(scenario.res_power_mw())
    {
        if part {
            let gain = p / s_base / res.droop;
            r += gain;
            f += gain;
        }
    }
    let t = if tg_gain > T::zero() {
        t_weighted / tg_gain
    } else {
        model.tgs().iter().map(|tg| tg.t_reheat).sum::<T>() / T::from_count(model.n_tg())
    };
    let h = system_inertia(model, scenario);
    if model.damping() + r <= T::zero() {
        return Err(FncError::UndampedSystem);
    }
    // rounding can leave f a hair above r when only RESs regulate
    ReducedModel::from_parameters(h, model.damping(), r, f.min(r), t)
}

/// Time and depth of the nadir for an underdamped reduced model.
pub fn analytic_nadir<T: Scalar>(reduced: &ReducedModel<T>, disturbance_pu: T) -> Result<(T, T)> {
    if !(disturbance_pu >= T::zero()) {
        return Err(FncError::InvalidParameter(format!(
            "disturbance {disturbance_pu} must be >= 0"
        )));
    }
    let t_m = nadir_time(reduced)?;
    let depth = nadir_factor(reduced, t_m);
    Ok((t_m, -disturbance_pu / (reduced.d + reduced.r) * depth))
}

/// Largest step loss keeping `|Δf_nadir| <= delta_f_max_pu`.
pub fn analytic_margin<T: Scalar>(reduced: &ReducedModel<T>, delta_f_max_pu: T) -> Result<T> {
    if !(delta_f_max_pu > T::zero()) {
        return Err(FncError::InvalidParameter(format!(
            "frequency limit {delta_f_max_pu} must be > 0"
        )));
    }
    let t_m = nadir_time(reduced)?;
    Ok(delta_f_max_pu * (reduced.d + reduced.r) / nadir_factor(reduced, t_m))
}

fn nadir_time<T: Scalar>(rm: &ReducedModel<T>) -> Result<T> {
    if !(rm.zeta > T::zero() && rm.zeta < T::one()) {
        return Err(FncError::Overdamped {
            zeta: rm.zeta.as_f64(),
        });
    }
    let sigma = rm.zeta * rm.omega_n;
    let omega_d = rm.omega_n * (T::one() - rm.zeta * rm.zeta).sqrt();
    // stationary point of T·cos(ω_d t) + (1 − σT)/ω_d · sin(ω_d t)
    let mut t_m = (omega_d * rm.t / (sigma * rm.t - T::one())).atan() / omega_d;
    if t_m <= T::zero() {
        t_m += T::PI() / omega_d;
    }
    Ok(t_m)
}

fn nadir_factor<T: Scalar>(rm: &ReducedModel<T>, t_m: T) -> T {
    let overshoot = (rm.t * (rm.r - rm.f) / (T::lit(2.0) * rm.h)).sqrt();
    T::one() + overshoot * (-rm.zeta * rm.omega_n * t_m).exp()
}

/// Step response of the reduced transfer function, integrated directly from
/// its controllable canonical realization.
pub fn simulate_second_order<T: Scalar>(
    reduced: &ReducedModel<T>,
    disturbance_pu: T,
    dt: T,
    horizon_s: T,
) -> Result<FrequencyTrace<T>> {
    if !(dt > T::zero()) || !(horizon_s > dt) {
        return Err(FncError::InvalidParameter("need 0 < dt < horizon".into()));
    }
    let (a2, a1, a0) = reduced.denominator();
    let t_lead = reduced.t;
    let u = -disturbance_pu;
    let n = (horizon_s / dt).round().to_usize().unwrap_or(0);
    let mut rk = Rk4::new(2);
    let mut x = [T::zero(); 2];
    let mut samples = Vec::with_capacity(n + 1);
    samples.push(T::zero());
    for k in 1..=n {
        rk.step(&mut x, dt, |s, d| {
            d[0] = s[1];
            d[1] = (u - a0 * s[0] - a1 * s[1]) / a2;
        });
        if !(x[0].is_finite() && x[1].is_finite()) {
            return Err(FncError::NonFinite { step: k });
        }
        samples.push(x[0] + t_lead * x[1]);
    }
    Ok(FrequencyTrace {
        dt,
        samples,
        disturbance_pu,
    })
}

/// Security margin of the reduced model: closed form when underdamped,
/// otherwise from the simulated unit-step response and linearity in ΔP.
pub fn reduced_margin<T: Scalar>(reduced: &ReducedModel<T>, delta_f_max_pu: T, dt: T) -> Result<T> {
    match analytic_margin(reduced, delta_f_max_pu) {
        Err(FncError::Overdamped { .. }) => {
            let settle = T::lit(10.0) * (reduced.t + T::lit(2.0) * reduced.h / (reduced.d + reduced.r));
            let trace = simulate_second_order(reduced, T::one(), dt, settle.max(T::lit(30.0)))?;
            let depth = find_nadir(&trace)?.magnitude();
            Ok(delta_f_max_pu / depth)
        }
        other => other,
    }
}
