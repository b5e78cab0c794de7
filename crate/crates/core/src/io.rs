//! Plain-text files: system description, single scenario and trained model.
//!
//! All three are TOML. Numbers are written as `f64` with shortest round-trip
//! formatting, so a write followed by a read reproduces every value.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::elm::{ElmWeights, ParamScaler};
use crate::error::{FncError, Result};
use crate::pwl::{PwlModel, Segment, TrainingMeta};
use crate::scalar::Scalar;
use crate::sfr::{build_system, CommitmentScenario, OtherInertiaDevice, ResParams, SystemModel, TgParams};

fn to_f64<T: Scalar>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

fn from_f64<T: Scalar>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::lit(x)).collect()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemSection {
    damping: f64,
    s_base_mva: f64,
    f_base_hz: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemFile {
    system: SystemSection,
    tg: Vec<TgParams<f64>>,
    #[serde(default)]
    res: Vec<ResParams<f64>>,
    #[serde(default)]
    other: Vec<OtherInertiaDevice<f64>>,
}

pub fn parse_system<T: Scalar>(text: &str) -> Result<SystemModel<T>> {
    let f: SystemFile = toml::from_str(text).map_err(|e| toml_error(text, e))?;
    let tg = f
        .tg
        .iter()
        .map(|t| TgParams {
            t_reheat: T::lit(t.t_reheat),
            t_governor: T::lit(t.t_governor),
            t_turbine: T::lit(t.t_turbine),
            hp_fraction: T::lit(t.hp_fraction),
            droop: T::lit(t.droop),
            inertia: T::lit(t.inertia),
            capacity_mva: T::lit(t.capacity_mva),
            deadband: T::lit(t.deadband),
        })
        .collect();
    let res = f
        .res
        .iter()
        .map(|r| ResParams {
            t_converter: T::lit(r.t_converter),
            droop: T::lit(r.droop),
            inertia: T::lit(r.inertia),
            capacity_mw: T::lit(r.capacity_mw),
        })
        .collect();
    let other = f
        .other
        .iter()
        .map(|o| OtherInertiaDevice {
            capacity_mva: T::lit(o.capacity_mva),
            inertia: T::lit(o.inertia),
        })
        .collect();
    build_system(
        tg,
        res,
        other,
        T::lit(f.system.damping),
        T::lit(f.system.s_base_mva),
        T::lit(f.system.f_base_hz),
    )
}

pub fn render_system<T: Scalar>(model: &SystemModel<T>) -> String {
    let f = SystemFile {
        system: SystemSection {
            damping: model.damping().as_f64(),
            s_base_mva: model.s_base_mva().as_f64(),
            f_base_hz: model.f_base_hz().as_f64(),
        },
        tg: model
            .tgs()
            .iter()
            .map(|t| TgParams {
                t_reheat: t.t_reheat.as_f64(),
                t_governor: t.t_governor.as_f64(),
                t_turbine: t.t_turbine.as_f64(),
                hp_fraction: t.hp_fraction.as_f64(),
                droop: t.droop.as_f64(),
                inertia: t.inertia.as_f64(),
                capacity_mva: t.capacity_mva.as_f64(),
                deadband: t.deadband.as_f64(),
            })
            .collect(),
        res: model
            .ress()
            .iter()
            .map(|r| ResParams {
                t_converter: r.t_converter.as_f64(),
                droop: r.droop.as_f64(),
                inertia: r.inertia.as_f64(),
                capacity_mw: r.capacity_mw.as_f64(),
            })
            .collect(),
        other: model
            .others()
            .iter()
            .map(|o| OtherInertiaDevice {
                capacity_mva: o.capacity_mva.as_f64(),
                inertia: o.inertia.as_f64(),
            })
            .collect(),
    };
    toml::to_string(&f).expect("system serializes")
}

/// First 16 hex digits of the SHA-256 of the canonical system rendering.
pub fn model_hash<T: Scalar>(model: &SystemModel<T>) -> String {
    let digest = Sha256::digest(render_system(model).as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) fn toml_error(text: &str, e: toml::de::Error) -> FncError {
    let line = e
        .span()
        .map(|s| text[..s.start.min(text.len())].lines().count().max(1))
        .unwrap_or(0);
    FncError::Parse {
        line,
        msg: e.message().trim().to_string(),
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    tg_on: Option<Vec<bool>>,
    res_participates: Option<Vec<bool>>,
    res_power_mw: Option<Vec<f64>>,
}

/// Scenario file with optional keys `tg_on`, `res_participates` and
/// `res_power_mw`. Missing keys take their [`CommitmentScenario::all_on`]
/// values.
pub fn parse_scenario<T: Scalar>(text: &str, model: &SystemModel<T>) -> Result<CommitmentScenario<T>> {
    let f: ScenarioFile = toml::from_str(text).map_err(|e| toml_error(text, e))?;
    let base = CommitmentScenario::all_on(model);
    CommitmentScenario::new(
        model,
        f.tg_on.unwrap_or_else(|| base.tg_on().to_vec()),
        f.res_participates
            .unwrap_or_else(|| base.res_participates().to_vec()),
        f.res_power_mw
            .map(|p| from_f64(&p))
            .unwrap_or_else(|| base.res_power_mw().to_vec()),
    )
}

pub fn render_scenario<T: Scalar>(scenario: &CommitmentScenario<T>) -> String {
    let f = ScenarioFile {
        tg_on: Some(scenario.tg_on().to_vec()),
        res_participates: Some(scenario.res_participates().to_vec()),
        res_power_mw: Some(to_f64(scenario.res_power_mw())),
    };
    toml::to_string(&f).expect("scenario serializes")
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScalerSection {
    tg_min: Vec<f64>,
    tg_max: Vec<f64>,
    res_min: Vec<f64>,
    res_max: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ElmSection {
    seed: u64,
    n_hidden: usize,
    tg_param_order: Vec<String>,
    res_param_order: Vec<String>,
    /// Row-major, one row per hidden neuron.
    a_g: Vec<Vec<f64>>,
    b_g: Vec<f64>,
    a_v: Vec<Vec<f64>>,
    b_v: Vec<f64>,
    scaler: ScalerSection,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaSection {
    system_hash: String,
    seed: u64,
    segments: usize,
    restarts: usize,
    iterations: usize,
    objective: f64,
    objective_history: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SegmentSection {
    h: f64,
    c: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PwlSection {
    #[serde(rename = "L")]
    segments: usize,
    /// `c` follows the feature layout of the `[elm]` section.
    segment: Vec<SegmentSection>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFileRepr {
    meta: MetaSection,
    elm: ElmSection,
    pwl: PwlSection,
}

/// Trained predictor together with the hidden layer that defines its
/// features and the hash of the system it was trained on.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelFile<T> {
    pub system_hash: String,
    pub weights: ElmWeights<T>,
    pub pwl: PwlModel<T>,
}

impl<T: Scalar> ModelFile<T> {
    /// Fail unless `model` is the system this predictor was trained on.
    pub fn check_system(&self, model: &SystemModel<T>) -> Result<()> {
        let h = model_hash(model);
        if h != self.system_hash {
            return Err(FncError::InvalidParameter(format!(
                "model file was trained on system {} but got {h}",
                self.system_hash
            )));
        }
        let dim = self.weights.layout(model).dim();
        if dim != self.pwl.feature_dim() {
            return Err(FncError::DimensionMismatch {
                expected: self.pwl.feature_dim(),
                found: dim,
            });
        }
        Ok(())
    }
}

fn rows<T: Scalar>(flat: &[T], width: usize) -> Vec<Vec<f64>> {
    flat.chunks(width).map(to_f64).collect()
}

pub fn render_model<T: Scalar>(file: &ModelFile<T>) -> String {
    let w = &file.weights;
    let meta = &file.pwl.meta;
    let repr = ModelFileRepr {
        meta: MetaSection {
            system_hash: file.system_hash.clone(),
            seed: meta.seed,
            segments: meta.segments,
            restarts: meta.restarts,
            iterations: meta.iterations,
            objective: meta.objective.as_f64(),
            objective_history: to_f64(&meta.objective_history),
        },
        elm: ElmSection {
            seed: w.seed(),
            n_hidden: w.n_hidden(),
            tg_param_order: crate::elm::TG_PARAM_NAMES.iter().map(|s| s.to_string()).collect(),
            res_param_order: crate::elm::RES_PARAM_NAMES.iter().map(|s| s.to_string()).collect(),
            a_g: rows(w.a_g(), crate::elm::TG_PARAMS),
            b_g: to_f64(w.b_g()),
            a_v: rows(w.a_v(), crate::elm::RES_PARAMS),
            b_v: to_f64(w.b_v()),
            scaler: ScalerSection {
                tg_min: to_f64(&w.scaler().tg_min),
                tg_max: to_f64(&w.scaler().tg_max),
                res_min: to_f64(&w.scaler().res_min),
                res_max: to_f64(&w.scaler().res_max),
            },
        },
        pwl: PwlSection {
            segments: file.pwl.segments().len(),
            segment: file
                .pwl
                .segments()
                .iter()
                .map(|s| SegmentSection {
                    h: s.h.as_f64(),
                    c: to_f64(&s.c),
                })
                .collect(),
        },
    };
    toml::to_string(&repr).expect("model serializes")
}

pub fn parse_model<T: Scalar>(text: &str) -> Result<ModelFile<T>> {
    let repr: ModelFileRepr = toml::from_str(text).map_err(|e| toml_error(text, e))?;
    let e = &repr.elm;
    if e.tg_param_order != crate::elm::TG_PARAM_NAMES || e.res_param_order != crate::elm::RES_PARAM_NAMES {
        return Err(FncError::InvalidParameter(
            "unsupported parameter order in [elm]".into(),
        ));
    }
    let flatten = |m: &[Vec<f64>], width: usize| -> Result<Vec<T>> {
        if let Some(bad) = m.iter().find(|r| r.len() != width) {
            return Err(FncError::DimensionMismatch {
                expected: width,
                found: bad.len(),
            });
        }
        Ok(m.iter().flatten().map(|&x| T::lit(x)).collect())
    };
    let weights = ElmWeights::from_parts(
        e.n_hidden,
        e.seed,
        flatten(&e.a_g, crate::elm::TG_PARAMS)?,
        from_f64(&e.b_g),
        flatten(&e.a_v, crate::elm::RES_PARAMS)?,
        from_f64(&e.b_v),
        ParamScaler {
            tg_min: from_f64(&e.scaler.tg_min),
            tg_max: from_f64(&e.scaler.tg_max),
            res_min: from_f64(&e.scaler.res_min),
            res_max: from_f64(&e.scaler.res_max),
        },
    )?;
    let m = &repr.meta;
    if repr.pwl.segments != repr.pwl.segment.len() {
        return Err(FncError::InvalidParameter(format!(
            "[pwl] declares L = {} but lists {} segments",
            repr.pwl.segments,
            repr.pwl.segment.len()
        )));
    }
    let pwl = PwlModel::new(
        repr.pwl
            .segment
            .iter()
            .map(|s| Segment {
                c: from_f64(&s.c),
                h: T::lit(s.h),
            })
            .collect(),
        TrainingMeta {
            seed: m.seed,
            segments: m.segments,
            restarts: m.restarts,
            iterations: m.iterations,
            objective: T::lit(m.objective),
            objective_history: from_f64(&m.objective_history),
        },
    )?;
    Ok(ModelFile {
        system_hash: m.system_hash.clone(),
        weights,
        pwl,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elm::init_weights;

    const SMALL: &str = r#"
[system]
damping = 1.0
s_base_mva = 100.0
f_base_hz = 50.0

[[tg]]
capacity_mva = 100.0
inertia = 5.0
droop = 0.05
hp_fraction = 0.3
t_reheat = 7.0
t_governor = 0.2
t_turbine = 0.3
deadband = 0.0

[[res]]
capacity_mw = 40.0
inertia = 2.0
droop = 0.05
t_converter = 0.1
"#;

    #[test]
    fn system_round_trip_and_hash() {
        let m: SystemModel<f64> = parse_system(SMALL).unwrap();
        let again: SystemModel<f64> = parse_system(&render_system(&m)).unwrap();
        assert_eq!(m, again);
        assert_eq!(model_hash(&m), model_hash(&again));
        assert_eq!(model_hash(&m).len(), 16);
        let other = m.with_others(&[OtherInertiaDevice { capacity_mva: 1.0, inertia: 1.0 }]).unwrap();
        assert_ne!(model_hash(&m), model_hash(&other));
    }

    #[test]
    fn parse_errors_carry_line() {
        let text = SMALL.replace("droop = 0.05\nhp", "droop = \"x\"\nhp");
        match parse_system::<f64>(&text) {
            Err(FncError::Parse { line, .. }) => assert_eq!(line, 10),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_system::<f64>(&SMALL.replace("[system]", "[system]\nbogus = 1")),
            Err(FncError::Parse { .. })
        ));
        assert!(matches!(
            parse_system::<f64>(&SMALL.replace("droop = 0.05\nhp", "droop = -1.0\nhp")),
            Err(FncError::InvalidParameter(_))
        ));
    }

    #[test]
    fn scenario_defaults_and_round_trip() {
        let m: SystemModel<f64> = parse_system(SMALL).unwrap();
        let s = parse_scenario("", &m).unwrap();
        assert_eq!(s, CommitmentScenario::all_on(&m));
        let s = parse_scenario("tg_on = [false]\nres_participates = [false]\nres_power_mw = [10.0]", &m).unwrap();
        assert_eq!(parse_scenario(&render_scenario(&s), &m).unwrap(), s);
        assert!(parse_scenario("res_power_mw = [10.0]", &m).is_err());
    }

    #[test]
    fn model_round_trip_is_exact() {
        let m: SystemModel<f64> = parse_system(SMALL).unwrap();
        let weights = init_weights(4, 7, &m).unwrap();
        let dim = weights.layout(&m).dim();
        let seg = |k: f64| Segment {
            c: (0..dim).map(|i| (i as f64 + k).sin() / 3.0).collect(),
            h: k / 7.0,
        };
        let pwl = PwlModel::new(
            vec![seg(1.0), seg(2.0)],
            TrainingMeta {
                seed: 3,
                segments: 2,
                restarts: 1,
                iterations: 4,
                objective: 0.1 + 0.2,
                objective_history: vec![0.1, 0.1 + 0.2],
            },
        )
        .unwrap();
        let file = ModelFile {
            system_hash: model_hash(&m),
            weights,
            pwl,
        };
        let text = render_model(&file);
        let back: ModelFile<f64> = parse_model(&text).unwrap();
        assert_eq!(back, file);
        assert_eq!(render_model(&back), text);
        back.check_system(&m).unwrap();
        assert!(text.contains("[pwl]\nL = 2\n"));
        assert!(parse_model::<f64>(&text.replace("L = 2", "L = 3")).is_err());
    }
}
