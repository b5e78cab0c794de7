//! Synthetic commitment scenarios, oracle labels, noisy replicas, splits and
//! the `.fds` dataset format.
//!
//! An `.fds` file is plain text. Header lines start with `#` and carry
//! `key = value` provenance. Each record line is
//!
//! ```text
//! <id> <tg bits> <bit>:<power MW> ... <label pu>
//! ```
//!
//! with one `bit:power` pair per renewable.

use std::fmt::Write as _;

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::elm::{feature_vector, ElmWeights};
use crate::error::{FncError, Result};
use crate::io::model_hash;
use crate::margin::{margin_bisect, MarginSpec};
use crate::scalar::Scalar;
use crate::sfr::{CommitmentScenario, SimOptions, SystemModel, PARTICIPATION_THRESHOLD};

/// Load and commitment settings for [`generate_scenarios`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoadProfile<T> {
    pub load_min_mw: T,
    pub load_max_mw: T,
    /// Committed TG capacity must cover `net load × reserve_factor`.
    pub reserve_factor: T,
    /// Spread of the random perturbation of the merit order, in positions.
    pub merit_noise: T,
}

impl<T: Scalar> LoadProfile<T> {
    /// Load between 30% and 80% of installed TG capacity.
    pub fn for_model(model: &SystemModel<T>) -> Self {
        let cap: T = model.tgs().iter().map(|t| t.capacity_mva).sum();
        Self {
            load_min_mw: T::lit(0.3) * cap,
            load_max_mw: T::lit(0.8) * cap,
            reserve_factor: T::lit(1.1),
            merit_noise: T::lit(2.0),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.load_min_mw >= T::zero()
            && self.load_max_mw >= self.load_min_mw
            && self.load_max_mw.is_finite()
            && self.reserve_factor >= T::one()
            && self.reserve_factor.is_finite()
            && self.merit_noise >= T::zero()
            && self.merit_noise.is_finite();
        if ok {
            Ok(())
        } else {
            Err(FncError::InvalidParameter(
                "load profile needs 0 <= min <= max, reserve >= 1, noise >= 0".into(),
            ))
        }
    }
}

/// Draw `count` scenarios.
///
/// Per sample: a uniform load level, a uniform capacity factor per
/// renewable (participating only at or above the threshold), then TGs are
/// committed in a randomly perturbed merit order (index order is cheapest
/// first) until they cover the net load times the reserve factor. At least
/// one TG is always committed.
pub fn generate_scenarios<T: Scalar>(
    model: &SystemModel<T>,
    count: usize,
    seed: u64,
    profile: &LoadProfile<T>,
) -> Result<Vec<CommitmentScenario<T>>> {
    if count == 0 {
        return Err(FncError::InvalidParameter("count must be >= 1".into()));
    }
    profile.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total: T = model.tgs().iter().map(|t| t.capacity_mva).sum();
    let threshold = T::lit(PARTICIPATION_THRESHOLD);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let u: f64 = rng.gen();
        let load = profile.load_min_mw + T::lit(u) * (profile.load_max_mw - profile.load_min_mw);
        let mut power = Vec::with_capacity(model.n_res());
        let mut part = Vec::with_capacity(model.n_res());
        for res in model.ress() {
            let cf = T::lit(rng.gen::<f64>());
            power.push(cf * res.capacity_mw);
            part.push(cf >= threshold);
        }
        let net = (load - power.iter().copied().sum::<T>()).max(T::zero());
        if net > total {
            return Err(FncError::LoadExceedsCapacity {
                load_mw: net.as_f64(),
                capacity_mw: total.as_f64(),
            });
        }
        let mut order: Vec<(T, usize)> = (0..model.n_tg())
            .map(|i| {
                let jitter = T::lit(rng.gen_range(-1.0..=1.0));
                (T::from_count(i) + profile.merit_noise * jitter, i)
            })
            .collect();
        order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let need = (net * profile.reserve_factor).min(total);
        let mut on = vec![false; model.n_tg()];
        let mut committed = T::zero();
        for (_, i) in order {
            if committed >= need && committed > T::zero() {
                break;
            }
            on[i] = true;
            committed += model.tgs()[i].capacity_mva;
        }
        out.push(CommitmentScenario::new(model, on, part, power)?);
    }
    Ok(out)
}

/// Every single-TG outage of every scenario, in scenario order and then TG
/// order. Units already offline are skipped.
pub fn contingency_states<T: Scalar>(scenarios: &[CommitmentScenario<T>]) -> Vec<CommitmentScenario<T>> {
    scenarios
        .iter()
        .flat_map(|s| {
            s.tg_on()
                .iter()
                .enumerate()
                .filter(|(_, &on)| on)
                .map(move |(i, _)| s.with_tg(i, false))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledRecord<T> {
    pub id: u64,
    pub scenario: CommitmentScenario<T>,
    /// Frequency security margin in pu.
    pub label_pu: T,
}

/// Noise applied by [`perturb_dataset`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec<T> {
    pub seed: u64,
    pub flip_prob: T,
    /// Relative half-width of the uniform jitter on RES output.
    pub jitter: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Provenance<T> {
    pub generator_seed: Option<u64>,
    pub model_hash: String,
    pub margin: MarginSpec<T>,
    pub noise: Option<NoiseSpec<T>>,
}

/// Labeled records plus where they came from. Features are not stored; they
/// depend on the hidden layer and are computed on demand by
/// [`LabeledDataset::features`].
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset<T> {
    pub records: Vec<LabeledRecord<T>>,
    pub provenance: Provenance<T>,
}

impl<T: Scalar> LabeledDataset<T> {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> Vec<T> {
        self.records.iter().map(|r| r.label_pu).collect()
    }

    pub fn scenarios(&self) -> Vec<CommitmentScenario<T>> {
        self.records.iter().map(|r| r.scenario.clone()).collect()
    }

    pub fn features(&self, weights: &ElmWeights<T>, model: &SystemModel<T>) -> Result<Vec<Vec<T>>> {
        self.records
            .par_iter()
            .map(|r| feature_vector(weights, model, &r.scenario).map(|f| f.values))
            .collect()
    }

    /// Fail unless the dataset was labeled on `model`.
    pub fn check_model(&self, model: &SystemModel<T>) -> Result<()> {
        let h = model_hash(model);
        if h != self.provenance.model_hash {
            return Err(FncError::InvalidParameter(format!(
                "dataset was labeled on system {} but got {h}",
                self.provenance.model_hash
            )));
        }
        Ok(())
    }
}

fn label_with_ids<T: Scalar>(
    model: &SystemModel<T>,
    items: Vec<(u64, CommitmentScenario<T>)>,
    spec: &MarginSpec<T>,
) -> Result<Vec<LabeledRecord<T>>> {
    if items.is_empty() {
        return Err(FncError::EmptyDataset);
    }
    spec.validate()?;
    let outcomes: Vec<_> = items
        .par_iter()
        .map(|(_, s)| margin_bisect(model, s, spec))
        .collect();
    let mut records = Vec::with_capacity(items.len());
    for ((id, scenario), outcome) in items.into_iter().zip(outcomes) {
        match outcome {
            Ok(o) if o.unbounded => warn!("record {id}: margin exceeds the search cap, excluded"),
            Ok(o) => records.push(LabeledRecord {
                id,
                scenario,
                label_pu: o.margin_pu,
            }),
            Err(
                e @ (FncError::MonotonicityViolated { .. }
                | FncError::ZeroInertia
                | FncError::UndampedSystem),
            ) => warn!("record {id}: {e}, excluded"),
            Err(e) => return Err(e),
        }
    }
    if records.is_empty() {
        return Err(FncError::EmptyDataset);
    }
    Ok(records)
}

/// Label scenarios with the full-order margin. Record ids are positions in
/// `scenarios`; records whose margin is unbounded, whose nadir is not
/// monotone in the disturbance, or whose commitment has no inertia or no
/// damping at all are dropped with a warning.
pub fn label_dataset<T: Scalar>(
    model: &SystemModel<T>,
    scenarios: &[CommitmentScenario<T>],
    spec: &MarginSpec<T>,
) -> Result<LabeledDataset<T>> {
    let items = scenarios.iter().cloned().enumerate().map(|(i, s)| (i as u64, s)).collect();
    Ok(LabeledDataset {
        records: label_with_ids(model, items, spec)?,
        provenance: Provenance {
            generator_seed: None,
            model_hash: model_hash(model),
            margin: *spec,
            noise: None,
        },
    })
}

/// Noisy replica: each TG bit and each participation bit flips with
/// probability `flip_prob`, RES outputs are scaled by a uniform factor in
/// `1 ± jitter` (clipped to capacity), participation is cleared wherever the
/// output falls below the threshold, and every record is relabeled.
///
/// The random stream is consumed in a fixed pattern per record, so the
/// noise applied to record `k` does not depend on the settings.
pub fn perturb_dataset<T: Scalar>(
    model: &SystemModel<T>,
    dataset: &LabeledDataset<T>,
    noise: &NoiseSpec<T>,
) -> Result<LabeledDataset<T>> {
    if !(noise.flip_prob >= T::zero() && noise.flip_prob <= T::one()) {
        return Err(FncError::InvalidParameter(format!(
            "flip probability {} outside [0, 1]",
            noise.flip_prob
        )));
    }
    if !(noise.jitter >= T::zero() && noise.jitter < T::one()) {
        return Err(FncError::InvalidParameter(format!(
            "jitter {} outside [0, 1)",
            noise.jitter
        )));
    }
    dataset.check_model(model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let threshold = T::lit(PARTICIPATION_THRESHOLD);
    let mut items = Vec::with_capacity(dataset.len());
    for r in &dataset.records {
        let s = &r.scenario;
        let tg_on: Vec<bool> = s
            .tg_on()
            .iter()
            .map(|&b| b ^ (T::lit(rng.gen::<f64>()) < noise.flip_prob))
            .collect();
        let mut part = Vec::with_capacity(model.n_res());
        let mut power = Vec::with_capacity(model.n_res());
        for (j, res) in model.ress().iter().enumerate() {
            let flip = T::lit(rng.gen::<f64>()) < noise.flip_prob;
            let u = T::lit(rng.gen_range(-1.0..=1.0));
            let p = (s.res_power_mw()[j] * (T::one() + noise.jitter * u))
                .max(T::zero())
                .min(res.capacity_mw);
            part.push((s.res_participates()[j] ^ flip) && p >= threshold * res.capacity_mw);
            power.push(p);
        }
        items.push((r.id, CommitmentScenario::new(model, tg_on, part, power)?));
    }
    Ok(LabeledDataset {
        records: label_with_ids(model, items, &dataset.provenance.margin)?,
        provenance: Provenance {
            noise: Some(*noise),
            ..dataset.provenance.clone()
        },
    })
}

/// Uniform random train/test partition. Both parts keep the original record
/// order.
pub fn split<T: Scalar>(
    dataset: &LabeledDataset<T>,
    train_count: usize,
    seed: u64,
) -> Result<(LabeledDataset<T>, LabeledDataset<T>)> {
    if train_count == 0 || train_count >= dataset.len() {
        return Err(FncError::InvalidParameter(format!(
            "train count {train_count} must lie in [1, {})",
            dataset.len()
        )));
    }
    let mut idx: Vec<usize> = (0..dataset.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut in_train = vec![false; dataset.len()];
    for &i in &idx[..train_count] {
        in_train[i] = true;
    }
    let pick = |want: bool| LabeledDataset {
        records: dataset
            .records
            .iter()
            .zip(&in_train)
            .filter(|(_, &t)| t == want)
            .map(|(r, _)| r.clone())
            .collect(),
        provenance: dataset.provenance.clone(),
    };
    Ok((pick(true), pick(false)))
}

pub fn render_dataset<T: Scalar>(dataset: &LabeledDataset<T>) -> String {
    let p = &dataset.provenance;
    let m = &p.margin;
    let mut out = String::new();
    let opt = |v: Option<String>| v.unwrap_or_else(|| "none".into());
    let _ = writeln!(out, "# fnc-dataset 1");
    let _ = writeln!(out, "# model_hash = {}", p.model_hash);
    let _ = writeln!(out, "# generator_seed = {}", opt(p.generator_seed.map(|s| s.to_string())));
    let _ = writeln!(out, "# delta_f_max_pu = {}", m.delta_f_max_pu.as_f64());
    let _ = writeln!(out, "# tol_pu = {}", m.tol_pu.as_f64());
    let _ = writeln!(out, "# dp_hi_pu = {}", m.dp_hi.as_f64());
    let _ = writeln!(out, "# cap_pu = {}", m.cap_pu.as_f64());
    let _ = writeln!(out, "# dt_s = {}", m.sim.dt.as_f64());
    let _ = writeln!(out, "# horizon_s = {}", m.sim.horizon_s.as_f64());
    let _ = writeln!(
        out,
        "# early_stop_s = {}",
        opt(m.sim.early_stop_s.map(|v| v.as_f64().to_string()))
    );
    let _ = writeln!(out, "# noise_seed = {}", opt(p.noise.map(|n| n.seed.to_string())));
    let _ = writeln!(out, "# flip_prob = {}", opt(p.noise.map(|n| n.flip_prob.as_f64().to_string())));
    let _ = writeln!(out, "# jitter = {}", opt(p.noise.map(|n| n.jitter.as_f64().to_string())));
    let _ = writeln!(out, "# records = {}", dataset.len());
    for r in &dataset.records {
        let s = &r.scenario;
        let bits: String = s.tg_on().iter().map(|&b| if b { '1' } else { '0' }).collect();
        let _ = write!(out, "{} {}", r.id, bits);
        for (&b, &pw) in s.res_participates().iter().zip(s.res_power_mw()) {
            let _ = write!(out, " {}:{}", u8::from(b), pw.as_f64());
        }
        let _ = writeln!(out, " {}", r.label_pu.as_f64());
    }
    out
}

fn parse_num<T: Scalar>(tok: &str, line: usize) -> Result<T> {
    let v: f64 = tok.parse().map_err(|_| FncError::Parse {
        line,
        msg: format!("bad number {tok:?}"),
    })?;
    if !v.is_finite() {
        return Err(FncError::Parse {
            line,
            msg: format!("non-finite number {tok:?}"),
        });
    }
    Ok(T::lit(v))
}

/// Parse an `.fds` file and validate every record against `model`.
pub fn parse_dataset<T: Scalar>(text: &str, model: &SystemModel<T>) -> Result<LabeledDataset<T>> {
    let mut header = std::collections::BTreeMap::new();
    let mut records = Vec::new();
    let perr = |line: usize, msg: String| FncError::Parse { line, msg };
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        if let Some(h) = raw.strip_prefix('#') {
            if let Some((key, val)) = h.split_once('=') {
                header.insert(key.trim().to_string(), (line, val.trim().to_string()));
            }
            continue;
        }
        let toks: Vec<&str> = raw.split_whitespace().collect();
        if toks.len() != 3 + model.n_res() {
            return Err(perr(
                line,
                format!("expected {} fields, found {}", 3 + model.n_res(), toks.len()),
            ));
        }
        let id: u64 = toks[0].parse().map_err(|_| perr(line, format!("bad id {:?}", toks[0])))?;
        if toks[1].len() != model.n_tg() || !toks[1].chars().all(|c| c == '0' || c == '1') {
            return Err(perr(line, format!("TG bits must be {} of 0/1", model.n_tg())));
        }
        let tg_on = toks[1].chars().map(|c| c == '1').collect();
        let mut part = Vec::with_capacity(model.n_res());
        let mut power = Vec::with_capacity(model.n_res());
        for tok in &toks[2..2 + model.n_res()] {
            let (b, p) = tok
                .split_once(':')
                .ok_or_else(|| perr(line, format!("expected bit:power, found {tok:?}")))?;
            part.push(match b {
                "0" => false,
                "1" => true,
                _ => return Err(perr(line, format!("bad participation bit {b:?}"))),
            });
            power.push(parse_num::<T>(p, line)?);
        }
        let label_pu = parse_num::<T>(toks[2 + model.n_res()], line)?;
        if label_pu < T::zero() {
            return Err(perr(line, "negative label".into()));
        }
        let scenario = CommitmentScenario::new(model, tg_on, part, power).map_err(|e| perr(line, e.to_string()))?;
        records.push(LabeledRecord { id, scenario, label_pu });
    }
    if records.is_empty() {
        return Err(FncError::EmptyDataset);
    }

    let get = |key: &str| -> Result<(usize, &str)> {
        header
            .get(key)
            .map(|(l, v)| (*l, v.as_str()))
            .ok_or_else(|| perr(0, format!("missing header {key}")))
    };
    let num = |key: &str| -> Result<T> {
        let (l, v) = get(key)?;
        parse_num(v, l)
    };
    let opt_u64 = |key: &str| -> Result<Option<u64>> {
        let (l, v) = get(key)?;
        match v {
            "none" => Ok(None),
            _ => v.parse().map(Some).map_err(|_| perr(l, format!("bad {key} {v:?}"))),
        }
    };
    let opt_num = |key: &str| -> Result<Option<T>> {
        let (l, v) = get(key)?;
        match v {
            "none" => Ok(None),
            _ => parse_num(v, l).map(Some),
        }
    };
    let margin = MarginSpec {
        delta_f_max_pu: num("delta_f_max_pu")?,
        tol_pu: num("tol_pu")?,
        dp_hi: num("dp_hi_pu")?,
        cap_pu: num("cap_pu")?,
        sim: SimOptions {
            dt: num("dt_s")?,
            horizon_s: num("horizon_s")?,
            early_stop_s: opt_num("early_stop_s")?,
        },
    };
    margin.validate()?;
    let noise = match opt_u64("noise_seed")? {
        None => None,
        Some(seed) => Some(NoiseSpec {
            seed,
            flip_prob: num("flip_prob")?,
            jitter: num("jitter")?,
        }),
    };
    let (_, hash) = get("model_hash")?;
    let ds = LabeledDataset {
        records,
        provenance: Provenance {
            generator_seed: opt_u64("generator_seed")?,
            model_hash: hash.to_string(),
            margin,
            noise,
        },
    };
    ds.check_model(model)?;
    Ok(ds)
}
