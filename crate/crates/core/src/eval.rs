//! Held-out accuracy of the proposed predictor against the two-step
//! baseline, averaged over random hidden layers, and the report formats.

use std::fmt::Write as _;
use std::time::Instant;

use log::{info, warn};
use serde::Deserialize;

use crate::baseline::{predict_baseline, train_baseline, BaselineOptions};
use crate::data::{split, LabeledDataset};
use crate::elm::init_weights;
use crate::error::{FncError, Result};
use crate::io::toml_error;
use crate::pwl::{train_elm_pwl, PwlOptions};
use crate::scalar::Scalar;
use crate::sfr::SystemModel;

/// Above this seed-to-seed coefficient of variation of the MAE a warning is
/// logged.
pub const CV_WARN: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub mae_mw: f64,
    /// Mean of `|pred − label| / label`, in percent.
    pub mre_pct: f64,
    /// `max(pred − label)` in pu; positive means some prediction is unsafe.
    pub max_signed_error_pu: f64,
}

pub fn metrics<T: Scalar>(predictions: &[T], labels: &[T], s_base: T) -> Result<Metrics> {
    if predictions.len() != labels.len() {
        return Err(FncError::DimensionMismatch {
            expected: labels.len(),
            found: predictions.len(),
        });
    }
    if labels.is_empty() {
        return Err(FncError::EmptyDataset);
    }
    if labels.iter().any(|&y| !(y > T::zero())) {
        return Err(FncError::InvalidParameter(
            "relative error needs strictly positive labels".into(),
        ));
    }
    let n = labels.len() as f64;
    let mut abs = 0.0;
    let mut rel = 0.0;
    let mut worst = f64::NEG_INFINITY;
    for (&p, &y) in predictions.iter().zip(labels) {
        let e = (p - y).as_f64();
        abs += e.abs();
        rel += e.abs() / y.as_f64();
        worst = worst.max(e);
    }
    Ok(Metrics {
        mae_mw: abs / n * s_base.as_f64(),
        mre_pct: rel / n * 100.0,
        max_signed_error_pu: worst,
    })
}

/// Knobs of [`run_experiment`].
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSettings {
    /// One hidden-layer seed per trial.
    pub seeds: Vec<u64>,
    pub segments: usize,
    pub hidden: usize,
    pub train_count: usize,
    pub split_seed: u64,
    pub restarts: usize,
    pub max_iters: usize,
    pub baseline: BaselineOptions<f64>,
}

impl ExperimentSettings {
    pub fn trials(&self) -> usize {
        self.seeds.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Proposed,
    Baseline,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Baseline => "baseline",
        }
    }
}

/// One training run evaluated on one split.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialResult {
    pub method: Method,
    pub dataset: String,
    pub seed: u64,
    pub test: Metrics,
    pub train_max_signed_error_pu: f64,
    pub train_unsafe: usize,
    pub test_unsafe: usize,
    pub train_time_s: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub trials: usize,
    pub s_base_mva: f64,
    /// Noise description per dataset, as recorded in its provenance.
    pub notes: Vec<String>,
    pub results: Vec<TrialResult>,
}

/// Aggregated line of the report.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub method: String,
    pub dataset: String,
    pub runs: usize,
    pub mae_mw: f64,
    pub mae_sd_mw: f64,
    pub mre_pct: f64,
    pub mre_sd_pct: f64,
    pub train_max_err_mw: f64,
    pub test_max_err_mw: f64,
    pub train_unsafe: usize,
    pub test_unsafe: usize,
    pub train_time_s: Option<f64>,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn aggregate(method: Method, dataset: &str, rs: &[&TrialResult], s_base: f64) -> ReportRow {
    let mae: Vec<f64> = rs.iter().map(|r| r.test.mae_mw).collect();
    let mre: Vec<f64> = rs.iter().map(|r| r.test.mre_pct).collect();
    let time: Vec<f64> = rs.iter().map(|r| r.train_time_s).collect();
    let (mae_mw, mae_sd_mw) = mean_sd(&mae);
    let (mre_pct, mre_sd_pct) = mean_sd(&mre);
    ReportRow {
        method: method.name().into(),
        dataset: dataset.into(),
        runs: rs.len(),
        mae_mw,
        mae_sd_mw,
        mre_pct,
        mre_sd_pct,
        train_max_err_mw: rs
            .iter()
            .map(|r| r.train_max_signed_error_pu)
            .fold(f64::NEG_INFINITY, f64::max)
            * s_base,
        test_max_err_mw: rs
            .iter()
            .map(|r| r.test.max_signed_error_pu)
            .fold(f64::NEG_INFINITY, f64::max)
            * s_base,
        train_unsafe: rs.iter().map(|r| r.train_unsafe).sum(),
        test_unsafe: rs.iter().map(|r| r.test_unsafe).sum(),
        train_time_s: Some(mean_sd(&time).0),
    }
}

impl EvalReport {
    fn datasets(&self) -> Vec<&str> {
        let mut names: Vec<&str> = Vec::new();
        for r in &self.results {
            if !names.contains(&r.dataset.as_str()) {
                names.push(&r.dataset);
            }
        }
        names
    }

    /// Per-dataset rows for each method, each followed by the average over
    /// datasets of that method's per-dataset means.
    pub fn rows(&self) -> Vec<ReportRow> {
        let mut out = Vec::new();
        for method in [Method::Proposed, Method::Baseline] {
            let mut per = Vec::new();
            for d in self.datasets() {
                let rs: Vec<&TrialResult> = self
                    .results
                    .iter()
                    .filter(|r| r.method == method && r.dataset == d)
                    .collect();
                if !rs.is_empty() {
                    per.push(aggregate(method, d, &rs, self.s_base_mva));
                }
            }
            if per.is_empty() {
                continue;
            }
            let col = |f: fn(&ReportRow) -> f64| per.iter().map(f).collect::<Vec<_>>();
            let avg = ReportRow {
                method: method.name().into(),
                dataset: "average".into(),
                runs: per.iter().map(|r| r.runs).sum(),
                mae_mw: mean_sd(&col(|r| r.mae_mw)).0,
                mae_sd_mw: mean_sd(&col(|r| r.mae_sd_mw)).0,
                mre_pct: mean_sd(&col(|r| r.mre_pct)).0,
                mre_sd_pct: mean_sd(&col(|r| r.mre_sd_pct)).0,
                train_max_err_mw: col(|r| r.train_max_err_mw).into_iter().fold(f64::NEG_INFINITY, f64::max),
                test_max_err_mw: col(|r| r.test_max_err_mw).into_iter().fold(f64::NEG_INFINITY, f64::max),
                train_unsafe: per.iter().map(|r| r.train_unsafe).sum(),
                test_unsafe: per.iter().map(|r| r.test_unsafe).sum(),
                train_time_s: Some(mean_sd(&col(|r| r.train_time_s.unwrap_or(0.0))).0),
            };
            out.extend(per);
            out.push(avg);
        }
        out
    }

    /// Average MRE of a method over datasets.
    pub fn average_mre(&self, method: Method) -> Option<f64> {
        self.rows()
            .into_iter()
            .find(|r| r.method == method.name() && r.dataset == "average")
            .map(|r| r.mre_pct)
    }
}

fn count_unsafe<T: Scalar>(pred: &[T], labels: &[T]) -> usize {
    pred.iter().zip(labels).filter(|(&p, &y)| p > y).count()
}

/// Train and test both methods on every dataset. The proposed predictor is
/// trained once per seed; the baseline is deterministic and trained once
/// per dataset.
pub fn run_experiment<T: Scalar>(
    model: &SystemModel<T>,
    datasets: &[(String, LabeledDataset<T>)],
    settings: &ExperimentSettings,
) -> Result<EvalReport> {
    if settings.seeds.is_empty() {
        return Err(FncError::InvalidParameter("need at least one trial".into()));
    }
    if datasets.is_empty() {
        return Err(FncError::EmptyDataset);
    }
    let s_base = model.s_base_mva();
    let mut results = Vec::new();
    let mut notes = vec![
        "baseline: reconstructed two-step fit of raw parameters to the reduced-model margin".to_string(),
    ];
    for (name, ds) in datasets {
        ds.check_model(model)?;
        notes.push(match &ds.provenance.noise {
            None => format!("{name}: generated"),
            Some(n) => format!(
                "{name}: bit flips p = {}, RES output jitter +-{}, relabeled, noise seed {}",
                n.flip_prob, n.jitter, n.seed
            ),
        });
        let (train, test) = split(ds, settings.train_count, settings.split_seed)?;
        let y_train = train.labels();
        let y_test = test.labels();
        let train_scen = train.scenarios();
        let test_scen = test.scenarios();

        for &seed in &settings.seeds {
            let weights = init_weights(settings.hidden, seed, model)?;
            let z_train = train.features(&weights, model)?;
            let z_test = test.features(&weights, model)?;
            let opts = PwlOptions {
                segments: settings.segments,
                seed,
                max_iters: settings.max_iters,
                restarts: settings.restarts,
                coef_bound: T::lit(1e3),
            };
            let started = Instant::now();
            let pwl = train_elm_pwl(&z_train, &y_train, &opts)?;
            let train_time_s = started.elapsed().as_secs_f64();
            let p_train = z_train.iter().map(|z| pwl.eval(z)).collect::<Result<Vec<T>>>()?;
            let p_test = z_test.iter().map(|z| pwl.eval(z)).collect::<Result<Vec<T>>>()?;
            let m_train = metrics(&p_train, &y_train, s_base)?;
            let m_test = metrics(&p_test, &y_test, s_base)?;
            info!(
                "{name} seed {seed}: MAE {:.4} MW, MRE {:.4}%, {:.2} s",
                m_test.mae_mw, m_test.mre_pct, train_time_s
            );
            results.push(TrialResult {
                method: Method::Proposed,
                dataset: name.clone(),
                seed,
                test: m_test,
                train_max_signed_error_pu: m_train.max_signed_error_pu,
                train_unsafe: count_unsafe(&p_train, &y_train),
                test_unsafe: count_unsafe(&p_test, &y_test),
                train_time_s,
            });
        }

        let b = &settings.baseline;
        let bopts = BaselineOptions {
            pwl: PwlOptions {
                segments: b.pwl.segments,
                seed: b.pwl.seed,
                max_iters: b.pwl.max_iters,
                restarts: b.pwl.restarts,
                coef_bound: T::lit(b.pwl.coef_bound),
            },
            delta_f_max_pu: ds.provenance.margin.delta_f_max_pu,
            dt: ds.provenance.margin.sim.dt,
        };
        let started = Instant::now();
        let bm = train_baseline(model, &train_scen, &bopts)?;
        let train_time_s = started.elapsed().as_secs_f64();
        let p_train = train_scen
            .iter()
            .map(|s| predict_baseline(&bm, model, s))
            .collect::<Result<Vec<T>>>()?;
        let p_test = test_scen
            .iter()
            .map(|s| predict_baseline(&bm, model, s))
            .collect::<Result<Vec<T>>>()?;
        let m_train = metrics(&p_train, &y_train, s_base)?;
        let m_test = metrics(&p_test, &y_test, s_base)?;
        info!(
            "{name} baseline: MAE {:.4} MW, MRE {:.4}%, {:.2} s",
            m_test.mae_mw, m_test.mre_pct, train_time_s
        );
        results.push(TrialResult {
            method: Method::Baseline,
            dataset: name.clone(),
            seed: b.pwl.seed,
            test: m_test,
            train_max_signed_error_pu: m_train.max_signed_error_pu,
            train_unsafe: count_unsafe(&p_train, &y_train),
            test_unsafe: count_unsafe(&p_test, &y_test),
            train_time_s,
        });
    }
    let report = EvalReport {
        trials: settings.trials(),
        s_base_mva: s_base.as_f64(),
        notes,
        results,
    };
    for row in report.rows() {
        if row.method == Method::Proposed.name() && row.dataset != "average" && row.mae_mw > 0.0 {
            let cv = row.mae_sd_mw / row.mae_mw;
            if cv >= CV_WARN {
                warn!("{}: MAE coefficient of variation {:.1}% across seeds", row.dataset, cv * 100.0);
            } else {
                info!("{}: MAE coefficient of variation {:.1}% across seeds", row.dataset, cv * 100.0);
            }
        }
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Table,
}

const COLUMNS: [&str; 11] = [
    "method",
    "dataset",
    "runs",
    "mae_mw",
    "mae_sd_mw",
    "mre_pct",
    "mre_sd_pct",
    "train_max_err_mw",
    "test_max_err_mw",
    "train_unsafe",
    "test_unsafe",
];

/// Render the aggregated rows. Timing columns are only written when asked
/// for, since they are the one non-reproducible quantity.
pub fn render_report(report: &EvalReport, format: ReportFormat, include_timing: bool) -> String {
    let rows = report.rows();
    let mut out = String::new();
    let _ = writeln!(out, "# trials per dataset: {}", report.trials);
    let _ = writeln!(out, "# MAE in MW on s_base = {} MVA; MRE denominator is the simulated margin", report.s_base_mva);
    let _ = writeln!(out, "# max_err = max(prediction - label); unsafe = predictions above the label");
    for n in &report.notes {
        let _ = writeln!(out, "# {n}");
    }
    match format {
        ReportFormat::Csv => {
            out.push_str(&COLUMNS.join(","));
            if include_timing {
                out.push_str(",train_time_s");
            }
            out.push('\n');
            for r in &rows {
                let _ = write!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{}",
                    r.method,
                    r.dataset,
                    r.runs,
                    r.mae_mw,
                    r.mae_sd_mw,
                    r.mre_pct,
                    r.mre_sd_pct,
                    r.train_max_err_mw,
                    r.test_max_err_mw,
                    r.train_unsafe,
                    r.test_unsafe
                );
                if include_timing {
                    let _ = write!(out, ",{}", r.train_time_s.unwrap_or(f64::NAN));
                }
                out.push('\n');
            }
        }
        ReportFormat::Table => {
            let _ = write!(
                out,
                "{:<9} {:<16} {:>4} {:>10} {:>9} {:>9} {:>9} {:>13} {:>13} {:>9} {:>9}",
                "method", "dataset", "runs", "MAE MW", "sd", "MRE %", "sd", "train max MW", "test max MW", "unsafe tr", "unsafe te"
            );
            if include_timing {
                let _ = write!(out, " {:>9}", "time s");
            }
            out.push('\n');
            for r in &rows {
                let _ = write!(
                    out,
                    "{:<9} {:<16} {:>4} {:>10.4} {:>9.4} {:>9.4} {:>9.4} {:>13.3e} {:>13.3e} {:>9} {:>9}",
                    r.method,
                    r.dataset,
                    r.runs,
                    r.mae_mw,
                    r.mae_sd_mw,
                    r.mre_pct,
                    r.mre_sd_pct,
                    r.train_max_err_mw,
                    r.test_max_err_mw,
                    r.train_unsafe,
                    r.test_unsafe
                );
                if include_timing {
                    let _ = write!(out, " {:>9.3}", r.train_time_s.unwrap_or(f64::NAN));
                }
                out.push('\n');
            }
        }
    }
    out
}

/// Read back rows written by [`render_report`] in CSV form.
pub fn parse_report_csv(text: &str) -> Result<Vec<ReportRow>> {
    let perr = |line: usize, msg: String| FncError::Parse { line, msg };
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty());
    let (hl, header) = lines.next().ok_or_else(|| perr(0, "missing header".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    let timing = match cols.len() {
        11 => false,
        12 if cols[11] == "train_time_s" => true,
        _ => return Err(perr(hl + 1, format!("unexpected header {header:?}"))),
    };
    if cols[..11] != COLUMNS {
        return Err(perr(hl + 1, format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for (k, l) in lines {
        let f: Vec<&str> = l.split(',').collect();
        if f.len() != cols.len() {
            return Err(perr(k + 1, format!("expected {} fields", cols.len())));
        }
        let num = |i: usize| f[i].parse::<f64>().map_err(|_| perr(k + 1, format!("bad number {:?}", f[i])));
        let int = |i: usize| f[i].parse::<usize>().map_err(|_| perr(k + 1, format!("bad count {:?}", f[i])));
        rows.push(ReportRow {
            method: f[0].into(),
            dataset: f[1].into(),
            runs: int(2)?,
            mae_mw: num(3)?,
            mae_sd_mw: num(4)?,
            mre_pct: num(5)?,
            mre_sd_pct: num(6)?,
            train_max_err_mw: num(7)?,
            test_max_err_mw: num(8)?,
            train_unsafe: int(9)?,
            test_unsafe: int(10)?,
            train_time_s: if timing { Some(num(11)?) } else { None },
        });
    }
    Ok(rows)
}

/// Experiment file: `model`, `datasets`, `trials`, `L`, `hidden`, `seeds`
/// and `train_count`, plus optional search settings. Paths are returned as
/// written.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: String,
    pub datasets: Vec<String>,
    pub trials: usize,
    #[serde(rename = "L")]
    pub segments: usize,
    pub hidden: usize,
    /// Seeds of the hidden layers; defaults to `0..trials`.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    pub train_count: usize,
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_iters")]
    pub max_iters: usize,
    #[serde(default = "default_baseline_segments")]
    pub baseline_segments: usize,
}

fn default_restarts() -> usize {
    PwlOptions::<f64>::default().restarts
}

fn default_iters() -> usize {
    PwlOptions::<f64>::default().max_iters
}

fn default_baseline_segments() -> usize {
    BaselineOptions::<f64>::default().pwl.segments
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| toml_error(text, e))?;
        cfg.settings()?;
        Ok(cfg)
    }

    pub fn settings(&self) -> Result<ExperimentSettings> {
        if self.trials == 0 {
            return Err(FncError::InvalidParameter("trials must be >= 1".into()));
        }
        if self.datasets.is_empty() {
            return Err(FncError::InvalidParameter("datasets must not be empty".into()));
        }
        if self.segments == 0 || self.hidden == 0 || self.baseline_segments == 0 {
            return Err(FncError::InvalidParameter(
                "L, hidden and baseline_segments must be >= 1".into(),
            ));
        }
        let seeds = match &self.seeds {
            None => (0..self.trials as u64).collect(),
            Some(s) if s.len() == self.trials => s.clone(),
            Some(s) => {
                return Err(FncError::InvalidParameter(format!(
                    "{} seeds given for {} trials",
                    s.len(),
                    self.trials
                )))
            }
        };
        let mut baseline = BaselineOptions::<f64>::default();
        baseline.pwl.segments = self.baseline_segments;
        Ok(ExperimentSettings {
            seeds,
            segments: self.segments,
            hidden: self.hidden,
            train_count: self.train_count,
            split_seed: self.split_seed,
            restarts: self.restarts,
            max_iters: self.max_iters,
            baseline,
        })
    }
}
