//! Min-of-affine (concave piecewise-linear) margin predictor.
//!
//! Training keeps every training prediction at or below its label: each
//! sample belongs to exactly one segment, each segment is fitted by a linear
//! program that never overshoots its own samples, and the minimum over
//! segments can only sit lower. Segments are refitted under alternating
//! argmin re-assignment from several random starts and the best iterate is
//! kept.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FncError, Result};
use crate::lp;
use crate::scalar::{dot, Scalar};

/// One affine piece `c·z + h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment<T> {
    pub c: Vec<T>,
    pub h: T,
}

impl<T: Scalar> Segment<T> {
    #[inline]
    pub fn value(&self, z: &[T]) -> T {
        dot(&self.c, z) + self.h
    }
}

/// Bookkeeping stored alongside a trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta<T> {
    pub seed: u64,
    pub segments: usize,
    pub restarts: usize,
    pub iterations: usize,
    /// Σ predictions over the training set for the returned model.
    pub objective: T,
    /// Best objective so far after each iteration of the winning start.
    pub objective_history: Vec<T>,
}

/// Trained min-of-affine predictor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PwlModel<T> {
    segments: Vec<Segment<T>>,
    feature_dim: usize,
    pub meta: TrainingMeta<T>,
}

impl<T: Scalar> PwlModel<T> {
    pub fn new(segments: Vec<Segment<T>>, meta: TrainingMeta<T>) -> Result<Self> {
        let feature_dim = segments
            .first()
            .map(|s| s.c.len())
            .ok_or_else(|| FncError::InvalidParameter("need at least one segment".into()))?;
        for s in &segments {
            if s.c.len() != feature_dim {
                return Err(FncError::DimensionMismatch {
                    expected: feature_dim,
                    found: s.c.len(),
                });
            }
            if !(s.h.is_finite() && s.c.iter().all(|v| v.is_finite())) {
                return Err(FncError::InvalidParameter("non-finite coefficient".into()));
            }
        }
        Ok(Self {
            segments,
            feature_dim,
            meta,
        })
    }

    pub fn segments(&self) -> &[Segment<T>] {
        &self.segments
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// `min_l (c_l·z + h_l)`.
    pub fn eval(&self, features: &[T]) -> Result<T> {
        self.eval_with_segment(features).map(|(v, _)| v)
    }

    /// Prediction and the index of the active segment (first on ties).
    pub fn eval_with_segment(&self, features: &[T]) -> Result<(T, usize)> {
        if features.len() != self.feature_dim {
            return Err(FncError::DimensionMismatch {
                expected: self.feature_dim,
                found: features.len(),
            });
        }
        Ok(min_segment(&self.segments, features))
    }
}

fn min_segment<T: Scalar>(segments: &[Segment<T>], z: &[T]) -> (T, usize) {
    let mut best = (T::infinity(), 0);
    for (l, s) in segments.iter().enumerate() {
        let v = s.value(z);
        if v < best.0 {
            best = (v, l);
        }
    }
    best
}

/// Orthonormal basis of the span of a sample set, built by twice-iterated
/// Gram-Schmidt. Decision-scaled features are heavily collinear, so fitting
/// happens in these coordinates and coefficients are lifted back.
#[derive(Clone, Debug)]
pub struct SpanBasis<T> {
    dim: usize,
    rows: Vec<Vec<T>>,
}

impl<T: Scalar> SpanBasis<T> {
    pub fn from_samples(samples: &[Vec<T>], rel_tol: T) -> Self {
        let dim = samples.first().map_or(0, |s| s.len());
        let scale = samples
            .iter()
            .map(|s| dot(s, s).sqrt())
            .fold(T::zero(), T::max);
        let mut rows: Vec<Vec<T>> = Vec::new();
        if scale == T::zero() {
            return Self { dim, rows };
        }
        for s in samples {
            let mut r = s.clone();
            for _ in 0..2 {
                for q in &rows {
                    let p = dot(q, &r);
                    for (ri, &qi) in r.iter_mut().zip(q) {
                        *ri -= p * qi;
                    }
                }
            }
            let norm = dot(&r, &r).sqrt();
            if norm > rel_tol * scale {
                for ri in &mut r {
                    *ri /= norm;
                }
                rows.push(r);
                if rows.len() == dim {
                    break;
                }
            }
        }
        Self { dim, rows }
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    pub fn project(&self, z: &[T]) -> Vec<T> {
        self.rows.iter().map(|q| dot(q, z)).collect()
    }

    pub fn lift(&self, reduced: &[T]) -> Vec<T> {
        let mut c = vec![T::zero(); self.dim];
        for (q, &w) in self.rows.iter().zip(reduced) {
            for (ci, &qi) in c.iter_mut().zip(q) {
                *ci += w * qi;
            }
        }
        c
    }
}

/// Result of [`fit_segment_lp`].
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentFit<T> {
    pub segment: Segment<T>,
    /// `Σ_k (c·z_k + h)` over the fitted samples.
    pub objective: T,
    /// Some coefficient sits on the `‖c‖∞ ≤ bound` box.
    pub bound_active: bool,
}

/// Best under-estimating affine function of a sample set.
///
/// Solves `max Σ_k (c·z_k + h)` subject to `c·z_k + h ≤ y_k` and
/// `‖c‖∞ ≤ bound`, then, among optimal solutions, the one with the smallest
/// `‖c‖₁`. The intercept is finally set to `min_k (y_k − c·z_k)`, which
/// leaves at least one constraint exactly active.
pub fn fit_segment_lp<T: Scalar>(samples: &[Vec<T>], labels: &[T], bound: T) -> Result<SegmentFit<T>> {
    let (d, k) = check_samples(samples, labels)?;
    if !(bound > T::zero()) {
        return Err(FncError::InvalidParameter("coefficient bound must be > 0".into()));
    }

    // stage 1: variables (c, h), all free
    let mut a: Vec<Vec<T>> = Vec::with_capacity(k + 2 * d);
    let mut b: Vec<T> = Vec::with_capacity(k + 2 * d);
    for (z, &y) in samples.iter().zip(labels) {
        let mut row = z.clone();
        row.push(T::one());
        a.push(row);
        b.push(y);
    }
    for i in 0..d {
        for sign in [T::one(), -T::one()] {
            let mut row = vec![T::zero(); d + 1];
            row[i] = sign;
            a.push(row);
            b.push(bound);
        }
    }
    let mut sum_z = vec![T::zero(); d];
    for z in samples {
        for (s, &v) in sum_z.iter_mut().zip(z) {
            *s += v;
        }
    }
    let mut obj = sum_z.clone();
    obj.push(T::from_count(k));
    let stage1 = lp::solve_mixed(&a, &b, &obj, &vec![true; d + 1])?;
    let opt = stage1.objective;

    // stage 2: variables (p, q, h) with c = p − q; minimize Σ(p + q) while
    // keeping the stage-1 objective
    let tiny = T::epsilon() * T::lit(64.0) * opt.abs().max(T::one());
    let mut a2: Vec<Vec<T>> = Vec::with_capacity(k + 2 * d + 1);
    let mut b2: Vec<T> = Vec::with_capacity(k + 2 * d + 1);
    let widen = |row: &[T], h: T| -> Vec<T> {
        let mut r = Vec::with_capacity(2 * d + 1);
        r.extend_from_slice(row);
        r.extend(row.iter().map(|&v| -v));
        r.push(h);
        r
    };
    for (z, &y) in samples.iter().zip(labels) {
        a2.push(widen(z, T::one()));
        b2.push(y);
    }
    for i in 0..2 * d {
        let mut row = vec![T::zero(); 2 * d + 1];
        row[i] = T::one();
        a2.push(row);
        b2.push(bound);
    }
    let neg_sum: Vec<T> = sum_z.iter().map(|&v| -v).collect();
    a2.push(widen(&neg_sum, -T::from_count(k)));
    b2.push(-(opt - tiny));
    let mut obj2 = vec![-T::one(); 2 * d];
    obj2.push(T::zero());
    let mut free = vec![false; 2 * d];
    free.push(true);

    let finish = |c: Vec<T>| -> (Segment<T>, T) {
        let h = samples
            .iter()
            .zip(labels)
            .map(|(z, &y)| y - dot(&c, z))
            .fold(T::infinity(), T::min);
        let segment = Segment { c, h };
        let objective = samples.iter().map(|z| segment.value(z)).sum();
        (segment, objective)
    };
    let plain = finish(stage1.x[..d].to_vec());
    let (segment, objective) = match lp::solve_mixed(&a2, &b2, &obj2, &free) {
        Ok(sol) => {
            let sparse = finish((0..d).map(|i| sol.x[i] - sol.x[d + i]).collect());
            // the stage-2 solve may give back up to its pivot tolerance
            if sparse.1 >= plain.1 - tiny {
                sparse
            } else {
                plain
            }
        }
        Err(FncError::Lp(_)) => plain,
        Err(e) => return Err(e),
    };
    let edge = bound * (T::one() - T::lit(1e-9));
    let bound_active = segment.c.iter().any(|v| v.abs() >= edge);
    Ok(SegmentFit {
        segment,
        objective,
        bound_active,
    })
}

/// Least-absolute-error affine fit of a sample set, `‖c‖∞ ≤ bound`.
pub fn fit_segment_lae<T: Scalar>(samples: &[Vec<T>], labels: &[T], bound: T) -> Result<Segment<T>> {
    let (d, k) = check_samples(samples, labels)?;
    // variables (c, h, e_1..e_k); c, h free
    let n = d + 1 + k;
    let mut a: Vec<Vec<T>> = Vec::with_capacity(2 * k + 2 * d);
    let mut b: Vec<T> = Vec::with_capacity(2 * k + 2 * d);
    for (idx, (z, &y)) in samples.iter().zip(labels).enumerate() {
        let mut up = vec![T::zero(); n];
        up[..d].copy_from_slice(z);
        up[d] = T::one();
        up[d + 1 + idx] = -T::one();
        let mut down: Vec<T> = up.iter().map(|&v| -v).collect();
        down[d + 1 + idx] = -T::one();
        a.push(up);
        b.push(y);
        a.push(down);
        b.push(-y);
    }
    for i in 0..d {
        for sign in [T::one(), -T::one()] {
            let mut row = vec![T::zero(); n];
            row[i] = sign;
            a.push(row);
            b.push(bound);
        }
    }
    let mut obj = vec![T::zero(); n];
    for e in obj.iter_mut().skip(d + 1) {
        *e = -T::one();
    }
    let mut free = vec![false; n];
    for f in free.iter_mut().take(d + 1) {
        *f = true;
    }
    let sol = lp::solve_mixed(&a, &b, &obj, &free)?;
    Ok(Segment {
        c: sol.x[..d].to_vec(),
        h: sol.x[d],
    })
}

fn check_samples<T: Scalar>(samples: &[Vec<T>], labels: &[T]) -> Result<(usize, usize)> {
    if samples.is_empty() {
        return Err(FncError::InvalidParameter("segment has no samples".into()));
    }
    if samples.len() != labels.len() {
        return Err(FncError::DimensionMismatch {
            expected: samples.len(),
            found: labels.len(),
        });
    }
    let d = samples[0].len();
    if let Some(s) = samples.iter().find(|s| s.len() != d) {
        return Err(FncError::DimensionMismatch {
            expected: d,
            found: s.len(),
        });
    }
    if !labels.iter().all(|y| y.is_finite()) {
        return Err(FncError::InvalidParameter("labels must be finite".into()));
    }
    Ok((d, samples.len()))
}

/// Options for [`train_elm_pwl`] and the baseline fit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PwlOptions<T> {
    pub segments: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub restarts: usize,
    /// Box on reduced-coordinate coefficients.
    pub coef_bound: T,
}

impl<T: Scalar> Default for PwlOptions<T> {
    fn default() -> Self {
        Self {
            segments: 3,
            seed: 0,
            max_iters: 50,
            restarts: 10,
            coef_bound: T::lit(1e3),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum FitKind {
    /// Never exceed a label; maximize Σ predictions.
    OneSided,
    /// Minimize Σ |prediction − label|.
    LeastAbsolute,
    /// Ridge-stabilized least squares; only used to place cell boundaries.
    LeastSquares,
}

struct StartResult<T> {
    segments: Vec<Segment<T>>,
    score: T,
    iterations: usize,
    history: Vec<T>,
}

fn score<T: Scalar>(kind: FitKind, segments: &[Segment<T>], z: &[Vec<T>], y: &[T]) -> T {
    z.iter()
        .zip(y)
        .map(|(zk, &yk)| {
            let v = min_segment(segments, zk).0;
            match kind {
                FitKind::OneSided => v,
                FitKind::LeastAbsolute => -(v - yk).abs(),
                FitKind::LeastSquares => -(v - yk) * (v - yk),
            }
        })
        .sum()
}

/// Solve the ridge-regularized normal equations for `[c, h]`.
fn fit_segment_ls<T: Scalar>(samples: &[&Vec<T>], labels: &[T]) -> Segment<T> {
    fit_segment_wls(samples, labels, None)
}

fn fit_segment_wls<T: Scalar>(samples: &[&Vec<T>], labels: &[T], weights: Option<&[T]>) -> Segment<T> {
    let d = samples[0].len();
    let n = d + 1;
    let mut g = vec![T::zero(); n * n];
    let mut rhs = vec![T::zero(); n];
    for (k, (z, &y)) in samples.iter().zip(labels).enumerate() {
        let w = weights.map_or(T::one(), |w| w[k]);
        for i in 0..n {
            let zi = if i < d { z[i] } else { T::one() };
            rhs[i] += w * zi * y;
            for j in 0..n {
                let zj = if j < d { z[j] } else { T::one() };
                g[i * n + j] += w * zi * zj;
            }
        }
    }
    let trace: T = (0..n).map(|i| g[i * n + i]).sum();
    let ridge = trace.max(T::one()) * T::lit(1e-10);
    for i in 0..d {
        g[i * n + i] += ridge;
    }
    let theta = solve_dense(g, rhs, n);
    Segment {
        c: theta[..d].to_vec(),
        h: theta[d],
    }
}

/// Least-absolute-error fit by iteratively reweighted least squares,
/// weights `1 / max(|r_k|, δ)`. Approaches the exact LP optimum of
/// [`fit_segment_lae`] at a cost linear in the sample count.
pub(crate) fn fit_segment_irls<T: Scalar>(samples: &[&Vec<T>], labels: &[T]) -> Segment<T> {
    let scale = labels.iter().fold(T::zero(), |m, y| m.max(y.abs())).max(T::epsilon());
    let delta = scale * T::lit(1e-7);
    let loss = |s: &Segment<T>| -> T {
        samples
            .iter()
            .zip(labels)
            .map(|(z, &y)| (y - s.value(z)).abs())
            .sum()
    };
    let mut seg = fit_segment_ls(samples, labels);
    let mut best = (loss(&seg), seg.clone());
    let mut w = vec![T::one(); samples.len()];
    let mut stall = 0;
    for _ in 0..200 {
        for (wk, (z, &y)) in w.iter_mut().zip(samples.iter().zip(labels)) {
            *wk = T::one() / (y - seg.value(z)).abs().max(delta);
        }
        seg = fit_segment_wls(samples, labels, Some(&w));
        let l = loss(&seg);
        if l < best.0 * (T::one() - T::lit(1e-12)) {
            best = (l, seg.clone());
            stall = 0;
        } else {
            stall += 1;
            if stall == 5 {
                break;
            }
        }
    }
    // the optimum interpolates d + 1 samples: try the ones fitted closest
    let d = samples[0].len();
    if samples.len() > d + 1 {
        let mut order: Vec<(T, usize)> = samples
            .iter()
            .zip(labels)
            .enumerate()
            .map(|(k, (z, &y))| ((y - best.1.value(z)).abs(), k))
            .collect();
        order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let pick: Vec<&Vec<T>> = order[..d + 1].iter().map(|&(_, k)| samples[k]).collect();
        let ys: Vec<T> = order[..d + 1].iter().map(|&(_, k)| labels[k]).collect();
        let vertex = fit_segment_ls(&pick, &ys);
        let l = loss(&vertex);
        if l < best.0 {
            best = (l, vertex);
        }
    }
    best.1
}

/// Gaussian elimination with partial pivoting; singular pivots yield zeros.
fn solve_dense<T: Scalar>(mut a: Vec<T>, mut b: Vec<T>, n: usize) -> Vec<T> {
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &k| a[i * n + col].abs().partial_cmp(&a[k * n + col].abs()).unwrap())
            .unwrap();
        if a[piv * n + col].abs() <= T::epsilon() {
            continue;
        }
        if piv != col {
            for j in 0..n {
                a.swap(piv * n + j, col * n + j);
            }
            b.swap(piv, col);
        }
        for i in col + 1..n {
            let f = a[i * n + col] / a[col * n + col];
            if f != T::zero() {
                for j in col..n {
                    let v = a[col * n + j];
                    a[i * n + j] -= f * v;
                }
                let v = b[col];
                b[i] -= f * v;
            }
        }
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let p = a[i * n + i];
        if p.abs() <= T::epsilon() {
            continue;
        }
        let mut s = b[i];
        for j in i + 1..n {
            s -= a[i * n + j] * x[j];
        }
        x[i] = s / p;
    }
    x
}

fn fit_one<T: Scalar>(
    kind: FitKind,
    z: &[Vec<T>],
    y: &[T],
    members: &[usize],
    bound: T,
) -> Result<Segment<T>> {
    let ys: Vec<T> = members.iter().map(|&k| y[k]).collect();
    let zs: Vec<&Vec<T>> = members.iter().map(|&k| &z[k]).collect();
    match kind {
        FitKind::LeastSquares => Ok(fit_segment_ls(&zs, &ys)),
        FitKind::LeastAbsolute => Ok(fit_segment_irls(&zs, &ys)),
        FitKind::OneSided => {
            let owned: Vec<Vec<T>> = zs.into_iter().cloned().collect();
            fit_segment_lp(&owned, &ys, bound).map(|f| f.segment)
        }
    }
}

fn argmin_assignment<T: Scalar>(segments: &[Segment<T>], z: &[Vec<T>]) -> Vec<usize> {
    z.iter().map(|zk| min_segment(segments, zk).1).collect()
}

/// Voronoi cells of `n_seg` distinct randomly chosen samples.
fn random_partition<T: Scalar>(z: &[Vec<T>], n_seg: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..z.len()).collect();
    idx.shuffle(rng);
    let centres: Vec<&Vec<T>> = idx[..n_seg].iter().map(|&k| &z[k]).collect();
    z.iter()
        .map(|zk| {
            let mut best = (T::infinity(), 0);
            for (l, c) in centres.iter().enumerate() {
                let d2: T = zk.iter().zip(c.iter()).map(|(&a, &b)| (a - b) * (a - b)).sum();
                if d2 < best.0 {
                    best = (d2, l);
                }
            }
            best.1
        })
        .collect()
}

/// Iterations without a new best after which a start is abandoned. The
/// alternation tends to cycle rather than settle.
const PATIENCE: usize = 5;

/// Fit every cell, re-assign samples to their argmin segment, repeat until
/// the partition is stable or stops improving. Returns the best iterate.
fn alternate<T: Scalar>(
    kind: FitKind,
    z: &[Vec<T>],
    y: &[T],
    opts: &PwlOptions<T>,
    mut assign: Vec<usize>,
) -> Result<StartResult<T>> {
    let k_total = z.len();
    let n_seg = opts.segments;
    let mut best: Option<(Vec<Segment<T>>, T)> = None;
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut stale = 0;
    for _ in 0..opts.max_iters.max(1) {
        iterations += 1;
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_seg];
        for (k, &l) in assign.iter().enumerate() {
            members[l].push(k);
        }
        let mut fitted: Vec<Option<Segment<T>>> = vec![None; n_seg];
        for l in 0..n_seg {
            if !members[l].is_empty() {
                fitted[l] = Some(fit_one(kind, z, y, &members[l], opts.coef_bound)?);
            }
        }
        // empty cells restart from the samples the other segments fit worst
        let empty: Vec<usize> = (0..n_seg).filter(|&l| fitted[l].is_none()).collect();
        if !empty.is_empty() {
            let live: Vec<Segment<T>> = fitted.iter().flatten().cloned().collect();
            let mut residual: Vec<(T, usize)> = (0..k_total)
                .map(|k| ((y[k] - min_segment(&live, &z[k]).0).abs(), k))
                .collect();
            residual.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            let take = (k_total / (2 * n_seg)).max(1);
            for (pos, &l) in empty.iter().enumerate() {
                let start = (pos * take).min(k_total - 1);
                let end = (start + take).min(k_total);
                let chosen: Vec<usize> = residual[start..end].iter().map(|&(_, k)| k).collect();
                for &k in &chosen {
                    assign[k] = l;
                }
                fitted[l] = Some(fit_one(kind, z, y, &chosen, opts.coef_bound)?);
            }
        }
        let segments: Vec<Segment<T>> = fitted.into_iter().map(|s| s.unwrap()).collect();
        let s = score(kind, &segments, z, y);
        if best.as_ref().map_or(true, |(_, b)| s > *b) {
            best = Some((segments.clone(), s));
            stale = 0;
        } else {
            stale += 1;
        }
        history.push(best.as_ref().unwrap().1);
        if stale >= PATIENCE {
            break;
        }

        let mut changed = false;
        for (k, zk) in z.iter().enumerate() {
            let (lo, l) = min_segment(&segments, zk);
            if segments[assign[k]].value(zk) > lo {
                assign[k] = l;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let (segments, score) = best.unwrap();
    Ok(StartResult {
        segments,
        score,
        iterations,
        history,
    })
}

fn run_start<T: Scalar>(
    kind: FitKind,
    z: &[Vec<T>],
    y: &[T],
    opts: &PwlOptions<T>,
    seed: u64,
) -> Result<StartResult<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let initial = random_partition(z, opts.segments, &mut rng);
    // least squares moves cell boundaries freely; the target fit then
    // starts from its partition
    let warm = alternate(FitKind::LeastSquares, z, y, opts, initial)?;
    alternate(kind, z, y, opts, argmin_assignment(&warm.segments, z))
}

/// Alternating-partition fit in reduced coordinates; returns segments in the
/// original feature coordinates together with the winning start's record.
pub(crate) fn fit_min_affine<T: Scalar>(
    kind: FitKind,
    features: &[Vec<T>],
    labels: &[T],
    opts: &PwlOptions<T>,
) -> Result<(Vec<Segment<T>>, usize, Vec<T>)> {
    let (_, k) = check_samples(features, labels)?;
    if opts.segments == 0 {
        return Err(FncError::InvalidParameter("need at least one segment".into()));
    }
    if k < opts.segments {
        return Err(FncError::InvalidParameter(format!(
            "{k} samples cannot support {} segments",
            opts.segments
        )));
    }
    let basis = SpanBasis::from_samples(features, T::lit(1e-9).max(T::epsilon() * T::lit(64.0)));
    let reduced: Vec<Vec<T>> = features.iter().map(|z| basis.project(z)).collect();

    let mut master = ChaCha8Rng::seed_from_u64(opts.seed);
    let seeds: Vec<u64> = (0..opts.restarts.max(1)).map(|_| master.gen()).collect();
    let results: Vec<Result<StartResult<T>>> = seeds
        .par_iter()
        .map(|&s| run_start(kind, &reduced, labels, opts, s))
        .collect();
    let mut best: Option<StartResult<T>> = None;
    for r in results {
        let r = r?;
        if best.as_ref().map_or(true, |b| r.score > b.score) {
            best = Some(r);
        }
    }
    let best = best.unwrap();
    let segments = best
        .segments
        .iter()
        .map(|s| Segment {
            c: basis.lift(&s.c),
            h: s.h,
        })
        .collect();
    Ok((segments, best.iterations, best.history))
}

/// Lower intercepts until no training prediction exceeds its label when
/// evaluated in original coordinates.
fn enforce_safety<T: Scalar>(segments: &mut [Segment<T>], z: &[Vec<T>], y: &[T]) {
    for _ in 0..16 {
        let mut clean = true;
        for (zk, &yk) in z.iter().zip(y) {
            let (v, l) = min_segment(segments, zk);
            if v > yk {
                // slack covers the rounding of c·z + h, which can cancel
                let size = segments[l]
                    .c
                    .iter()
                    .zip(zk)
                    .fold(segments[l].h.abs() + yk.abs(), |a, (&c, &x)| a + (c * x).abs());
                segments[l].h -= (v - yk) + size * T::epsilon() * T::lit(4.0);
                clean = false;
            }
        }
        if clean {
            break;
        }
    }
}

/// Train the predictor: every training prediction ends at or below its
/// label, and the total prediction is maximized heuristically.
pub fn train_elm_pwl<T: Scalar>(
    features: &[Vec<T>],
    labels: &[T],
    opts: &PwlOptions<T>,
) -> Result<PwlModel<T>> {
    let (mut segments, iterations, history) =
        fit_min_affine(FitKind::OneSided, features, labels, opts)?;
    enforce_safety(&mut segments, features, labels);
    let objective = features.iter().map(|z| min_segment(&segments, z).0).sum();
    PwlModel::new(
        segments,
        TrainingMeta {
            seed: opts.seed,
            segments: opts.segments,
            restarts: opts.restarts,
            iterations,
            objective,
            objective_history: history,
        },
    )
}
