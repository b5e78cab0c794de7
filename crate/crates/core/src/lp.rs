//! Dense two-phase tableau simplex for `max cᵀx  s.t.  Ax ≤ b, x ≥ 0`.
//!
//! Entering variables follow the most negative reduced cost with index
//! tie-breaks, leaving rows the minimum ratio with basis-index tie-breaks.
//! Problems here are a few hundred rows by a few dozen columns, so a dense
//! tableau is fine.

use crate::error::{FncError, Result};
use crate::scalar::Scalar;

const MAX_PIVOTS_PER_CELL: usize = 50;

/// Optimal point and value.
#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution<T> {
    pub x: Vec<T>,
    pub objective: T,
    pub pivots: usize,
}

struct Tableau<T> {
    m: usize,
    n: usize,
    // (m + 2) × (n + 2), row-major
    d: Vec<T>,
    basis: Vec<isize>,
    nonbasis: Vec<isize>,
    eps: T,
    pivots: usize,
    max_pivots: usize,
}

impl<T: Scalar> Tableau<T> {
    #[inline]
    fn at(&self, i: usize, j: usize) -> T {
        self.d[i * (self.n + 2) + j]
    }

    fn pivot(&mut self, r: usize, s: usize) {
        let w = self.n + 2;
        let inv = T::one() / self.d[r * w + s];
        let (before, rest) = self.d.split_at_mut(r * w);
        let (row_r, after) = rest.split_at_mut(w);
        let apply = |row: &mut [T], row_r: &[T]| {
            let factor = row[s] * inv;
            if factor != T::zero() {
                for j in 0..w {
                    if j != s {
                        row[j] -= row_r[j] * factor;
                    }
                }
            }
            row[s] = -factor;
        };
        for row in before.chunks_exact_mut(w) {
            apply(row, row_r);
        }
        for row in after.chunks_exact_mut(w) {
            apply(row, row_r);
        }
        for (j, v) in row_r.iter_mut().enumerate() {
            if j != s {
                *v *= inv;
            }
        }
        row_r[s] = inv;
        std::mem::swap(&mut self.basis[r], &mut self.nonbasis[s]);
        self.pivots += 1;
    }

    /// Returns `Ok(false)` when the objective is unbounded.
    fn run(&mut self, phase: u8) -> Result<bool> {
        let x = if phase == 1 { self.m + 1 } else { self.m };
        loop {
            let mut s: Option<usize> = None;
            for j in 0..=self.n {
                if phase == 2 && self.nonbasis[j] == -1 {
                    continue;
                }
                s = match s {
                    None => Some(j),
                    Some(cur) => {
                        let (vj, vc) = (self.at(x, j), self.at(x, cur));
                        if vj < vc || (vj == vc && self.nonbasis[j] < self.nonbasis[cur]) {
                            Some(j)
                        } else {
                            Some(cur)
                        }
                    }
                };
            }
            let s = match s {
                Some(s) => s,
                None => return Ok(true),
            };
            if self.at(x, s) > -self.eps {
                return Ok(true);
            }
            let mut r: Option<usize> = None;
            for i in 0..self.m {
                let a = self.at(i, s);
                if a < self.eps {
                    continue;
                }
                r = match r {
                    None => Some(i),
                    Some(cur) => {
                        let ri = self.at(i, self.n + 1) / a;
                        let rc = self.at(cur, self.n + 1) / self.at(cur, s);
                        if ri < rc || (ri == rc && self.basis[i] < self.basis[cur]) {
                            Some(i)
                        } else {
                            Some(cur)
                        }
                    }
                };
            }
            match r {
                None => return Ok(false),
                Some(r) => {
                    if self.pivots >= self.max_pivots {
                        return Err(FncError::Lp("exceeded pivot limit"));
                    }
                    self.pivot(r, s);
                }
            }
        }
    }
}

/// Solve `max cᵀx` subject to `a·x ≤ b` (rows of `a`) and `x ≥ 0`.
pub fn solve<T: Scalar>(a: &[Vec<T>], b: &[T], c: &[T]) -> Result<LpSolution<T>> {
    let m = b.len();
    let n = c.len();
    if a.len() != m {
        return Err(FncError::DimensionMismatch {
            expected: m,
            found: a.len(),
        });
    }
    if let Some(row) = a.iter().find(|row| row.len() != n) {
        return Err(FncError::DimensionMismatch {
            expected: n,
            found: row.len(),
        });
    }
    let w = n + 2;
    let mut d = vec![T::zero(); (m + 2) * w];
    for i in 0..m {
        d[i * w..i * w + n].copy_from_slice(&a[i]);
        d[i * w + n] = -T::one();
        d[i * w + n + 1] = b[i];
    }
    for j in 0..n {
        d[m * w + j] = -c[j];
    }
    d[(m + 1) * w + n] = T::one();
    let mut tab = Tableau {
        m,
        n,
        d,
        basis: (0..m).map(|i| (n + i) as isize).collect(),
        nonbasis: (0..n as isize).chain(std::iter::once(-1)).collect(),
        eps: T::solver_eps(),
        pivots: 0,
        max_pivots: MAX_PIVOTS_PER_CELL * (m + n + 1),
    };

    // phase 1: drive the auxiliary variable out when the origin is infeasible
    if m > 0 {
        let r = (0..m)
            .min_by(|&i, &k| tab.at(i, n + 1).partial_cmp(&tab.at(k, n + 1)).unwrap())
            .unwrap();
        if tab.at(r, n + 1) < -tab.eps {
            tab.pivot(r, n);
            if !tab.run(1)? || tab.at(m + 1, n + 1) < -tab.eps {
                return Err(FncError::Lp("infeasible"));
            }
            for i in 0..m {
                if tab.basis[i] == -1 {
                    let mut s = 0;
                    for j in 1..=n {
                        let (vj, vs) = (tab.at(i, j), tab.at(i, s));
                        if vj < vs || (vj == vs && tab.nonbasis[j] < tab.nonbasis[s]) {
                            s = j;
                        }
                    }
                    tab.pivot(i, s);
                }
            }
        }
    }
    if !tab.run(2)? {
        return Err(FncError::Lp("unbounded"));
    }
    let mut x = vec![T::zero(); n];
    for i in 0..m {
        if let Ok(k) = usize::try_from(tab.basis[i]) {
            if k < n {
                x[k] = tab.at(i, n + 1);
            }
        }
    }
    Ok(LpSolution {
        x,
        objective: tab.at(m, n + 1),
        pivots: tab.pivots,
    })
}

/// Solve over variables of which some are free (sign-unrestricted).
///
/// Free variables are split into positive and negative parts.
pub fn solve_mixed<T: Scalar>(
    a: &[Vec<T>],
    b: &[T],
    c: &[T],
    free: &[bool],
) -> Result<LpSolution<T>> {
    let n = c.len();
    if free.len() != n {
        return Err(FncError::DimensionMismatch {
            expected: n,
            found: free.len(),
        });
    }
    let neg: Vec<usize> = (0..n).filter(|&j| free[j]).collect();
    let expand = |row: &[T]| -> Vec<T> {
        let mut r = row.to_vec();
        r.extend(neg.iter().map(|&j| -row[j]));
        r
    };
    let a2: Vec<Vec<T>> = a.iter().map(|row| expand(row)).collect();
    let c2 = expand(c);
    let sol = solve(&a2, b, &c2)?;
    let mut x = sol.x[..n].to_vec();
    for (k, &j) in neg.iter().enumerate() {
        x[j] -= sol.x[n + k];
    }
    Ok(LpSolution {
        x,
        objective: sol.objective,
        pivots: sol.pivots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_maximization() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
        let a: Vec<Vec<f64>> = vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 2.0]];
        let sol = solve(&a, &[4.0, 12.0, 18.0], &[3.0, 5.0]).unwrap();
        assert!((sol.objective - 36.0).abs() < 1e-12);
        assert!((sol.x[0] - 2.0).abs() < 1e-12 && (sol.x[1] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn needs_phase_one() {
        // max -x - y, x + y >= 2 (as -x - y <= -2), x <= 3 -> value -2
        let a: Vec<Vec<f64>> = vec![vec![-1.0, -1.0], vec![1.0, 0.0]];
        let sol = solve(&a, &[-2.0, 3.0], &[-1.0, -1.0]).unwrap();
        assert!((sol.objective + 2.0).abs() < 1e-12);
        assert!((sol.x[0] + sol.x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let a = vec![vec![1.0], vec![-1.0]];
        assert!(matches!(solve(&a, &[1.0, -2.0], &[1.0]), Err(FncError::Lp("infeasible"))));
        let a = vec![vec![-1.0]];
        assert!(matches!(solve(&a, &[1.0], &[1.0]), Err(FncError::Lp("unbounded"))));
    }

    #[test]
    fn free_variables() {
        // max -x s.t. x >= -3 (as -x <= 3), x free -> x = -3
        let sol = solve_mixed::<f64>(&[vec![-1.0]], &[3.0], &[-1.0], &[true]).unwrap();
        assert!((sol.x[0] + 3.0).abs() < 1e-12);
        assert!((sol.objective - 3.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_vertex_terminates() {
        // Redundant constraints meeting at one vertex.
        let a: Vec<Vec<f64>> = vec![
            vec![1.0, 1.0],
            vec![2.0, 2.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, -1.0],
        ];
        let sol = solve(&a, &[1.0, 2.0, 1.0, 1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((sol.objective - 1.0).abs() < 1e-12);
    }
}
