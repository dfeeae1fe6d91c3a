//! A small dense simplex method for `max cᵀx  s.t.  Ax ≤ b, x ≥ 0` with `b ≥ 0`.
//!
//! The origin is always feasible, so a single phase suffices. Pivoting uses
//! Bland's rule, which rules out cycling on the degenerate programs that
//! dominance checks produce.

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Unbounded,
}

/// Dictionary form: `x_B[i] = rhs[i] - Σ_j rows[i][j] x_N[j]`, `z = z0 + Σ_j obj[j] x_N[j]`.
struct Dictionary {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    obj: Vec<f64>,
    z0: f64,
    basic: Vec<usize>,
    nonbasic: Vec<usize>,
}

impl Dictionary {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        let n = self.nonbasic.len();
        // Solve row r for the entering variable.
        let mut pivot_row: Vec<f64> = self.rows[r].iter().map(|a| a / p).collect();
        pivot_row[c] = 1.0 / p;
        let pivot_rhs = self.rhs[r] / p;
        for i in 0..self.rows.len() {
            if i == r {
                continue;
            }
            let f = self.rows[i][c];
            if f == 0.0 {
                continue;
            }
            for j in 0..n {
                if j == c {
                    self.rows[i][j] = -f * pivot_row[c];
                } else {
                    self.rows[i][j] -= f * pivot_row[j];
                }
            }
            self.rhs[i] = (self.rhs[i] - f * pivot_rhs).max(0.0);
        }
        let f = self.obj[c];
        for j in 0..n {
            if j == c {
                self.obj[j] = -f * pivot_row[c];
            } else {
                self.obj[j] -= f * pivot_row[j];
            }
        }
        self.z0 += f * pivot_rhs;
        self.rows[r] = pivot_row;
        self.rhs[r] = pivot_rhs;
        std::mem::swap(&mut self.basic[r], &mut self.nonbasic[c]);
    }
}

pub(crate) fn maximize(
    c: &[f64],
    a: &[Vec<f64>],
    b: &[f64],
    max_pivots: usize,
) -> Result<LpOutcome> {
    let n = c.len();
    let m = a.len();
    if b.len() != m || a.iter().any(|r| r.len() != n) {
        return Err(Error::arg("LP dimensions do not match"));
    }
    if b.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::arg("LP right-hand side must be nonnegative"));
    }
    let mut d = Dictionary {
        rows: a.to_vec(),
        rhs: b.to_vec(),
        obj: c.to_vec(),
        z0: 0.0,
        basic: (n..n + m).collect(),
        nonbasic: (0..n).collect(),
    };
    for _ in 0..max_pivots {
        let entering = (0..n)
            .filter(|&j| d.obj[j] > PIVOT_EPS)
            .min_by_key(|&j| d.nonbasic[j]);
        let Some(col) = entering else {
            let mut x = vec![0.0; n];
            for (i, &v) in d.basic.iter().enumerate() {
                if v < n {
                    x[v] = d.rhs[i];
                }
            }
            return Ok(LpOutcome::Optimal { x, value: d.z0 });
        };
        let mut leaving: Option<(usize, f64)> = None;
        for i in 0..m {
            let coef = d.rows[i][col];
            if coef <= PIVOT_EPS {
                continue;
            }
            let ratio = d.rhs[i] / coef;
            leaving = match leaving {
                None => Some((i, ratio)),
                Some((j, best)) => {
                    if ratio < best - PIVOT_EPS
                        || (ratio <= best + PIVOT_EPS && d.basic[i] < d.basic[j])
                    {
                        Some((i, ratio))
                    } else {
                        Some((j, best))
                    }
                }
            };
        }
        let Some((row, _)) = leaving else {
            return Ok(LpOutcome::Unbounded);
        };
        d.pivot(row, col);
    }
    Err(Error::Numerical(format!(
        "simplex method did not terminate within {max_pivots} pivots"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_program() {
        // max 3x + 5y  s.t.  x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18  →  (2, 6), 36.
        let out = maximize(
            &[3.0, 5.0],
            &[vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 2.0]],
            &[4.0, 12.0, 18.0],
            100,
        )
        .unwrap();
        match out {
            LpOutcome::Optimal { x, value } => {
                assert!((x[0] - 2.0).abs() < 1e-12 && (x[1] - 6.0).abs() < 1e-12);
                assert!((value - 36.0).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn detects_unbounded_and_degenerate() {
        assert_eq!(
            maximize(&[1.0, 0.0], &[vec![-1.0, 1.0]], &[0.0], 100).unwrap(),
            LpOutcome::Unbounded
        );
        // Degenerate at the origin: max x + y  s.t.  x - y ≤ 0, x + y ≤ 2.
        match maximize(
            &[1.0, 1.0],
            &[vec![1.0, -1.0], vec![1.0, 1.0]],
            &[0.0, 2.0],
            100,
        )
        .unwrap()
        {
            LpOutcome::Optimal { value, .. } => assert!((value - 2.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }
}
