//! Least-squares recovery of `W` from observation pairs, with and without
//! sign/zero constraints learned from excitation tests.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{invalid, Error, Result};
use crate::nnls::nnls;

const SIGN_TOL: f64 = 1e-6;

/// Regression data: row `t` of `previous` is `y_tᵀ`, row `t` of `next` is
/// `y_{t+1}ᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LsProblem {
    previous: DMatrix<f64>,
    next: DMatrix<f64>,
}

impl LsProblem {
    pub fn from_pairs(pairs: &[(DVector<f64>, DVector<f64>)]) -> Result<Self> {
        let Some(first) = pairs.first() else {
            return Err(invalid("pairs", "need at least one observation pair"));
        };
        let n = first.0.len();
        if n == 0 {
            return Err(invalid("pairs", "observations are empty"));
        }
        if pairs.iter().any(|(a, b)| a.len() != n || b.len() != n) {
            return Err(Error::Dimension("observation pairs differ in length".into()));
        }
        let t = pairs.len();
        let previous = DMatrix::from_fn(t, n, |r, c| pairs[r].0[c]);
        let next = DMatrix::from_fn(t, n, |r, c| pairs[r].1[c]);
        if previous.iter().chain(next.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("pairs", "observations must be finite"));
        }
        Ok(Self { previous, next })
    }

    /// Pairs `(y_{t-1}, y_t)` for `t = 1..=until`.
    pub fn from_trajectory(traj: &Trajectory, until: usize) -> Result<Self> {
        Self::from_pairs(&traj.observation_pairs(until)?)
    }

    pub fn n(&self) -> usize {
        self.previous.ncols()
    }

    pub fn pairs(&self) -> usize {
        self.previous.nrows()
    }

    /// `‖Y_prev ŵ_i − y_next,i‖²` summed over rows of `estimate`.
    pub fn residual(&self, estimate: &DMatrix<f64>) -> f64 {
        (&self.previous * estimate.transpose() - &self.next).norm_squared()
    }

    fn target(&self, i: usize) -> DVector<f64> {
        self.next.column(i).into_owned()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryConstraint {
    Free,
    ForcedZero,
    ForcedPositive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsEstimate {
    pub matrix: DMatrix<f64>,
    /// Numerical rank of the regressor matrix.
    pub rank: usize,
    pub rank_deficient: bool,
    /// Entries constrained positive that landed on the boundary `0`.
    pub zero_at_positive: usize,
}

struct Pinv {
    matrix: DMatrix<f64>,
    rank: usize,
}

fn pinv(x: &DMatrix<f64>) -> Pinv {
    let (r, c) = x.shape();
    if c == 0 {
        return Pinv {
            matrix: DMatrix::zeros(0, r),
            rank: 0,
        };
    }
    let svd = SVD::new(x.clone(), true, true);
    let smax = svd.singular_values.max();
    let tol = r.max(c) as f64 * f64::EPSILON * smax;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let matrix = svd
        .pseudo_inverse(tol.max(f64::MIN_POSITIVE))
        .expect("svd with both factors computed");
    Pinv { matrix, rank }
}

/// Row-wise ordinary least squares `ŵ_i = Y_prev⁺ y_next,i`.
pub fn ols_estimate(problem: &LsProblem) -> LsEstimate {
    let n = problem.n();
    let p = pinv(&problem.previous);
    let mut matrix = DMatrix::zeros(n, n);
    for i in 0..n {
        let row = &p.matrix * problem.target(i);
        matrix.row_mut(i).copy_from(&row.transpose());
    }
    LsEstimate {
        matrix,
        rank: p.rank,
        rank_deficient: p.rank < n,
        zero_at_positive: 0,
    }
}

/// Constraint list `(i, j, c)`; unlisted entries are free.
pub type ConstraintList = [(usize, usize, EntryConstraint)];

fn constraint_grid(n: usize, constraints: &ConstraintList) -> Result<Vec<EntryConstraint>> {
    let mut grid = vec![EntryConstraint::Free; n * n];
    for &(i, j, c) in constraints {
        if i >= n || j >= n {
            return Err(Error::OutOfRange(format!("constraint ({i}, {j}) outside {n}x{n}")));
        }
        let slot = &mut grid[i * n + j];
        if *slot != EntryConstraint::Free && *slot != c {
            return Err(invalid(
                "constraints",
                format!("conflicting constraints on ({i}, {j})"),
            ));
        }
        *slot = c;
    }
    Ok(grid)
}

/// Row-wise least squares with forced-zero and forced-positive entries.
///
/// Forced-zero columns are dropped, free coefficients are eliminated by
/// projecting onto the orthogonal complement of their regressors, and the
/// positive block is solved by NNLS. Rows with no constraints go through the
/// same computation as [`ols_estimate`].
pub fn constrained_estimate(problem: &LsProblem, constraints: &ConstraintList) -> Result<LsEstimate> {
    let n = problem.n();
    let grid = constraint_grid(n, constraints)?;
    let full = pinv(&problem.previous);
    let t = problem.pairs();
    let mut matrix = DMatrix::zeros(n, n);
    let mut zero_at_positive = 0;
    for i in 0..n {
        let b = problem.target(i);
        let row = &grid[i * n..(i + 1) * n];
        if row.iter().all(|&c| c == EntryConstraint::Free) {
            let w = &full.matrix * &b;
            matrix.row_mut(i).copy_from(&w.transpose());
            continue;
        }
        let free: Vec<usize> = (0..n).filter(|&k| row[k] == EntryConstraint::Free).collect();
        let positive: Vec<usize> = (0..n)
            .filter(|&k| row[k] == EntryConstraint::ForcedPositive)
            .collect();
        let xf = problem.previous.select_columns(&free);
        let xp = problem.previous.select_columns(&positive);
        let pf = pinv(&xf);
        let c = if positive.is_empty() {
            DVector::zeros(0)
        } else {
            let q = DMatrix::identity(t, t) - &xf * &pf.matrix;
            nnls(&(&q * &xp), &(&q * &b))
        };
        let a = &pf.matrix * (&b - &xp * &c);
        for (pos, &k) in free.iter().enumerate() {
            matrix[(i, k)] = a[pos];
        }
        for (pos, &k) in positive.iter().enumerate() {
            matrix[(i, k)] = c[pos];
            if c[pos] == 0.0 {
                zero_at_positive += 1;
            }
        }
    }
    Ok(LsEstimate {
        matrix,
        rank: full.rank,
        rank_deficient: full.rank < n,
        zero_at_positive,
    })
}

/// Column-`source` constraints from a one-hop decision: detected
/// out-neighbors are forced positive, every other node except `source`
/// itself is forced to zero.
pub fn constraints_from_neighbors(
    n: usize,
    source: usize,
    accepted: &BTreeSet<usize>,
) -> Vec<(usize, usize, EntryConstraint)> {
    (0..n)
        .filter(|&i| i != source)
        .map(|i| {
            let c = if accepted.contains(&i) {
                EntryConstraint::ForcedPositive
            } else {
                EntryConstraint::ForcedZero
            };
            (i, source, c)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    /// Fraction of entries whose sign (`+`, `0`, `−`) disagrees.
    pub structure: f64,
    /// `‖Ŵ − W‖_F / ‖W‖_F`.
    pub magnitude: f64,
}

fn sign(v: f64) -> i8 {
    if v > SIGN_TOL {
        1
    } else if v < -SIGN_TOL {
        -1
    } else {
        0
    }
}

pub fn error_metrics(estimate: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<ErrorMetrics> {
    if estimate.shape() != truth.shape() || !truth.is_square() {
        return Err(Error::Dimension(format!(
            "estimate {:?} vs truth {:?}",
            estimate.shape(),
            truth.shape()
        )));
    }
    let norm = truth.norm();
    if norm == 0.0 {
        return Err(invalid("truth", "zero matrix has no relative error"));
    }
    let mismatches = estimate
        .iter()
        .zip(truth.iter())
        .filter(|(a, b)| sign(**a) != sign(**b))
        .count();
    Ok(ErrorMetrics {
        structure: mismatches as f64 / truth.len() as f64,
        magnitude: (estimate - truth).norm() / norm,
    })
}
