//! Lawson–Hanson active-set solver for `min ‖A c − b‖₂ subject to c ≥ 0`.

use nalgebra::{DMatrix, DVector};

const MAX_OUTER_FACTOR: usize = 3;

/// Returns the nonnegative minimizer. `A` may be rank deficient; passive
/// subproblems are solved by SVD pseudo-inverse.
pub(crate) fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let (m, n) = a.shape();
    debug_assert_eq!(b.len(), m);
    let mut x = DVector::zeros(n);
    if n == 0 {
        return x;
    }
    let scale = a.amax().max(b.amax()).max(1.0);
    let tol = 10.0 * f64::EPSILON * scale * scale * (m.max(n) as f64);
    let mut passive = vec![false; n];
    let max_outer = MAX_OUTER_FACTOR * n + 10;

    for _ in 0..max_outer {
        let grad = a.tr_mul(&(b - a * &x));
        let candidate = (0..n)
            .filter(|&k| !passive[k] && grad[k] > tol)
            .max_by(|&p, &q| grad[p].total_cmp(&grad[q]));
        let Some(k) = candidate else { break };
        passive[k] = true;

        loop {
            let s = solve_passive(a, b, &passive);
            let blocking: Vec<usize> = (0..n).filter(|&k| passive[k] && s[k] <= 0.0).collect();
            if blocking.is_empty() {
                x = s;
                break;
            }
            let step = blocking
                .iter()
                .map(|&k| {
                    let gap = x[k] - s[k];
                    if gap > 0.0 { x[k] / gap } else { 0.0 }
                })
                .fold(f64::INFINITY, f64::min);
            x += (s - &x) * step;
            let zero_tol = 16.0 * f64::EPSILON * x.amax().max(1.0);
            for k in 0..n {
                if passive[k] && x[k] <= zero_tol {
                    passive[k] = false;
                    x[k] = 0.0;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    x.iter_mut().for_each(|v| *v = v.max(0.0));
    x
}

fn solve_passive(a: &DMatrix<f64>, b: &DVector<f64>, passive: &[bool]) -> DVector<f64> {
    let idx: Vec<usize> = (0..passive.len()).filter(|&k| passive[k]).collect();
    let sub = a.select_columns(&idx);
    let eps = 1e-12 * sub.amax().max(1.0);
    let z = sub
        .svd(true, true)
        .solve(b, eps)
        .expect("svd with both factors computed");
    let mut s = DVector::zeros(passive.len());
    for (pos, &k) in idx.iter().enumerate() {
        s[k] = z[pos];
    }
    s
}
