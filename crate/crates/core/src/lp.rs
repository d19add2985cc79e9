//! Dense phase-one simplex for `A x = b, x ≥ 0` with Bland's rule.

use nalgebra::{DMatrix, DVector};

pub const LP_TOL: f64 = 1e-10;

/// Reusable tableau storage for many small feasibility problems.
#[derive(Debug, Default, Clone)]
pub struct Phase1 {
    tab: Vec<f64>,
    obj: Vec<f64>,
    basis: Vec<usize>,
}

impl Phase1 {
    pub fn new() -> Self {
        Self::default()
    }

    /// Finds `x ≥ 0` with `A x = b` (`A` is `m × n`, row-major). Returns `None` when the
    /// phase-one optimum exceeds the tolerance. The returned point is polished on its support.
    pub fn solve(&mut self, a: &[f64], m: usize, n: usize, b: &[f64]) -> Option<Vec<f64>> {
        let w = n + m + 1;
        self.tab.clear();
        self.tab.resize(m * w, 0.0);
        self.basis.clear();
        let scale = 1.0 + b.iter().map(|x| x.abs()).fold(0.0, f64::max);
        for i in 0..m {
            let s = if b[i] < 0.0 { -1.0 } else { 1.0 };
            for j in 0..n {
                self.tab[i * w + j] = s * a[i * n + j];
            }
            self.tab[i * w + n + i] = 1.0;
            self.tab[i * w + w - 1] = s * b[i];
            self.basis.push(n + i);
        }
        self.obj.clear();
        self.obj.resize(w, 0.0);
        for i in 0..m {
            for j in 0..n {
                self.obj[j] -= self.tab[i * w + j];
            }
            self.obj[w - 1] -= self.tab[i * w + w - 1];
        }
        let max_iter = 50 * (n + m);
        for _ in 0..max_iter {
            let Some(enter) = (0..n + m).find(|&j| self.obj[j] < -LP_TOL) else { break };
            let mut leave: Option<usize> = None;
            let mut best = f64::INFINITY;
            for i in 0..m {
                let p = self.tab[i * w + enter];
                if p > LP_TOL {
                    let ratio = self.tab[i * w + w - 1] / p;
                    let better = match leave {
                        None => true,
                        Some(l) => ratio < best - 1e-15 || (ratio <= best + 1e-15 && self.basis[i] < self.basis[l]),
                    };
                    if better {
                        best = ratio;
                        leave = Some(i);
                    }
                }
            }
            let Some(r) = leave else { break };
            self.pivot(r, enter, m, w);
        }
        let infeas: f64 = (0..m).filter(|&i| self.basis[i] >= n).map(|i| self.tab[i * w + w - 1].abs()).sum();
        if infeas > LP_TOL * scale {
            return None;
        }
        let mut x = vec![0.0; n];
        for i in 0..m {
            if self.basis[i] < n {
                x[self.basis[i]] = self.tab[i * w + w - 1].max(0.0);
            }
        }
        polish(a, m, n, b, &mut x);
        Some(x)
    }

    fn pivot(&mut self, r: usize, c: usize, m: usize, w: usize) {
        let p = self.tab[r * w + c];
        for j in 0..w {
            self.tab[r * w + j] /= p;
        }
        for i in 0..m {
            if i == r {
                continue;
            }
            let f = self.tab[i * w + c];
            if f != 0.0 {
                for j in 0..w {
                    self.tab[i * w + j] -= f * self.tab[r * w + j];
                }
            }
        }
        let f = self.obj[c];
        if f != 0.0 {
            for j in 0..w {
                self.obj[j] -= f * self.tab[r * w + j];
            }
        }
        self.basis[r] = c;
    }
}

/// Re-solves `A_S x_S = b` on the support by least squares; keeps the result if it stays nonnegative
/// and lowers the residual.
fn polish(a: &[f64], m: usize, n: usize, b: &[f64], x: &mut [f64]) {
    let support: Vec<usize> = (0..n).filter(|&j| x[j] > 0.0).collect();
    if support.is_empty() {
        return;
    }
    let k = support.len();
    let a_s = DMatrix::from_fn(m, k, |i, c| a[i * n + support[c]]);
    let bv = DVector::from_column_slice(b);
    let Ok(sol) = a_s.clone().svd(true, true).solve(&bv, 1e-14) else { return };
    if sol.iter().any(|&v| v < 0.0) {
        return;
    }
    let before = residual(a, m, n, b, x);
    let mut y = x.to_vec();
    for (c, &j) in support.iter().enumerate() {
        y[j] = sol[c];
    }
    if residual(a, m, n, b, &y) <= before {
        x.copy_from_slice(&y);
    }
}

/// `max_i |(A x − b)_i|`
pub fn residual(a: &[f64], m: usize, n: usize, b: &[f64], x: &[f64]) -> f64 {
    (0..m)
        .map(|i| ((0..n).map(|j| a[i * n + j] * x[j]).sum::<f64>() - b[i]).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn simple_feasible() {
        // x + y = 1, x − y = 0
        let a = [1.0, 1.0, 1.0, -1.0];
        let x = Phase1::new().solve(&a, 2, 2, &[1.0, 0.0]).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-14 && (x[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn infeasible() {
        // x + y = −1 with x, y ≥ 0
        assert!(Phase1::new().solve(&[1.0, 1.0], 1, 2, &[-1.0]).is_none());
    }

    #[test]
    fn degenerate_cycling_candidate() {
        // Beale-style degenerate system; Bland's rule must terminate.
        let a = [0.25, -8.0, -1.0, 9.0, 1.0, 0.0, 0.0, 0.5, -12.0, -0.5, 3.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let x = Phase1::new().solve(&a, 3, 7, &[0.0, 0.0, 1.0]).unwrap();
        assert!(residual(&a, 3, 7, &[0.0, 0.0, 1.0], &x) < 1e-12);
    }

    proptest! {
        #[test]
        fn recovers_planted_solutions(
            a in proptest::collection::vec(-1.0f64..1.0, 12),
            x0 in proptest::collection::vec(0.0f64..1.0, 4),
        ) {
            let b: Vec<f64> = (0..3).map(|i| (0..4).map(|j| a[i * 4 + j] * x0[j]).sum()).collect();
            let x = Phase1::new().solve(&a, 3, 4, &b).unwrap();
            prop_assert!(x.iter().all(|&v| v >= 0.0));
            prop_assert!(residual(&a, 3, 4, &b, &x) < 1e-9);
        }
    }
}
