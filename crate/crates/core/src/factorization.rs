//! Nonnegative factorizations stored as a sum of dense blocks on row/column subsets.

use crate::slack::MatrixView;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FactorizationError {
    #[error("shape mismatch: matrix is {m_rows}×{m_cols}, factorization is {f_rows}×{f_cols}")]
    ShapeMismatch { m_rows: usize, m_cols: usize, f_rows: usize, f_cols: usize },
    #[error("inconsistent block {block}: {reason}")]
    BadBlock { block: usize, reason: String },
}

/// Where a factor column came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Dense { index: usize },
    Identity { row: usize },
    CapVertex { color: usize, center: usize, generator: usize, near: bool },
    CapRay { color: usize, center: usize, generator: usize, near: bool },
    TVector { color: usize, label: usize },
    ArcBlock { color: usize, arc: usize, index: usize },
}

/// A dense nonnegative product `T_b U_b` supported on `rows × cols`.
#[derive(Debug, Clone)]
pub struct FactorBlock {
    pub rows: Arc<Vec<usize>>,
    pub cols: Vec<usize>,
    /// `rows.len() × k`, row-major.
    pub t: Vec<f64>,
    /// `k × cols.len()`, row-major.
    pub u: Vec<f64>,
    pub tags: Vec<Provenance>,
}

impl FactorBlock {
    pub fn inner(&self) -> usize {
        self.tags.len()
    }

    fn check(&self, id: usize, n_rows: usize, n_cols: usize) -> Result<(), FactorizationError> {
        let k = self.inner();
        let bad = |reason: String| FactorizationError::BadBlock { block: id, reason };
        if self.t.len() != self.rows.len() * k || self.u.len() != k * self.cols.len() {
            return Err(bad("factor sizes do not match the index sets".into()));
        }
        if self.rows.iter().any(|&r| r >= n_rows) || self.cols.iter().any(|&c| c >= n_cols) {
            return Err(bad("index out of range".into()));
        }
        Ok(())
    }

    /// Drops inner columns whose T column or U row vanishes.
    pub fn prune(&mut self) {
        let k = self.inner();
        let (nr, nc) = (self.rows.len(), self.cols.len());
        let keep: Vec<usize> = (0..k)
            .filter(|&l| (0..nr).any(|i| self.t[i * k + l] != 0.0) && (0..nc).any(|j| self.u[l * nc + j] != 0.0))
            .collect();
        if keep.len() == k {
            return;
        }
        let nk = keep.len();
        let mut t = vec![0.0; nr * nk];
        for i in 0..nr {
            for (a, &l) in keep.iter().enumerate() {
                t[i * nk + a] = self.t[i * k + l];
            }
        }
        let mut u = vec![0.0; nk * nc];
        for (a, &l) in keep.iter().enumerate() {
            u[a * nc..(a + 1) * nc].copy_from_slice(&self.u[l * nc..(l + 1) * nc]);
        }
        self.tags = keep.iter().map(|&l| self.tags[l].clone()).collect();
        self.t = t;
        self.u = u;
    }
}

#[derive(Debug, Clone)]
pub struct NonnegFactorization {
    pub n_rows: usize,
    pub n_cols: usize,
    pub blocks: Vec<FactorBlock>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub max_abs_err: f64,
    pub rel_err: f64,
    pub r: usize,
    pub min_entry: f64,
    pub pass: bool,
}

impl NonnegFactorization {
    pub fn empty(n_rows: usize, n_cols: usize) -> Self {
        NonnegFactorization { n_rows, n_cols, blocks: vec![] }
    }

    /// Single block covering the whole matrix.
    pub fn from_dense(t: &DMatrix<f64>, u: &DMatrix<f64>) -> Self {
        let k = t.ncols();
        assert_eq!(u.nrows(), k, "inner dimensions differ");
        let (n, m) = (t.nrows(), u.ncols());
        let block = FactorBlock {
            rows: Arc::new((0..n).collect()),
            cols: (0..m).collect(),
            t: (0..n).flat_map(|i| (0..k).map(move |l| t[(i, l)])).collect(),
            u: (0..k).flat_map(|l| (0..m).map(move |j| u[(l, j)])).collect(),
            tags: (0..k).map(|index| Provenance::Dense { index }).collect(),
        };
        NonnegFactorization { n_rows: n, n_cols: m, blocks: if k > 0 { vec![block] } else { vec![] } }
    }

    pub fn r(&self) -> usize {
        self.blocks.iter().map(|b| b.inner()).sum()
    }

    pub fn tags(&self) -> Vec<&Provenance> {
        self.blocks.iter().flat_map(|b| b.tags.iter()).collect()
    }

    pub fn push(&mut self, block: FactorBlock) {
        if block.inner() > 0 {
            self.blocks.push(block);
        }
    }

    pub fn extend(&mut self, other: NonnegFactorization) {
        for b in other.blocks {
            self.push(b);
        }
    }

    pub fn prune(&mut self) {
        for b in &mut self.blocks {
            b.prune();
        }
        self.blocks.retain(|b| b.inner() > 0);
    }

    /// Global `T` (n_rows × r) and `U` (r × n_cols).
    pub fn to_dense(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let r = self.r();
        let mut t = DMatrix::zeros(self.n_rows, r);
        let mut u = DMatrix::zeros(r, self.n_cols);
        let mut off = 0;
        for b in &self.blocks {
            let k = b.inner();
            for (ii, &i) in b.rows.iter().enumerate() {
                for l in 0..k {
                    t[(i, off + l)] = b.t[ii * k + l];
                }
            }
            for l in 0..k {
                for (jj, &j) in b.cols.iter().enumerate() {
                    u[(off + l, j)] = b.u[l * b.cols.len() + jj];
                }
            }
            off += k;
        }
        (t, u)
    }

    pub fn product(&self) -> DMatrix<f64> {
        let (t, u) = self.to_dense();
        t * u
    }

    fn min_entry(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|b| b.t.iter().chain(b.u.iter()))
            .cloned()
            .fold(0.0, f64::min)
    }
}

const CHUNK: usize = 256;

/// Checks `max|M − TU| ≤ tol·(1 + max|M|)` and entrywise nonnegativity.
pub fn verify_factorization(
    m: &dyn MatrixView,
    f: &NonnegFactorization,
    tol: f64,
) -> Result<VerifyReport, FactorizationError> {
    if m.nrows() != f.n_rows || m.ncols() != f.n_cols {
        return Err(FactorizationError::ShapeMismatch {
            m_rows: m.nrows(),
            m_cols: m.ncols(),
            f_rows: f.n_rows,
            f_cols: f.n_cols,
        });
    }
    for (id, b) in f.blocks.iter().enumerate() {
        b.check(id, f.n_rows, f.n_cols)?;
    }
    let mut col_terms: Vec<Vec<(u32, u32)>> = vec![Vec::new(); f.n_cols];
    for (bi, b) in f.blocks.iter().enumerate() {
        for (jj, &j) in b.cols.iter().enumerate() {
            col_terms[j].push((bi as u32, jj as u32));
        }
    }
    let n = f.n_rows;
    let chunks: Vec<usize> = (0..f.n_cols).step_by(CHUNK).collect();
    let work = |c0: usize| -> (f64, f64) {
        let c1 = (c0 + CHUNK).min(f.n_cols);
        let mut acc = vec![0.0; n];
        let mut col = vec![0.0; n];
        let (mut err, mut mmax) = (0.0f64, 0.0f64);
        for j in c0..c1 {
            acc.iter_mut().for_each(|x| *x = 0.0);
            for &(bi, jj) in &col_terms[j] {
                let b = &f.blocks[bi as usize];
                let k = b.inner();
                let nc = b.cols.len();
                for l in 0..k {
                    let ul = b.u[l * nc + jj as usize];
                    if ul == 0.0 {
                        continue;
                    }
                    for (ii, &i) in b.rows.iter().enumerate() {
                        acc[i] += b.t[ii * k + l] * ul;
                    }
                }
            }
            m.column_into(j, &mut col);
            for i in 0..n {
                err = err.max((col[i] - acc[i]).abs());
                mmax = mmax.max(col[i].abs());
            }
        }
        (err, mmax)
    };
    #[cfg(feature = "parallel")]
    let parts: Vec<(f64, f64)> = {
        use rayon::prelude::*;
        chunks.par_iter().map(|&c| work(c)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<(f64, f64)> = chunks.iter().map(|&c| work(c)).collect();
    let (err, mmax) = parts.iter().fold((0.0f64, 0.0f64), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    let min_entry = f.min_entry();
    let rel = err / (1.0 + mmax);
    Ok(VerifyReport {
        max_abs_err: err,
        rel_err: rel,
        r: f.r(),
        min_entry,
        pass: min_entry >= 0.0 && err <= tol * (1.0 + mmax),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_matrix_passes() {
        let m = DMatrix::<f64>::zeros(3, 2);
        let f = NonnegFactorization::from_dense(&DMatrix::zeros(3, 4), &DMatrix::zeros(4, 2));
        let rep = verify_factorization(&m, &f, 1e-12).unwrap();
        assert!(rep.pass);
        assert_eq!(rep.r, 4);
    }

    #[test]
    fn one_by_one() {
        let m = DMatrix::from_element(1, 1, 1.0);
        let f = NonnegFactorization::from_dense(&m, &m);
        let rep = verify_factorization(&m, &f, 1e-12).unwrap();
        assert!(rep.pass);
        assert_eq!(rep.r, 1);
    }

    #[test]
    fn identity_two() {
        let i2 = DMatrix::<f64>::identity(2, 2);
        let rep = verify_factorization(&i2, &NonnegFactorization::from_dense(&i2, &i2), 1e-12).unwrap();
        assert!(rep.pass);
        assert_eq!(rep.r, 2);
    }

    #[test]
    fn negative_entry_fails() {
        let t = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let u = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let m = DMatrix::from_element(1, 1, 1.0);
        let rep = verify_factorization(&m, &NonnegFactorization::from_dense(&t, &u), 1e-12).unwrap();
        assert!(!rep.pass);
    }

    #[test]
    fn shape_mismatch() {
        let m = DMatrix::<f64>::zeros(3, 3);
        let f = NonnegFactorization::empty(2, 3);
        assert!(matches!(verify_factorization(&m, &f, 1e-9), Err(FactorizationError::ShapeMismatch { .. })));
    }

    #[test]
    fn blocks_sum_and_prune() {
        // Two overlapping blocks on a 3×3 matrix.
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 1.0, 3.0, 2.0, 0.0, 2.0, 2.0]);
        let mut f = NonnegFactorization::empty(3, 3);
        f.push(FactorBlock {
            rows: Arc::new(vec![0, 1]),
            cols: vec![0, 1],
            t: vec![1.0, 0.0, 1.0, 0.0],
            u: vec![1.0, 1.0, 5.0, 5.0],
            tags: vec![Provenance::Dense { index: 0 }, Provenance::Dense { index: 1 }],
        });
        f.push(FactorBlock {
            rows: Arc::new(vec![1, 2]),
            cols: vec![1, 2],
            t: vec![1.0, 1.0],
            u: vec![2.0, 2.0],
            tags: vec![Provenance::Dense { index: 2 }],
        });
        assert_eq!(f.r(), 3);
        f.prune();
        assert_eq!(f.r(), 2);
        let rep = verify_factorization(&m, &f, 1e-14).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert_eq!(f.product(), m);
    }
}
