//! Slack matrices and read-only matrix views.

use crate::geometry::{clamp_tol, GeometryError, Polytope, TOL_GEOM};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Read access to a real matrix, dense or computed on demand.
pub trait MatrixView: Sync {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn get(&self, i: usize, j: usize) -> f64;

    fn column_into(&self, j: usize, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.get(i, j);
        }
    }
}

impl MatrixView for DMatrix<f64> {
    fn nrows(&self) -> usize {
        DMatrix::nrows(self)
    }
    fn ncols(&self) -> usize {
        DMatrix::ncols(self)
    }
    fn get(&self, i: usize, j: usize) -> f64 {
        self[(i, j)]
    }
    fn column_into(&self, j: usize, out: &mut [f64]) {
        out.copy_from_slice(self.column(j).as_slice());
    }
}

#[derive(Debug, Clone)]
pub struct SlackMatrix {
    pub entries: DMatrix<f64>,
    pub row_index: Vec<usize>,
    pub col_index: Vec<usize>,
    /// Numerical rank estimated from a random sketch.
    pub rank: usize,
}

impl MatrixView for SlackMatrix {
    fn nrows(&self) -> usize {
        self.entries.nrows()
    }
    fn ncols(&self) -> usize {
        self.entries.ncols()
    }
    fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }
    fn column_into(&self, j: usize, out: &mut [f64]) {
        out.copy_from_slice(self.entries.column(j).as_slice());
    }
}

/// Dense slack matrix; entries within `TOL_GEOM` of zero (and all incidences) are exactly zero.
pub fn slack_matrix(p: &Polytope) -> Result<SlackMatrix, GeometryError> {
    let (nv, nf) = (p.n_vertices(), p.n_facets());
    let mut m = DMatrix::zeros(nv, nf);
    for f in 0..nf {
        for v in 0..nv {
            let s = p.facets[f].plane.slack(&p.vertices[v]);
            if s < -TOL_GEOM {
                return Err(GeometryError::NegativeSlack { vertex: v, facet: f, value: s });
            }
            m[(v, f)] = clamp_tol(s);
        }
        for &v in &p.facets[f].incident {
            m[(v, f)] = 0.0;
        }
    }
    let rank = sketch_rank(&m, p.dim + 3);
    Ok(SlackMatrix { entries: m, row_index: (0..nv).collect(), col_index: (0..nf).collect(), rank })
}

/// Rank of `M·G` for a Gaussian-like sketch `G` with `k` columns (equals rank M when rank M ≤ k).
pub fn sketch_rank(m: &DMatrix<f64>, k: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(0x51ac);
    let g = DMatrix::from_fn(m.ncols(), k, |_, _| rng.random_range(-1.0..1.0));
    crate::linalg::numerical_rank(&(m * g), 1e-9)
}

/// Slack matrix of a polytope evaluated lazily, for sizes where a dense copy does not fit.
pub struct PolytopeSlack<'a> {
    pub polytope: &'a Polytope,
}

impl<'a> MatrixView for PolytopeSlack<'a> {
    fn nrows(&self) -> usize {
        self.polytope.n_vertices()
    }
    fn ncols(&self) -> usize {
        self.polytope.n_facets()
    }
    fn get(&self, i: usize, j: usize) -> f64 {
        self.polytope.slack(i, j)
    }
    fn column_into(&self, j: usize, out: &mut [f64]) {
        let f = &self.polytope.facets[j];
        for (i, o) in out.iter_mut().enumerate() {
            *o = clamp_tol(f.plane.slack(&self.polytope.vertices[i]));
        }
        for &v in &f.incident {
            out[v] = 0.0;
        }
    }
}
