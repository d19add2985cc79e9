//! Small dense linear algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Number of singular values above `rel_tol · σ_max`.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

/// Affine rank of a point set (dimension of its affine hull), tolerance 1e-9 relative.
pub fn affine_rank(points: &[&[f64]]) -> usize {
    if points.len() <= 1 {
        return 0;
    }
    let d = points[0].len();
    let base = points[0];
    let m = DMatrix::from_fn(points.len() - 1, d, |i, j| points[i + 1][j] - base[j]);
    numerical_rank(&m, 1e-9)
}

/// Unit normal of the hyperplane through `d` points in ℝ^d (None if degenerate).
pub fn hyperplane_through(points: &[&[f64]]) -> Option<(Vec<f64>, f64)> {
    let d = points[0].len();
    if points.len() != d {
        return None;
    }
    let base = points[0];
    // Pad with a zero row so the SVD is square and exposes the null vector.
    let m = DMatrix::from_fn(d, d, |i, j| if i + 1 < d { points[i + 1][j] - base[j] } else { 0.0 });
    let svd = nalgebra::linalg::SVD::new(m, false, true);
    let v_t = svd.v_t?;
    let sv = &svd.singular_values;
    let (mut imin, mut smin, mut smax) = (0, f64::INFINITY, 0.0f64);
    for (i, &s) in sv.iter().enumerate() {
        smax = smax.max(s);
        if s < smin {
            smin = s;
            imin = i;
        }
    }
    let zeros = sv.iter().filter(|&&s| s <= 1e-10 * smax).count();
    if smax == 0.0 || zeros != 1 {
        return None;
    }
    let n: Vec<f64> = v_t.row(imin).iter().cloned().collect();
    let len = crate::geometry::norm(&n);
    let n: Vec<f64> = n.iter().map(|x| x / len).collect();
    let b = crate::geometry::dot(&n, base);
    Some((n, b))
}

/// Orthonormal basis of the top eigen-space of a symmetric PSD matrix.
/// Returns eigenvalues (descending) and eigenvectors as columns.
pub fn sym_eigen_desc(g: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(g.clone());
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(g.nrows(), idx.len(), |r, c| eig.eigenvectors[(r, idx[c])]);
    (vals, vecs)
}

/// Solves a square system by LU; None when singular.
pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    a.clone().lu().solve(b)
}

/// Completes `u` (unit, length d) to an orthonormal basis; returns d−1 vectors orthogonal to `u`.
pub fn orthonormal_complement(u: &[f64]) -> Vec<Vec<f64>> {
    let d = u.len();
    let mut basis: Vec<Vec<f64>> = vec![u.to_vec()];
    for k in 0..d {
        let mut e = vec![0.0; d];
        e[k] = 1.0;
        for b in &basis {
            let p = crate::geometry::dot(&e, b);
            for i in 0..d {
                e[i] -= p * b[i];
            }
        }
        let n = crate::geometry::norm(&e);
        if n > 1e-6 {
            basis.push(e.iter().map(|x| x / n).collect());
        }
        if basis.len() == d {
            break;
        }
    }
    basis.remove(0);
    basis
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_of_outer_product() {
        let m = DMatrix::from_fn(4, 5, |i, j| (i + 1) as f64 * (j + 2) as f64);
        assert_eq!(numerical_rank(&m, 1e-10), 1);
    }

    #[test]
    fn plane_through_three_points() {
        let p: [&[f64]; 3] = [&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]];
        let (n, b) = hyperplane_through(&p).unwrap();
        let s = 1.0 / 3f64.sqrt();
        let sign = n[0].signum();
        for x in &n {
            assert!((x * sign - s).abs() < 1e-12);
        }
        assert!((b * sign - s).abs() < 1e-12);
    }

    #[test]
    fn complement_is_orthonormal() {
        let u = [0.6, 0.0, 0.8];
        let c = orthonormal_complement(&u);
        assert_eq!(c.len(), 2);
        for v in &c {
            assert!(crate::geometry::dot(v, &u).abs() < 1e-12);
            assert!((crate::geometry::norm(v) - 1.0).abs() < 1e-12);
        }
        assert!(crate::geometry::dot(&c[0], &c[1]).abs() < 1e-12);
    }
}
