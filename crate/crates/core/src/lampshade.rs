//! The polyhedral lampshade around a cap: a truncated cone that keeps encapsulated
//! facets on one side and contains every far-away point, together with the bounded-rank
//! factorization it certifies.

use crate::factorization::{FactorBlock, NonnegFactorization, Provenance};
use crate::geometry::{dot, norm, sub, Hyperplane, Point, Polytope, TOL_GEOM};
use crate::linalg::orthonormal_complement;
use crate::lp::{residual, Phase1};
use crate::sphere::{angle, encapsulated, smaller_cap_of_hyperplane, Cap};
use serde::Serialize;
use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;
use thiserror::Error;

/// Number of vertices of the polygon inscribed in the circle `Z` when d = 3.
pub const OCTAGON: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LampshadeError {
    #[error("lampshade radius {0} outside (0, π/5)")]
    BadRadius(f64),
    #[error("unsupported dimension {0}")]
    UnsupportedDimension(usize),
    #[error("apex is not a unit vector (norm {0})")]
    NotOnSphere(f64),
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("target is not in the cone of the generators (residual {residual})")]
    NotInCone { residual: f64 },
    #[error("facet {facet} is not encapsulated by the lampshade cap (generator slack {value})")]
    EncapsulationViolated { facet: usize, value: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct Lampshade {
    pub apex: Point,
    pub eps: f64,
    pub dim: usize,
    pub hz: Hyperplane,
    pub bz: Vec<f64>,
    pub rz: f64,
    pub pz_vertices: Vec<Point>,
    pub halfspaces: Vec<Hyperplane>,
    pub ray_dirs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicCoeffs {
    pub vertex_weights: Vec<f64>,
    pub ray_weights: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Point,
    Direction,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RowSpec {
    Plain,
    /// Decompose the direction `v − x` for the given vertex `x`.
    Subtract(usize),
}

impl Lampshade {
    pub fn k(&self) -> usize {
        self.pz_vertices.len()
    }

    /// Total number of generators (vertices plus rays).
    pub fn r(&self) -> usize {
        2 * self.k()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.halfspaces.iter().all(|h| h.slack(x) >= -tol)
    }

    /// Largest spherical distance from the apex to the smaller-cap center of a bounding hyperplane.
    pub fn max_halfspace_cap_distance(&self) -> f64 {
        self.halfspaces
            .iter()
            .filter_map(|h| smaller_cap_of_hyperplane(h).ok())
            .map(|c| angle(&self.apex, &c.center))
            .fold(0.0, f64::max)
    }

    /// Inradius of `P_Z` around `b_Z` within the hyperplane `H_Z`.
    pub fn pz_inradius(&self) -> f64 {
        match self.dim {
            2 => self.pz_vertices.iter().map(|z| norm(&sub(z, &self.bz))).fold(f64::INFINITY, f64::min),
            _ => {
                let k = self.k();
                (0..k)
                    .map(|i| {
                        let (p, q) = (&self.pz_vertices[i], &self.pz_vertices[(i + 1) % k]);
                        let mid: Vec<f64> = p.iter().zip(q.iter()).map(|(x, y)| 0.5 * (x + y)).collect();
                        norm(&sub(&mid, &self.bz))
                    })
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Debug dump of the halfspace description.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or(serde_json::Value::Null)
    }
}

pub fn build_lampshade(a: &Point, eps: f64, d: usize) -> Result<Lampshade, LampshadeError> {
    if !(eps > 0.0 && eps < PI / 5.0) {
        return Err(LampshadeError::BadRadius(eps));
    }
    if d != 2 && d != 3 {
        return Err(LampshadeError::UnsupportedDimension(d));
    }
    if a.dim() != d {
        return Err(LampshadeError::UnsupportedDimension(a.dim()));
    }
    let an = a.norm();
    if (an - 1.0).abs() > TOL_GEOM {
        return Err(LampshadeError::NotOnSphere(an));
    }
    let (c2, s2) = ((2.0 * eps).cos(), (2.0 * eps).sin());
    let e = orthonormal_complement(a);
    let bz: Vec<f64> = a.iter().map(|x| c2 * x).collect();
    let pz: Vec<Point> = if d == 2 {
        [1.0, -1.0].iter().map(|s| Point((0..2).map(|i| bz[i] + s * s2 * e[0][i]).collect())).collect()
    } else {
        (0..OCTAGON)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / OCTAGON as f64;
                Point((0..3).map(|j| bz[j] + s2 * (t.cos() * e[0][j] + t.sin() * e[1][j])).collect())
            })
            .collect()
    };
    let hz = Hyperplane::new(a.0.clone(), c2);
    let mut halfspaces = vec![hz.clone()];
    let orient = |mut n: Vec<f64>| {
        let l = norm(&n);
        n.iter_mut().for_each(|x| *x /= l);
        let mut b = dot(&n, a);
        if b < 0.0 {
            n.iter_mut().for_each(|x| *x = -*x);
            b = -b;
        }
        Hyperplane::new(n, b)
    };
    if d == 2 {
        for z in &pz {
            let t = sub(z, a);
            halfspaces.push(orient(vec![-t[1], t[0]]));
        }
    } else {
        let k = pz.len();
        for i in 0..k {
            let u = sub(&pz[i], a);
            let w = sub(&pz[(i + 1) % k], a);
            halfspaces.push(orient(vec![
                u[1] * w[2] - u[2] * w[1],
                u[2] * w[0] - u[0] * w[2],
                u[0] * w[1] - u[1] * w[0],
            ]));
        }
    }
    let ray_dirs = pz.iter().map(|z| sub(z, a)).collect();
    let q = Lampshade { apex: a.clone(), eps, dim: d, hz, bz, rz: s2, pz_vertices: pz, halfspaces, ray_dirs };
    debug_assert!(q.halfspaces.iter().all(|h| h.offset > 0.0));
    Ok(q)
}

/// Condition (i): every generator lies strictly on the feasible side of `H`.
pub fn check_condition_i(q: &Lampshade, h: &Hyperplane) -> Result<bool, LampshadeError> {
    let cap = Cap { center: q.apex.clone(), radius: q.eps };
    match encapsulated(h, &cap) {
        Ok(true) => {}
        _ => return Err(LampshadeError::PreconditionViolated("hyperplane is not encapsulated by the cap".into())),
    }
    let an = norm(&h.normal);
    let vertices_ok = q.pz_vertices.iter().all(|z| h.slack(z) > 0.0);
    let rays_ok = q.ray_dirs.iter().all(|r| dot(&h.normal, r) <= 1e-15 * an * norm(r));
    Ok(vertices_ok && rays_ok)
}

/// Condition (ii): the ray from `y` away from `x` stays in the lampshade at every sampled `t`.
pub fn check_condition_ii(q: &Lampshade, x: &[f64], y: &[f64], ts: &[f64]) -> Result<bool, LampshadeError> {
    let a = &q.apex;
    if norm(x) > 1.0 + TOL_GEOM || dot(a, x) < q.eps.cos() - TOL_GEOM {
        return Err(LampshadeError::PreconditionViolated("x is outside the solid cap".into()));
    }
    if norm(y) > 1.0 + TOL_GEOM || dot(a, y) > (5.0 * q.eps).cos() + TOL_GEOM {
        return Err(LampshadeError::PreconditionViolated("y is within 5ε of the apex".into()));
    }
    Ok(ts.iter().all(|&t| {
        let p: Vec<f64> = y.iter().zip(x).map(|(yi, xi)| yi + t * (yi - xi)).collect();
        q.contains(&p, TOL_GEOM * (1.0 + t))
    }))
}

thread_local! {
    static WORKSPACE: RefCell<Phase1> = RefCell::new(Phase1::new());
}

/// Writes `target` as a nonnegative combination of the generators (convex in the vertices for points).
pub fn conic_decompose(target: &[f64], q: &Lampshade, mode: Target) -> Result<ConicCoeffs, LampshadeError> {
    if q.dim == 2 {
        if let Some(c) = planar_decompose(target, q, mode) {
            return Ok(c);
        }
    }
    let d = q.dim;
    let k = q.k();
    let n = 2 * k;
    let m = d + 1;
    let mut a = vec![0.0; m * n];
    for i in 0..d {
        for l in 0..k {
            a[i * n + l] = q.pz_vertices[l][i];
            a[i * n + k + l] = q.ray_dirs[l][i];
        }
    }
    for l in 0..k {
        a[d * n + l] = 1.0;
    }
    let mut b = target.to_vec();
    b.push(if mode == Target::Point { 1.0 } else { 0.0 });
    let sol = WORKSPACE.with(|w| w.borrow_mut().solve(&a, m, n, &b));
    let scale = 1.0 + norm(target);
    match sol {
        Some(x) => {
            let res = residual(&a, m, n, &b, &x);
            if res > TOL_GEOM * scale {
                return Err(LampshadeError::NotInCone { residual: res });
            }
            let mut vw = x[..k].to_vec();
            if mode == Target::Direction {
                vw.iter_mut().for_each(|v| *v = 0.0);
            }
            Ok(ConicCoeffs { vertex_weights: vw, ray_weights: x[k..].to_vec() })
        }
        None => Err(LampshadeError::NotInCone { residual: f64::INFINITY }),
    }
}

/// Planar shortcut: one vertex (none for directions) plus both rays, solved by Cramer's rule.
fn planar_decompose(target: &[f64], q: &Lampshade, mode: Target) -> Option<ConicCoeffs> {
    let (r0, r1) = (&q.ray_dirs[0], &q.ray_dirs[1]);
    let det = r0[0] * r1[1] - r0[1] * r1[0];
    let solve = |w: &[f64]| {
        let al = (w[0] * r1[1] - w[1] * r1[0]) / det;
        let be = (r0[0] * w[1] - r0[1] * w[0]) / det;
        (al >= 0.0 && be >= 0.0).then_some(vec![al, be])
    };
    match mode {
        Target::Direction => solve(target).map(|rw| ConicCoeffs { vertex_weights: vec![0.0; 2], ray_weights: rw }),
        Target::Point => (0..2).find_map(|l| {
            let rw = solve(&sub(target, &q.pz_vertices[l]))?;
            let mut vw = vec![0.0; 2];
            vw[l] = 1.0;
            Some(ConicCoeffs { vertex_weights: vw, ray_weights: rw })
        }),
    }
}

impl ConicCoeffs {
    pub fn recombine(&self, q: &Lampshade) -> Vec<f64> {
        let mut out = vec![0.0; q.dim];
        for (l, w) in self.vertex_weights.iter().enumerate() {
            for i in 0..q.dim {
                out[i] += w * q.pz_vertices[l][i];
            }
        }
        for (l, w) in self.ray_weights.iter().enumerate() {
            for i in 0..q.dim {
                out[i] += w * q.ray_dirs[l][i];
            }
        }
        out
    }
}

/// Labels attached to the factor columns of one lampshade factorization.
#[derive(Debug, Clone, Copy)]
pub struct CapLabel {
    pub color: usize,
    pub center: usize,
    pub near: bool,
}

/// Factorization of `M[rows, cols]` (with `Subtract` rows replaced by differences) through the
/// slack vectors of the lampshade generators.
pub fn lampshade_factorize(
    p: &Polytope,
    rows: Arc<Vec<usize>>,
    cols: &[usize],
    row_spec: &[RowSpec],
    q: &Lampshade,
    label: CapLabel,
) -> Result<NonnegFactorization, LampshadeError> {
    let mut out = NonnegFactorization::empty(p.n_vertices(), p.n_facets());
    if cols.is_empty() || rows.is_empty() {
        return Ok(out);
    }
    if row_spec.len() != rows.len() {
        return Err(LampshadeError::PreconditionViolated("row spec length differs from rows".into()));
    }
    let k = q.k();
    let nc = cols.len();
    let cap = Cap { center: q.apex.clone(), radius: q.eps };
    let mut u = vec![0.0; 2 * k * nc];
    for (jj, &f) in cols.iter().enumerate() {
        let h = &p.facets[f].plane;
        if !encapsulated(h, &cap).unwrap_or(false) {
            return Err(LampshadeError::EncapsulationViolated { facet: f, value: f64::NAN });
        }
        for l in 0..k {
            let vals = [h.slack(&q.pz_vertices[l]), -dot(&h.normal, &q.ray_dirs[l])];
            for (s, v) in vals.into_iter().enumerate() {
                if v < -TOL_GEOM {
                    return Err(LampshadeError::EncapsulationViolated { facet: f, value: v });
                }
                u[(s * k + l) * nc + jj] = v.max(0.0);
            }
        }
    }
    let mut t = vec![0.0; rows.len() * 2 * k];
    for (ii, (&v, spec)) in rows.iter().zip(row_spec).enumerate() {
        let coeffs = match spec {
            RowSpec::Plain => conic_decompose(&p.vertices[v], q, Target::Point)?,
            RowSpec::Subtract(x) => conic_decompose(&sub(&p.vertices[v], &p.vertices[*x]), q, Target::Direction)?,
        };
        for l in 0..k {
            t[ii * 2 * k + l] = coeffs.vertex_weights[l].max(0.0);
            t[ii * 2 * k + k + l] = coeffs.ray_weights[l].max(0.0);
        }
    }
    let tags = (0..2 * k)
        .map(|g| {
            if g < k {
                Provenance::CapVertex { color: label.color, center: label.center, generator: g, near: label.near }
            } else {
                Provenance::CapRay { color: label.color, center: label.center, generator: g - k, near: label.near }
            }
        })
        .collect();
    let mut block = FactorBlock { rows, cols: cols.to_vec(), t, u, tags };
    block.prune();
    out.push(block);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factorization::verify_factorization;
    use crate::hull::convex_hull;
    use crate::slack::PolytopeSlack;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(v: Vec<f64>) -> Point {
        Point(v).normalized()
    }

    #[test]
    fn planar_lampshade_shape() {
        let q = build_lampshade(&unit(vec![1.0, 0.0]), 0.1, 2).unwrap();
        assert_eq!(q.r(), 4);
        assert_eq!(q.halfspaces.len(), 3);
        assert!(q.contains(&[0.0, 0.0], 0.0));
        for h in &q.halfspaces {
            assert!(h.slack(&[0.0, 0.0]) > 0.0);
        }
        for z in &q.pz_vertices {
            assert!((angle(&q.apex, z) - 0.2).abs() < TOL_GEOM);
        }
        assert!(q.max_halfspace_cap_distance() <= 0.2 + TOL_GEOM);
    }

    #[test]
    fn spatial_lampshade_shape() {
        let q = build_lampshade(&unit(vec![0.3, -0.4, 0.8]), 0.05, 3).unwrap();
        assert_eq!(q.r(), 16);
        assert!(q.contains(&[0.0, 0.0, 0.0], 0.0));
        assert!(q.pz_inradius() >= 0.5 * q.rz);
        assert!(q.max_halfspace_cap_distance() <= 0.1 + TOL_GEOM);
    }

    #[test]
    fn errors() {
        let a = unit(vec![1.0, 0.0]);
        assert!(matches!(build_lampshade(&a, 0.7, 2), Err(LampshadeError::BadRadius(_))));
        let a4 = unit(vec![1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(build_lampshade(&a4, 0.1, 4), Err(LampshadeError::UnsupportedDimension(4))));
        let q = build_lampshade(&a, 0.1, 2).unwrap();
        // Chord far from the apex is not encapsulated.
        let h = Hyperplane::new(vec![0.0, 1.0], 0.5);
        assert!(matches!(check_condition_i(&q, &h), Err(LampshadeError::PreconditionViolated(_))));
        assert!(check_condition_ii(&q, &[1.0, 0.0], &[1.0, 0.0], &[0.0]).is_err());
    }

    #[test]
    fn decompose_generators_and_midpoints() {
        let q = build_lampshade(&unit(vec![0.0, 0.0, 1.0]), 0.1, 3).unwrap();
        let c = conic_decompose(&q.pz_vertices[2], &q, Target::Point).unwrap();
        assert!((c.vertex_weights[2] - 1.0).abs() < 1e-9);
        let mid: Vec<f64> = (0..3).map(|i| 0.5 * (q.pz_vertices[0][i] + q.pz_vertices[4][i])).collect();
        let c = conic_decompose(&mid, &q, Target::Point).unwrap();
        let back = c.recombine(&q);
        assert!(norm(&sub(&back, &mid)) < 1e-12);
        let q2 = build_lampshade(&unit(vec![1.0, 0.0]), 0.1, 2).unwrap();
        let mid2: Vec<f64> = (0..2).map(|i| 0.5 * (q2.pz_vertices[0][i] + q2.pz_vertices[1][i])).collect();
        let c = conic_decompose(&mid2, &q2, Target::Point).unwrap();
        assert!((c.vertex_weights[0] - 0.5).abs() < 1e-9 && (c.vertex_weights[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn far_points_decompose() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let q = build_lampshade(&unit(vec![1.0, 0.0]), 0.1, 2).unwrap();
        for _ in 0..200 {
            let t: f64 = rng.random_range(0.5..2.0 * PI - 0.5);
            let y = [t.cos(), t.sin()];
            let c = conic_decompose(&y, &q, Target::Point).unwrap();
            assert!(norm(&sub(&c.recombine(&q), &y)) <= 1e-9);
        }
    }

    #[test]
    fn outside_point_is_rejected() {
        let q = build_lampshade(&unit(vec![1.0, 0.0]), 0.1, 2).unwrap();
        assert!(matches!(conic_decompose(&[1.0, 0.0], &q, Target::Point), Err(LampshadeError::NotInCone { .. })));
    }

    #[test]
    fn factorize_random_circle_polygon() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut ang: Vec<f64> = (0..400).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        ang.sort_by(f64::total_cmp);
        let pts: Vec<Point> = ang.iter().map(|t| Point(vec![t.cos(), t.sin()])).collect();
        let p = convex_hull(&pts, 2).unwrap();
        let eps = 0.15;
        let a = unit(vec![1.0, 0.0]);
        let q = build_lampshade(&a, eps, 2).unwrap();
        let cap = Cap { center: a.clone(), radius: eps };
        let cols: Vec<usize> = (0..p.n_facets()).filter(|&f| encapsulated(&p.facets[f].plane, &cap).unwrap()).collect();
        let rows: Vec<usize> = (0..p.n_vertices()).filter(|&v| angle(&a, &p.vertices[v]) >= 5.0 * eps).collect();
        assert!(!cols.is_empty());
        let spec = vec![RowSpec::Plain; rows.len()];
        let lab = CapLabel { color: 0, center: 0, near: false };
        let f = lampshade_factorize(&p, Arc::new(rows.clone()), &cols, &spec, &q, lab).unwrap();
        assert!(f.r() <= 4);
        // Compare only on the factored block.
        let view = PolytopeSlack { polytope: &p };
        let dense = DMatrixBlock { view: &view, rows: &rows, cols: &cols };
        let mut local = f.clone();
        for b in &mut local.blocks {
            b.rows = Arc::new((0..rows.len()).collect());
            b.cols = (0..cols.len()).collect();
        }
        local.n_rows = rows.len();
        local.n_cols = cols.len();
        let rep = verify_factorization(&dense, &local, 1e-9).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn empty_facet_set() {
        let p = convex_hull(
            &[[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]].iter().map(|x| Point(x.to_vec())).collect::<Vec<_>>(),
            2,
        )
        .unwrap();
        let q = build_lampshade(&unit(vec![1.0, 0.0]), 0.1, 2).unwrap();
        let lab = CapLabel { color: 0, center: 0, near: false };
        let f = lampshade_factorize(&p, Arc::new(vec![1, 2]), &[], &[RowSpec::Plain, RowSpec::Plain], &q, lab).unwrap();
        assert_eq!(f.r(), 0);
    }

    struct DMatrixBlock<'a> {
        view: &'a PolytopeSlack<'a>,
        rows: &'a [usize],
        cols: &'a [usize],
    }

    impl<'a> crate::slack::MatrixView for DMatrixBlock<'a> {
        fn nrows(&self) -> usize {
            self.rows.len()
        }
        fn ncols(&self) -> usize {
            self.cols.len()
        }
        fn get(&self, i: usize, j: usize) -> f64 {
            self.view.get(self.rows[i], self.cols[j])
        }
    }
}
