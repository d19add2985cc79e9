//! Convex hulls: monotone chain in the plane, quickhull in space, brute force above.

use crate::geometry::{check_points, dot, norm, Facet, GeometryError, Hyperplane, Point, Polytope, TOL_GEOM};
use crate::linalg::{affine_rank, hyperplane_through, numerical_rank};
use crate::predicates::{orient2d, orient3d};
use nalgebra::DMatrix;
use std::cmp::Ordering;
use std::collections::HashMap;

/// Largest input accepted by the brute-force oracle for d ≥ 4.
pub const BRUTE_FORCE_CAP: usize = 60;

/// Hull together with the input index of every returned vertex.
#[derive(Debug, Clone)]
pub struct Hull {
    pub polytope: Polytope,
    pub input_index: Vec<usize>,
}

pub fn convex_hull(points: &[Point], d: usize) -> Result<Polytope, GeometryError> {
    convex_hull_indexed(points, d).map(|h| h.polytope)
}

pub fn convex_hull_indexed(points: &[Point], d: usize) -> Result<Hull, GeometryError> {
    convex_hull_with_cap(points, d, BRUTE_FORCE_CAP)
}

pub fn convex_hull_with_cap(points: &[Point], d: usize, cap: usize) -> Result<Hull, GeometryError> {
    if d < 2 {
        return Err(GeometryError::DegenerateInput(format!("dimension {d} < 2")));
    }
    check_points(points, d)?;
    if points.len() < d + 1 {
        return Err(GeometryError::DegenerateInput(format!(
            "{} points cannot span dimension {d}",
            points.len()
        )));
    }
    match d {
        2 => hull2(points),
        3 => hull3(points),
        _ => {
            if points.len() > cap {
                return Err(GeometryError::DimensionTooLarge { dim: d, n: points.len(), cap });
            }
            hull_brute(points, d)
        }
    }
}

fn hull2(points: &[Point]) -> Result<Hull, GeometryError> {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&a, &b| {
        points[a][0].total_cmp(&points[b][0]).then(points[a][1].total_cmp(&points[b][1]))
    });
    idx.dedup_by(|a, b| points[*a].0 == points[*b].0);
    let mut chain: Vec<usize> = Vec::with_capacity(idx.len() + 1);
    for pass in 0..2 {
        let start = chain.len();
        let iter: Box<dyn Iterator<Item = &usize>> =
            if pass == 0 { Box::new(idx.iter()) } else { Box::new(idx.iter().rev()) };
        for &i in iter {
            while chain.len() >= start + 2 {
                let (a, b) = (chain[chain.len() - 2], chain[chain.len() - 1]);
                if orient2d(&points[a], &points[b], &points[i]) == Ordering::Greater {
                    break;
                }
                chain.pop();
            }
            chain.push(i);
        }
        chain.pop();
    }
    if chain.len() < 3 {
        return Err(GeometryError::DegenerateInput("all points are collinear".into()));
    }
    let vertices: Vec<Point> = chain.iter().map(|&i| points[i].clone()).collect();
    let n = vertices.len();
    let facets = (0..n)
        .map(|i| {
            let j = (i + 1) % n;
            edge_facet(&vertices[i], &vertices[j], i, j)
        })
        .collect();
    Ok(Hull { polytope: Polytope { dim: 2, vertices, facets }, input_index: chain })
}

/// Facet through the directed edge `p → q` of a counterclockwise polygon.
pub fn edge_facet(p: &[f64], q: &[f64], i: usize, j: usize) -> Facet {
    let (ex, ey) = (q[0] - p[0], q[1] - p[1]);
    let len = (ex * ex + ey * ey).sqrt();
    let normal = vec![ey / len, -ex / len];
    let offset = 0.5 * (dot(&normal, p) + dot(&normal, q));
    Facet { plane: Hyperplane { normal, offset }, incident: vec![i, j] }
}

#[derive(Clone)]
struct Face {
    v: [usize; 3],
    nbr: [usize; 3],
    normal: [f64; 3],
    alive: bool,
    outside: Vec<usize>,
}

fn tri_normal(p: &[[f64; 3]], v: [usize; 3]) -> [f64; 3] {
    let (a, b, c) = (p[v[0]], p[v[1]], p[v[2]]);
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let w = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    let n = [u[1] * w[2] - u[2] * w[1], u[2] * w[0] - u[0] * w[2], u[0] * w[1] - u[1] * w[0]];
    let l = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    if l == 0.0 {
        return [0.0; 3];
    }
    [n[0] / l, n[1] / l, n[2] / l]
}

fn above(p: &[[f64; 3]], f: &Face, q: usize) -> bool {
    orient3d(&p[f.v[0]], &p[f.v[1]], &p[f.v[2]], &p[q]) == Ordering::Greater
}

fn height(p: &[[f64; 3]], f: &Face, q: usize) -> f64 {
    let a = p[f.v[0]];
    let x = p[q];
    f.normal[0] * (x[0] - a[0]) + f.normal[1] * (x[1] - a[1]) + f.normal[2] * (x[2] - a[2])
}

fn hull3(points: &[Point]) -> Result<Hull, GeometryError> {
    let p: Vec<[f64; 3]> = points.iter().map(|q| [q[0], q[1], q[2]]).collect();
    let n = p.len();
    let degenerate = || GeometryError::DegenerateInput("points are coplanar".into());
    // Initial tetrahedron from extreme points.
    let (mut i0, mut i1) = (0, 0);
    for i in 0..n {
        if p[i][0] < p[i0][0] {
            i0 = i;
        }
        if p[i][0] > p[i1][0] {
            i1 = i;
        }
    }
    if i0 == i1 {
        let far = (0..n)
            .max_by(|&a, &b| dist2(&p[a], &p[i0]).total_cmp(&dist2(&p[b], &p[i0])))
            .unwrap();
        i1 = far;
        if dist2(&p[i0], &p[i1]) == 0.0 {
            return Err(degenerate());
        }
    }
    let line = |q: &[f64; 3]| {
        let u = sub3(&p[i1], &p[i0]);
        let w = sub3(q, &p[i0]);
        let c = cross3(&u, &w);
        dot(&c, &c)
    };
    let i2 = (0..n).max_by(|&a, &b| line(&p[a]).total_cmp(&line(&p[b]))).unwrap();
    if line(&p[i2]) == 0.0 {
        return Err(degenerate());
    }
    let vol = |q: &[f64; 3]| {
        let c = cross3(&sub3(&p[i1], &p[i0]), &sub3(&p[i2], &p[i0]));
        dot(&c, &sub3(q, &p[i0])).abs()
    };
    let mut i3 = (0..n).max_by(|&a, &b| vol(&p[a]).total_cmp(&vol(&p[b]))).unwrap();
    if orient3d(&p[i0], &p[i1], &p[i2], &p[i3]) == Ordering::Equal {
        match (0..n).find(|&q| orient3d(&p[i0], &p[i1], &p[i2], &p[q]) != Ordering::Equal) {
            Some(q) => i3 = q,
            None => return Err(degenerate()),
        }
    }
    let (i1, i2) = if orient3d(&p[i0], &p[i1], &p[i2], &p[i3]) == Ordering::Greater {
        (i2, i1)
    } else {
        (i1, i2)
    };
    // Faces of the tetrahedron oriented so the fourth vertex is below.
    let tris = [[i0, i1, i2], [i0, i3, i1], [i1, i3, i2], [i2, i3, i0]];
    let mut faces: Vec<Face> = tris
        .iter()
        .map(|&v| Face { v, nbr: [usize::MAX; 3], normal: tri_normal(&p, v), alive: true, outside: vec![] })
        .collect();
    link_all(&mut faces);
    let used = [i0, i1, i2, i3];
    for q in 0..n {
        if used.contains(&q) {
            continue;
        }
        for f in faces.iter_mut() {
            if above(&p, f, q) {
                f.outside.push(q);
                break;
            }
        }
    }
    let mut stack: Vec<usize> = (0..faces.len()).collect();
    let mut visible: Vec<usize> = Vec::new();
    let mut mark: Vec<u32> = vec![0; faces.len()];
    let mut stamp = 0u32;
    while let Some(fi) = stack.pop() {
        if !faces[fi].alive || faces[fi].outside.is_empty() {
            continue;
        }
        let apex = *faces[fi]
            .outside
            .iter()
            .max_by(|&&a, &&b| height(&p, &faces[fi], a).total_cmp(&height(&p, &faces[fi], b)))
            .unwrap();
        stamp += 1;
        visible.clear();
        visible.push(fi);
        mark[fi] = stamp;
        let mut k = 0;
        let mut horizon: Vec<(usize, usize, usize)> = Vec::new();
        while k < visible.len() {
            let f = visible[k];
            k += 1;
            for e in 0..3 {
                let g = faces[f].nbr[e];
                if mark[g] == stamp {
                    continue;
                }
                if above(&p, &faces[g], apex) {
                    mark[g] = stamp;
                    visible.push(g);
                } else {
                    horizon.push((faces[f].v[e], faces[f].v[(e + 1) % 3], g));
                }
            }
        }
        // Visible faces that were reached after being recorded as horizon neighbours.
        horizon.retain(|&(_, _, g)| mark[g] != stamp);
        let mut orphans: Vec<usize> = Vec::new();
        for &f in &visible {
            faces[f].alive = false;
            orphans.append(&mut faces[f].outside);
        }
        let first_new = faces.len();
        let mut edge_map: HashMap<(usize, usize), (usize, usize)> = HashMap::with_capacity(horizon.len() * 2);
        for &(a, b, g) in &horizon {
            let v = [a, b, apex];
            let id = faces.len();
            faces.push(Face { v, nbr: [g, usize::MAX, usize::MAX], normal: tri_normal(&p, v), alive: true, outside: vec![] });
            mark.push(0);
            let ge = (0..3).find(|&e| faces[g].v[e] == b && faces[g].v[(e + 1) % 3] == a).expect("horizon edge");
            faces[g].nbr[ge] = id;
            edge_map.insert((b, apex), (id, 1));
            edge_map.insert((apex, a), (id, 2));
        }
        for id in first_new..faces.len() {
            let v = faces[id].v;
            // Edge (b, apex) pairs with the face whose edge is (apex, b).
            let (other, oe) = edge_map[&(apex, v[1])];
            faces[id].nbr[1] = other;
            faces[other].nbr[oe] = id;
        }
        for q in orphans {
            if q == apex {
                continue;
            }
            for id in first_new..faces.len() {
                if above(&p, &faces[id], q) {
                    faces[id].outside.push(q);
                    break;
                }
            }
        }
        for id in first_new..faces.len() {
            if !faces[id].outside.is_empty() {
                stack.push(id);
            }
        }
    }
    assemble3(&p, points, &faces)
}

fn link_all(faces: &mut [Face]) {
    let mut map: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
    for (fi, f) in faces.iter().enumerate() {
        for e in 0..3 {
            map.insert((f.v[e], f.v[(e + 1) % 3]), (fi, e));
        }
    }
    for fi in 0..faces.len() {
        for e in 0..3 {
            let (a, b) = (faces[fi].v[e], faces[fi].v[(e + 1) % 3]);
            faces[fi].nbr[e] = map[&(b, a)].0;
        }
    }
}

fn assemble3(p: &[[f64; 3]], points: &[Point], faces: &[Face]) -> Result<Hull, GeometryError> {
    let alive: Vec<usize> = (0..faces.len()).filter(|&f| faces[f].alive).collect();
    let mut uf: HashMap<usize, usize> = alive.iter().map(|&f| (f, f)).collect();
    fn find(uf: &mut HashMap<usize, usize>, x: usize) -> usize {
        let mut r = x;
        while uf[&r] != r {
            r = uf[&r];
        }
        let mut y = x;
        while uf[&y] != r {
            let nx = uf[&y];
            uf.insert(y, r);
            y = nx;
        }
        r
    }
    for &f in &alive {
        for e in 0..3 {
            let g = faces[f].nbr[e];
            let opp = faces[g].v.iter().cloned().find(|v| !faces[f].v.contains(v)).unwrap();
            let fv = faces[f].v;
            if orient3d(&p[fv[0]], &p[fv[1]], &p[fv[2]], &p[opp]) == Ordering::Equal {
                let (a, b) = (find(&mut uf, f), find(&mut uf, g));
                if a != b {
                    uf.insert(a, b);
                }
            }
        }
    }
    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for &f in &alive {
        let r = find(&mut uf, f);
        groups.entry(r).or_default().push(f);
    }
    let mut group_list: Vec<Vec<usize>> = groups.into_values().collect();
    group_list.sort_by_key(|g| *g.iter().min().unwrap());
    // Facet planes and incidences on input indices.
    let mut raw: Vec<(Vec<f64>, Vec<usize>)> = Vec::with_capacity(group_list.len());
    for g in &group_list {
        let best = *g
            .iter()
            .max_by(|&&a, &&b| tri_area(p, faces[a].v).total_cmp(&tri_area(p, faces[b].v)))
            .unwrap();
        let normal = faces[best].normal.to_vec();
        let mut inc: Vec<usize> = g.iter().flat_map(|&f| faces[f].v).collect();
        inc.sort_unstable();
        inc.dedup();
        raw.push((normal, inc));
    }
    // Drop points that lie on the hull but are not extreme.
    let mut normals_at: HashMap<usize, Vec<usize>> = HashMap::new();
    for (fi, (_, inc)) in raw.iter().enumerate() {
        for &v in inc {
            normals_at.entry(v).or_default().push(fi);
        }
    }
    let mut extreme: Vec<usize> = normals_at
        .iter()
        .filter(|(_, fs)| {
            fs.len() >= 3 && {
                let m = DMatrix::from_fn(fs.len(), 3, |i, j| raw[fs[i]].0[j]);
                numerical_rank(&m, 1e-12) == 3
            }
        })
        .map(|(&v, _)| v)
        .collect();
    extreme.sort_unstable();
    let mut new_id: HashMap<usize, usize> = HashMap::new();
    for (i, &v) in extreme.iter().enumerate() {
        new_id.insert(v, i);
    }
    let vertices: Vec<Point> = extreme.iter().map(|&v| points[v].clone()).collect();
    let facets = raw
        .into_iter()
        .map(|(normal, inc)| {
            let incident: Vec<usize> = inc.iter().filter_map(|v| new_id.get(v).cloned()).collect();
            let offset = incident.iter().map(|&i| dot(&normal, &vertices[i])).sum::<f64>() / incident.len() as f64;
            Facet { plane: Hyperplane { normal, offset }, incident }
        })
        .collect();
    Ok(Hull { polytope: Polytope { dim: 3, vertices, facets }, input_index: extreme })
}

fn tri_area(p: &[[f64; 3]], v: [usize; 3]) -> f64 {
    let c = cross3(&sub3(&p[v[1]], &p[v[0]]), &sub3(&p[v[2]], &p[v[0]]));
    norm(&c)
}

fn sub3(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross3(u: &[f64; 3], w: &[f64; 3]) -> [f64; 3] {
    [u[1] * w[2] - u[2] * w[1], u[2] * w[0] - u[0] * w[2], u[0] * w[1] - u[1] * w[0]]
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d = sub3(a, b);
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}

fn hull_brute(points: &[Point], d: usize) -> Result<Hull, GeometryError> {
    let all: Vec<&[f64]> = points.iter().map(|p| &p[..]).collect();
    if affine_rank(&all) < d {
        return Err(GeometryError::DegenerateInput("points lie on a hyperplane".into()));
    }
    let n = points.len();
    let mut seen: HashMap<Vec<usize>, ()> = HashMap::new();
    let mut raw: Vec<(Vec<f64>, f64, Vec<usize>)> = Vec::new();
    let mut comb: Vec<usize> = (0..d).collect();
    loop {
        let sel: Vec<&[f64]> = comb.iter().map(|&i| all[i]).collect();
        if let Some((mut nrm, mut b)) = hyperplane_through(&sel) {
            let s: Vec<f64> = all.iter().map(|x| b - dot(&nrm, x)).collect();
            let lo = s.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let side = if lo >= -TOL_GEOM {
                Some(1.0)
            } else if hi <= TOL_GEOM {
                Some(-1.0)
            } else {
                None
            };
            if let Some(sg) = side {
                nrm.iter_mut().for_each(|x| *x *= sg);
                b *= sg;
                let inc: Vec<usize> = (0..n).filter(|&i| s[i].abs() <= TOL_GEOM).collect();
                if seen.insert(inc.clone(), ()).is_none() {
                    raw.push((nrm, b, inc));
                }
            }
        }
        // Next d-subset in lexicographic order.
        let mut k = d;
        while k > 0 && comb[k - 1] == n - d + k - 1 {
            k -= 1;
        }
        if k == 0 {
            break;
        }
        comb[k - 1] += 1;
        for j in k..d {
            comb[j] = comb[j - 1] + 1;
        }
    }
    let mut extreme: Vec<usize> = (0..n)
        .filter(|&v| {
            let fs: Vec<usize> = (0..raw.len()).filter(|&f| raw[f].2.contains(&v)).collect();
            fs.len() >= d && {
                let m = DMatrix::from_fn(fs.len(), d, |i, j| raw[fs[i]].0[j]);
                numerical_rank(&m, 1e-9) == d
            }
        })
        .collect();
    extreme.sort_unstable();
    let pos: HashMap<usize, usize> = extreme.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let vertices: Vec<Point> = extreme.iter().map(|&v| points[v].clone()).collect();
    let facets = raw
        .into_iter()
        .map(|(normal, offset, inc)| Facet {
            plane: Hyperplane { normal, offset },
            incident: inc.iter().filter_map(|v| pos.get(v).cloned()).collect(),
        })
        .collect();
    Ok(Hull { polytope: Polytope { dim: d, vertices, facets }, input_index: extreme })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pts(v: &[&[f64]]) -> Vec<Point> {
        v.iter().map(|x| Point(x.to_vec())).collect()
    }

    #[test]
    fn square() {
        let p = pts(&[&[1.0, 1.0], &[-1.0, 1.0], &[-1.0, -1.0], &[1.0, -1.0]]);
        let h = convex_hull(&p, 2).unwrap();
        assert_eq!(h.n_vertices(), 4);
        assert_eq!(h.n_facets(), 4);
        h.check().unwrap();
    }

    #[test]
    fn square_with_center_drops_interior_point() {
        let p = pts(&[&[1.0, 1.0], &[-1.0, 1.0], &[-1.0, -1.0], &[1.0, -1.0], &[0.0, 0.0]]);
        assert_eq!(convex_hull(&p, 2).unwrap().n_vertices(), 4);
    }

    #[test]
    fn collinear_midpoint_is_not_a_vertex() {
        let p = pts(&[&[0.0, 0.0], &[1.0, 0.0], &[2.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(convex_hull(&p, 2).unwrap().n_vertices(), 3);
    }

    #[test]
    fn octahedron() {
        let mut v = vec![];
        for i in 0..3 {
            for s in [1.0, -1.0] {
                let mut e = vec![0.0; 3];
                e[i] = s;
                v.push(Point(e));
            }
        }
        let h = convex_hull(&v, 3).unwrap();
        assert_eq!(h.n_vertices(), 6);
        assert_eq!(h.n_facets(), 8);
        h.check().unwrap();
    }

    #[test]
    fn cube_merges_coplanar_triangles() {
        let mut v = vec![];
        for x in [-1.0, 1.0] {
            for y in [-1.0, 1.0] {
                for z in [-1.0, 1.0] {
                    v.push(Point(vec![x, y, z]));
                }
            }
        }
        // Face centres and an edge midpoint are on the hull but not vertices.
        v.push(Point(vec![0.0, 0.0, 1.0]));
        v.push(Point(vec![1.0, 0.0, 1.0]));
        let h = convex_hull(&v, 3).unwrap();
        assert_eq!(h.n_vertices(), 8);
        assert_eq!(h.n_facets(), 6);
        for f in &h.facets {
            assert_eq!(f.incident.len(), 4);
        }
        h.check().unwrap();
    }

    #[test]
    fn tesseract_brute_force() {
        let mut v = vec![];
        for m in 0..16u32 {
            v.push(Point((0..4).map(|i| if m >> i & 1 == 1 { 1.0 } else { -1.0 }).collect()));
        }
        v.push(Point(vec![0.0; 4]));
        let h = convex_hull(&v, 4).unwrap();
        assert_eq!(h.n_vertices(), 16);
        assert_eq!(h.n_facets(), 8);
        h.check().unwrap();
    }

    #[test]
    fn brute_force_cap() {
        let v: Vec<Point> = (0..61).map(|i| Point(vec![i as f64, (i * i) as f64, 0.0, 1.0])).collect();
        assert!(matches!(convex_hull(&v, 4), Err(GeometryError::DimensionTooLarge { .. })));
    }

    #[test]
    fn degenerate_inputs() {
        let flat = pts(&[&[0.0, 0.0, 0.0], &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[1.0, 1.0, 0.0]]);
        assert!(matches!(convex_hull(&flat, 3), Err(GeometryError::DegenerateInput(_))));
        let line = pts(&[&[0.0, 0.0], &[1.0, 1.0], &[2.0, 2.0]]);
        assert!(matches!(convex_hull(&line, 2), Err(GeometryError::DegenerateInput(_))));
    }

    #[test]
    fn random_ball_hull_contains_all_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in [2usize, 3] {
            let v: Vec<Point> = (0..2000)
                .map(|_| Point((0..d).map(|_| rng.random_range(-1.0..1.0)).collect()))
                .collect();
            let h = convex_hull(&v, d).unwrap();
            for f in &h.facets {
                for q in &v {
                    assert!(f.plane.slack(q) >= -TOL_GEOM);
                }
            }
            h.check().unwrap();
            if d == 3 {
                // Euler: V − E + F = 2 with triangular facets.
                assert_eq!(h.n_facets(), 2 * h.n_vertices() - 4);
            }
        }
    }
}
