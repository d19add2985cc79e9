//! ε-separated cap centers on the sphere, their coloring, and facet/vertex assignment.

use crate::geometry::{dot, Point, Polytope, TOL_GEOM};
use crate::sphere::{angle, encapsulated, smaller_cap_of_hyperplane, Cap};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use thiserror::Error;

/// Upper limit on the cap radius accepted by the cover construction.
pub const MAX_EPS: f64 = PI / 5.0;

/// Consecutive rejections per accepted center before the greedy stream stops.
pub const REJECTION_FACTOR: usize = 50;

/// Same-color centers must be at least this many radii apart.
pub const COLOR_SEPARATION: f64 = 30.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CapsError {
    #[error("cap radius {0} outside (0, π/5)")]
    BadRadius(f64),
    #[error("unsupported dimension {0}")]
    BadDimension(usize),
    #[error("no cap of the cover encapsulates facet {facet} ({unfit} facets unfit)")]
    NoCapFits { facet: usize, unfit: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapSet {
    pub dim: usize,
    pub epsilon: f64,
    pub centers: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coloring {
    /// Color of each center, `0..chi`.
    pub color: Vec<usize>,
    pub chi: usize,
}

impl Coloring {
    pub fn classes(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.chi];
        for (a, &c) in self.color.iter().enumerate() {
            out[c].push(a);
        }
        out
    }
}

/// Spatial hash over unit vectors with a fixed cell size.
struct Grid {
    cell: f64,
    map: HashMap<Vec<i64>, Vec<usize>>,
}

impl Grid {
    fn new(cell: f64) -> Self {
        Grid { cell, map: HashMap::new() }
    }

    fn key(&self, x: &[f64]) -> Vec<i64> {
        x.iter().map(|v| (v / self.cell).floor() as i64).collect()
    }

    fn insert(&mut self, x: &[f64], id: usize) {
        let k = self.key(x);
        self.map.entry(k).or_default().push(id);
    }

    fn neighbours(&self, x: &[f64], mut f: impl FnMut(usize) -> bool) -> bool {
        let k = self.key(x);
        let d = k.len();
        let total = 3usize.pow(d as u32);
        let mut key = vec![0i64; d];
        for code in 0..total {
            let mut c = code;
            for i in 0..d {
                key[i] = k[i] + (c % 3) as i64 - 1;
                c /= 3;
            }
            if let Some(ids) = self.map.get(&key) {
                for &id in ids {
                    if !f(id) {
                        return false;
                    }
                }
            }
        }
        true
    }
}

fn random_unit(d: usize, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = crate::geometry::norm(&v);
        if n > 1e-12 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

/// Random rotation of ℝ³ from a uniformly random unit quaternion.
fn random_rotation3(rng: &mut impl Rng) -> [[f64; 3]; 3] {
    let q = random_unit(4, rng);
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

/// Evenly spread candidates used before the random stream.
fn stratified(eps: f64, d: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let step = 0.5 * eps * (1.0 + 1e-9);
    match d {
        2 => {
            let n = (2.0 * PI / step).floor() as usize;
            let off: f64 = rng.random_range(0.0..2.0 * PI);
            (0..n)
                .map(|i| {
                    let t = off + i as f64 * step;
                    vec![t.cos(), t.sin()]
                })
                .collect()
        }
        3 => {
            // Fibonacci lattice whose hexagonal spacing is slightly above the separation.
            let s = step * 1.05;
            let n = ((8.0 * PI) / (3f64.sqrt() * s * s)).floor().max(4.0) as usize;
            let rot = random_rotation3(rng);
            let golden = PI * (3.0 - 5f64.sqrt());
            (0..n)
                .map(|i| {
                    let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
                    let r = (1.0 - z * z).sqrt();
                    let t = golden * i as f64;
                    let p = [r * t.cos(), r * t.sin(), z];
                    (0..3).map(|k| rot[k][0] * p[0] + rot[k][1] * p[1] + rot[k][2] * p[2]).collect()
                })
                .collect()
        }
        _ => Vec::new(),
    }
}

/// Greedy maximal set of unit vectors with pairwise spherical distance ≥ ε/2.
pub fn maximal_separated_set(eps: f64, d: usize, rng: &mut impl Rng) -> Result<CapSet, CapsError> {
    if !(eps > 0.0 && eps < MAX_EPS) {
        return Err(CapsError::BadRadius(eps));
    }
    if d < 2 {
        return Err(CapsError::BadDimension(d));
    }
    let sep = 0.5 * eps;
    let mut grid = Grid::new(2.0 * (sep / 2.0).sin());
    let mut centers: Vec<Point> = Vec::new();
    let try_add = |x: Vec<f64>, centers: &mut Vec<Point>, grid: &mut Grid| -> bool {
        let ok = grid.neighbours(&x, |id| angle(&centers[id], &x) >= sep);
        if ok {
            grid.insert(&x, centers.len());
            centers.push(Point(x));
        }
        ok
    };
    for x in stratified(eps, d, rng) {
        try_add(x, &mut centers, &mut grid);
    }
    let mut rejections = 0usize;
    loop {
        if rejections >= REJECTION_FACTOR * centers.len().max(1) {
            break;
        }
        let x = random_unit(d, rng);
        if try_add(x, &mut centers, &mut grid) {
            rejections = 0;
        } else {
            rejections += 1;
        }
    }
    Ok(CapSet { dim: d, epsilon: eps, centers })
}

impl CapSet {
    /// Smallest pairwise spherical distance (exhaustive).
    pub fn min_pairwise_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.centers.len() {
            for j in (i + 1)..self.centers.len() {
                best = best.min(angle(&self.centers[i], &self.centers[j]));
            }
        }
        best
    }

    /// Fraction of `samples` random unit points that are at least ε/2 from every center.
    pub fn uncovered_fraction(&self, samples: usize, rng: &mut impl Rng) -> f64 {
        let sep = 0.5 * self.epsilon;
        let bad = (0..samples)
            .filter(|_| {
                let x = random_unit(self.dim, rng);
                self.centers.iter().all(|c| angle(c, &x) >= sep)
            })
            .count();
        bad as f64 / samples.max(1) as f64
    }

    /// Largest number of centers within `radius` of a random probe point.
    pub fn max_centers_within(&self, radius: f64, probes: usize, rng: &mut impl Rng) -> usize {
        (0..probes)
            .map(|_| {
                let x = random_unit(self.dim, rng);
                self.centers.iter().filter(|c| angle(c, &x) <= radius).count()
            })
            .max()
            .unwrap_or(0)
    }
}

/// Greedy coloring in insertion order; an edge joins centers closer than 30ε.
pub fn color_caps(a: &CapSet) -> Coloring {
    let lim = COLOR_SEPARATION * a.epsilon;
    let n = a.centers.len();
    let mut color = vec![usize::MAX; n];
    let mut chi = 0;
    let mut used: Vec<bool> = Vec::new();
    for i in 0..n {
        used.clear();
        used.resize(chi + 1, false);
        for j in 0..i {
            if angle(&a.centers[i], &a.centers[j]) < lim {
                used[color[j]] = true;
            }
        }
        let c = used.iter().position(|u| !u).unwrap();
        color[i] = c;
        chi = chi.max(c + 1);
    }
    Coloring { color, chi }
}

/// Maps every facet to the first center whose ε-cap encapsulates it.
pub fn assign_facets(p: &Polytope, a: &CapSet) -> Result<Vec<usize>, CapsError> {
    let mut out = Vec::with_capacity(p.n_facets());
    let mut first_unfit: Option<usize> = None;
    let mut unfit = 0;
    for (fi, f) in p.facets.iter().enumerate() {
        match first_fit(f, a) {
            Some(c) => out.push(c),
            None => {
                unfit += 1;
                first_unfit.get_or_insert(fi);
                out.push(usize::MAX);
            }
        }
    }
    match first_unfit {
        Some(facet) => Err(CapsError::NoCapFits { facet, unfit }),
        None => Ok(out),
    }
}

fn first_fit(f: &crate::geometry::Facet, a: &CapSet) -> Option<usize> {
    let q = smaller_cap_of_hyperplane(&f.plane).ok()?;
    let slackness = a.epsilon - q.radius;
    if slackness < -TOL_GEOM {
        return None;
    }
    // Cheap dot-product prefilter, then the exact rim criterion.
    let cut = (slackness.max(0.0) + 1e-7).min(PI).cos();
    a.centers.iter().position(|c| {
        dot(c, &q.center) >= cut
            && encapsulated(&f.plane, &Cap { center: c.clone(), radius: a.epsilon }).unwrap_or(false)
    })
}

/// Vertices inside the solid cap of radius `factor·ε` around each center.
pub fn cap_vertex_sets(p: &Polytope, a: &CapSet, factor: f64) -> Vec<Vec<usize>> {
    let c = (factor * a.epsilon).min(PI).cos();
    a.centers
        .iter()
        .map(|ctr| (0..p.n_vertices()).filter(|&v| dot(ctr, &p.vertices[v]) >= c).collect())
        .collect()
}

/// JSON form of a cap set with its colors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CapSetJson {
    pub dim: usize,
    pub epsilon: f64,
    pub centers: Vec<Point>,
    pub colors: Vec<usize>,
}

impl CapSetJson {
    pub fn new(a: &CapSet, c: &Coloring) -> Self {
        CapSetJson { dim: a.dim, epsilon: a.epsilon, centers: a.centers.clone(), colors: c.color.clone() }
    }
}
