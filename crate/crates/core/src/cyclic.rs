//! Cyclic polygons: arc blocks, well-separated colorings, row rescaling and the block assembly.

use crate::factorization::{verify_factorization, FactorBlock, NonnegFactorization, Provenance, VerifyReport};
use crate::geometry::{Point, Polytope, TOL_GEOM};
use crate::hull::edge_facet;
use crate::nmf::{block_factorize, NmfError, NmfMethod, NmfOptions};
use crate::rng::substream;
use crate::slack::PolytopeSlack;
use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;
use std::f64::consts::PI;
use std::sync::Arc as Shared;
use thiserror::Error;

const TAU: f64 = 2.0 * PI;
pub const MAX_COLORS: usize = 14;
/// Below this many vertices the identity factorization is already within `24√n`.
pub const TRIVIAL_BELOW: usize = 576;
/// Relative slack allowed in the rescaling inequalities.
pub const RESCALE_TOL: f64 = 1e-12;
pub const RATIO_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CyclicError {
    #[error("angles are not strictly increasing in [0, 2π) at index {0}")]
    NotSorted(usize),
    #[error("a polygon needs at least 3 vertices, got {0}")]
    TooFew(usize),
    #[error("not a cyclic polygon: {0}")]
    NotCyclic(String),
    #[error("arc {arc} would need color {needed}; at most {MAX_COLORS} are allowed")]
    ColorOverflow { arc: usize, needed: usize },
    #[error("arcs {a} and {b} share a color but are not well separated")]
    NotSeparated { a: usize, b: usize },
    #[error("rescaling precondition fails at j={j}, k={k}, s={s}, t={t}")]
    PreconditionViolated { j: usize, k: usize, s: usize, t: usize },
    #[error("rescaling postcondition fails at j={j}, k={k}, s={s}: {lhs:e} > {rhs:e}")]
    RescaleViolated { j: usize, k: usize, s: usize, lhs: f64, rhs: f64 },
    #[error("K[{vertex}, {facet}] = {value:e} is negative")]
    NegativeK { vertex: usize, facet: usize, value: f64 },
    #[error("block of arc {arc} (color {color}) failed after retry: {cause}")]
    RankTargetMissed { color: usize, arc: usize, cause: NmfError },
    #[error("circle configuration precondition fails: {0}")]
    CirclePrecondition(String),
    #[error("reconstruction check failed: relative error {rel_err:e}, min entry {min_entry:e}")]
    Verification { rel_err: f64, min_entry: f64 },
}

/// Polygon with vertices `(cos θ, sin θ)` in the given order; facet `i` joins vertices `i` and `i+1`.
pub fn make_cyclic_polygon(angles: &[f64]) -> Result<Polytope, CyclicError> {
    let n = angles.len();
    if n < 3 {
        return Err(CyclicError::TooFew(n));
    }
    for i in 0..n {
        let ok = angles[i].is_finite()
            && angles[i] >= 0.0
            && angles[i] < TAU
            && (i == 0 || angles[i] > angles[i - 1]);
        if !ok {
            return Err(CyclicError::NotSorted(i));
        }
    }
    let vertices: Vec<Point> = angles.iter().map(|t| Point(vec![t.cos(), t.sin()])).collect();
    let facets = (0..n).map(|i| edge_facet(&vertices[i], &vertices[(i + 1) % n], i, (i + 1) % n)).collect();
    Ok(Polytope { dim: 2, vertices, facets })
}

/// `n` sorted angles drawn uniformly from `[0, 2π)`.
pub fn uniform_angles<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    sorted_distinct(n, rng, |rng| rng.random_range(0.0..TAU))
}

/// `n` sorted angles with 90% of them in the first quadrant.
pub fn clustered_angles<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let inner = (0.9 * n as f64).round() as usize;
    let mut i = 0;
    sorted_distinct(n, rng, |rng| {
        i += 1;
        if i <= inner {
            rng.random_range(0.0..PI / 2.0)
        } else {
            rng.random_range(PI / 2.0..TAU)
        }
    })
}

fn sorted_distinct<R: Rng>(n: usize, rng: &mut R, mut draw: impl FnMut(&mut R) -> f64) -> Vec<f64> {
    let mut a: Vec<f64> = (0..n).map(|_| draw(rng)).collect();
    a.sort_by(f64::total_cmp);
    for i in 1..a.len() {
        while a[i] <= a[i - 1] {
            a[i] = rng.random_range(a[i - 1]..TAU);
        }
    }
    a
}

pub fn ceil_sqrt(n: usize) -> usize {
    if n <= 1 {
        n
    } else {
        (n - 1).isqrt() + 1
    }
}

/// Counterclockwise angle from `a` to `b`, in `[0, 2π)`.
pub fn ccw(a: f64, b: f64) -> f64 {
    let d = (b - a).rem_euclid(TAU);
    if d >= TAU {
        0.0
    } else {
        d
    }
}

/// Arc-distance between two points of the circle (the shorter side).
pub fn point_distance(a: f64, b: f64) -> f64 {
    let d = ccw(a, b);
    d.min(TAU - d)
}

/// A closed counterclockwise arc spanned by consecutive polygon facets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Arc {
    pub id: usize,
    /// Angle of the first vertex, in `[0, 2π)`.
    pub start: f64,
    /// Angle of the last vertex, in `[0, 2π)`.
    pub end: f64,
    pub length: f64,
    pub vertices: Vec<usize>,
    pub facets: Vec<usize>,
}

impl Arc {
    pub fn contains(&self, theta: f64) -> bool {
        ccw(self.start, theta) <= self.length + 1e-12
    }

    /// Distance from a point of the circle to the closest point of the arc.
    pub fn distance_to(&self, theta: f64) -> f64 {
        if self.contains(theta) {
            0.0
        } else {
            ccw(self.end, theta).min(ccw(theta, self.start))
        }
    }
}

/// Distance between two arcs; zero when they meet.
pub fn arc_distance(x: &Arc, y: &Arc) -> f64 {
    let g1 = ccw(x.end, y.start);
    let g2 = ccw(y.end, x.start);
    if g1 + g2 + x.length + y.length > TAU + 1e-9 {
        return 0.0;
    }
    g1.min(g2)
}

pub fn well_separated(x: &Arc, y: &Arc) -> bool {
    arc_distance(x, y) >= 5.0 * x.length.min(y.length)
}

/// Angles of the vertices after checking that `p` is a cyclic polygon in counterclockwise order
/// with facet `i` joining vertices `i` and `i+1`.
pub fn vertex_angles(p: &Polytope) -> Result<Vec<f64>, CyclicError> {
    let n = p.n_vertices();
    if p.dim != 2 {
        return Err(CyclicError::NotCyclic(format!("dimension {}", p.dim)));
    }
    if n < 3 || p.n_facets() != n {
        return Err(CyclicError::NotCyclic(format!("{n} vertices, {} facets", p.n_facets())));
    }
    let mut angles = Vec::with_capacity(n);
    for (i, v) in p.vertices.iter().enumerate() {
        let r = v[0].hypot(v[1]);
        if (r - 1.0).abs() > 1e-9 {
            return Err(CyclicError::NotCyclic(format!("vertex {i} has norm {r}")));
        }
        angles.push(v[1].atan2(v[0]).rem_euclid(TAU));
    }
    let mut last = 0.0;
    for i in 1..n {
        let rel = ccw(angles[0], angles[i]);
        if rel <= last {
            return Err(CyclicError::NotCyclic(format!("vertex {i} is out of counterclockwise order")));
        }
        last = rel;
    }
    for (i, f) in p.facets.iter().enumerate() {
        let mut inc = f.incident.clone();
        inc.sort_unstable();
        let mut want = vec![i, (i + 1) % n];
        want.sort_unstable();
        if inc != want {
            return Err(CyclicError::NotCyclic(format!("facet {i} is not the chord ({}, {})", i, (i + 1) % n)));
        }
    }
    Ok(angles)
}

/// `⌈√n⌉` blocks of consecutive facets with sizes differing by at most one, larger blocks first.
pub fn arc_blocks(p: &Polytope) -> Result<Vec<Arc>, CyclicError> {
    let angles = vertex_angles(p)?;
    Ok(arcs_from_angles(&angles))
}

fn arcs_from_angles(angles: &[f64]) -> Vec<Arc> {
    let n = angles.len();
    let b = ceil_sqrt(n).min(n);
    let (q, rem) = (n / b, n % b);
    let mut arcs = Vec::with_capacity(b);
    let mut s = 0;
    for id in 0..b {
        let size = q + usize::from(id < rem);
        let e = (s + size) % n;
        let (start, end) = (angles[s], angles[e]);
        arcs.push(Arc {
            id,
            start,
            end,
            length: ccw(start, end),
            vertices: (s..=s + size).map(|v| v % n).collect(),
            facets: (s..s + size).collect(),
        });
        s += size;
    }
    arcs
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArcColoring {
    /// Color of each arc, numbered from 0.
    pub colors: Vec<usize>,
    pub n_colors: usize,
}

impl ArcColoring {
    pub fn class(&self, c: usize) -> Vec<usize> {
        (0..self.colors.len()).filter(|&a| self.colors[a] == c).collect()
    }
}

/// Greedy coloring by decreasing length, then an exhaustive pairwise separation check.
pub fn color_arcs(arcs: &[Arc]) -> Result<ArcColoring, CyclicError> {
    let mut order: Vec<usize> = (0..arcs.len()).collect();
    order.sort_by(|&a, &b| arcs[b].length.total_cmp(&arcs[a].length).then(a.cmp(&b)));
    let mut colors = vec![usize::MAX; arcs.len()];
    for (pos, &a) in order.iter().enumerate() {
        let mut used = [false; MAX_COLORS + 1];
        for &b in &order[..pos] {
            if !well_separated(&arcs[a], &arcs[b]) {
                used[colors[b].min(MAX_COLORS)] = true;
            }
        }
        let c = used.iter().position(|&u| !u).unwrap_or(MAX_COLORS);
        if c >= MAX_COLORS {
            return Err(CyclicError::ColorOverflow { arc: a, needed: c + 1 });
        }
        colors[a] = c;
    }
    for a in 0..arcs.len() {
        for b in a + 1..arcs.len() {
            if colors[a] == colors[b] && !well_separated(&arcs[a], &arcs[b]) {
                return Err(CyclicError::NotSeparated { a, b });
            }
        }
    }
    let n_colors = colors.iter().map(|&c| c + 1).max().unwrap_or(0);
    Ok(ArcColoring { colors, n_colors })
}

/// Positive row factors `α` with `α_j M_{j,s} ≤ α_k M_{k,s}` for every `s ∈ S_j` and every row `k`.
///
/// Rows are processed in matrix order; `parts[j]` lists the columns of `S_j`. With `check_pre` the
/// positivity and cross-ratio preconditions are checked first and a witness is returned on failure.
pub fn rescale_rows(m: &DMatrix<f64>, parts: &[Vec<usize>], check_pre: bool) -> Result<Vec<f64>, CyclicError> {
    let rows = m.nrows();
    assert_eq!(parts.len(), rows, "one column part per row");
    if check_pre {
        check_rescale_pre(m, parts)?;
    }
    let mut alpha = vec![0.0; rows];
    if rows == 0 {
        return Ok(alpha);
    }
    alpha[0] = 1.0;
    for j in 1..rows {
        let own = &parts[j];
        let a = if own.iter().all(|&s| m[(j, s)] == 0.0) {
            let mut a = 0.0f64;
            for i in 0..j {
                for &s in &parts[i] {
                    if m[(j, s)] > 0.0 {
                        a = a.max(alpha[i] * m[(i, s)] / m[(j, s)]);
                    }
                }
            }
            if a > 0.0 {
                a
            } else {
                1.0
            }
        } else {
            let mut a = f64::INFINITY;
            let mut witness = (j, j);
            for &s in own {
                if m[(j, s)] > 0.0 {
                    for k in 0..j {
                        let c = alpha[k] * m[(k, s)] / m[(j, s)];
                        if c < a {
                            a = c;
                            witness = (k, s);
                        }
                    }
                }
            }
            if !(a > 0.0 && a.is_finite()) {
                return Err(CyclicError::PreconditionViolated { j, k: witness.0, s: witness.1, t: witness.1 });
            }
            a
        };
        alpha[j] = a;
    }
    check_rescale_post(m, parts, &alpha)?;
    Ok(alpha)
}

fn check_rescale_pre(m: &DMatrix<f64>, parts: &[Vec<usize>]) -> Result<(), CyclicError> {
    let rows = m.nrows();
    let mut owner = vec![usize::MAX; m.ncols()];
    for (j, p) in parts.iter().enumerate() {
        for &s in p {
            owner[s] = j;
        }
    }
    for j in 0..rows {
        for s in 0..m.ncols() {
            if owner[s] != j && !(m[(j, s)] > 0.0) {
                return Err(CyclicError::PreconditionViolated { j, k: j, s, t: s });
            }
        }
    }
    for j in 0..rows {
        for k in 0..j {
            for &s in &parts[j] {
                for part in &parts[..j] {
                    for &t in part {
                        let lhs = m[(j, s)] * m[(k, t)];
                        let rhs = m[(j, t)] * m[(k, s)];
                        if lhs > rhs * (1.0 + RESCALE_TOL) {
                            return Err(CyclicError::PreconditionViolated { j, k, s, t });
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

/// Exhaustive check of the rescaling inequalities.
pub fn check_rescale_post(m: &DMatrix<f64>, parts: &[Vec<usize>], alpha: &[f64]) -> Result<(), CyclicError> {
    for (j, part) in parts.iter().enumerate() {
        if !(alpha[j] > 0.0 && alpha[j].is_finite()) {
            return Err(CyclicError::RescaleViolated { j, k: j, s: 0, lhs: alpha[j], rhs: 0.0 });
        }
        for &s in part {
            let lhs = alpha[j] * m[(j, s)];
            for k in 0..m.nrows() {
                let rhs = alpha[k] * m[(k, s)];
                if lhs > rhs * (1.0 + RESCALE_TOL) {
                    return Err(CyclicError::RescaleViolated { j, k, s, lhs, rhs });
                }
            }
        }
    }
    Ok(())
}

/// Both sides of `M_vf M_wg ≤ M_vg M_wf` and the distance-ratio identity for each facet.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CircleCheck {
    pub holds: bool,
    pub lhs: f64,
    pub rhs: f64,
    /// `(M_vf / M_wf, (d(v,z_f) / d(w,z_f))²)`
    pub ratio_f: (f64, f64),
    /// `(M_vg / M_wg, (d(v,z_g) / d(w,z_g))²)`
    pub ratio_g: (f64, f64),
    pub z_f: [f64; 2],
    pub z_g: [f64; 2],
    pub ratio_ok: bool,
}

/// Unclamped slack; it keeps the exact rank-three structure that clamping would perturb.
fn raw_entry(p: &Polytope, v: usize, f: usize) -> f64 {
    if p.facets[f].incident.contains(&v) {
        0.0
    } else {
        p.facets[f].plane.slack(&p.vertices[v])
    }
}

fn slack_entry(p: &Polytope, v: usize, f: usize) -> f64 {
    if p.facets[f].incident.contains(&v) {
        0.0
    } else {
        p.slack(v, f)
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs())
}

fn vertex_angle(p: &Polytope, v: usize) -> f64 {
    p.vertices[v][1].atan2(p.vertices[v][0])
}

/// Distance from the point at angle `t` on the unit circle to the chord between angles `a` and `b`,
/// in a form that keeps full relative accuracy near the chord.
fn chord_distance(t: f64, a: f64, b: f64) -> f64 {
    2.0 * ((t - a) / 2.0).sin().abs() * ((t - b) / 2.0).sin().abs()
}

/// Point of the facet's sub-arc whose tangent passes through the intersection of line `vw`
/// with the facet line.
fn tangent_point(p: &Polytope, v: usize, w: usize, f: usize) -> [f64; 2] {
    let (pv, pw) = (&p.vertices[v], &p.vertices[w]);
    let inc = &p.facets[f].incident;
    let (a, b) = (&p.vertices[inc[0]], &p.vertices[inc[1]]);
    let mid = {
        let (x, y) = (a[0] + b[0], a[1] + b[1]);
        let r = x.hypot(y);
        [x / r, y / r]
    };
    let (ta, tb) = (vertex_angle(p, inc[0]), vertex_angle(p, inc[1]));
    let mv = chord_distance(vertex_angle(p, v), ta, tb);
    let mw = chord_distance(vertex_angle(p, w), ta, tb);
    if mv == mw {
        return mid;
    }
    if mv == 0.0 {
        return [pv[0], pv[1]];
    }
    if mw == 0.0 {
        return [pw[0], pw[1]];
    }
    // q = v + t(w − v) = w + s(v − w), measured from the nearer of v and w.
    let t = mv / (mv - mw);
    let s = mw / (mw - mv);
    let q = if t.abs() <= s.abs() {
        [pv[0] + t * (pw[0] - pv[0]), pv[1] + t * (pw[1] - pv[1])]
    } else {
        [pw[0] + s * (pv[0] - pw[0]), pw[1] + s * (pv[1] - pw[1])]
    };
    let q2 = q[0] * q[0] + q[1] * q[1];
    // Power of q with respect to the circle, from the secant through v and w.
    let vw2 = (pw[0] - pv[0]).powi(2) + (pw[1] - pv[1]).powi(2);
    let power = (-t * s).max(0.0) * vw2;
    let h = power.sqrt() / q2;
    let base = [q[0] / q2, q[1] / q2];
    let perp = [-q[1], q[0]];
    let z1 = [base[0] + h * perp[0], base[1] + h * perp[1]];
    let z2 = [base[0] - h * perp[0], base[1] - h * perp[1]];
    let d = |z: &[f64; 2]| z[0] * mid[0] + z[1] * mid[1];
    if d(&z1) >= d(&z2) {
        z1
    } else {
        z2
    }
}

fn dist(a: &[f64], b: &[f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Evaluates the circle slack inequality for vertices `v`, `w` and facets `f`, `g`, where `v` and
/// `f` lie on `x` and `w`, `g` lie at arc-distance at least `5·len(x)` from it.
pub fn circle_slack_inequality(
    p: &Polytope,
    v: usize,
    w: usize,
    f: usize,
    g: usize,
    x: &Arc,
) -> Result<CircleCheck, CyclicError> {
    let angle = |i: usize| p.vertices[i][1].atan2(p.vertices[i][0]).rem_euclid(TAU);
    let near: Vec<usize> = std::iter::once(v).chain(p.facets[f].incident.iter().cloned()).collect();
    for &i in &near {
        if !x.contains(angle(i)) {
            return Err(CyclicError::CirclePrecondition(format!("vertex {i} is not on the arc")));
        }
    }
    let far: Vec<usize> = std::iter::once(w).chain(p.facets[g].incident.iter().cloned()).collect();
    for &i in &far {
        if x.distance_to(angle(i)) < 5.0 * x.length - 1e-12 {
            return Err(CyclicError::CirclePrecondition(format!("vertex {i} is closer than 5·len to the arc")));
        }
    }
    let (mvf, mwg, mvg, mwf) = (slack_entry(p, v, f), slack_entry(p, w, g), slack_entry(p, v, g), slack_entry(p, w, f));
    let lhs = mvf * mwg;
    let rhs = mvg * mwf;
    let z_f = tangent_point(p, v, w, f);
    let z_g = tangent_point(p, v, w, g);
    let (pv, pw) = (&p.vertices[v], &p.vertices[w]);
    let (dvf, dwf, dvg, dwg) = (dist(pv, &z_f), dist(pw, &z_f), dist(pv, &z_g), dist(pw, &z_g));
    let line = |u: usize, h: usize| {
        let inc = &p.facets[h].incident;
        chord_distance(vertex_angle(p, u), vertex_angle(p, inc[0]), vertex_angle(p, inc[1]))
    };
    let (lvf, lwf, lvg, lwg) = (line(v, f), line(w, f), line(v, g), line(w, g));
    let ratio_f = (lvf / lwf, (dvf / dwf).powi(2));
    let ratio_g = (lvg / lwg, (dvg / dwg).powi(2));
    // Compared cross-multiplied so that a vertex on the facet line is handled too.
    let ratio_ok = rel_close(lvf * dwf * dwf, lwf * dvf * dvf, RATIO_TOL) && rel_close(lvg * dwg * dwg, lwg * dvg * dvg, RATIO_TOL);
    Ok(CircleCheck { holds: lhs <= rhs * (1.0 + RESCALE_TOL), lhs, rhs, ratio_f, ratio_g, z_f, z_g, ratio_ok })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CyclicConfig {
    pub seed: u64,
    pub restarts: usize,
    /// Restart multiplier for the single retry of a block that missed the rank target.
    pub retry_factor: usize,
    pub nmf_tol: f64,
    pub verify_tol: f64,
    pub max_block_rank: usize,
}

impl Default for CyclicConfig {
    fn default() -> Self {
        CyclicConfig { seed: 0, restarts: 32, retry_factor: 4, nmf_tol: 1e-6, verify_tol: 1e-6, max_block_rank: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColorReport {
    pub color: usize,
    pub arcs: usize,
    /// Number of t-vectors, the largest vertex count of an arc in the class.
    pub labels: usize,
    pub block_factors: usize,
    /// `8|X_c| + ⌈√n⌉ + 1`
    pub bound: usize,
    pub rescale_checks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockReport {
    pub color: usize,
    pub arc: usize,
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
    pub r: usize,
    pub method: NmfMethod,
    pub rel_err: f64,
    pub retried: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CyclicReport {
    pub n: usize,
    pub trivial: bool,
    pub arcs: usize,
    pub colors: usize,
    pub color_reports: Vec<ColorReport>,
    pub blocks: Vec<BlockReport>,
    pub blocks_total: usize,
    /// Blocks whose first search missed the rank target.
    pub rank_target_missed: usize,
    /// Of those, blocks that succeeded on the retry.
    pub retried_ok: usize,
    /// Smallest `K` entry before clamping, in units of `M`.
    pub min_k_entry: f64,
    pub r_total: usize,
    pub bound_24: f64,
    pub bound_22: f64,
    pub verify: VerifyReport,
}

struct Job {
    color: usize,
    arc: usize,
}

struct ClassData {
    label: Vec<usize>,
    alpha: Vec<f64>,
}

/// Nonnegative factorization of the slack matrix of a cyclic polygon with at most `24√n` factors.
pub fn xc_factorize_cyclic(p: &Polytope, cfg: &CyclicConfig) -> Result<(NonnegFactorization, CyclicReport), CyclicError> {
    let angles = vertex_angles(p)?;
    let n = angles.len();
    let root = (n as f64).sqrt();
    let mut report = CyclicReport {
        n,
        trivial: n < TRIVIAL_BELOW,
        arcs: 0,
        colors: 0,
        color_reports: vec![],
        blocks: vec![],
        blocks_total: 0,
        rank_target_missed: 0,
        retried_ok: 0,
        min_k_entry: 0.0,
        r_total: 0,
        bound_24: 24.0 * root,
        bound_22: 22.0 * root + 36.0,
        verify: VerifyReport { max_abs_err: 0.0, rel_err: 0.0, r: 0, min_entry: 0.0, pass: false },
    };
    let mut fact = NonnegFactorization::empty(n, n);
    if n < TRIVIAL_BELOW {
        let mut t = vec![0.0; n * n];
        for i in 0..n {
            t[i * n + i] = 1.0;
        }
        let u: Vec<f64> = (0..n).flat_map(|i| (0..n).map(move |f| (i, f))).map(|(i, f)| slack_entry(p, i, f)).collect();
        fact.push(FactorBlock {
            rows: Shared::new((0..n).collect()),
            cols: (0..n).collect(),
            t,
            u,
            tags: (0..n).map(|row| Provenance::Identity { row }).collect(),
        });
    } else {
        build_blocks(p, &angles, cfg, &mut fact, &mut report)?;
    }
    let verify = verify_factorization(&PolytopeSlack { polytope: p }, &fact, cfg.verify_tol)
        .map_err(|e| CyclicError::NotCyclic(e.to_string()))?;
    report.r_total = fact.r();
    report.verify = verify;
    if !verify.pass {
        return Err(CyclicError::Verification { rel_err: verify.rel_err, min_entry: verify.min_entry });
    }
    Ok((fact, report))
}

fn build_blocks(
    p: &Polytope,
    angles: &[f64],
    cfg: &CyclicConfig,
    fact: &mut NonnegFactorization,
    report: &mut CyclicReport,
) -> Result<(), CyclicError> {
    let n = angles.len();
    let arcs = arcs_from_angles(angles);
    let coloring = color_arcs(&arcs)?;
    report.arcs = arcs.len();
    report.colors = coloring.n_colors;
    let sq = ceil_sqrt(n);

    let mut classes = Vec::with_capacity(coloring.n_colors);
    let mut jobs = Vec::new();
    for c in 0..coloring.n_colors {
        let mut xs = coloring.class(c);
        xs.sort_by(|&a, &b| arcs[b].length.total_cmp(&arcs[a].length).then(a.cmp(&b)));
        let mut label = vec![0usize; n];
        for &a in &xs {
            for (i, &v) in arcs[a].vertices.iter().enumerate() {
                label[v] = i + 1;
            }
        }
        let labels = xs.iter().map(|&a| arcs[a].vertices.len()).max().unwrap_or(0);
        let mut alpha = vec![1.0; n];
        let cols_c: Vec<usize> = xs.iter().flat_map(|&a| arcs[a].facets.iter().cloned()).collect();
        let mut col_pos = vec![usize::MAX; n];
        for (jj, &f) in cols_c.iter().enumerate() {
            col_pos[f] = jj;
        }
        let mut u = vec![0.0; labels * cols_c.len()];
        let mut checks = 0;
        for i in 1..=labels {
            let members: Vec<usize> = xs.iter().cloned().filter(|&a| arcs[a].vertices.len() >= i).collect();
            let rows: Vec<usize> = members.iter().map(|&a| arcs[a].vertices[i - 1]).collect();
            let cols: Vec<usize> = members.iter().flat_map(|&a| arcs[a].facets.iter().cloned()).collect();
            let mut parts = Vec::with_capacity(members.len());
            let mut off = 0;
            for &a in &members {
                parts.push((off..off + arcs[a].facets.len()).collect::<Vec<_>>());
                off += arcs[a].facets.len();
            }
            let m = DMatrix::from_fn(rows.len(), cols.len(), |a, b| raw_entry(p, rows[a], cols[b]));
            let local = rescale_rows(&m, &parts, false)?;
            checks += rows.len() * cols.len();
            for (j, &v) in rows.iter().enumerate() {
                alpha[v] = local[j];
                for &s in &parts[j] {
                    u[(i - 1) * cols_c.len() + col_pos[cols[s]]] = local[j] * m[(j, s)];
                }
            }
        }
        let rows_c: Vec<usize> = (0..n).filter(|&v| label[v] > 0).collect();
        let mut t = vec![0.0; rows_c.len() * labels];
        for (ii, &v) in rows_c.iter().enumerate() {
            t[ii * labels + label[v] - 1] = 1.0 / alpha[v];
        }
        fact.push(FactorBlock {
            rows: Shared::new(rows_c),
            cols: cols_c,
            t,
            u,
            tags: (1..=labels).map(|label| Provenance::TVector { color: c, label }).collect(),
        });
        report.color_reports.push(ColorReport {
            color: c,
            arcs: xs.len(),
            labels,
            block_factors: 0,
            bound: 8 * xs.len() + sq + 1,
            rescale_checks: checks,
        });
        jobs.extend(xs.iter().map(|&a| Job { color: c, arc: a }));
        classes.push(ClassData { label, alpha });
    }

    let results = crate::par_map(&jobs, |job| factor_arc_block(p, &arcs, &classes[job.color], job, cfg));
    report.min_k_entry = f64::INFINITY;
    for (job, res) in jobs.iter().zip(results) {
        let (block, br, min_k) = res?;
        report.min_k_entry = report.min_k_entry.min(min_k);
        report.blocks_total += 1;
        if br.retried {
            report.rank_target_missed += 1;
            report.retried_ok += 1;
        }
        report.color_reports[job.color].block_factors += br.r;
        report.blocks.push(br);
        fact.push(block);
    }
    Ok(())
}

fn factor_arc_block(
    p: &Polytope,
    arcs: &[Arc],
    class: &ClassData,
    job: &Job,
    cfg: &CyclicConfig,
) -> Result<(FactorBlock, BlockReport, f64), CyclicError> {
    let n = p.n_vertices();
    let x = &arcs[job.arc];
    let mut inside = vec![false; n];
    for &v in &x.vertices {
        inside[v] = true;
    }
    let rows: Vec<usize> = (0..n).filter(|&v| !inside[v]).collect();
    let cols = &x.facets;
    let mut min_k = f64::INFINITY;
    let mut k = DMatrix::zeros(rows.len(), cols.len());
    for (ii, &v) in rows.iter().enumerate() {
        let lab = class.label[v];
        let a_v = if lab > 0 { class.alpha[v] } else { 1.0 };
        let sub = (lab > 0 && lab <= x.vertices.len()).then(|| x.vertices[lab - 1]);
        for (jj, &f) in cols.iter().enumerate() {
            // Row v of K divided by α_v, which has the same nonnegative rank.
            let mut val = raw_entry(p, v, f);
            if let Some(w) = sub {
                val -= class.alpha[w] / a_v * raw_entry(p, w, f);
            }
            min_k = min_k.min(val);
            if val < -TOL_GEOM {
                return Err(CyclicError::NegativeK { vertex: v, facet: f, value: val });
            }
            k[(ii, jj)] = val.max(0.0);
        }
    }
    let seed = substream(cfg.seed, "cyclic-block", job.arc as u64).random::<u64>();
    let mut opts = NmfOptions {
        max_rank: cfg.max_block_rank,
        restarts: cfg.restarts,
        tol: cfg.nmf_tol,
        minimize: false,
        seed,
        ..NmfOptions::default()
    };
    let (res, retried) = match block_factorize(&k, &opts) {
        Ok(r) => (r, false),
        Err(NmfError::RankTargetMissed { .. }) => {
            opts.restarts *= cfg.retry_factor.max(1);
            let r = block_factorize(&k, &opts).map_err(|cause| CyclicError::RankTargetMissed {
                color: job.color,
                arc: job.arc,
                cause,
            })?;
            (r, true)
        }
        Err(cause) => return Err(CyclicError::RankTargetMissed { color: job.color, arc: job.arc, cause }),
    };
    let r = res.r();
    let mut t = vec![0.0; rows.len() * r];
    for ii in 0..rows.len() {
        for l in 0..r {
            t[ii * r + l] = res.t[(ii, l)];
        }
    }
    let mut u = vec![0.0; r * cols.len()];
    for l in 0..r {
        for jj in 0..cols.len() {
            u[l * cols.len() + jj] = res.u[(l, jj)];
        }
    }
    let br = BlockReport {
        color: job.color,
        arc: job.arc,
        rows: rows.len(),
        cols: cols.len(),
        rank: res.rank,
        r,
        method: res.method,
        rel_err: res.rel_err,
        retried,
    };
    let block = FactorBlock {
        rows: Shared::new(rows),
        cols: cols.clone(),
        t,
        u,
        tags: (0..r).map(|index| Provenance::ArcBlock { color: job.color, arc: job.arc, index }).collect(),
    };
    Ok((block, br, if min_k.is_finite() { min_k } else { 0.0 }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use proptest::prelude::*;
    use rand::Rng;

    fn regular(n: usize) -> Vec<f64> {
        (0..n).map(|i| TAU * i as f64 / n as f64).collect()
    }

    #[test]
    fn square_and_errors() {
        let p = make_cyclic_polygon(&regular(4)).unwrap();
        p.check().unwrap();
        assert!((p.vertices[1][1] - 1.0).abs() < 1e-15);
        assert_eq!(make_cyclic_polygon(&[0.0, 1.0, 1.0]).unwrap_err(), CyclicError::NotSorted(2));
        assert_eq!(make_cyclic_polygon(&[0.0, 1.0]).unwrap_err(), CyclicError::TooFew(2));
    }

    #[test]
    fn random_576_gon_is_valid() {
        let a = uniform_angles(576, &mut substream(3, "t", 0));
        let p = make_cyclic_polygon(&a).unwrap();
        p.check().unwrap();
        assert_eq!(vertex_angles(&p).unwrap().len(), 576);
    }

    #[test]
    fn block_sizes() {
        let sizes = |n| arc_blocks(&make_cyclic_polygon(&regular(n)).unwrap()).unwrap().iter().map(|a| a.facets.len()).collect::<Vec<_>>();
        assert_eq!(sizes(9), vec![3, 3, 3]);
        assert_eq!(sizes(10), vec![3, 3, 2, 2]);
        for n in [3, 17, 100, 577, 1000] {
            let arcs = arc_blocks(&make_cyclic_polygon(&regular(n)).unwrap()).unwrap();
            let r = ceil_sqrt(n);
            assert!(arcs.len() <= r);
            let mut seen = vec![0; n];
            for a in &arcs {
                assert!(a.facets.len() <= r && a.vertices.len() <= r + 1);
                a.facets.iter().for_each(|&f| seen[f] += 1);
            }
            assert!(seen.iter().all(|&c| c == 1));
        }
    }

    #[test]
    fn arc_geometry() {
        let arcs = arcs_from_angles(&regular(16));
        assert_eq!(arcs.len(), 4);
        assert_eq!(arc_distance(&arcs[0], &arcs[1]), 0.0);
        assert!((arc_distance(&arcs[0], &arcs[2]) - PI / 2.0).abs() < 1e-12);
        assert!((arcs[3].end - arcs[0].start).abs() < 1e-15);
        assert_eq!(arc_distance(&arcs[3], &arcs[0]), 0.0);
        assert!(arcs[1].contains(PI * 0.75));
        assert!((arcs[1].distance_to(PI * 1.25) - PI / 4.0).abs() < 1e-12);
    }

    #[test]
    fn coloring_of_separated_and_uniform_arcs() {
        let mk = |id, start: f64, length| Arc { id, start, end: (start + length) % TAU, length, vertices: vec![], facets: vec![] };
        let far = vec![mk(0, 0.0, 0.1), mk(1, 1.0, 0.1), mk(2, 2.0, 0.1), mk(3, 4.0, 0.1)];
        assert_eq!(color_arcs(&far).unwrap().n_colors, 1);
        // 32 equal arcs: an arc conflicts with the 5 arcs on each side.
        let arcs = arcs_from_angles(&regular(1024));
        let c = color_arcs(&arcs).unwrap();
        assert!((6..=MAX_COLORS).contains(&c.n_colors), "{}", c.n_colors);
    }

    #[test]
    fn rescale_trivial_and_zero_row() {
        let m = DMatrix::from_row_slice(1, 3, &[0.5, 1.0, 2.0]);
        assert_eq!(rescale_rows(&m, &[vec![0, 1, 2]], true).unwrap(), vec![1.0]);
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let alpha = rescale_rows(&m, &[vec![0], vec![1]], true).unwrap();
        assert_eq!(alpha[0], 1.0);
        assert!(alpha[1] > 0.0);
        check_rescale_post(&m, &[vec![0], vec![1]], &alpha).unwrap();
    }

    #[test]
    fn rescale_reports_violations() {
        // Row 1 is not positive outside its own part.
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(matches!(rescale_rows(&m, &[vec![0], vec![1]], true), Err(CyclicError::PreconditionViolated { .. })));
        // Cross ratio fails: M_{1,1} M_{0,0} > M_{1,0} M_{0,1}.
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 4.0]);
        assert_eq!(
            rescale_rows(&m, &[vec![0], vec![1]], true),
            Err(CyclicError::PreconditionViolated { j: 1, k: 0, s: 1, t: 0 })
        );
    }

    /// Log-bilinear instance: `M_{j,s} = exp(x_j y_s)` with `x` increasing and `y` decreasing
    /// across the parts satisfies the cross-ratio precondition.
    fn planted(rows: usize, cols: usize, seed: u64) -> (DMatrix<f64>, Vec<Vec<usize>>) {
        let mut rng = substream(seed, "planted", 0);
        let mut x: Vec<f64> = (0..rows).map(|_| rng.random_range(-1.0..1.0)).collect();
        x.sort_by(f64::total_cmp);
        let mut y: Vec<f64> = (0..cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        y.sort_by(|a, b| b.total_cmp(a));
        let mut cuts: Vec<usize> = (0..rows - 1).map(|_| rng.random_range(1..cols)).collect();
        cuts.sort_unstable();
        let mut bounds = vec![0];
        bounds.extend(cuts);
        bounds.push(cols);
        let parts: Vec<Vec<usize>> = (0..rows).map(|j| (bounds[j]..bounds[j + 1]).collect()).collect();
        let mut m = DMatrix::from_fn(rows, cols, |j, s| (x[j] * y[s]).exp());
        for (j, p) in parts.iter().enumerate() {
            for &s in p {
                if rng.random_bool(0.2) {
                    m[(j, s)] = 0.0;
                }
            }
        }
        (m, parts)
    }

    #[test]
    fn rescale_planted_5x12() {
        for seed in 0..20 {
            let (m, parts) = planted(5, 12, seed);
            let alpha = rescale_rows(&m, &parts, true).unwrap();
            for (j, p) in parts.iter().enumerate() {
                for &s in p {
                    for k in 0..5 {
                        assert!(alpha[j] * m[(j, s)] <= alpha[k] * m[(k, s)] * (1.0 + 1e-12));
                    }
                }
            }
        }
    }

    #[test]
    fn circle_endpoint_case() {
        // v is an endpoint of f: the left side vanishes.
        let a = [0.0, 0.05, 0.1, 2.0, 2.1, 3.0];
        let p = make_cyclic_polygon(&a).unwrap();
        let x = Arc { id: 0, start: 0.0, end: 0.1, length: 0.1, vertices: vec![0, 1, 2], facets: vec![0, 1] };
        let c = circle_slack_inequality(&p, 0, 3, 0, 3, &x).unwrap();
        assert_eq!(c.lhs, 0.0);
        assert!(c.holds && c.rhs > 0.0 && c.ratio_ok);
        assert!(matches!(circle_slack_inequality(&p, 0, 1, 0, 3, &x), Err(CyclicError::CirclePrecondition(_))));
    }

    #[test]
    fn circle_mirror_configuration() {
        // Reflection across the y-axis swaps (v, f) with (w, g).
        let a = [0.3, 0.35, 0.4, PI - 0.4, PI - 0.35, PI - 0.3];
        let p = make_cyclic_polygon(&a).unwrap();
        let x = Arc { id: 0, start: 0.3, end: 0.4, length: 0.1, vertices: vec![0, 1, 2], facets: vec![0, 1] };
        let (v, f, w, g) = (0, 1, 5, 3);
        let c = circle_slack_inequality(&p, v, w, f, g, &x).unwrap();
        assert!(c.holds && c.ratio_ok);
        let s = |i, j| slack_entry(&p, i, j);
        assert!((s(v, f) - s(w, g)).abs() < 1e-12 && (s(v, g) - s(w, f)).abs() < 1e-12);
    }

    #[test]
    fn small_n_is_trivial() {
        let p = make_cyclic_polygon(&regular(4)).unwrap();
        let (f, rep) = xc_factorize_cyclic(&p, &CyclicConfig::default()).unwrap();
        assert!(rep.trivial);
        assert_eq!(f.r(), 4);
        assert!(rep.verify.pass);
    }

    #[test]
    fn uniform_576() {
        let a = uniform_angles(576, &mut substream(1, "angles", 0));
        let p = make_cyclic_polygon(&a).unwrap();
        let (f, rep) = xc_factorize_cyclic(&p, &CyclicConfig::default()).unwrap();
        assert!(!rep.trivial);
        assert!(rep.r_total <= 564, "r = {}", rep.r_total);
        assert!(rep.verify.rel_err <= 1e-6);
        assert_eq!(f.r(), rep.r_total);
        assert!(rep.min_k_entry >= -TOL_GEOM);
        for c in &rep.color_reports {
            assert!(c.labels + c.block_factors <= c.bound);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn planted_instances_rescale(rows in 1usize..7, extra in 0usize..10, seed in 0u64..1000) {
            let (m, parts) = planted(rows, rows + extra, seed);
            let alpha = rescale_rows(&m, &parts, true).unwrap();
            prop_assert!(alpha.iter().all(|&a| a > 0.0));
        }

        #[test]
        fn colorings_are_separated(n in 3usize..3000, seed in 0u64..100) {
            let a = uniform_angles(n, &mut substream(seed, "c", n as u64));
            let arcs = arcs_from_angles(&a);
            let c = color_arcs(&arcs).unwrap();
            prop_assert!(c.n_colors <= MAX_COLORS);
            for i in 0..arcs.len() {
                for j in i + 1..arcs.len() {
                    if c.colors[i] == c.colors[j] {
                        prop_assert!(well_separated(&arcs[i], &arcs[j]));
                    }
                }
            }
        }
    }
}
