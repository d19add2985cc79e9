//! Instance generators shared by the integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use std::f64::consts::TAU;
use xcforge::cyclic::{make_cyclic_polygon, Arc};
use xcforge::Polytope;

/// Smallest angular gap between distinct vertices of a sampled configuration.
pub const MIN_GAP: f64 = 1e-6;

/// A polygon with vertices `v`, `w` and facets `f`, `g` such that `v` and `f` lie on `arc` and
/// `w`, `g` lie at arc-distance at least `5·len(arc)` from it. Distinct vertices are at least
/// [`MIN_GAP`] apart.
pub struct CircleConfig {
    pub polygon: Polytope,
    pub v: usize,
    pub w: usize,
    pub f: usize,
    pub g: usize,
    pub arc: Arc,
}

/// Two sorted points of `[lo, hi)` and a third point outside the open interval between them.
fn chord_and_vertex<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> Option<(f64, f64, f64)> {
    let mut a = rng.random_range(lo..hi);
    let mut b = rng.random_range(lo..hi);
    if a > b {
        std::mem::swap(&mut a, &mut b);
    }
    if b - a < 1e-7 * (hi - lo) || a - lo < 1e-9 || hi - b < 1e-9 {
        return None;
    }
    let v = match rng.random_range(0..4) {
        0 => a,
        1 => b,
        2 => rng.random_range(lo..a),
        _ => rng.random_range(b..hi),
    };
    Some((a, b, v))
}

pub fn circle_configuration<R: Rng>(rng: &mut R) -> CircleConfig {
    loop {
        let len = rng.random_range(0.002..0.5);
        let start = rng.random_range(0.0..TAU);
        let Some((a, b, v)) = chord_and_vertex(rng, 0.0, len) else { continue };
        let Some((c, d, w)) = chord_and_vertex(rng, 6.0 * len, TAU - 5.0 * len) else { continue };
        let mut rel = vec![a, b, v, c, d, w];
        rel.sort_by(f64::total_cmp);
        rel.dedup();
        // Nearly coincident vertices make the rounded coordinates, not the geometry, dominate.
        if rel.windows(2).any(|p| p[1] - p[0] < MIN_GAP) {
            continue;
        }
        let abs = |x: f64| (start + x) % TAU;
        let mut angles: Vec<f64> = rel.iter().map(|&x| abs(x)).collect();
        angles.sort_by(f64::total_cmp);
        let Ok(polygon) = make_cyclic_polygon(&angles) else { continue };
        let idx = |x: f64| angles.iter().position(|&t| t == abs(x)).unwrap();
        let near: Vec<usize> = rel.iter().filter(|&&x| x <= len).map(|&x| idx(x)).collect();
        let arc = Arc {
            id: 0,
            start,
            end: abs(len),
            length: len,
            vertices: near,
            facets: vec![idx(a)],
        };
        return CircleConfig { polygon, v: idx(v), w: idx(w), f: idx(a), g: idx(c), arc };
    }
}

/// Rescaling instance `M_{j,s} = exp(x_j y_s)` with `x` increasing and `y` decreasing across the
/// parts, so `M_{j,s} M_{k,t} ≤ M_{j,t} M_{k,s}` for `k < j`, `s ∈ S_j`, `t` in an earlier part.
/// Some entries inside a row's own part are zeroed, occasionally the whole part.
pub fn rescale_instance<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> (DMatrix<f64>, Vec<Vec<usize>>) {
    let mut x: Vec<f64> = (0..rows).map(|_| rng.random_range(-2.0..2.0)).collect();
    x.sort_by(f64::total_cmp);
    let mut y: Vec<f64> = (0..cols).map(|_| rng.random_range(-2.0..2.0)).collect();
    y.sort_by(|a, b| b.total_cmp(a));
    let mut cuts: Vec<usize> = (0..rows.saturating_sub(1)).map(|_| rng.random_range(0..=cols)).collect();
    cuts.sort_unstable();
    let mut bounds = vec![0];
    bounds.extend(cuts);
    bounds.push(cols);
    let parts: Vec<Vec<usize>> = (0..rows).map(|j| (bounds[j]..bounds[j + 1]).collect()).collect();
    let mut m = DMatrix::from_fn(rows, cols, |j, s| (x[j] * y[s]).exp());
    for (j, p) in parts.iter().enumerate() {
        let wipe = rng.random_bool(0.1);
        for &s in p {
            if wipe || rng.random_bool(0.2) {
                m[(j, s)] = 0.0;
            }
        }
    }
    (m, parts)
}
