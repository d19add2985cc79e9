//! Bounded-rank nonnegative factorization of small nonnegative blocks.
//!
//! Blocks of rank at most three are handled geometrically: after scaling rows to sum one, the rows
//! are points in a plane section of the simplex, and any polygon nested between their convex hull
//! and the section gives a factorization with one factor per polygon vertex. The polygon is built
//! by the greedy tangent walk. Smaller ranks, and blocks of higher rank, are searched with
//! alternating nonnegative least squares from seeded random starts.

use crate::predicates::orient2d;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::cmp::Ordering;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NmfError {
    #[error("no factorization of rank ≤ {max_rank} found (best relative error {best_error:e} at rank {best_rank})")]
    RankTargetMissed { max_rank: usize, best_rank: usize, best_error: f64 },
    #[error("input has a negative or non-finite entry at ({0}, {1})")]
    BadEntry(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NmfOptions {
    pub max_rank: usize,
    pub restarts: usize,
    /// Accept when `max|K − TU| ≤ tol · max|K|`.
    pub tol: f64,
    /// Search ranks below the geometric certificate as well.
    pub minimize: bool,
    pub seed: u64,
    pub max_iter: usize,
}

impl Default for NmfOptions {
    fn default() -> Self {
        NmfOptions { max_rank: 8, restarts: 32, tol: 1e-6, minimize: true, seed: 0, max_iter: 3000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NmfMethod {
    Zero,
    Geometric,
    Anls,
}

#[derive(Debug, Clone)]
pub struct NmfResult {
    pub t: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub rel_err: f64,
    pub method: NmfMethod,
    /// Numerical rank of the input.
    pub rank: usize,
}

impl NmfResult {
    pub fn r(&self) -> usize {
        self.t.ncols()
    }
}

/// `max|K − TU| / max|K|` (0 for the zero matrix with an exact factorization).
pub fn relative_error(k: &DMatrix<f64>, t: &DMatrix<f64>, u: &DMatrix<f64>) -> f64 {
    let kmax = k.amax();
    let err = if t.ncols() == 0 { kmax } else { (k - t * u).amax() };
    if kmax == 0.0 {
        err
    } else {
        err / kmax
    }
}

/// Factorization with at most eight factors, searching ranks upward.
pub fn block_factorize_rank8(k: &DMatrix<f64>) -> Result<NmfResult, NmfError> {
    block_factorize(k, &NmfOptions::default())
}

pub fn block_factorize(k: &DMatrix<f64>, opts: &NmfOptions) -> Result<NmfResult, NmfError> {
    let (n, m) = k.shape();
    for j in 0..m {
        for i in 0..n {
            let v = k[(i, j)];
            if !(v >= 0.0 && v.is_finite()) {
                return Err(NmfError::BadEntry(i, j));
            }
        }
    }
    let rows: Vec<usize> = (0..n).filter(|&i| k.row(i).iter().any(|&v| v > 0.0)).collect();
    let cols: Vec<usize> = (0..m).filter(|&j| k.column(j).iter().any(|&v| v > 0.0)).collect();
    if rows.is_empty() {
        return Ok(NmfResult { t: DMatrix::zeros(n, 0), u: DMatrix::zeros(0, m), rel_err: 0.0, method: NmfMethod::Zero, rank: 0 });
    }
    let sub = DMatrix::from_fn(rows.len(), cols.len(), |i, j| k[(rows[i], cols[j])]);
    let scale = sub.amax();
    let sub = sub / scale;
    let (svals, basis) = right_singular(&sub);
    let rank = numerical_rank(&svals);
    let embed = |t: &DMatrix<f64>, u: &DMatrix<f64>| {
        let r = t.ncols();
        let mut tt = DMatrix::zeros(n, r);
        let mut uu = DMatrix::zeros(r, m);
        for (a, &i) in rows.iter().enumerate() {
            for l in 0..r {
                tt[(i, l)] = t[(a, l)] * scale;
            }
        }
        for (b, &j) in cols.iter().enumerate() {
            for l in 0..r {
                uu[(l, j)] = u[(l, b)];
            }
        }
        (tt, uu)
    };
    let finish = |t: DMatrix<f64>, u: DMatrix<f64>, method| {
        let (t, u) = embed(&t, &u);
        let rel_err = relative_error(k, &t, &u);
        NmfResult { t, u, rel_err, method, rank }
    };

    let geometric = if rank <= 3 { nested_polygon_factorization(&sub, &basis) } else { None };
    let mut best: Option<(DMatrix<f64>, DMatrix<f64>, f64, NmfMethod)> = None;
    if let Some((t, u)) = geometric {
        let e = relative_error(&sub, &t, &u);
        if e <= opts.tol {
            best = Some((t, u, e, NmfMethod::Geometric));
        }
    }
    let geo_r = best.as_ref().map(|b| b.0.ncols());
    let search_hi = match geo_r {
        Some(g) if g <= opts.max_rank && !opts.minimize => 0,
        Some(g) => (g - 1).min(opts.max_rank),
        None => opts.max_rank,
    };
    let mut best_err = (f64::INFINITY, 0);
    let work = extreme_rows(&sub, &basis, rank);
    for r in rank.max(1)..=search_hi {
        let found = anls_search(&sub, &work, r, opts);
        if let Some((t, u, e)) = found {
            if e <= opts.tol {
                return Ok(finish(t, u, NmfMethod::Anls));
            }
            if e < best_err.0 {
                best_err = (e, r);
            }
        }
    }
    match best {
        Some((t, u, _, method)) if t.ncols() <= opts.max_rank => Ok(finish(t, u, method)),
        Some((t, u, e, _)) => Err(NmfError::RankTargetMissed {
            max_rank: opts.max_rank,
            best_rank: t.ncols().min(u.nrows()),
            best_error: if best_err.0 < e { best_err.0 } else { e },
        }),
        None => Err(NmfError::RankTargetMissed { max_rank: opts.max_rank, best_rank: best_err.1, best_error: best_err.0 }),
    }
}

/// Number of singular values above `1e-8` of the largest. Clamped slacks perturb exact low-rank
/// structure at about the geometric tolerance, well below this threshold.
fn numerical_rank(vals: &[f64]) -> usize {
    let top = vals.first().cloned().unwrap_or(0.0);
    vals.iter().filter(|&&v| v > 1e-8 * top).count()
}

/// Singular values (descending) and the matching right singular vectors as columns. Tall inputs
/// are reduced by QR first.
fn right_singular(k: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let small = if k.nrows() > k.ncols() { k.clone().qr().r() } else { k.clone() };
    let svd = small.svd(false, true);
    let vt = svd.v_t.expect("requested");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let vals = idx.iter().map(|&i| svd.singular_values[i]).collect();
    let vecs = DMatrix::from_fn(k.ncols(), idx.len(), |j, c| vt[(idx[c], j)]);
    (vals, vecs)
}

fn normalize_rows(k: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let sums: Vec<f64> = (0..k.nrows()).map(|i| k.row(i).sum()).collect();
    let mut out = k.clone();
    for (i, s) in sums.iter().enumerate() {
        out.row_mut(i).scale_mut(1.0 / s);
    }
    (out, sums)
}

/// Rows that cannot be written as convex combinations of the others after normalization
/// (all rows when the rank exceeds three).
fn extreme_rows(k: &DMatrix<f64>, basis: &DMatrix<f64>, rank: usize) -> Vec<usize> {
    if rank > 3 {
        return (0..k.nrows()).collect();
    }
    match Section::new(k, basis) {
        Some(s) => s.hull.clone(),
        None => (0..k.nrows()).collect(),
    }
}

const SMALL_ROW: f64 = 1e-7;
const MAX_EDGE_STARTS: usize = 128;

/// Plane section `{x = (c0 + E y) B}` of the simplex containing the normalized rows.
struct Section {
    basis: DMatrix<f64>,
    c0: [f64; 3],
    e: [[f64; 3]; 2],
    /// Normalized rows in section coordinates.
    pts: Vec<[f64; 2]>,
    row_sums: Vec<f64>,
    /// Indices of the convex hull of `pts`, counterclockwise.
    hull: Vec<usize>,
    /// Outer constraints `a·y + b ≥ 0`, one per column.
    cons: Vec<([f64; 2], f64)>,
}

impl Section {
    /// `vecs` holds right singular vectors of `k` as columns, largest first.
    fn new(k: &DMatrix<f64>, vecs: &DMatrix<f64>) -> Option<Section> {
        let (kn, row_sums) = normalize_rows(k);
        let c = kn.ncols();
        let dims = vecs.ncols().min(3);
        let mut basis = DMatrix::zeros(3, c);
        for a in 0..dims {
            for j in 0..c {
                basis[(a, j)] = vecs[(j, a)];
            }
        }
        let w: Vec<f64> = (0..3).map(|a| basis.row(a).sum()).collect();
        let ww: f64 = w.iter().map(|x| x * x).sum();
        if ww <= 0.0 {
            return None;
        }
        let c0 = [w[0] / ww, w[1] / ww, w[2] / ww];
        let wn = ww.sqrt();
        let comp = crate::linalg::orthonormal_complement(&[w[0] / wn, w[1] / wn, w[2] / wn]);
        let e = [[comp[0][0], comp[0][1], comp[0][2]], [comp[1][0], comp[1][1], comp[1][2]]];
        let coords = &kn * basis.transpose();
        let pts: Vec<[f64; 2]> = (0..kn.nrows())
            .map(|i| {
                let d = [coords[(i, 0)] - c0[0], coords[(i, 1)] - c0[1], coords[(i, 2)] - c0[2]];
                [dot3(&e[0], &d), dot3(&e[1], &d)]
            })
            .collect();
        let cons = (0..c)
            .map(|j| {
                let col = [basis[(0, j)], basis[(1, j)], basis[(2, j)]];
                ([dot3(&e[0], &col), dot3(&e[1], &col)], dot3(&c0, &col))
            })
            .collect();
        // Rows that are tiny after cancellation carry no reliable direction; they are fitted afterwards.
        let top = row_sums.iter().cloned().fold(0.0, f64::max);
        let keep: Vec<usize> = (0..pts.len()).filter(|&i| row_sums[i] > SMALL_ROW * top).collect();
        let kept: Vec<[f64; 2]> = keep.iter().map(|&i| pts[i]).collect();
        let hull = hull2(&kept).into_iter().map(|i| keep[i]).collect();
        Some(Section { basis, c0, e, pts, row_sums, hull, cons })
    }

    fn lift(&self, y: &[f64; 2]) -> Vec<f64> {
        let c = [
            self.c0[0] + self.e[0][0] * y[0] + self.e[1][0] * y[1],
            self.c0[1] + self.e[0][1] * y[0] + self.e[1][1] * y[1],
            self.c0[2] + self.e[0][2] * y[0] + self.e[1][2] * y[1],
        ];
        (0..self.basis.ncols()).map(|j| (0..3).map(|a| c[a] * self.basis[(a, j)]).sum::<f64>().max(0.0)).collect()
    }

    /// The section polygon, counterclockwise, by clipping a box that contains it.
    fn outer(&self) -> Vec<[f64; 2]> {
        let mut poly = vec![[-2.0, -2.0], [2.0, -2.0], [2.0, 2.0], [-2.0, 2.0]];
        for (a, b) in &self.cons {
            let val = |p: &[f64; 2]| a[0] * p[0] + a[1] * p[1] + b;
            let mut next = Vec::with_capacity(poly.len() + 1);
            for i in 0..poly.len() {
                let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
                let (vp, vq) = (val(&p), val(&q));
                if vp >= 0.0 {
                    next.push(p);
                }
                if (vp >= 0.0) != (vq >= 0.0) {
                    let t = vp / (vp - vq);
                    next.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
                }
            }
            poly = next;
            if poly.is_empty() {
                break;
            }
        }
        poly
    }

    /// Largest step along `d` from `p` that stays in the section.
    fn exit(&self, p: &[f64; 2], d: &[f64; 2]) -> f64 {
        let mut t = f64::INFINITY;
        for (a, b) in &self.cons {
            let ad = a[0] * d[0] + a[1] * d[1];
            if ad < 0.0 {
                let slack = (a[0] * p[0] + a[1] * p[1] + b).max(0.0);
                t = t.min(slack / -ad);
            }
        }
        t
    }
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Counterclockwise hull indices (monotone chain; collinear points dropped).
fn hull2(pts: &[[f64; 2]]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..pts.len()).collect();
    idx.sort_by(|&a, &b| pts[a].partial_cmp(&pts[b]).unwrap_or(Ordering::Equal));
    idx.dedup_by(|a, b| pts[*a] == pts[*b]);
    if idx.len() < 3 {
        return idx;
    }
    let mut out: Vec<usize> = Vec::with_capacity(2 * idx.len());
    for pass in 0..2 {
        let start = out.len();
        let iter: Box<dyn Iterator<Item = &usize>> = if pass == 0 { Box::new(idx.iter()) } else { Box::new(idx.iter().rev()) };
        for &i in iter {
            while out.len() >= start + 2 && orient2d(&pts[out[out.len() - 2]], &pts[out[out.len() - 1]], &pts[i]) != Ordering::Greater {
                out.pop();
            }
            out.push(i);
        }
        out.pop();
    }
    out
}

/// Hull vertex `q` with no hull vertex strictly to the right of the ray `p → q`. A coarse scan is
/// refined by walking along the hull, which converges because the hull is convex.
fn right_tangent(p: &[f64; 2], inner: &[[f64; 2]], span: f64) -> Option<usize> {
    let h = inner.len();
    let skip = |i: usize| (inner[i][0] - p[0]).hypot(inner[i][1] - p[1]) <= 1e-14 * span;
    let better = |cur: usize, x: usize| {
        let o = orient2d(p, &inner[cur], &inner[x]);
        let farther = (inner[x][0] - p[0]).hypot(inner[x][1] - p[1]) > (inner[cur][0] - p[0]).hypot(inner[cur][1] - p[1]);
        o == Ordering::Less || (o == Ordering::Equal && farther)
    };
    let scan = |stride: usize| {
        let mut best: Option<usize> = None;
        for i in (0..h).step_by(stride) {
            if skip(i) {
                continue;
            }
            if best.is_none_or(|b| better(b, i)) {
                best = Some(i);
            }
        }
        best
    };
    let mut b = scan((h / 64).max(1)).or_else(|| scan(1))?;
    for _ in 0..h {
        let mut moved = false;
        for dir in [1, h - 1] {
            let mut nb = (b + dir) % h;
            if skip(nb) {
                nb = (nb + dir) % h;
            }
            if nb != b && !skip(nb) && better(b, nb) {
                b = nb;
                moved = true;
                break;
            }
        }
        if !moved {
            return Some(b);
        }
    }
    // Degenerate position (p on the hull boundary): fall back to a full scan.
    scan(1)
}

/// Greedy walk around the inner hull starting at `start` on the section boundary.
fn greedy_walk(s: &Section, inner: &[[f64; 2]], center: [f64; 2], start: [f64; 2], cap: usize) -> Option<Vec<[f64; 2]>> {
    let ang = |p: &[f64; 2]| (p[1] - center[1]).atan2(p[0] - center[0]);
    let mut p = start;
    let mut pts = vec![p];
    let mut total = 0.0;
    let span = inner.iter().map(|q| (q[0] - center[0]).hypot(q[1] - center[1])).fold(0.0, f64::max).max(1e-300);
    for _ in 0..cap {
        let q = inner[right_tangent(&p, inner, span)?];
        let d = [q[0] - p[0], q[1] - p[1]];
        let t = s.exit(&p, &d).max(1.0);
        if !t.is_finite() {
            return None;
        }
        let next = [p[0] + t * d[0], p[1] + t * d[1]];
        let mut step = ang(&next) - ang(&p);
        while step < 0.0 {
            step += 2.0 * PI;
        }
        if step >= PI {
            return None;
        }
        total += step;
        if total >= 2.0 * PI - 1e-12 {
            return Some(pts);
        }
        pts.push(next);
        p = next;
    }
    None
}

/// Factorization through a small polygon nested between the hull of the normalized rows and the
/// simplex section. Returns `None` if the section is degenerate.
fn nested_polygon_factorization(k: &DMatrix<f64>, basis: &DMatrix<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let s = Section::new(k, basis)?;
    let inner: Vec<[f64; 2]> = s.hull.iter().map(|&i| s.pts[i]).collect();
    if inner.len() <= 2 {
        // Rank at most two: the extreme rows themselves suffice.
        let u = DMatrix::from_fn(inner.len(), k.ncols(), |l, j| k[(s.hull[l], j)] / s.row_sums[s.hull[l]]);
        return Some((nnls_rows(k, &u), u));
    }
    let center = [inner.iter().map(|p| p[0]).sum::<f64>() / inner.len() as f64, inner.iter().map(|p| p[1]).sum::<f64>() / inner.len() as f64];
    let mut starts = s.outer();
    // Edge-extension starts, thinned to a bounded number on large hulls.
    let stride = inner.len().div_ceil(MAX_EDGE_STARTS).max(1);
    for i in (0..inner.len()).step_by(stride) {
        let a = &inner[i];
        let b = inner[(i + 1) % inner.len()];
        for (p, d) in [(a, [a[0] - b[0], a[1] - b[1]]), (&b, [b[0] - a[0], b[1] - a[1]])] {
            let t = s.exit(p, &d);
            if t.is_finite() {
                starts.push([p[0] + t * d[0], p[1] + t * d[1]]);
            }
        }
    }
    let mut best: Option<Vec<[f64; 2]>> = None;
    for st in starts {
        let cap = best.as_ref().map(|b| b.len()).unwrap_or(64);
        if let Some(poly) = greedy_walk(&s, &inner, center, st, cap) {
            if best.as_ref().is_none_or(|b| poly.len() < b.len()) {
                best = Some(poly);
            }
        }
    }
    let poly = best?;
    let u = DMatrix::from_fn(poly.len(), k.ncols(), |_, _| 0.0);
    let mut u = u;
    for (l, y) in poly.iter().enumerate() {
        let x = s.lift(y);
        let sum: f64 = x.iter().sum();
        for j in 0..k.ncols() {
            u[(l, j)] = x[j] / sum;
        }
    }
    Some((nnls_rows(k, &u), u))
}

/// Nonnegative least-squares coefficients of every row of `k` against the rows of `u`.
pub fn nnls_rows(k: &DMatrix<f64>, u: &DMatrix<f64>) -> DMatrix<f64> {
    let g = u * u.transpose();
    let h = k * u.transpose();
    let r = u.nrows();
    let mut t = DMatrix::zeros(k.nrows(), r);
    let mut x = vec![0.0; r];
    let mut hi = vec![0.0; r];
    for i in 0..k.nrows() {
        for l in 0..r {
            hi[l] = h[(i, l)];
        }
        nnls_gram(&g, &hi, &mut x);
        for l in 0..r {
            t[(i, l)] = x[l];
        }
    }
    t
}

/// Lawson–Hanson active set method for `min ‖Ax − b‖, x ≥ 0` given `G = AᵀA` and `h = Aᵀb`.
pub fn nnls_gram(g: &DMatrix<f64>, h: &[f64], x: &mut [f64]) {
    let r = h.len();
    x.iter_mut().for_each(|v| *v = 0.0);
    let mut passive = vec![false; r];
    let hmax = h.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let gmax = g.amax();
    let tol = 1e-14 * hmax.max(gmax).max(1e-300);
    let grad = |x: &[f64], j: usize| h[j] - (0..r).map(|l| g[(j, l)] * x[l]).sum::<f64>();
    for _outer in 0..3 * r + 3 {
        let cand = (0..r).filter(|&j| !passive[j]).map(|j| (j, grad(x, j))).filter(|&(_, w)| w > tol).max_by(|a, b| a.1.total_cmp(&b.1));
        let Some((j, _)) = cand else { break };
        passive[j] = true;
        for _inner in 0..3 * r + 3 {
            let p: Vec<usize> = (0..r).filter(|&i| passive[i]).collect();
            let gp = DMatrix::from_fn(p.len(), p.len(), |a, b| g[(p[a], p[b])]);
            let hp = DVector::from_fn(p.len(), |a, _| h[p[a]]);
            let z = match gp.clone().cholesky() {
                Some(c) => c.solve(&hp),
                None => match gp.svd(true, true).solve(&hp, 1e-15) {
                    Ok(z) => z,
                    Err(_) => return,
                },
            };
            if z.iter().all(|&v| v > 0.0) {
                for (a, &i) in p.iter().enumerate() {
                    x[i] = z[a];
                }
                break;
            }
            let mut alpha = 1.0f64;
            for (a, &i) in p.iter().enumerate() {
                if z[a] <= 0.0 {
                    alpha = alpha.min(x[i] / (x[i] - z[a]));
                }
            }
            for (a, &i) in p.iter().enumerate() {
                x[i] += alpha * (z[a] - x[i]);
                if x[i] <= 1e-300 || (z[a] <= 0.0 && x[i] <= tol) {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
        }
    }
}

/// Best of `opts.restarts` ANLS runs at rank `r`. Rows outside `work` are fitted afterwards.
fn anls_search(k: &DMatrix<f64>, work: &[usize], r: usize, opts: &NmfOptions) -> Option<(DMatrix<f64>, DMatrix<f64>, f64)> {
    let kw = DMatrix::from_fn(work.len(), k.ncols(), |i, j| k[(work[i], j)]);
    let run = |restart: usize| {
        let mut rng = crate::rng::substream(opts.seed, "anls", (r * 1_000_003 + restart) as u64);
        let (_, u) = anls(&kw, r, &mut rng, opts.max_iter, opts.tol);
        let t_all = nnls_rows(k, &u);
        let e = relative_error(k, &t_all, &u);
        (e, t_all, u)
    };
    let mut best: Option<(f64, DMatrix<f64>, DMatrix<f64>)> = None;
    for restart in 0..opts.restarts {
        let cand = run(restart);
        if best.as_ref().is_none_or(|b| cand.0 < b.0) {
            best = Some(cand);
        }
        if best.as_ref().is_some_and(|b| b.0 <= opts.tol) {
            break;
        }
    }
    best.map(|(e, t, u)| (t, u, e))
}

/// Alternating nonnegative least squares from a random start.
pub fn anls(k: &DMatrix<f64>, r: usize, rng: &mut ChaCha8Rng, max_iter: usize, tol: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, m) = k.shape();
    let kmax = k.amax().max(1e-300);
    let mut t = DMatrix::from_fn(n, r, |_, _| rng.random::<f64>());
    let mut u = DMatrix::from_fn(r, m, |_, _| rng.random::<f64>());
    let kt = k.transpose();
    let mut last = f64::INFINITY;
    let mut stall = 0;
    // Stop well below the acceptance tolerance so the final error has margin.
    let target = (tol * 1e-2).max(1e-13);
    for _ in 0..max_iter {
        u = nnls_rows(&kt, &t.transpose()).transpose();
        t = nnls_rows(k, &u);
        let e = (k - &t * &u).amax() / kmax;
        if e <= target {
            break;
        }
        if e > last * (1.0 - 1e-4) {
            stall += 1;
            if stall > 200 {
                break;
            }
        } else {
            stall = 0;
        }
        last = last.min(e);
    }
    (t, u)
}

/// Seeded generator for callers without their own stream.
pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
