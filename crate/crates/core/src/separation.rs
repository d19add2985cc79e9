//! The matrix `M[a, b] = ∏_{q ∈ Q} (a·b − q)²` over `a, b ∈ {0,1}^r`: exact rank, support size,
//! the rectangle-covering lower bound on its nonnegative rank, and the matrix-to-polytope map.

use crate::geometry::{Facet, Hyperplane, Point, Polytope};
use crate::lp::{residual, Phase1};
use crate::slack::SlackMatrix;
use nalgebra::{DMatrix, DVector};
use num_bigint::{BigInt, BigUint};
use num_integer::binomial;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeparationError {
    #[error("r = {0} is below 4, where the bound does not apply")]
    BadR(u32),
    #[error("exact elimination is limited to r ≤ {max}, got {r}")]
    TooLargeForElimination { r: u32, max: u32 },
    #[error("rank routes disagree: elimination {elimination}, coefficient formula {formula}")]
    RouteMismatch { elimination: usize, formula: String },
    #[error("matrix has {n} columns, limit is {max}")]
    TooLarge { n: usize, max: usize },
    #[error("row {0} is zero")]
    ZeroRow(usize),
    #[error("row {row} is not a convex combination of the vertices (residual {residual})")]
    NotReproduced { row: usize, residual: f64 },
}

/// Largest `r` for which the full `2^r × 2^r` matrix is eliminated.
pub const MAX_ELIMINATION_R: u32 = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct SeparationProfile {
    pub r: u32,
    pub m: u32,
    pub q: Vec<u32>,
    /// `f[k]` is the entry value at `a·b = k`.
    pub f: Vec<BigUint>,
}

impl SeparationProfile {
    /// `r < 4`: the bound's hypotheses fail.
    pub fn degenerate(&self) -> bool {
        self.r < 4
    }

    pub fn entry(&self, a: u64, b: u64) -> &BigUint {
        &self.f[(a & b).count_ones() as usize]
    }
}

/// `⌈√r⌉`
pub fn ceil_sqrt(r: u32) -> u32 {
    if r <= 1 {
        return r;
    }
    (r - 1).isqrt() + 1
}

pub fn entry_profile(r: u32) -> SeparationProfile {
    let r = r.max(1);
    let m = ceil_sqrt(r);
    let q: Vec<u32> = (0..=r).filter(|k| k % m == 0).collect();
    let f = (0..=r)
        .map(|k| {
            q.iter().fold(BigUint::one(), |acc, &qq| {
                let d = BigUint::from(k.abs_diff(qq));
                acc * &d * &d
            })
        })
        .collect();
    SeparationProfile { r, m, q, f }
}

/// `4^r − Σ_{k ∈ Q} C(r,k) 3^{r−k}`: pairs `(a, b)` with a nonzero entry.
pub fn support_count(r: u32) -> BigUint {
    let p = entry_profile(r);
    let total = BigUint::from(4u32).pow(r);
    let zero: BigUint = p
        .q
        .iter()
        .map(|&k| binomial(BigUint::from(r), BigUint::from(k)) * BigUint::from(3u32).pow(r - k))
        .sum();
    total - zero
}

/// Support size by enumerating all `4^r` pairs.
pub fn support_count_exhaustive(r: u32) -> u64 {
    let p = entry_profile(r);
    let n = 1u64 << r;
    let mut count = 0u64;
    for a in 0..n {
        for b in 0..n {
            if !p.entry(a, b).is_zero() {
                count += 1;
            }
        }
    }
    count
}

/// Rank by fraction-free (Bareiss) elimination.
pub fn exact_rank(m: &[Vec<BigInt>]) -> usize {
    let mut a: Vec<Vec<BigInt>> = m.to_vec();
    let rows = a.len();
    if rows == 0 {
        return 0;
    }
    let cols = a[0].len();
    let mut prev = BigInt::one();
    let mut rank = 0;
    for c in 0..cols {
        if rank == rows {
            break;
        }
        let Some(p) = (rank..rows).find(|&i| !a[i][c].is_zero()) else { continue };
        a.swap(rank, p);
        let (top, rest) = a.split_at_mut(rank + 1);
        let pivot_row = &top[rank];
        for row in rest.iter_mut() {
            let lead = row[c].clone();
            for j in c + 1..cols {
                let v = &pivot_row[c] * &row[j] - &lead * &pivot_row[j];
                row[j] = v / &prev;
            }
            row[c] = BigInt::zero();
        }
        prev = a[rank][c].clone();
        rank += 1;
    }
    rank
}

/// The full matrix for small `r`.
pub fn materialize(r: u32) -> Result<Vec<Vec<BigInt>>, SeparationError> {
    if r > MAX_ELIMINATION_R {
        return Err(SeparationError::TooLargeForElimination { r, max: MAX_ELIMINATION_R });
    }
    let p = entry_profile(r);
    let n = 1u64 << r;
    Ok((0..n).map(|a| (0..n).map(|b| BigInt::from(p.entry(a, b).clone())).collect()).collect())
}

/// Coefficients of `f` in the basis `C(k, ℓ)` (forward differences at 0).
pub fn newton_coefficients(p: &SeparationProfile) -> Vec<BigInt> {
    let mut row: Vec<BigInt> = p.f.iter().map(|x| BigInt::from(x.clone())).collect();
    let mut out = Vec::with_capacity(row.len());
    while !row.is_empty() {
        out.push(row[0].clone());
        row = row.windows(2).map(|w| &w[1] - &w[0]).collect();
    }
    out
}

/// The same coefficients via the monomial expansion of `f` and Stirling numbers of the second kind:
/// `k^p = Σ_ℓ S(p, ℓ) ℓ! C(k, ℓ)`.
pub fn stirling_coefficients(p: &SeparationProfile) -> Vec<BigInt> {
    let mut poly = vec![BigInt::one()];
    for &q in &p.q {
        for _ in 0..2 {
            let mut next = vec![BigInt::zero(); poly.len() + 1];
            for (i, c) in poly.iter().enumerate() {
                next[i + 1] += c;
                next[i] -= c * BigInt::from(q);
            }
            poly = next;
        }
    }
    let deg = poly.len() - 1;
    let mut s = vec![vec![BigInt::zero(); deg + 1]; deg + 1];
    s[0][0] = BigInt::one();
    for n in 1..=deg {
        for k in 1..=n {
            s[n][k] = BigInt::from(k) * &s[n - 1][k] + &s[n - 1][k - 1];
        }
    }
    let r = p.r as usize;
    let mut gamma = vec![BigInt::zero(); r + 1];
    let mut fact = BigInt::one();
    for (l, g) in gamma.iter_mut().enumerate().take(deg.min(r) + 1) {
        if l > 0 {
            fact *= BigInt::from(l);
        }
        let sum: BigInt = (l..=deg).map(|pp| &poly[pp] * &s[pp][l]).sum();
        *g = sum * &fact;
    }
    gamma
}

/// `Σ_{ℓ : γ_ℓ ≠ 0} C(r, ℓ)`: the monomials `∏_{i∈T} a_i` are linearly independent over `{0,1}^r`.
pub fn rank_formula(r: u32) -> BigUint {
    let p = entry_profile(r);
    stirling_coefficients(&p)
        .iter()
        .enumerate()
        .filter(|(_, g)| !g.is_zero())
        .map(|(l, _)| binomial(BigUint::from(r), BigUint::from(l)))
        .sum()
}

/// `(r + 1)^{2|Q|}`
pub fn rank_upper(r: u32) -> BigUint {
    let p = entry_profile(r);
    BigUint::from(r + 1).pow(2 * p.q.len() as u32)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankReport {
    pub r: u32,
    /// Present when the matrix was small enough to eliminate.
    pub elimination: Option<usize>,
    pub formula: String,
    pub upper: String,
}

/// Rank by elimination (small `r`) and by the coefficient formula; the two must agree.
pub fn rank_of_m(r: u32) -> Result<RankReport, SeparationError> {
    let formula = rank_formula(r);
    let elimination = if r <= MAX_ELIMINATION_R { Some(exact_rank(&materialize(r)?)) } else { None };
    if let Some(e) = elimination {
        if BigUint::from(e) != formula {
            return Err(SeparationError::RouteMismatch { elimination: e, formula: formula.to_string() });
        }
    }
    Ok(RankReport { r, elimination, formula: formula.to_string(), upper: rank_upper(r).to_string() })
}

/// Binary entropy in bits.
pub fn binary_entropy(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
}

pub fn log2_big(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 64 {
        return x.to_u64().map(|v| (v as f64).log2()).unwrap_or(f64::NEG_INFINITY);
    }
    let shift = bits - 64;
    let top = (x >> shift).to_u64().unwrap_or(u64::MAX);
    (top as f64).log2() + shift as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundChain {
    pub r: u32,
    pub s: u32,
    pub support_count: String,
    /// `r + s + H(s/r)·r`, the base-2 logarithm of the rectangle size bound.
    pub rectangle_log2: f64,
    /// The rectangle bound as `mantissa · 2^exponent` with `mantissa ∈ [1, 2)`.
    pub rectangle_mantissa: f64,
    pub rectangle_exponent: i64,
    pub nnr_lower: String,
    pub rank_exact: String,
    pub ratio_log2: f64,
}

/// `max(1, ⌊support · s^s (r−s)^{r−s} / (2^{r+s} r^r)⌋)`, the support size divided by the largest
/// rectangle, evaluated in exact rational arithmetic.
pub fn nnr_lower(r: u32, support: &BigUint) -> BigUint {
    let s = ceil_sqrt(r) - 1;
    let num = support * BigUint::from(s).pow(s) * BigUint::from(r - s).pow(r - s);
    let den = BigUint::from(2u32).pow(r + s) * BigUint::from(r).pow(r);
    let q = num / den;
    if q.is_zero() {
        BigUint::one()
    } else {
        q
    }
}

pub fn nnr_lower_bound(r: u32) -> Result<BoundChain, SeparationError> {
    if r < 4 {
        return Err(SeparationError::BadR(r));
    }
    let s = ceil_sqrt(r) - 1;
    let support = support_count(r);
    let lower = nnr_lower(r, &support);
    let rank = rank_formula(r);
    let rectangle_log2 = r as f64 + s as f64 + binary_entropy(s as f64 / r as f64) * r as f64;
    let exponent = rectangle_log2.floor() as i64;
    Ok(BoundChain {
        r,
        s,
        support_count: support.to_string(),
        rectangle_log2,
        rectangle_mantissa: (rectangle_log2 - exponent as f64).exp2(),
        rectangle_exponent: exponent,
        nnr_lower: lower.to_string(),
        rank_exact: rank.to_string(),
        ratio_log2: log2_big(&lower) - log2_big(&rank),
    })
}

/// One row of the separation table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationRow {
    pub r: u32,
    pub n: String,
    pub degenerate: bool,
    pub rank_exact: String,
    pub rank_by_elimination: Option<usize>,
    pub rank_upper: String,
    pub support: String,
    pub nnr_lower: Option<String>,
    pub ratio_log2: Option<f64>,
}

pub fn separation_row(r: u32) -> Result<SeparationRow, SeparationError> {
    let rank = rank_of_m(r)?;
    let bound = nnr_lower_bound(r).ok();
    Ok(SeparationRow {
        r,
        n: (BigUint::one() << r as usize).to_string(),
        degenerate: r < 4,
        rank_exact: rank.formula,
        rank_by_elimination: rank.elimination,
        rank_upper: rank.upper,
        support: support_count(r).to_string(),
        nnr_lower: bound.as_ref().map(|b| b.nnr_lower.clone()),
        ratio_log2: bound.map(|b| b.ratio_log2),
    })
}

/// The polytope whose slack matrix is `M` with rows scaled to sum 1: the affine hull of the rows
/// intersected with the simplex. Vertices are found by enumerating active constraint sets.
pub fn matrix_to_polytope(m: &DMatrix<f64>, max_n: usize) -> Result<(Polytope, SlackMatrix), SeparationError> {
    let (rows, n) = m.shape();
    if n > max_n {
        return Err(SeparationError::TooLarge { n, max: max_n });
    }
    let mut normalized = m.clone();
    for i in 0..rows {
        let s: f64 = m.row(i).sum();
        if s <= 0.0 {
            return Err(SeparationError::ZeroRow(i));
        }
        normalized.row_mut(i).scale_mut(1.0 / s);
    }
    let x0: DVector<f64> = normalized.row(0).transpose();
    let diffs = DMatrix::from_fn(n, rows.saturating_sub(1), |j, i| normalized[(i + 1, j)] - x0[j]);
    let basis: DMatrix<f64> = if diffs.ncols() == 0 {
        DMatrix::zeros(n, 0)
    } else {
        let svd = diffs.clone().svd(true, false);
        let smax = svd.singular_values.max();
        let u = svd.u.unwrap();
        let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > 1e-10 * smax.max(1e-300)).collect();
        DMatrix::from_fn(n, keep.len(), |j, c| u[(j, keep[c])])
    };
    let k = basis.ncols();
    // Constraints x0_j + B_j y ≥ 0.
    let mut verts: Vec<DVector<f64>> = Vec::new();
    let mut subset: Vec<usize> = (0..k).collect();
    let mut try_subset = |s: &[usize]| {
        let y = if k == 0 {
            DVector::zeros(0)
        } else {
            let a = DMatrix::from_fn(k, k, |r, c| basis[(s[r], c)]);
            let b = DVector::from_fn(k, |r, _| -x0[s[r]]);
            let lu = a.lu();
            if lu.determinant().abs() < 1e-12 {
                return;
            }
            match lu.solve(&b) {
                Some(y) => y,
                None => return,
            }
        };
        let x = &x0 + &basis * &y;
        if x.iter().all(|&v| v >= -1e-9) && !verts.iter().any(|v| (v - &y).norm() < 1e-8) {
            verts.push(y);
        }
    };
    if k > n {
        return Err(SeparationError::TooLarge { n, max: max_n });
    }
    loop {
        try_subset(&subset);
        // Next k-subset in lexicographic order.
        let mut i = k;
        loop {
            if i == 0 {
                break;
            }
            i -= 1;
            if subset[i] < n - k + i {
                subset[i] += 1;
                for j in i + 1..k {
                    subset[j] = subset[j - 1] + 1;
                }
                i = usize::MAX;
                break;
            }
        }
        if i != usize::MAX {
            break;
        }
    }
    let coords: Vec<DVector<f64>> = verts.iter().map(|y| (&x0 + &basis * y).map(|v| if v.abs() < 1e-12 { 0.0 } else { v.max(0.0) })).collect();
    let nv = verts.len();
    let vertices: Vec<Point> = verts.iter().map(|y| Point(y.iter().cloned().collect())).collect();
    let mut facets = Vec::new();
    let mut cols = Vec::new();
    for j in 0..n {
        let normal: Vec<f64> = (0..k).map(|c| -basis[(j, c)]).collect();
        if normal.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-12 {
            continue;
        }
        let incident: Vec<usize> = (0..nv).filter(|&v| coords[v][j] == 0.0).collect();
        let pts: Vec<&[f64]> = incident.iter().map(|&v| &vertices[v][..]).collect();
        if incident.len() < k || crate::linalg::affine_rank(&pts) + 1 < k {
            continue;
        }
        facets.push(Facet { plane: Hyperplane { normal, offset: x0[j] }, incident });
        cols.push(j);
    }
    let entries = DMatrix::from_fn(nv, n, |v, j| coords[v][j]);
    // Every row of the normalized input must be a convex combination of the vertices.
    let mut lp = Phase1::new();
    let mut a = vec![0.0; (n + 1) * nv];
    for j in 0..n {
        for v in 0..nv {
            a[j * nv + v] = entries[(v, j)];
        }
    }
    for v in 0..nv {
        a[n * nv + v] = 1.0;
    }
    for i in 0..rows {
        let mut b: Vec<f64> = normalized.row(i).iter().cloned().collect();
        b.push(1.0);
        let res = lp.solve(&a, n + 1, nv, &b).map(|x| residual(&a, n + 1, nv, &b, &x)).unwrap_or(f64::INFINITY);
        if res > 1e-9 {
            return Err(SeparationError::NotReproduced { row: i, residual: res });
        }
    }
    let polytope = Polytope { dim: k, vertices, facets };
    let rank = crate::linalg::numerical_rank(&entries, 1e-9);
    Ok((polytope, SlackMatrix { entries, row_index: (0..nv).collect(), col_index: (0..n).collect(), rank }))
}

/// Sign of a big integer as -1, 0 or 1.
pub fn sign(x: &BigInt) -> i8 {
    if x.is_zero() {
        0
    } else if x.is_positive() {
        1
    } else {
        -1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_r4() {
        let p = entry_profile(4);
        assert_eq!((p.m, p.q.clone()), (2, vec![0, 2, 4]));
        assert_eq!(p.f[3], BigUint::from(9u32));
        assert_eq!(p.f[1], BigUint::from(9u32));
        for &q in &p.q {
            assert!(p.f[q as usize].is_zero());
        }
    }

    #[test]
    fn zero_pattern_is_multiples_of_m() {
        for r in 1..=40 {
            let p = entry_profile(r);
            for k in 0..=r {
                assert_eq!(p.f[k as usize].is_zero(), k % p.m == 0, "r={r} k={k}");
            }
            assert!(p.q.len() as f64 <= (r as f64).sqrt() + 1.0);
        }
    }

    #[test]
    fn support_r4() {
        assert_eq!(support_count(4), BigUint::from(120u32));
        assert_eq!(support_count_exhaustive(4), 120);
    }

    #[test]
    fn support_r1_is_empty() {
        // m = 1: every intersection size is a multiple of m.
        assert!(entry_profile(1).degenerate());
        assert!(support_count(1).is_zero());
    }

    #[test]
    fn support_closed_form_matches_enumeration() {
        for r in 1..=9 {
            assert_eq!(support_count(r), BigUint::from(support_count_exhaustive(r)), "r={r}");
        }
    }

    #[test]
    fn bareiss_small() {
        let id: Vec<Vec<BigInt>> = (0..3).map(|i| (0..3).map(|j| BigInt::from((i == j) as i32)).collect()).collect();
        assert_eq!(exact_rank(&id), 3);
        let ones = vec![vec![BigInt::one(); 4]; 4];
        assert_eq!(exact_rank(&ones), 1);
        assert_eq!(exact_rank(&[]), 0);
        let m = vec![
            vec![BigInt::from(2), BigInt::from(4), BigInt::from(6)],
            vec![BigInt::from(1), BigInt::from(2), BigInt::from(3)],
            vec![BigInt::from(0), BigInt::from(1), BigInt::from(5)],
        ];
        assert_eq!(exact_rank(&m), 2);
    }

    #[test]
    fn coefficient_routes_agree() {
        for r in 1..=30 {
            let p = entry_profile(r);
            let a = newton_coefficients(&p);
            let b = stirling_coefficients(&p);
            assert_eq!(a, b, "r={r}");
        }
    }

    #[test]
    fn rank_routes_agree_r4() {
        let rep = rank_of_m(4).unwrap();
        assert_eq!(rep.elimination, Some(15));
        assert_eq!(rep.formula, "15");
    }

    #[test]
    fn rank_routes_agree_r6() {
        for r in 1..=6 {
            rank_of_m(r).unwrap();
        }
    }

    #[test]
    fn rank_below_upper() {
        for r in 2..=100 {
            assert!(rank_formula(r) <= rank_upper(r));
            assert!(rank_formula(r) >= BigUint::one());
        }
    }

    #[test]
    fn entropy_midpoint() {
        assert_eq!(binary_entropy(0.5), 1.0);
    }

    #[test]
    fn bound_regressions() {
        assert!(matches!(nnr_lower_bound(3), Err(SeparationError::BadR(3))));
        let b = nnr_lower_bound(4).unwrap();
        assert_eq!((b.nnr_lower.as_str(), b.rank_exact.as_str()), ("1", "15"));
        let b = nnr_lower_bound(16).unwrap();
        assert_eq!(b.s, 3);
        assert!((b.rectangle_log2 - (19.0 + 16.0 * binary_entropy(3.0 / 16.0))).abs() < 1e-12);
        assert_eq!((b.nnr_lower.as_str(), b.rank_exact.as_str()), ("2", "58650"));
        let b = nnr_lower_bound(100).unwrap();
        assert_eq!(b.nnr_lower, "162585613518298");
        assert_eq!(b.rank_exact, "10081199593311073579495");
    }

    #[test]
    fn bound_is_floor_of_support_over_rectangle() {
        for r in 4..=60 {
            let b = nnr_lower_bound(r).unwrap();
            let approx = log2_big(&support_count(r)) - b.rectangle_log2;
            let lower: f64 = b.nnr_lower.parse::<f64>().unwrap();
            assert!(lower >= 1.0);
            if approx > 1.0 {
                assert!((lower.log2() - approx).abs() < 1e-6 || lower.log2() <= approx, "r={r}");
            }
        }
    }

    #[test]
    fn polytope_of_identity() {
        let (p, s) = matrix_to_polytope(&DMatrix::identity(2, 2), 10).unwrap();
        assert_eq!(p.dim, 1);
        assert_eq!(p.n_vertices(), 2);
        let mut rows: Vec<Vec<f64>> = (0..2).map(|i| s.entries.row(i).iter().cloned().collect()).collect();
        rows.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let want = [[1.0, 0.0], [0.0, 1.0]];
        for (r, w) in rows.iter().zip(want) {
            assert!(r.iter().zip(w).all(|(a, b)| (a - b).abs() < 1e-12));
        }
    }

    #[test]
    fn polytope_of_plane_section() {
        let m = DMatrix::from_row_slice(3, 4, &[1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 2.0]);
        let (p, s) = matrix_to_polytope(&m, 10).unwrap();
        assert_eq!(p.dim, 2);
        assert!(p.n_vertices() >= 3);
        p.check().unwrap();
        for v in 0..s.entries.nrows() {
            assert!((s.entries.row(v).sum() - 1.0).abs() < 1e-12);
            assert!(s.entries.row(v).iter().all(|&x| x >= 0.0));
        }
        assert!(p.dim < crate::linalg::numerical_rank(&m, 1e-9));
    }

    #[test]
    fn polytope_errors() {
        assert!(matches!(matrix_to_polytope(&DMatrix::zeros(2, 11), 10), Err(SeparationError::TooLarge { .. })));
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(matrix_to_polytope(&m, 10), Err(SeparationError::ZeroRow(1))));
    }
}
