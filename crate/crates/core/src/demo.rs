//! Regular hexagon: a five-factor nonnegative factorization of its 6×6 slack matrix.

use crate::cyclic::make_cyclic_polygon;
use crate::factorization::{verify_factorization, NonnegFactorization, VerifyReport};
use crate::nmf::{block_factorize, NmfError, NmfMethod, NmfOptions};
use crate::slack::slack_matrix;
use nalgebra::DMatrix;
use serde::Serialize;
use std::f64::consts::PI;

pub const HEXAGON_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct HexagonReport {
    pub slack: Vec<Vec<f64>>,
    pub rank: usize,
    pub r: usize,
    pub method: NmfMethod,
    pub t: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub verify: VerifyReport,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn hexagon_slack() -> DMatrix<f64> {
    let angles: Vec<f64> = (0..6).map(|i| i as f64 * PI / 3.0).collect();
    let p = make_cyclic_polygon(&angles).expect("hexagon angles are sorted");
    slack_matrix(&p).expect("hexagon is a valid polygon").entries
}

/// Smallest-rank search on the hexagon slack matrix; `verify.pass` reports the error check.
pub fn hexagon_demo(seed: u64) -> Result<(NonnegFactorization, HexagonReport), NmfError> {
    let m = hexagon_slack();
    let opts = NmfOptions { tol: 1e-10, minimize: true, seed, ..NmfOptions::default() };
    let res = block_factorize(&m, &opts)?;
    let fact = NonnegFactorization::from_dense(&res.t, &res.u);
    let verify = verify_factorization(&m, &fact, HEXAGON_TOL).expect("shapes agree");
    let report = HexagonReport {
        slack: rows(&m),
        rank: res.rank,
        r: res.r(),
        method: res.method,
        t: rows(&res.t),
        u: rows(&res.u),
        verify,
    };
    Ok((fact, report))
}
