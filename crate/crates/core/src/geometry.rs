use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance for unit-scale geometry.
pub const TOL_GEOM: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("dimension {dim} with {n} points exceeds the brute-force cap of {cap}")]
    DimensionTooLarge { dim: usize, n: usize, cap: usize },
    #[error("point dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("negative slack {value} at vertex {vertex}, facet {facet}")]
    NegativeSlack { vertex: usize, facet: usize, value: f64 },
    #[error("point is not on the unit sphere (norm {0})")]
    NotOnSphere(f64),
    #[error("hyperplane misses the open unit ball (|b|/|a| = {0})")]
    NoIntersection(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn normalized(&self) -> Point {
        let n = self.norm();
        Point(self.0.iter().map(|x| x / n).collect())
    }
}

impl std::ops::Deref for Point {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point(v)
    }
}

/// Halfspace `a·x ≤ b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperplane {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Hyperplane {
    pub fn new(normal: Vec<f64>, offset: f64) -> Self {
        Hyperplane { normal, offset }
    }

    /// `b − a·x`
    pub fn slack(&self, x: &[f64]) -> f64 {
        self.offset - dot(&self.normal, x)
    }

    /// Same halfspace with a unit normal.
    pub fn unit(&self) -> Hyperplane {
        let n = norm(&self.normal);
        Hyperplane {
            normal: self.normal.iter().map(|x| x / n).collect(),
            offset: self.offset / n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Facet {
    #[serde(flatten)]
    pub plane: Hyperplane,
    pub incident: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polytope {
    pub dim: usize,
    pub vertices: Vec<Point>,
    pub facets: Vec<Facet>,
}

impl Polytope {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_facets(&self) -> usize {
        self.facets.len()
    }

    /// Slack of vertex `v` against facet `f`, clamped to zero inside the tolerance.
    pub fn slack(&self, v: usize, f: usize) -> f64 {
        clamp_tol(self.facets[f].plane.slack(&self.vertices[v]))
    }

    /// Checks the polytope invariants: all slacks ≥ −tol, incident slacks within tol,
    /// and at least `dim` affinely independent incident vertices per facet.
    pub fn check(&self) -> Result<(), String> {
        for (fi, f) in self.facets.iter().enumerate() {
            for (vi, v) in self.vertices.iter().enumerate() {
                let s = f.plane.slack(v);
                if s < -TOL_GEOM {
                    return Err(format!("vertex {vi} violates facet {fi} by {s}"));
                }
            }
            for &vi in &f.incident {
                let s = f.plane.slack(&self.vertices[vi]);
                if s.abs() > TOL_GEOM {
                    return Err(format!("incident vertex {vi} of facet {fi} has slack {s}"));
                }
            }
            let pts: Vec<&[f64]> = f.incident.iter().map(|&i| &self.vertices[i][..]).collect();
            if crate::linalg::affine_rank(&pts) + 1 < self.dim {
                return Err(format!("facet {fi} has fewer than {} independent vertices", self.dim));
            }
        }
        Ok(())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn clamp_tol(x: f64) -> f64 {
    if x.abs() <= TOL_GEOM {
        0.0
    } else {
        x
    }
}

pub fn check_points(points: &[Point], d: usize) -> Result<(), GeometryError> {
    for p in points {
        if p.dim() != d {
            return Err(GeometryError::DimensionMismatch { expected: d, found: p.dim() });
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
    }
    Ok(())
}
