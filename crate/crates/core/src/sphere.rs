//! Spherical distance, caps and encapsulation.

use crate::geometry::{dot, norm, GeometryError, Hyperplane, Point, TOL_GEOM};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cap {
    pub center: Point,
    /// Angular radius in radians.
    pub radius: f64,
}

impl Cap {
    pub fn new(center: Point, radius: f64) -> Result<Cap, GeometryError> {
        let n = center.norm();
        if (n - 1.0).abs() > TOL_GEOM {
            return Err(GeometryError::NotOnSphere(n));
        }
        Ok(Cap { center, radius })
    }

    /// Membership in the solid cap: the part of the unit ball cut off by `center·x ≥ cos(radius)`.
    pub fn contains_solid(&self, x: &[f64]) -> bool {
        dot(&self.center, x) >= self.radius.cos() - TOL_GEOM && norm(x) <= 1.0 + TOL_GEOM
    }
}

/// Angle between two unit vectors, via atan2 of the cross and dot magnitudes.
pub fn spherical_distance(x: &[f64], y: &[f64]) -> Result<f64, GeometryError> {
    for v in [x, y] {
        let n = norm(v);
        if (n - 1.0).abs() > TOL_GEOM {
            return Err(GeometryError::NotOnSphere(n));
        }
    }
    Ok(angle(x, y))
}

/// Angle between two nonzero vectors without the unit-norm check.
pub fn angle(x: &[f64], y: &[f64]) -> f64 {
    let c = dot(x, y);
    // |x × y|² = |x|²|y|² − (x·y)², computed through the difference vector for accuracy.
    let s = if x.len() == 2 {
        (x[0] * y[1] - x[1] * y[0]).abs()
    } else if x.len() == 3 {
        let cr = [x[1] * y[2] - x[2] * y[1], x[2] * y[0] - x[0] * y[2], x[0] * y[1] - x[1] * y[0]];
        norm(&cr)
    } else {
        let mut acc = 0.0;
        for i in 0..x.len() {
            for j in (i + 1)..x.len() {
                let t = x[i] * y[j] - x[j] * y[i];
                acc += t * t;
            }
        }
        acc.sqrt()
    };
    s.atan2(c)
}

/// The smaller solid cap cut from the unit ball by `H`, as (center, angular radius).
pub fn smaller_cap_of_hyperplane(h: &Hyperplane) -> Result<Cap, GeometryError> {
    let an = norm(&h.normal);
    let t = h.offset / an;
    // Facets through nearly coincident sphere points may round to just past tangency.
    if !(t.abs() <= 1.0 + TOL_GEOM) {
        return Err(GeometryError::NoIntersection(t.abs()));
    }
    let t = t.clamp(-1.0, 1.0);
    let sign = if t < 0.0 { -1.0 } else { 1.0 };
    let center = Point(h.normal.iter().map(|x| sign * x / an).collect());
    Ok(Cap { center, radius: t.abs().acos() })
}

/// Whether `H ∩ B` lies in the solid cap `C` (rim criterion with closed containment).
pub fn encapsulated(h: &Hyperplane, c: &Cap) -> Result<bool, GeometryError> {
    let q = smaller_cap_of_hyperplane(h)?;
    Ok(angle(&c.center, &q.center) + q.radius <= c.radius + TOL_GEOM)
}
