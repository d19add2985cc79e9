//! Orientation predicates with a floating-point filter and an exact big-integer fallback.

use num_bigint::BigInt;
use num_traits::{Float, Signed, Zero};
use std::cmp::Ordering;

const EPS: f64 = 1.1102230246251565e-16; // 2^-53
const CCW_ERR: f64 = (3.0 + 16.0 * EPS) * EPS;
const O3D_ERR: f64 = (7.0 + 56.0 * EPS) * EPS;

/// Sign of `(b−a)×(c−a)`: positive when a, b, c turn counterclockwise.
pub fn orient2d(a: &[f64], b: &[f64], c: &[f64]) -> Ordering {
    let detleft = (a[0] - c[0]) * (b[1] - c[1]);
    let detright = (a[1] - c[1]) * (b[0] - c[0]);
    let det = detleft - detright;
    let bound = CCW_ERR * (detleft.abs() + detright.abs());
    if det > bound {
        return Ordering::Greater;
    }
    if -det > bound {
        return Ordering::Less;
    }
    orient2d_exact(a, b, c)
}

/// Sign of `det[b−a, c−a, d−a]`: positive when d lies on the side of `(b−a)×(c−a)`.
pub fn orient3d(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> Ordering {
    let adx = a[0] - d[0];
    let bdx = b[0] - d[0];
    let cdx = c[0] - d[0];
    let ady = a[1] - d[1];
    let bdy = b[1] - d[1];
    let cdy = c[1] - d[1];
    let adz = a[2] - d[2];
    let bdz = b[2] - d[2];
    let cdz = c[2] - d[2];
    let bdxcdy = bdx * cdy;
    let cdxbdy = cdx * bdy;
    let cdxady = cdx * ady;
    let adxcdy = adx * cdy;
    let adxbdy = adx * bdy;
    let bdxady = bdx * ady;
    let det = adz * (bdxcdy - cdxbdy) + bdz * (cdxady - adxcdy) + cdz * (adxbdy - bdxady);
    let permanent = (bdxcdy.abs() + cdxbdy.abs()) * adz.abs()
        + (cdxady.abs() + adxcdy.abs()) * bdz.abs()
        + (adxbdy.abs() + bdxady.abs()) * cdz.abs();
    let bound = O3D_ERR * permanent;
    // det here is det[a−d, b−d, c−d] = −det[b−a, c−a, d−a].
    if det > bound {
        return Ordering::Less;
    }
    if -det > bound {
        return Ordering::Greater;
    }
    orient3d_exact(a, b, c, d)
}

fn min_exponent(vals: &[f64]) -> i32 {
    vals.iter()
        .filter(|v| **v != 0.0)
        .map(|v| {
            let (_, e, _) = v.integer_decode();
            e as i32
        })
        .min()
        .unwrap_or(0)
}

fn fixed(x: f64, emin: i32) -> BigInt {
    if x == 0.0 {
        return BigInt::zero();
    }
    let (m, e, s) = x.integer_decode();
    let v = BigInt::from(m) << ((e as i32 - emin) as usize);
    if s < 0 {
        -v
    } else {
        v
    }
}

fn sign_of(v: &BigInt) -> Ordering {
    if v.is_positive() {
        Ordering::Greater
    } else if v.is_negative() {
        Ordering::Less
    } else {
        Ordering::Equal
    }
}

pub fn orient2d_exact(a: &[f64], b: &[f64], c: &[f64]) -> Ordering {
    let all = [a[0], a[1], b[0], b[1], c[0], c[1]];
    let e = min_exponent(&all);
    let f: Vec<BigInt> = all.iter().map(|&x| fixed(x, e)).collect();
    let (bx, by) = (&f[2] - &f[0], &f[3] - &f[1]);
    let (cx, cy) = (&f[4] - &f[0], &f[5] - &f[1]);
    sign_of(&(bx * cy - by * cx))
}

pub fn orient3d_exact(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> Ordering {
    let all = [a[0], a[1], a[2], b[0], b[1], b[2], c[0], c[1], c[2], d[0], d[1], d[2]];
    let e = min_exponent(&all);
    let f: Vec<BigInt> = all.iter().map(|&x| fixed(x, e)).collect();
    let u: Vec<BigInt> = (0..3).map(|i| &f[3 + i] - &f[i]).collect();
    let v: Vec<BigInt> = (0..3).map(|i| &f[6 + i] - &f[i]).collect();
    let w: Vec<BigInt> = (0..3).map(|i| &f[9 + i] - &f[i]).collect();
    let det = &u[0] * (&v[1] * &w[2] - &v[2] * &w[1]) - &u[1] * (&v[0] * &w[2] - &v[2] * &w[0])
        + &u[2] * (&v[0] * &w[1] - &v[1] * &w[0]);
    sign_of(&det)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn orient2d_basic() {
        assert_eq!(orient2d(&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]), Ordering::Greater);
        assert_eq!(orient2d(&[0.0, 0.0], &[0.0, 1.0], &[1.0, 0.0]), Ordering::Less);
        assert_eq!(orient2d(&[0.0, 0.0], &[1.0, 1.0], &[2.0, 2.0]), Ordering::Equal);
    }

    #[test]
    fn orient2d_near_collinear_is_exact() {
        // 0.1 + 0.2 is not 0.3 in binary; the exact answer is nonzero.
        let a = [0.1, 0.1];
        let b = [0.2, 0.2];
        let c = [0.1 + 0.2, 0.3];
        let exact = orient2d_exact(&a, &b, &c);
        assert_eq!(orient2d(&a, &b, &c), exact);
        assert_ne!(exact, Ordering::Equal);
    }

    #[test]
    fn orient3d_basic() {
        let o = [0.0, 0.0, 0.0];
        let x = [1.0, 0.0, 0.0];
        let y = [0.0, 1.0, 0.0];
        assert_eq!(orient3d(&o, &x, &y, &[0.0, 0.0, 1.0]), Ordering::Greater);
        assert_eq!(orient3d(&o, &x, &y, &[0.0, 0.0, -1.0]), Ordering::Less);
        assert_eq!(orient3d(&o, &x, &y, &[0.3, 0.7, 0.0]), Ordering::Equal);
    }

    proptest! {
        #[test]
        fn filter_agrees_with_exact(p in proptest::collection::vec(-1.0f64..1.0, 12)) {
            prop_assert_eq!(
                orient3d(&p[0..3], &p[3..6], &p[6..9], &p[9..12]),
                orient3d_exact(&p[0..3], &p[3..6], &p[6..9], &p[9..12])
            );
            prop_assert_eq!(orient2d(&p[0..2], &p[2..4], &p[4..6]), orient2d_exact(&p[0..2], &p[2..4], &p[4..6]));
        }

        #[test]
        fn coplanar_by_construction(s in -1.0f64..1.0, t in -1.0f64..1.0) {
            // Points on z = 0 with exactly representable coordinates.
            let a = [0.0, 0.0, 0.0];
            let b = [1.0, 0.0, 0.0];
            let c = [0.0, 1.0, 0.0];
            prop_assert_eq!(orient3d(&a, &b, &c, &[s, t, 0.0]), Ordering::Equal);
        }
    }
}
