//! Explicit nonnegative factorizations of slack matrices.
//!
//! The crate builds small nonnegative factorizations `M = T U` of slack
//! matrices for random polytopes (sphere and ball models) and for cyclic
//! polygons, and provides exact arithmetic for a matrix whose rank and
//! nonnegative rank are far apart.

pub mod caps;
pub mod cyclic;
pub mod demo;
pub mod factorization;
pub mod geometry;
pub mod hull;
pub mod io;
pub mod lampshade;
pub mod linalg;
pub mod lp;
pub mod nmf;
pub mod predicates;
pub mod random;
pub mod rng;
pub mod separation;
pub mod slack;
pub mod sphere;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use factorization::{FactorBlock, NonnegFactorization, Provenance, VerifyReport};
pub use geometry::{Facet, Hyperplane, Point, Polytope, TOL_GEOM};

/// Maps `f` over `items`, in parallel when the `parallel` feature is on. Output order follows input order.
pub(crate) fn par_map<I, O, F>(items: &[I], f: F) -> Vec<O>
where
    I: Sync,
    O: Send,
    F: Fn(&I) -> O + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}
