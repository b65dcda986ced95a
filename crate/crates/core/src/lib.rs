//! Numerical machinery for asymptotic gluing of constant-mean-curvature
//! shear-free hyperboloidal initial data.
//!
//! The crate builds the spliced manifold, metric, and momentum tensor for a
//! one-parameter family of neck gluings of a hyperboloidal seed data set,
//! runs the conformal-method elliptic solves (vector Laplacian and
//! Lichnerowicz equation) on the glued geometry, and measures every testable
//! identity, estimate, and convergence rate along the way.

pub mod elliptic;
pub mod error;
pub mod grid;
pub mod halfspace;
pub mod linalg;
pub mod models;
pub mod norms;
pub mod seed;
pub mod ops;
pub mod pipeline;
pub mod shear;
pub mod splicing;
pub mod tensor;

pub use error::{Error, Result};
