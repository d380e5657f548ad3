//! Riemannian Gauss-Newton solver for low-rank tensor approximation on the
//! product of rank-1 manifolds, with condition-number diagnostics and a
//! reproducible experiment harness.
//!
//! The crate is organized around five layers:
//!
//! - [`linalg`]: dense SVD-based linear algebra on small matrices;
//! - [`manifold`]: rank-1 points, products, tangent bases and the retraction;
//! - [`cpd`]: the sum-of-rank-1 map, Jacobian, Gauss-Newton step and the
//!   geometric condition number;
//! - [`solver`]: the Gauss-Newton iteration with trace recording;
//! - [`diagnostics`] / [`checks`] / [`experiment`]: perturbation bounds,
//!   property suites, and the seeded experiment harness with file output.

pub mod checks;
pub mod cpd;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod io;
pub mod linalg;
pub mod manifold;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
