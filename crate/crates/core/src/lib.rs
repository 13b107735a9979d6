//! Guaranteed two-sided eigenvalue bounds for symmetric second-order elliptic
//! operators on polygonal domains in the plane.
//!
//! Upper bounds come from conforming Galerkin eigenvalues. Lower bounds come
//! from a Weinstein-type bound and a Kato-type bound, both fed by a computable
//! bound on the residual of each approximate eigenpair. The residual bound is
//! obtained from an H(div)-conforming flux reconstructed by solving small
//! mixed problems on vertex patches.
//!
//! Pipeline: [`mesh`] → [`assembly`] → [`eigensolve`] → [`flux`] →
//! [`estimator`] → [`bounds`], orchestrated by [`driver`].

pub mod assembly;
pub mod bounds;
pub mod driver;
pub mod eigensolve;
pub mod error;
pub mod estimator;
pub mod ext;
pub mod fe;
pub mod flux;
pub mod geometry;
pub mod mesh;
pub mod problem;
pub mod quadrature;
pub mod sparse;
pub mod synthetic;

pub use error::{Error, Result};
pub use ext::Ext;
pub use problem::ProblemSpec;
