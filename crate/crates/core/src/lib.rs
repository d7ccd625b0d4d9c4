//! C1-smooth isogeometric spline spaces on planar two-patch domains.
//!
//! The crate builds hierarchical spline bases that are globally C1 across a
//! single interface between two bilinearly or bicubically parameterized
//! patches, provided the parameterization admits linear gluing data
//! (analysis-suitable G1). On top of the basis it ships Galerkin assembly for
//! the Poisson equation (Nitsche boundary conditions) and the bilaplacian
//! (penalty boundary conditions), a residual error estimator with Doerfler
//! marking, and the adaptive loop that drives the examples in `twopatch-cli`.

pub mod bspline;
pub mod error;
pub mod geometry;
pub mod adaptivity;
pub mod assembly;
pub mod hierarchy;
pub mod problems;
pub mod space;
pub mod quadrature;

pub use error::{Error, Result};
