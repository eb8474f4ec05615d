//! The p-Laplacian with respect to a finite Borel measure on planar domains.
//!
//! Weak problems of the form
//! `∫ |∇u|^{p-2} ∇u·∇φ dx = ∫ φ f dμ` and the eigenvalue problem
//! `-Δ_{p,μ} u = λ |u|^{p-2} u` are discretized with P1 elements on
//! structured triangulations; the measure `μ` is a finite list of atoms
//! (Lebesgue quadrature, natural self-similar measures, or a log-Cantor
//! tree measure). The [`analysis`] module holds the empirical regularity
//! and growth checks.

pub mod analysis;
pub mod eigen;
pub mod error;
pub mod measure;
pub mod mesh;
pub mod numeric;
pub mod params;
pub mod pde;
mod sparse;

pub use error::{Error, Result};
pub use mesh::{build_uniform_mesh, dirichlet_energy, gradient, Domain, FeFunction, Mesh, Point, Polygon};
pub use params::SolverParams;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
