//! Finite volume element discretization of the conservative steady-state
//! two-sided fractional diffusion equation
//!
//! ```text
//! -d/dx ( K(x) ( γ ₀D_x^{1-β} + (1-γ) ₓD₁^{1-β} ) ) u(x) = f(x),   0 < x < 1,
//! u(0) = u_l,  u(1) = u_r,
//! ```
//!
//! on uniform, power-graded and composite meshes, together with the spectral
//! diagnostics of the resulting Toeplitz-like matrices and a geometric
//! multigrid preconditioner for GMRES.
//!
//! The crate is organised bottom-up:
//!
//! * [`meshgen`] builds the grids.
//! * [`assembly`] produces the coefficient matrix and right-hand side.
//! * [`spectral`] evaluates generating functions and symbols and runs the
//!   eigenvalue/trace-norm checks.
//! * [`multigrid`] builds the V-cycle hierarchy.
//! * [`krylov`] is a full GMRES with optional left preconditioning.
//! * [`bench`] drives the experiment tables.

pub mod assembly;
pub mod bench;
pub mod dense;
pub mod error;
pub mod io;
pub mod krylov;
pub mod meshgen;
pub mod multigrid;
pub mod special;
pub mod spectral;

pub use assembly::{FdeProblem, FveSystem, LinearOperator, SourceQuadrature};
pub use error::{FdeError, Result};
pub use krylov::{gmres, GmresOptions, LinearMap, SolveReport};
pub use meshgen::{BlendCoeffs, BlendMode, CompositeRule, Grid, MeshSpec};
pub use multigrid::{MgHierarchy, SmootherRegion};

