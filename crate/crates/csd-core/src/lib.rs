//! Saddle-point search on equality-constrained manifolds.
//!
//! Implements the discrete constrained saddle dynamics (CSD) and their
//! heavy-ball momentum variants (MCSD) for locating index-k saddle points,
//! with two ways of tracking the unstable subspace: an exact eigensolve per
//! iterate, or a single Euler step of the Householder-reflector dynamics
//! followed by a nearest-point projection back onto the reflector manifold.
//!
//! The crate is organized along the pipeline:
//! - [`geometry`]: embedded manifolds, tangent projection, retraction,
//!   vector transport;
//! - [`reflector`]: the reflector R = I - 2VV', its manifold, Euler update,
//!   nearest-point projection and operator transport;
//! - [`hessian`]: Riemannian gradients, Hessian-vector products and the
//!   exact unstable eigensolver;
//! - [`dynamics`]: the four discrete schemes, heavy-ball parameter theory
//!   and empirical rate estimation;
//! - [`problems`]: the benchmark energies (sphere/cylinder polynomials,
//!   Thomson, Rayleigh quotient on Stiefel, Gross-Pitaevskii functional).

pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod hessian;
pub mod problems;
pub mod reflector;

pub use dynamics::{
    estimate_rate, hb_block_eigenvalues, optimal_heavy_ball, predicted_rate, run, EigMode,
    ErrorMetric, Method, RunConfig, RunRecord, Status,
};
pub use error::{CsdError, Result};
pub use geometry::{
    distance, retract, tangent_basis, tangent_project, transport, Manifold, ManifoldKind, Point,
    SpectralBounds, TangentVector,
};
pub use hessian::{exact_unstable_eigs, riemannian_grad, saddle_index, HessianOracle};
pub use reflector::{euler_reflector_step, orth, transport_reflector, Reflector, SymOperator};

