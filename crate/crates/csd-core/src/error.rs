use thiserror::Error;

/// Errors surfaced by the geometry, reflector, Hessian and dynamics layers.
#[derive(Debug, Error)]
pub enum CsdError {
    /// The constraint Jacobian A(x) lost full column rank (LICQ violated).
    #[error("constraint Jacobian is numerically rank deficient (condition estimate {cond:.3e})")]
    RankDeficientConstraints { cond: f64 },

    /// A retraction could not produce a valid point (e.g. rank-deficient QR
    /// factor on the Stiefel manifold). Usually means the step was too large.
    #[error("degenerate retraction step: {detail}")]
    DegenerateStep { detail: String },

    /// Two tangent objects that must share a base point do not.
    #[error("base point mismatch between tangent-space objects")]
    BaseMismatch,

    /// The gap between the k-th and (k+1)-th eigenvalue closed, so the
    /// unstable subspace is not well defined.
    #[error("eigengap collapse between eigenvalue {k} and {k1}: gap {gap:.3e}")]
    EigengapCollapse { k: usize, k1: usize, gap: f64 },

    /// Transported reflector columns became numerically dependent.
    #[error("reflector transport degeneracy (Gram condition estimate {cond:.3e})")]
    TransportDegeneracy { cond: f64 },

    /// A direction too small to normalize was passed to a Hessian product.
    #[error("direction norm below 1e-14; Hessian-vector product undefined")]
    ZeroDirection,

    /// Two particles of a pair-potential problem (nearly) coincide.
    #[error("particles {i} and {j} coincide (distance {dist:.3e}); energy singular")]
    CoincidentParticles { i: usize, j: usize, dist: f64 },

    /// Not enough usable rows for a rate fit.
    #[error("insufficient data for rate estimation: {rows} usable rows, need at least 20")]
    InsufficientData { rows: usize },

    /// An initial-condition descriptor the problem does not recognize.
    #[error("unknown initial-condition descriptor {0:?}")]
    UnknownDescriptor(String),

    /// A run or operation precondition was violated.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, CsdError>;
