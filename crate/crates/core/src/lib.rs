//! Weak and strong p-th moments of finitely supported random vectors.
//!
//! A random vector `X` with finite support and a finite direction set `T`
//! define two p-th moment functionals: the *weak* moment
//! `sup_t (E|<t,X>|^p)^{1/p}` and the *strong* moment
//! `(E sup_t |<t,X>|^p)^{1/p}`. For `p >= 2` the strong moment is controlled
//! by the weak one up to the dimensional constant `C_{n,p}`, and this crate
//! computes both sides exactly, reconstructs the comparison as a numerical
//! certificate chain (Hoelder reweighting, Hadamard-power rank expansion,
//! covariance bound), and searches for extremal instances.
//!
//! Modules:
//! - [`law`]: discrete laws, direction sets, and exact moment computation.
//! - [`zp`]: the dual norm `||s||_{Z_p(X)}` and its p-th moment.
//! - [`hadamard`]: rank-factored matrices, Hadamard powers, and the multiset
//!   expansion certifying `rank(A^{o m}) <= C(n+m-1, m)`.
//! - [`certificate`]: the step-by-step inequality chain with slack reporting.
//! - [`constants`]: closed-form comparison constants, sphere moments, and
//!   p-summing bounds.
//! - [`search`]: seeded random-restart search for worst-case moment ratios.

pub mod certificate;
pub mod constants;
pub mod error;
pub mod hadamard;
pub mod law;
mod numeric;
pub mod search;
pub mod zp;

pub use error::{Error, Result};
pub use law::{DirectionSet, DiscreteVectorLaw, MomentInstance, RatioReport};

/// Centralized numerical tolerances. One convention per concern, shared
/// across modules so certificates cannot contradict each other.
pub mod tol {
    /// Probabilities must sum to 1 within this bound before renormalization.
    pub const PROB_SUM: f64 = 1e-12;

    /// Support points closer than this in sup-norm are merged into one atom.
    pub const ATOM_MERGE: f64 = 1e-12;

    /// Numerical rank: count singular values above `RANK_RTOL * sigma_max`.
    pub const RANK_RTOL: f64 = 1e-10;

    /// Pseudo-inverse: eigenvalues below `PINV_RTOL * lambda_max` are zero.
    pub const PINV_RTOL: f64 = 1e-12;

    /// A vector counts as lying in a span when its projection residual is
    /// below `SPAN_RESIDUAL_RTOL * |v|`.
    pub const SPAN_RESIDUAL_RTOL: f64 = 1e-9;

    /// Relative Frobenius error allowed when a factorization is checked
    /// against the matrix it claims to reproduce.
    pub const FACTOR_REL: f64 = 1e-10;

    /// Span basis vectors must be orthonormal within this bound.
    pub const ORTHONORMAL: f64 = 1e-10;

    /// Default certificate slack: a step passes when
    /// `rhs - lhs >= -STEP_SLACK_RTOL * max(|lhs|, |rhs|, 1)`.
    pub const STEP_SLACK_RTOL: f64 = 1e-9;

    /// Exact algebraic identities inside certificates are checked to this
    /// relative bound.
    pub const IDENTITY_REL: f64 = 1e-12;

    /// Dual-norm ascent stops when the relative objective change drops
    /// below this threshold.
    pub const SOLVER_REL_CHANGE: f64 = 1e-10;

    /// Dual-norm restarts must agree to this relative spread.
    pub const SOLVER_AGREEMENT: f64 = 1e-6;

    /// Above this exponent, p-th power accumulation switches to the
    /// max-rescaled (log-domain) form to avoid overflow.
    pub const LOG_DOMAIN_P: f64 = 50.0;

    /// Hadamard expansion switches to log-magnitude+sign arithmetic when
    /// `m * ln(max_entry)` exceeds this bound.
    pub const LOG_EXPANSION: f64 = 600.0;
}
