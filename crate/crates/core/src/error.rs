//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension must be at least 1")]
    ZeroDimension,

    #[error("law must carry at least one support point")]
    EmptySupport,

    #[error("points[{index}] has length {found}, expected dimension {expected}")]
    PointLength {
        index: usize,
        found: usize,
        expected: usize,
    },

    #[error("probs[{index}] is negative ({value})")]
    NegativeProbability { index: usize, value: f64 },

    #[error("probs has length {found}, expected one probability per point ({expected})")]
    ProbabilityCount { found: usize, expected: usize },

    #[error("probs sum to {sum}, which differs from 1 by more than {tolerance}")]
    ProbabilitySum { sum: f64, tolerance: f64 },

    #[error("direction set must be nonempty")]
    EmptyDirections,

    #[error("directions[{index}] has length {found}, expected dimension {expected}")]
    DirectionLength {
        index: usize,
        found: usize,
        expected: usize,
    },

    #[error("law dimension {law} does not match direction dimension {directions}")]
    DimensionMismatch { law: usize, directions: usize },

    /// The comparison theorem is stated for p >= 2 only; smaller exponents
    /// are rejected rather than extrapolated.
    #[error("exponent p = {p} is outside the supported range p >= 2")]
    ExponentBelowTwo { p: f64 },

    #[error("p = {p} must be a finite real")]
    ExponentNotFinite { p: f64 },

    /// Weak moment vanished while the strong moment did not. Impossible for
    /// a finite instance; signals numerical corruption upstream.
    #[error("weak moment is 0 but strong moment is {strong}; instance is corrupt")]
    DegenerateRatio { strong: f64 },

    /// Dual-norm restarts failed to certify an agreed optimum: either no
    /// restart reached first-order stationarity, or certified values
    /// disagree. Reported rather than silently averaged.
    #[error("dual-norm restarts fail consensus (spread {spread:.3e} relative, best {best})")]
    SolverStall { spread: f64, best: f64 },

    /// The multiset expansion failed to reproduce the Hadamard power.
    #[error("Hadamard expansion reconstruction off by {rel_err:.3e} relative Frobenius")]
    ReconstructionMismatch { rel_err: f64 },

    #[error("certificate step '{name}' violated: lhs {lhs} exceeds rhs {rhs}")]
    StepViolation { name: String, lhs: f64, rhs: f64 },

    /// Every direction-atom pairing vanishes, so the Hoelder reweighting is
    /// undefined; the inequality chain is vacuous for such instances.
    #[error("every <t_i, x_j> pairing is zero; reweighting is vacuous")]
    AllZeroInstance,

    /// The odd-exponent reduction was asked to handle an even exponent.
    #[error("p = {p} is even; the even-power reduction applies directly")]
    EvenExponent { p: f64 },

    #[error("{quantity} requires {requirement}, got {value}")]
    Domain {
        quantity: &'static str,
        requirement: &'static str,
        value: f64,
    },
}
