use thiserror::Error;

/// Errors produced across the crate.
///
/// Typed refusals are part of the contract: operations outside a regime or a
/// system's domain return an error instead of silently producing numbers.
#[derive(Debug, Error)]
pub enum Error {
    /// A raw parameter violates its domain (`m > 1`, `0 < p < 1`, tolerances
    /// positive, and so on).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// `sigma` at or below `2(1-p)/(m-1)`, where the exponent algebra
    /// degenerates (`g <= 0`).
    #[error("sigma = {sigma} is at or below the admissible lower bound {lower} = 2(1-p)/(m-1)")]
    SigmaOutOfRange { sigma: f64, lower: f64 },

    /// `m + p = 2` exactly. The value is representable but none of the phase
    /// systems apply; callers get a typed refusal instead of NaN algebra.
    #[error("m + p = 2: the critical regime is represented but not analyzed")]
    CriticalRegime,

    /// A system was requested in a regime where its change of variables is
    /// not defined.
    #[error("system {system} is not defined in the {regime} regime")]
    RegimeMismatch {
        system: &'static str,
        regime: &'static str,
    },

    /// Singular input to a transform (for example `xi <= 0` or `f <= 0` where
    /// a fractional power is taken).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// Linearization was requested at a state that does not annihilate the
    /// vector field.
    #[error("not a critical point: field residual {residual:.3e} exceeds {tol:.1e}")]
    NotACriticalPoint { residual: f64, tol: f64 },

    /// The critical point carries no local profile behavior.
    #[error("critical point carries no profile behavior")]
    NoProfileBehavior,

    /// The point's local analysis is asymptotic only; no polynomial chart is
    /// available, so there is no matrix to report.
    #[error("no linearization chart is available for this point")]
    NoChart,

    /// Quadratic coefficient tensor not symmetric in its lower indices.
    #[error("quadratic tensor is not symmetric in its lower index pair")]
    AsymmetricTensor,

    /// An invariant needed for the sign-based portrait classification is too
    /// close to zero to call.
    #[error("sign classification is degenerate: {0} is within tolerance of zero")]
    DegenerateSigns(&'static str),

    /// The orbit lies in an invariant coordinate plane, so the inverse
    /// variable change back to a profile does not exist.
    #[error("orbit lies in an invariant plane and carries no profile")]
    NonInvertibleOrbit,

    /// The profile never develops an interface (no decay to zero in range).
    #[error("no interface: {0}")]
    NoInterface(String),

    /// An interface equation was checked against a profile whose contact
    /// exponent makes the required one-sided limit degenerate (0 or infinity).
    #[error("interface type mismatch: {0}")]
    WrongInterfaceType(String),

    /// The profile crossed zero inside the domain while a nonnegative profile
    /// was required.
    #[error("profile crossed zero at xi = {xi1:.12e}")]
    NegativeF { xi1: f64 },

    /// The integrator hit its step budget.
    #[error("step limit {0} exceeded")]
    StepLimitExceeded(usize),

    /// Phase variables grew past the escape threshold without matching any
    /// declared escape classification.
    #[error("phase variables blew up (|y| = {0:.3e}) without a matching escape classification")]
    BlowupInPhaseVariables(f64),

    /// Irrecoverable integrator failure (step size underflow and similar).
    #[error("integration failed: {0}")]
    IntegrationFailure(String),

    /// A shooting bracket whose endpoints do not straddle the target
    /// behaviors.
    #[error("invalid bracket: {0}")]
    BracketInvalid(String),

    /// A classification that could not be decided within budget.
    #[error("undecided: {0}")]
    Undecided(String),

    /// Operation outside the supported scope for this system or point.
    #[error("unsupported: {0}")]
    Unsupported(&'static str),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
