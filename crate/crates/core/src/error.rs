//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// One violated scalar inequality from a certificate check.
#[derive(Debug, Clone, PartialEq)]
pub struct CertViolation {
    /// Zero-based mode index.
    pub mode: usize,
    /// Eigenvalue at which the inequality was evaluated.
    pub eigenvalue: f64,
    /// Name of the inequality family.
    pub inequality: &'static str,
    /// Left-hand side value; the check requires it strictly negative.
    pub lhs: f64,
}

impl std::fmt::Display for CertViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} at mode {}, lambda = {}: lhs = {:.6e} (must be < 0)",
            self.inequality,
            self.mode + 1,
            self.eigenvalue,
            self.lhs
        )
    }
}

#[derive(Debug, Error)]
pub enum Error {
    // ---- graph construction ----
    #[error("weights not symmetric at ({row},{col}): |a_ij - a_ji| = {delta:e}")]
    AsymmetricWeights { row: usize, col: usize, delta: f64 },
    #[error("negative weight at ({row},{col}): {value}")]
    NegativeWeight { row: usize, col: usize, value: f64 },
    #[error("nonzero diagonal at index {index}: {value} (self-loops are not allowed)")]
    NonzeroDiagonal { index: usize, value: f64 },
    #[error("need at least 2 agents, got {n}")]
    TooFewAgents { n: usize },
    #[error("graph is disconnected")]
    Disconnected,

    // ---- spectral ----
    #[error("Jacobi eigendecomposition did not converge within {sweeps} sweeps")]
    ConvergenceFailure { sweeps: usize },
    #[error(
        "sqrt(lambda_{i}/lambda_{j}) = {value} has no rational approximation with \
         denominator <= {max_den} within {tol:e} (best error {best_error:e})"
    )]
    RatioNotRational {
        i: usize,
        j: usize,
        value: f64,
        best_error: f64,
        tol: f64,
        max_den: u64,
    },
    #[error("missing rational certificate for eigenvalue pair ({i},{j})")]
    MissingRatioCertificate { i: usize, j: usize },
    #[error("topology {mode} violates the rational-ratio condition: sqrt(lambda_{i}/lambda_{j}) = {value}")]
    ConditionAViolated {
        mode: usize,
        i: usize,
        j: usize,
        value: f64,
    },
    #[error("no topology in the set has all-distinct Laplacian eigenvalues")]
    ConditionBViolated,
    #[error("agent-count mismatch: expected {expected}, found {found}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("a topology set needs at least 2 topologies, got {found}")]
    TooFewTopologies { found: usize },
    #[error("integer overflow while combining rational periods")]
    RationalOverflow,

    // ---- dynamics ----
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("fluctuation input has nonzero mean: |1' z| = {sum:e}")]
    NonzeroMeanInput { sum: f64 },
    #[error("step size must be positive, got {h}")]
    NonpositiveStep { h: f64 },
    #[error("switch times not strictly increasing at index {index}")]
    UnorderedSwitchTimes { index: usize },
    #[error("unknown mode index {mode} (set has {modes} topologies)")]
    UnknownMode { mode: usize, modes: usize },

    // ---- switching ----
    #[error(
        "dwell-base condition violated: tau_hat_max = {tau_hat_max} not in (0, {bound}) \
             (slack {slack:e})"
    )]
    Condition22Violated {
        tau_hat_max: f64,
        bound: f64,
        slack: f64,
    },
    #[error(
        "dwell lower-bound condition violated for mode {mode}: dwell {dwell} must exceed \
             {bound} (slack {slack:e})"
    )]
    Condition23Violated {
        mode: usize,
        dwell: f64,
        bound: f64,
        slack: f64,
    },
    #[error(
        "spectral-bound condition violated: alpha = {alpha} must exceed xi = {xi} \
             (slack {slack:e})"
    )]
    Condition24Violated { alpha: f64, xi: f64, slack: f64 },
    #[error(
        "no feasible switching parameters for tau_hat_max = {target_tau_hat} \
             (tightest slack {tightest_slack:e})"
    )]
    NoFeasibleParams {
        target_tau_hat: f64,
        tightest_slack: f64,
    },
    #[error("certificate failed: {} inequalities violated (first: {})", .violations.len(), .violations[0])]
    CertificateFailed { violations: Vec<CertViolation> },
    #[error("property violated: {detail}")]
    PropertyViolated { detail: String },
    #[error("switching signal repeats mode {mode} in consecutive dwell intervals")]
    RepeatedConsecutiveMode { mode: usize },

    // ---- metric ----
    #[error("agent index {index} out of range (n = {n})")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("degenerate spectrum: smallest positive eigenvalue {lambda2} is not positive")]
    DegenerateSpectrum { lambda2: f64 },

    // ---- estimator ----
    #[error("estimator exponent {name} = {value} must be a positive odd integer")]
    NonOddExponents { name: &'static str, value: u32 },
    #[error("estimator exponents must satisfy {relation}")]
    BadExponentOrder { relation: &'static str },
    #[error("communication weight at ({row},{col}) is {value}; entries must be 0 or 1")]
    NonBinaryWeight { row: usize, col: usize, value: f64 },

    // ---- orchestrator ----
    #[error("no alternative topology with distinct eigenvalues is available")]
    NoDistinctEigTopology,
}
