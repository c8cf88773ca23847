use thiserror::Error;

/// Errors shared by all sandpile operations.
#[derive(Debug, Error)]
pub enum SandpileError {
    /// The step budget ran out before the configuration stabilized.
    ///
    /// Signals either a budget that is too small for the instance, or a
    /// rule that cannot make progress (p-toppling with `p = 0` on an
    /// unstable configuration).
    #[error("step budget exhausted after {steps} topplings (budget {budget})")]
    BudgetExceeded { steps: u64, budget: u64 },

    /// The absorption solver found more reachable states than its cap allows.
    #[error("reachable state space too large ({states} states, cap {cap})")]
    StateSpaceTooLarge { states: usize, cap: usize },

    /// A recurrence solution failed its residual check. The underlying
    /// systems are irreducibly diagonally dominant, so this indicates an
    /// implementation bug rather than an ill-posed instance.
    #[error("recurrence residual {residual:e} exceeds tolerance")]
    SolverDiverged { residual: f64 },

    /// A dense linear system had no unique solution.
    #[error("linear system is singular")]
    SingularSystem,

    /// A parameter failed validation before any computation started.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The toppling rule does not apply to the configuration's domain
    /// (e.g. a line-only rule on a 2D box).
    #[error("rule {rule} cannot be used on domain {domain}")]
    RuleDomainMismatch { rule: String, domain: String },

    /// The operation requires a stable configuration.
    #[error("operation requires a stable configuration")]
    UnstableInput,
}

pub type Result<T> = std::result::Result<T, SandpileError>;
