use thiserror::Error;

/// Errors raised by geometry construction, the lattice, the solver and the checks.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum RbsdeError {
    #[error("no (eps, kappa) within budget gives a positive core margin (best margin {best_margin:e}, eps {eps}, kappa {kappa})")]
    ParameterSearchFailed {
        best_margin: f64,
        eps: f64,
        kappa: f64,
    },

    #[error(
        "point at distance {distance} from the domain lies outside the uniqueness band (R0 = {r0})"
    )]
    OutsideUniquenessBand { distance: f64, r0: f64 },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("gradient norm {norm:e} below floor {floor:e}")]
    DegenerateGradient { norm: f64, floor: f64 },

    #[error(
        "sampled verification failed with violation {violation:e} at y = {y:?}, y' = {y_prime:?}"
    )]
    VerificationFailed {
        violation: f64,
        y: Vec<f64>,
        y_prime: Vec<f64>,
    },

    #[error("boundary sampler produced no points")]
    EmptyBoundarySample,

    #[error("smallness case not applicable: {0}")]
    CaseInapplicable(String),

    #[error("domain is not strictly star-shaped about the origin (margin {margin:e})")]
    NotStarShaped { margin: f64 },

    #[error("infeasible specification: {0}")]
    InfeasibleSpec(String),

    #[error("evaluation on the symmetry axis")]
    AxisDegeneracy,

    #[error("node {node} at step {step} is missing a child")]
    MissingChild { step: usize, node: usize },

    #[error("one-step iteration diverged for n = {n} at step {step}, node {node} (residual {residual:e})")]
    PicardDivergence {
        n: u32,
        step: usize,
        node: usize,
        residual: f64,
    },

    #[error("terminal value at node {node} lies outside the closed domain (phi = {phi:e})")]
    TerminalOutsideDomain { node: usize, phi: f64 },

    #[error("lattice mismatch: {0}")]
    LatticeMismatch(String),

    #[error("schedule exhausted before reaching stop tolerance {stop_tol:e} (last difference {last_diff:e})")]
    ScheduleExhausted { last_diff: f64, stop_tol: f64 },

    #[error("path-dependent depth {0} is not supported (at most 2)")]
    UnsupportedDepth(usize),

    #[error("insufficient data: need {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, RbsdeError>;
