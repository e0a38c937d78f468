use rbsde::RbsdeError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("geometry inadmissible: {0}")]
    Geometry(String),
    #[error("solver did not converge: {0}")]
    Solver(String),
    #[error("{failed} gated check(s) failed")]
    ChecksFailed { failed: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::ChecksFailed { .. } => 1,
            Self::Config(_) | Self::Io(_) => 2,
            Self::Geometry(_) => 3,
            Self::Solver(_) => 4,
        }
    }

    /// Classifies a library error raised while building or solving.
    pub fn from_solver(e: RbsdeError) -> Self {
        match e {
            RbsdeError::PicardDivergence { .. }
            | RbsdeError::NonConvergence { .. }
            | RbsdeError::ScheduleExhausted { .. } => Self::Solver(e.to_string()),
            RbsdeError::NotStarShaped { .. }
            | RbsdeError::VerificationFailed { .. }
            | RbsdeError::ParameterSearchFailed { .. }
            | RbsdeError::DegenerateGradient { .. }
            | RbsdeError::EmptyBoundarySample => Self::Geometry(e.to_string()),
            _ => Self::Config(e.to_string()),
        }
    }
}
