use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Constraint family of the time-based or path-based LP, used to report
/// which group of rows made a problem infeasible.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintFamily {
    Endpoints,
    Monotonicity,
    Feedrate,
    Acceleration,
    Jerk,
    ContourError,
    Nonnegativity,
    Unknown,
}

impl std::fmt::Display for ConstraintFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            ConstraintFamily::Endpoints => "endpoints",
            ConstraintFamily::Monotonicity => "monotonicity",
            ConstraintFamily::Feedrate => "feedrate",
            ConstraintFamily::Acceleration => "acceleration",
            ConstraintFamily::Jerk => "jerk",
            ConstraintFamily::ContourError => "contour-error",
            ConstraintFamily::Nonnegativity => "nonnegativity",
            ConstraintFamily::Unknown => "unknown",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} = {value} is outside its domain [{lo}, {hi}]")]
    Domain {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("degenerate geometry: {0}")]
    Geometry(String),
    #[error("rank deficient: {0}")]
    RankDeficient(String),
    #[error("denominator vanishes at z = 1 (|den(1)| = {0:e}); DC gain is ill-conditioned")]
    IllConditionedDc(f64),
    #[error("operator of size {size}x{size} exceeds the configured cap of {cap} rows")]
    MemoryCap { size: usize, cap: usize },
    #[error("linear program infeasible (binding family: {family})")]
    Infeasible { family: ConstraintFamily },
    #[error("linear program unbounded")]
    Unbounded,
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("path cannot be traversed: {0}")]
    DegenerateStop(String),
    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}
