use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid LJSD: {0}")]
    InvalidLjsd(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate activation: E[z sigma(z)] = 0, so rho = 0 and omega is undefined")]
    DegenerateActivation,

    #[error("self-consistent solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { residual: f64, iterations: usize },

    #[error("self-consistent equation has no positive root: {0}")]
    NoRoot(String),

    #[error("interpolation threshold: gamma = 0 with phi = psi = {phi} makes the variance diverge")]
    InterpolationThreshold { phi: f64 },

    #[error("training and test scales differ (s = {s}, s* = {s_star})")]
    UnequalScales { s: f64, s_star: f64 },

    #[error("the two LJSDs do not share a lambda-marginal")]
    MarginalMismatch,

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonConvergence { .. } | Error::NoRoot(_) => 3,
            Error::Io(_) | Error::Csv(_) | Error::Linalg(_) | Error::Consistency(_) => 1,
            _ => 2,
        }
    }
}
