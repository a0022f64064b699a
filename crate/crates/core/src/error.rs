use thiserror::Error;

/// Errors produced by the solver, simulators and scenario runner.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument falls outside the documented domain of an operation.
    #[error("rejected input: {0}")]
    InvalidInput(String),

    /// A coefficient map produced a value that breaks a model assumption.
    #[error("model error in `{map}`: {reason}")]
    Model { map: &'static str, reason: String },

    /// A utility, inverse or control formula was evaluated outside its domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("insurance undefined at t={t}: force of mortality is zero")]
    InsuranceUndefined { t: f64 },

    /// The portfolio first-order condition has no sign change on the admissible bracket.
    #[error("no interior portfolio solution on [{lo}, {hi}]: residuals {f_lo:e} and {f_hi:e}")]
    NoInteriorSolution { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("fixed point iteration did not converge after {iterations} iterations (last change {last:e})")]
    NoConvergence { iterations: usize, last: f64, history: Vec<f64> },

    #[error("all {n_paths} simulated paths were flagged for nonpositive wealth")]
    AllPathsFlagged { n_paths: usize },

    #[error("{}", config_message(*.line, .message))]
    Config { line: Option<usize>, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn config_message(line: Option<usize>, message: &str) -> String {
    match line {
        Some(line) => format!("config error at line {line}: {message}"),
        None => format!("config error: {message}"),
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
