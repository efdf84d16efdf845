use thiserror::Error;

/// Errors raised by the solver stack.
///
/// Variants are grouped by category; [`Error::category`] gives the coarse
/// class used by the command-line front end to pick an exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("coefficient `{coefficient}` has shape {got_rows}x{got_cols}, expected {expected_rows}x{expected_cols}")]
    Shape {
        coefficient: &'static str,
        expected_rows: usize,
        expected_cols: usize,
        got_rows: usize,
        got_cols: usize,
    },

    #[error("coefficient `{coefficient}` has a non-finite entry at node {node}")]
    NonFinite { coefficient: &'static str, node: usize },

    #[error("coefficient provider failed at node {node}: {message}")]
    Provider { node: usize, message: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("assumption violated: {}", .0.join("; "))]
    Assumption(Vec<String>),

    #[error("{matrix} is near-singular at node {node} (min eigenvalue {min_eigenvalue:e})")]
    Singular {
        matrix: &'static str,
        node: usize,
        min_eigenvalue: f64,
    },

    #[error("{matrix} left the positive semidefinite cone at node {node} (min eigenvalue {min_eigenvalue:e})")]
    MonitorBreach {
        matrix: &'static str,
        node: usize,
        min_eigenvalue: f64,
    },

    #[error("simulation produced a non-finite state on path {path} at node {node}")]
    Simulation { path: usize, node: usize },

    #[error("degenerate instance: {0}")]
    Degenerate(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse error classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Validation,
    Singularity,
    Monitor,
    Io,
}

impl Error {
    pub fn category(&self) -> Category {
        match self {
            Error::Shape { .. }
            | Error::NonFinite { .. }
            | Error::Provider { .. }
            | Error::Invalid(_)
            | Error::Assumption(_)
            | Error::Parse(_) => Category::Validation,
            Error::Singular { .. } | Error::Degenerate(_) => Category::Singularity,
            Error::MonitorBreach { .. } | Error::Simulation { .. } => Category::Monitor,
            Error::Io(_) => Category::Io,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
