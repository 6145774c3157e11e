use thiserror::Error;

use crate::processes::State;

/// Broad failure class, mapped to process exit codes by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Numerical,
    Infeasible,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Usage => 2,
            ErrorClass::Numerical => 3,
            ErrorClass::Infeasible => 4,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("point outside the potential's domain")]
    OutsideDomain,
    #[error("step size underflow near a singularity at t = {t}")]
    SingularityStall { t: f64, state: Box<State> },
    #[error("non-finite state at t = {t}")]
    NumericalBlowup { t: f64, state: Box<State> },
    #[error("all {n} particles killed in a single step at t = {t}; reduce dt")]
    Extinction { n: usize, t: f64 },
    #[error("infeasible parameters: {0}")]
    Infeasible(String),
    #[error("oracle did not converge (residual {residual:e})")]
    Oracle { residual: f64 },
    #[error("sampling error: {0}")]
    Sampling(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),
    #[error("expression error: {0}")]
    Expr(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Usage(_)
            | Error::Dimension { .. }
            | Error::Config(_)
            | Error::Expr(_)
            | Error::Io(_)
            | Error::OutsideDomain => ErrorClass::Usage,
            Error::Infeasible(_) => ErrorClass::Infeasible,
            Error::SingularityStall { .. }
            | Error::NumericalBlowup { .. }
            | Error::Extinction { .. }
            | Error::Oracle { .. }
            | Error::Sampling(_)
            | Error::InsufficientData(_) => ErrorClass::Numerical,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
