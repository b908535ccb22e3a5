use thiserror::Error;

use crate::explore::LocalityRow;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid group: {0}")]
    InvalidGroup(String),

    #[error("word is not in normal form: {0}")]
    NotNormal(String),

    #[error("invalid coset context: {0}")]
    InvalidCoset(String),

    #[error("invalid graph construction: {0}")]
    InvalidGraph(String),

    #[error("ball of radius {radius} exceeds the vertex cap of {cap}")]
    BallTooLarge { radius: usize, cap: usize },

    #[error("isomorphism search undecided after {steps} steps at radius {radius}")]
    Undecided { radius: usize, steps: u64 },

    #[error("linear solver did not converge: residual {residual:e} after {iterations} iterations")]
    SolverDiverged { residual: f64, iterations: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("bisection does not bracket theta*={theta}: h(0)={h_low}, h(1)={h_high}")]
    NonBracketing { theta: f64, h_low: f64, h_high: f64 },

    #[error("locality experiment stopped after {} rows: {cause}", rows.len())]
    PartialLocality {
        rows: Vec<LocalityRow>,
        cause: Box<Error>,
    },
}

impl Error {
    /// True for outcomes that are not wrong answers but could not be decided.
    pub fn is_inconclusive(&self) -> bool {
        match self {
            Error::Undecided { .. } | Error::SolverDiverged { .. } => true,
            Error::PartialLocality { cause, .. } => cause.is_inconclusive(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
