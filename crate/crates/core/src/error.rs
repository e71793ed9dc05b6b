use nalgebra::DVector;

/// Errors raised by model construction, the backward solve, simulation and sampling.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("observation matrix has rank {rank}, expected full row rank {rows}")]
    RankDeficient { rank: usize, rows: usize },

    #[error("M-dagger lost positive definiteness at knot {knot} (t = {time})")]
    NotPositiveDefinite { knot: usize, time: f64 },

    #[error("non-finite state at knot {knot}: {state:?}")]
    NonFiniteState { knot: usize, state: Vec<f64> },

    #[error("log-likelihood ratio is not finite")]
    NonFiniteLogPsi,

    #[error("innovations and guiding data live on different grids")]
    GridMismatch,

    #[error("{non_finite} of the first {checked} proposals produced a non-finite log-likelihood ratio")]
    DegenerateChain { non_finite: usize, checked: usize },

    #[error("no grid knots fall inside the requested window")]
    EmptyWindow,

    #[error("importance density is degenerate (variance {variance:e})")]
    DegenerateImportanceDensity { variance: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn non_finite(knot: usize, state: &DVector<f64>) -> Self {
        Error::NonFiniteState {
            knot,
            state: state.iter().copied().collect(),
        }
    }

    /// True for failures caused by the numerics rather than by malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::NonFiniteState { .. }
                | Error::NonFiniteLogPsi
                | Error::DegenerateChain { .. }
                | Error::DegenerateImportanceDensity { .. }
                | Error::EmptyWindow
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
