use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an input value failed. `key` names the offending input.
    #[error("invalid {key}: {reason}")]
    InvalidInput { key: &'static str, reason: String },

    #[error("unknown functional `{0}`")]
    UnknownFunctional(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("unknown trace location: {0}")]
    UnknownLocation(String),

    #[error("singular pivot {pivot:e} at row {row}")]
    SingularPivot { row: usize, pivot: f64 },

    #[error("linear solve stalled at relative residual {residual:e} (target {target:e})")]
    ResidualTooLarge { residual: f64, target: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("degenerate quantity in {what}: {value:e}")]
    Degenerate { what: &'static str, value: f64 },

    #[error("maximum principle violated: contraction factor {0} is not below 1")]
    NotContractive(f64),

    #[error("fixed-point iteration did not converge in {iterations} sweeps (last update {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("quadrature did not reach tolerance {target:e} (estimate {achieved:e})")]
    Quadrature { achieved: f64, target: f64 },
}

impl Error {
    pub(crate) fn invalid(key: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidInput {
            key,
            reason: reason.into(),
        }
    }

    /// True for failures of the numerical machinery rather than of user input.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::SingularPivot { .. }
                | Error::ResidualTooLarge { .. }
                | Error::NonFinite(_)
                | Error::Degenerate { .. }
                | Error::NotContractive(_)
                | Error::NoConvergence { .. }
                | Error::Quadrature { .. }
        )
    }
}
