use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum FncError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("integration produced a non-finite state at step {step}")]
    NonFinite { step: usize },

    #[error("empty trace")]
    EmptyTrace,

    #[error("undamped system: no online regulation resource and zero load damping")]
    UndampedSystem,

    #[error("system inertia is zero for this commitment")]
    ZeroInertia,

    #[error("overdamped (zeta = {zeta}): closed-form nadir inapplicable")]
    Overdamped { zeta: f64 },

    #[error("monotonicity violated: |nadir| at dp = {dp_lo} is {nadir_lo}, at dp = {dp_hi} it is {nadir_hi}")]
    MonotonicityViolated {
        dp_lo: f64,
        nadir_lo: f64,
        dp_hi: f64,
        nadir_hi: f64,
    },

    #[error("linear program {0}")]
    Lp(&'static str),

    #[error("load of {load_mw} MW exceeds total generating capacity of {capacity_mw} MW")]
    LoadExceedsCapacity { load_mw: f64, capacity_mw: f64 },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl FncError {
    /// True for errors caused by bad input rather than by a numerical or
    /// runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            FncError::InvalidParameter(_)
                | FncError::DimensionMismatch { .. }
                | FncError::EmptyTrace
                | FncError::EmptyDataset
                | FncError::Parse { .. }
                | FncError::LoadExceedsCapacity { .. }
        )
    }
}

pub type Result<T, E = FncError> = std::result::Result<T, E>;
