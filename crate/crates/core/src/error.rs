use thiserror::Error;

/// Failures raised by the solvers, parsers and pipeline stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no guided solution for d = {diameter_um} um at lambda = {wavelength_um} um")]
    NoGuidedSolution { diameter_um: f64, wavelength_um: f64 },

    #[error("root refinement did not converge: {0}")]
    Convergence(String),

    #[error("vertical mode of order {order} is below cutoff (V = {v:.4})")]
    BelowCutoff { order: u8, v: f64 },

    #[error("{value} outside sampled range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("no defect mode found: {0}")]
    NoDefectMode(String),

    #[error("eigensolver failed: {reason} (max residual {residual:.3e})")]
    Eigen { reason: String, residual: f64 },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("insufficient fringes: found {found} extrema, need at least 3")]
    InsufficientFringes { found: usize },

    #[error("non-physical fringe contrast {0:.4}")]
    NonPhysicalContrast(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by malformed or out-of-contract inputs, as
    /// opposed to numerical failures inside a solver.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::OutOfRange { .. }
                | Error::Parse { .. }
                | Error::Json(_)
                | Error::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
