use thiserror::Error;

/// Errors raised by the decomposition, ensemble and analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty matrix")]
    EmptyMatrix,

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("matrix is not rectangular diagonal: entry ({row}, {col}) is nonzero")]
    NotDiagonal { row: usize, col: usize },

    #[error("zero diagonal entry at index {index}; truncate to rank first")]
    ZeroDiagonal { index: usize },

    #[error("matrix not symmetric: relative asymmetry {asymmetry:e}")]
    NotSymmetric { asymmetry: f64 },

    #[error("basis inconsistent with S: relative residual {residual:e}")]
    BasisInconsistent { residual: f64 },

    #[error("ensemble too small: {members} member(s), need at least 2")]
    EnsembleTooSmall { members: usize },

    #[error("perturbations not centered: relative row sum {row_sum:e} in row {row}")]
    NotCentered { row: usize, row_sum: f64 },

    #[error("R not positive definite")]
    RNotPositiveDefinite,

    #[error("innovation covariance not positive definite")]
    InnovationNotPositiveDefinite,

    #[error("shape mismatch for {what}: expected {expected}, got {found}")]
    Shape {
        what: &'static str,
        expected: String,
        found: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_error(
    what: &'static str,
    expected: (usize, usize),
    found: (usize, usize),
) -> Error {
    Error::Shape {
        what,
        expected: format!("{}x{}", expected.0, expected.1),
        found: format!("{}x{}", found.0, found.1),
    }
}
