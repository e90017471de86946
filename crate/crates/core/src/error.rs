use thiserror::Error;

use crate::cone_geometry::CellIndex;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point lies outside the light cone (|s| - |y| = {0})")]
    OutsideCone(f64),

    #[error("direction is undefined for the zero vector")]
    ZeroVector,

    #[error("unsupported dimension n = {0} (supported: 1..=3)")]
    UnsupportedDimension(usize),

    #[error("bounding box has zero volume")]
    DegenerateBox,

    #[error("cell (ell = {}, j = {}) lies outside the quadrature window", .0.ell, .0.j)]
    CellOutsideWindow(CellIndex),

    #[error("field has zero L^p norm")]
    ZeroField,

    #[error("unknown field kind `{0}`")]
    UnknownField(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("metric `{0}` is not finite")]
    NonFinite(String),

    #[error("malformed field data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
