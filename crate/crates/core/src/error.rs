use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),
    #[error("point outside chart domain: {0}")]
    Domain(String),
    #[error("degenerate geometry: {0}")]
    Geometry(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("multiplicity pattern changes inside the patch at node ({0}, {1})")]
    PatchSplit(usize, usize),
    #[error("not applicable: {0}")]
    NotApplicable(String),
}

pub type Result<T> = std::result::Result<T, Error>;
