use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unsupported lattice dimension {0} (expected 2 or 3)")]
    Dimension(usize),
    #[error("linear size {0} too small (need L >= 2)")]
    Size(usize),
    #[error("{kind} index {index} out of range (count {count})")]
    OutOfRange {
        kind: &'static str,
        index: usize,
        count: usize,
    },
    #[error("sites {0} and {1} are not nearest neighbours")]
    NotAdjacent(usize, usize),
    #[error("matter particles come in pairs; got odd N = {0}")]
    OddParticleNumber(usize),
    #[error("cannot place {requested} particles on {sites} sites")]
    Capacity { requested: usize, sites: usize },
    #[error("configuration carries matter; dual mapping needs closed loops only")]
    MatterPresent,
    #[error("operation requires a 2D lattice")]
    NeedsSquareLattice,
    #[error("invalid argument: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
