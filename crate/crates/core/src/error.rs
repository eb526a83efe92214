use crate::lattice::PairState;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid chain configuration: {0}")]
    InvalidConfig(String),

    #[error("site {site} is not on the pair lattice of a chain with s = {s}")]
    InvalidSite { site: PairState, s: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("diagonalization failed: {0}")]
    Diagonalization(String),

    #[error(
        "trajectory {index}: step subdivision exceeded {max_depth} levels at t = {time} on site {site}"
    )]
    SubdivisionLimit {
        index: u64,
        time: f64,
        site: PairState,
        max_depth: u32,
    },

    #[error("no trajectory visits {target} within (0, {horizon})")]
    NoHits { target: PairState, horizon: f64 },

    #[error("malformed trajectory record at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
