use thiserror::Error;

use crate::channel::Pair;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid tolerance: {0}")]
    InvalidTolerance(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid data switch matrix: {0}")]
    InvalidSwitchMatrix(String),

    #[error("block {index} has shape {rows}x{cols}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        rows: usize,
        cols: usize,
        expected: String,
    },

    #[error("cannot stack an empty list of blocks")]
    EmptyStack,

    #[error("pair {pair}: null space has dimension {available}, {required} required")]
    InsufficientNullSpace {
        pair: Pair,
        available: usize,
        required: usize,
    },

    #[error("combining set {set:?}: null space has dimension {available}, {required} required")]
    InsufficientCombiningNullSpace {
        set: Vec<usize>,
        available: usize,
        required: usize,
    },

    #[error("row count mismatch: {combinations} combining sets x q={q} != {required} rows")]
    CountMismatch {
        combinations: usize,
        q: usize,
        required: usize,
    },

    #[error("alignment condition violated for pair {pair}: rank {rank} > {max_rank}")]
    AlignmentViolated {
        pair: Pair,
        rank: usize,
        max_rank: i64,
    },

    #[error("residual of {what} is {residual:e}, above {bound:e}")]
    ResidualExceeded {
        what: String,
        residual: f64,
        bound: f64,
    },

    #[error("rank deficiency in {what}: rank {rank}, expected {expected}")]
    RankDeficient {
        what: String,
        rank: usize,
        expected: usize,
    },

    #[error("node {node} needs {required} receive dimensions but has {available}")]
    Undecodable {
        node: usize,
        required: usize,
        available: usize,
    },

    #[error("length mismatch in {what}: got {got}, expected {expected}")]
    LengthMismatch {
        what: String,
        got: usize,
        expected: usize,
    },

    #[error("infeasible: {0}")]
    Infeasible(String),
}
