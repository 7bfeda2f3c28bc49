use thiserror::Error;

/// Errors raised while parsing a map file.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MapError {
    #[error("map is empty")]
    Empty,
    #[error("row {row} has length {found}, expected {expected}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("unknown tile {ch:?} at row {row}, column {col}")]
    UnknownTile { row: usize, col: usize, ch: char },
    #[error("map has no start tile 'S'")]
    NoStart,
    #[error("map has a second start tile at row {row}, column {col}")]
    MultipleStarts { row: usize, col: usize },
    #[error("map has no goal tile 'G'")]
    NoGoal,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("state {0} is outside the grid")]
    OutOfBounds(String),
    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("learning budget exhausted after {episodes} episodes (last window change {residual:e})")]
    CapExhausted { episodes: usize, residual: f64 },
    #[error("cell half-width must be at least 1, got {0}")]
    InvalidCellSize(usize),
    #[error("extended cell lies entirely off the grid")]
    OffGrid,
    #[error("table has {found} states, expected {expected}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("benchmark value at the start state is zero; nothing to compare against")]
    ZeroBenchmark,
    #[error("terminal edge values are all zero; the success bound is undefined")]
    ZeroEdgeValue,
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
