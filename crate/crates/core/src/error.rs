use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("row {row} out of bounds (subarray has {rows} rows)")]
    RowBounds { row: usize, rows: usize },
    #[error("column {col} out of bounds (subarray has {cols} columns)")]
    ColumnBounds { col: usize, cols: usize },
    #[error("aliasing: {0}")]
    Aliasing(String),
    #[error("unsupported activation pattern: {0}")]
    UnsupportedActivation(String),
    #[error("value {value} does not fit in {bits} bits")]
    Range { value: u64, bits: u32 },
    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },
    #[error("bit-plane {got} arrived out of order (expected {expected})")]
    Sequencing { expected: u32, got: u32 },
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("mapping infeasible: {0}")]
    MappingInfeasible(String),
    #[error("oracle mismatch in layer {layer} at element {index}: simulated {simulated}, expected {expected}")]
    OracleMismatch { layer: usize, index: usize, simulated: i64, expected: i64 },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
