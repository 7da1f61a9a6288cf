use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("sequence length {len} exceeds context {max}")]
    LengthOverflow { len: usize, max: usize },
    #[error("{what} id {value} out of range (limit {limit})")]
    OutOfRange { what: &'static str, value: u32, limit: usize },
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
