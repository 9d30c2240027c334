use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("exact ML over {bits} bits exceeds the cap of {cap}; use partial marginalization instead")]
    Capacity { bits: usize, cap: usize },

    #[error("pipeline error: {0}")]
    Pipeline(String),

    #[error("odd number of bits ({0}) cannot be mapped onto complex symbols")]
    OddBitCount(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}
