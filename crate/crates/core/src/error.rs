use thiserror::Error;

/// Errors raised by tensor handling, encoding and kernel execution.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("weight {value} at index {index} is outside the int7 range [-64, 63]")]
    WeightRange { index: usize, value: i8 },

    #[error("{field} value {value} does not fit in {bits} bits")]
    FieldRange {
        field: &'static str,
        value: u32,
        bits: u32,
    },

    #[error("skip cap {0} is outside 1..=15")]
    SkipCap(u32),

    #[error("sparsity fraction {0} is outside [0, 1]")]
    Fraction(f64),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error(
        "induction variable overshoot: i={next} past in_channels={in_channels} (block at channel {from})"
    )]
    Overshoot {
        from: u32,
        next: u32,
        in_channels: u32,
    },

    #[error("malformed SCFU1 container: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
