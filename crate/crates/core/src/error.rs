use thiserror::Error;

use crate::fit::FitResult;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("every pixel has zero detection probability (envelope lies off the array)")]
    EnvelopeOffArray,

    #[error("joint tensor needs {entries} entries, above the enumeration bound of {bound}")]
    EnumerationBound { entries: u128, bound: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("event {index} carries {found} photons, expected {expected}")]
    WrongPhotonNumber {
        index: usize,
        expected: usize,
        found: usize,
    },

    #[error("pixel index {pixel} out of range for a {pixel_count}-pixel array")]
    PixelOutOfRange { pixel: usize, pixel_count: usize },

    #[error("malformed pulse record {pulse_id}: {reason}")]
    MalformedPulse { pulse_id: u64, reason: String },

    #[error("constituent `{0}` is not present in this source model")]
    MissingConstituent(&'static str),

    #[error("rate {rate} at pixel {pixel} is not a per-pulse probability")]
    RateOutOfRange { pixel: usize, rate: f64 },

    #[error("fit needs at least {required} populated bins, got {found}")]
    InsufficientData { required: usize, found: usize },

    #[error("degenerate data: all counts fall in {0} bin(s)")]
    DegenerateData(usize),

    #[error("fit did not converge after {} iterations", .0.iterations)]
    NotConverged(Box<FitResult>),

    #[error("parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn parse(line: usize, reason: impl Into<String>) -> Self {
        Error::Parse {
            line,
            reason: reason.into(),
        }
    }
}
