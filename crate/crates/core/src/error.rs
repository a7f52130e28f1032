use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("pose violates rigid-transform invariants: {0}")]
    InvalidPose(String),

    #[error("target out of reach: |p_z| = {p_z} exceeds a4 = {a4}")]
    OutOfReach { p_z: f64, a4: f64 },

    #[error("malformed orientation: |a_y| = {a_y} exceeds 1")]
    MalformedOrientation { a_y: f64 },

    #[error("surface has a pole at ({x}, {y}): denominator {denominator}")]
    Pole { x: f64, y: f64, denominator: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("sample {index}: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("schema error in {path}: {message}")]
    Schema { path: PathBuf, message: String },

    #[error("orientation error at row {row}: {message}")]
    Orientation { row: usize, message: String },

    #[error("timestamps not strictly increasing at row {row}")]
    Monotonicity { row: usize },

    #[error("session is empty: {0}")]
    EmptySession(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for errors that come from numerical domain violations rather
    /// than malformed input data.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::OutOfReach { .. }
            | Error::MalformedOrientation { .. }
            | Error::Pole { .. }
            | Error::Degenerate(_) => true,
            Error::Sample { source, .. } => source.is_numeric(),
            _ => false,
        }
    }

    pub(crate) fn at_sample(self, index: usize) -> Self {
        Error::Sample {
            index,
            source: Box::new(self),
        }
    }
}
