use thiserror::Error;

/// Crate-wide error type.
///
/// Variants split into two classes: validation errors describe inputs or
/// configuration the caller got wrong, runtime errors describe failures of
/// the environment (I/O, serialization) mid-run. The CLI maps the classes to
/// exit codes 1 and 2 respectively, see [`Error::is_validation`].
#[derive(Debug, Error)]
pub enum Error {
    /// Inter-ocular distance too small to normalize a face by.
    #[error("degenerate face{}: inter-ocular distance below tolerance", frame_suffix(.frame))]
    DegenerateFace { frame: Option<usize> },

    /// Landmark configuration too flat for a rigid fit (cross-covariance rank < 2).
    #[error("degenerate landmark configuration{}: points are collinear", frame_suffix(.frame))]
    DegenerateConfiguration { frame: Option<usize> },

    /// Dimensions of an input do not match what the operation requires.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// No audio windows to run voice activity detection on.
    #[error("empty audio: no windows to analyze")]
    EmptyAudio,

    /// An operation that needs at least one element received none.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// Track shorter than the two observations a Kalman smoother needs.
    #[error("track too short: {len} frame(s), smoothing needs at least 2")]
    TooShortTrack { len: usize },

    /// Training data where every clip carries the same label.
    #[error("single-class dataset: training needs both speaking and silent clips")]
    SingleClassDataset,

    /// A metric denominator class has no samples.
    #[error("empty class: {0}")]
    EmptyClass(&'static str),

    /// Not enough samples to build the requested split.
    #[error("too few samples: {0}")]
    TooFewSamples(String),

    /// Automatically labeled clips where only manual labels are allowed.
    #[error("provenance violation: {0}")]
    ProvenanceViolation(String),

    /// Pretrained backbone weights are not available.
    #[error("pretrained backbone unavailable: {0}")]
    BackboneUnavailable(String),

    /// A configuration value outside its documented domain.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// An input file that exists but cannot be parsed.
    #[error("parse error in {path}: {msg}")]
    Parse { path: String, msg: String },

    /// A binary container with a bad magic number, version, or layout.
    #[error("bad file format: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Failure that indicates a bug or an unrecoverable numeric condition.
    #[error("internal error: {0}")]
    Internal(String),
}

fn frame_suffix(frame: &Option<usize>) -> String {
    match frame {
        Some(i) => format!(" at frame {i}"),
        None => String::new(),
    }
}

impl Error {
    /// Attach a frame index to geometry errors raised inside per-frame loops.
    pub(crate) fn at_frame(self, index: usize) -> Self {
        match self {
            Error::DegenerateFace { .. } => Error::DegenerateFace { frame: Some(index) },
            Error::DegenerateConfiguration { .. } => {
                Error::DegenerateConfiguration { frame: Some(index) }
            }
            other => other,
        }
    }

    /// True for errors caused by bad inputs or configuration, false for
    /// environment failures. Drives the CLI exit-code split.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io(_) | Error::Internal(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
