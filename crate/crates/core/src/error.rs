use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid PSD model: {0}")]
    InvalidPsd(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("trajectory too short: covers {covered:.6e} s, need {needed:.6e} s")]
    TrajectoryTooShort { covered: f64, needed: f64 },

    #[error("sample spacing {dt:.3e} s violates limit {limit:.3e} s ({reason})")]
    Undersampled { dt: f64, limit: f64, reason: String },

    #[error("fit did not converge: {0}")]
    FitFailed(String),

    #[error("curve rejected: median survival {median:.3} < 0.45 suggests a strong tone; fit it with the LLN model instead")]
    ToneContamination { median: f64 },

    #[error("spectral grids do not overlap")]
    NoOverlap,

    #[error("coherence envelope at tau_max = {tau_max:.3e} s is {envelope:.3e} (needs < 1e-6); try tau_max = {suggested:.3e} s")]
    TruncationTooShort {
        tau_max: f64,
        envelope: f64,
        suggested: f64,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag used by the CLI error report.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidPsd(_) => "invalid_psd",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::TrajectoryTooShort { .. } => "trajectory_too_short",
            Error::Undersampled { .. } => "undersampled",
            Error::FitFailed(_) => "fit_failed",
            Error::ToneContamination { .. } => "tone_contamination",
            Error::NoOverlap => "no_overlap",
            Error::TruncationTooShort { .. } => "truncation_too_short",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
