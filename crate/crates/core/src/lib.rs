//! Water-level change estimation from bistatic downlink channel state
//! information (CSI).
//!
//! A base station transmits across a water body to a small vertical receive
//! array. The water-reflected propagation path lengthens or shortens as the
//! surface falls or rises, and the resulting phase evolution of that path is
//! visible in the downlink CSI. This crate implements the full processing
//! chain that turns raw CSI captures into a relative water-level series:
//!
//! 1. [`calib`] — subspace array calibration from a pilot (LOS) target,
//! 2. [`rpo`] — random-phase-offset estimation and compensation via an MVDR
//!    reference beam on the static LOS path,
//! 3. [`dimred`] — delay/Doppler dimension reduction of each capture to one
//!    antenna vector,
//! 4. [`spectrum`] — spatial-temporal smoothing and joint AoA/slow-time
//!    Doppler 2D MUSIC,
//! 5. [`extract`] — clutter removal, low-pass filtering, LCMV beamforming
//!    with an LOS null, phase unwrapping, and the path-length → water-level
//!    conversion,
//! 6. [`scene`] — scenario geometry under specular reflection,
//! 7. [`sim`] — a forward channel oracle that synthesizes CSI captures with
//!    configurable paths, clock impairments, array errors, and noise,
//! 8. [`pipeline`] — file formats, run configuration, and stage
//!    orchestration backing the `hydrosense` CLI.
//!
//! There is no absolute datum: every output is the level change relative to
//! the first capture.

pub mod calib;
pub mod dimred;
pub mod extract;
pub(crate) mod linalg;
pub mod pipeline;
pub mod rpo;
pub mod scene;
pub mod sim;
pub mod spectrum;

pub use num_complex::Complex64;

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Errors produced anywhere in the sensing chain.
///
/// The CLI maps each variant to a distinct exit code, so keep variants
/// semantic rather than per-module.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A parameter violated a documented precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// Scenario geometry does not admit the requested construction.
    #[error("invalid geometry: {0}")]
    Geometry(String),
    /// Inputs with incompatible shapes or mismatched sampling metadata.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// Array calibration could not identify the error vector.
    #[error("calibration failed: {0}")]
    Calibration(String),
    /// The 2D spectrum did not contain the requested number of peaks.
    #[error("peak finding failed: {0}")]
    PeakFinding(String),
    /// Phase unwrapping hit a step too close to the ±π ambiguity limit.
    #[error("phase unwrap invalid: {0}")]
    Unwrap(String),
    /// A linear system was too ill-conditioned to solve reliably.
    #[error("ill-conditioned system: {0}")]
    IllConditioned(String),
    /// Run configuration failed validation.
    #[error("config error: {0}")]
    Config(String),
    /// A binary or text artifact did not match its declared format.
    #[error("file format error: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-parseable category tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Format(_) => "format",
            Error::Calibration(_) => "calibration",
            Error::PeakFinding(_) => "peaks",
            Error::Unwrap(_) => "unwrap",
            Error::Io(_) => "io",
            Error::InvalidParameter(_)
            | Error::Geometry(_)
            | Error::Dimension(_)
            | Error::IllConditioned(_) => "internal",
        }
    }

    /// Process exit code used by the CLI and mirrored by the C API status
    /// codes: 1 internal, 2 config/usage, 3 format, 4 calibration, 5 peak
    /// finding, 6 unwrap.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) => 2,
            Error::Format(_) => 3,
            Error::Calibration(_) => 4,
            Error::PeakFinding(_) => 5,
            Error::Unwrap(_) => 6,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn deg_to_rad(deg: f64) -> f64 {
    deg * std::f64::consts::PI / 180.0
}

pub(crate) fn rad_to_deg(rad: f64) -> f64 {
    rad * 180.0 / std::f64::consts::PI
}
