use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config: {0}")]
    Config(String),

    #[error("spectrum file {path}: {reason}")]
    SpectrumFile { path: PathBuf, reason: String },

    #[error("spectrum is empty")]
    EmptySpectrum,

    #[error(
        "coercivity violated: alpha*gamma = {lhs} <= beta^2*alpha0 = {rhs} (set allow_noncoercive to explore anyway)"
    )]
    NotCoercive { lhs: f64, rhs: f64 },

    #[error("iλ - M is numerically singular at lambda = {lambda}, omega = {omega} (sigma_min = {sigma_min:e})")]
    Singular { lambda: f64, omega: f64, sigma_min: f64 },

    #[error("empty scan set at lambda = {0}")]
    EmptyScan(f64),

    #[error("exponent fit needs at least 3 samples in the window, found {0}")]
    TooFewFitPoints(usize),

    #[error("configuration is not of the witness form: {0}")]
    NotWitnessForm(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("mode index {index} out of range (spectrum has {len} modes)")]
    ModeIndex { index: usize, len: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
