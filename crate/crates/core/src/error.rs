use std::path::PathBuf;

use crate::label::ModeLabel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Which end of a validity window was violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    Lower,
    Upper,
}

impl std::fmt::Display for Bound {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Bound::Lower => f.write_str("lower"),
            Bound::Upper => f.write_str("upper"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("wavelength {wavelength_nm} nm violates the {bound} bound {limit_nm} nm of {what}")]
    OutOfRange { what: String, wavelength_nm: f64, bound: Bound, limit_nm: f64 },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("mode grids differ; resample onto a common grid first")]
    GridMismatch,

    #[error("mode {0} is not normalized")]
    NotNormalized(ModeLabel),

    #[error("cannot classify a mode with an all-zero field")]
    DegenerateField,

    #[error("eigensolver did not converge after {iterations} restarts (worst residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("singular pivot encountered while factoring the shifted operator")]
    SingularPivot,

    #[error("no correction stored for mode {0}")]
    UnknownLabel(ModeLabel),

    #[error("mode {label} could not be tracked at {wavelength_nm} nm")]
    Tracking { label: ModeLabel, wavelength_nm: f64 },

    #[error("no root of the phase mismatch on [{lo_nm}, {hi_nm}] nm (endpoint values {f_lo:e}, {f_hi:e} rad/um)")]
    NoRoot { lo_nm: f64, hi_nm: f64, f_lo: f64, f_hi: f64 },

    #[error("phase mismatch vanishes identically; every wavelength is a root")]
    DegenerateRoot,

    #[error("grating term {bracket:e} 1/um is not positive; first-order QPM cannot phase match")]
    PolingSign { bracket: f64 },

    #[error("band is vertical at this point (d dbeta / d lambda_H = {0:e})")]
    VerticalBand(f64),

    #[error("reference overlap is zero; cannot normalize")]
    ZeroReference,

    #[error("{0}")]
    Contract(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for errors caused by malformed input rather than numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::OutOfRange { .. }
                | Error::Validation(_)
                | Error::Parse(_)
                | Error::GridMismatch
                | Error::NotNormalized(_)
                | Error::UnknownLabel(_)
                | Error::Contract(_)
                | Error::Io { .. }
        )
    }
}
