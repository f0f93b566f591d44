use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mode set: {0}")]
    InvalidModeSet(String),

    #[error("mode set mismatch: {0}")]
    ModeSetMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("radial coordinate {rho} outside the open interval (0, 1)")]
    RadialDomain { rho: f64 },

    #[error("empty grid: {0}")]
    EmptyGrid(&'static str),

    #[error("division by a zero-valued jet")]
    ZeroDivision,

    #[error(
        "Jacobian is zero or changes sign at rho={rho:.6}, theta={theta:.6}, zeta={zeta:.6} \
         (sqrt_g={sqrt_g:e}); flux surfaces overlap"
    )]
    JacobianSign {
        rho: f64,
        theta: f64,
        zeta: f64,
        sqrt_g: f64,
    },

    #[error("non-finite value at rho={rho:.6}, theta={theta:.6}, zeta={zeta:.6}")]
    NonFinite { rho: f64, theta: f64, zeta: f64 },

    #[error("zero normalizer: volume-averaged magnetic pressure gradient vanishes")]
    ZeroNormalizer,

    #[error("theta* renormalization not monotone on surface rho={rho:.6} (min 1+d_theta lambda = {min_slope:e})")]
    NonMonotoneAngle { rho: f64, min_slope: f64 },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for failures caused by the numerical state (overlapping surfaces,
    /// non-finite values) rather than by malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::JacobianSign { .. }
                | Error::NonFinite { .. }
                | Error::ZeroNormalizer
                | Error::ZeroDivision
                | Error::NonMonotoneAngle { .. }
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
