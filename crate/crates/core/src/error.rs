use thiserror::Error;

use crate::lp::LpStatus;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid device: {0}")]
    InvalidDevice(String),

    #[error("invalid EV specification: {0}")]
    InvalidEvSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The energy bound at `period` (0-based) cannot be met; the device polytope is empty.
    #[error("feasible power profile set is empty (energy bound at period {period} unreachable)")]
    Infeasible { period: usize },

    #[error("device {device}: {source}")]
    Device {
        device: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("weights are not on the probability simplex: {0}")]
    InvalidWeights(String),

    #[error("profile is not representable by the vertex set (gap {gap:e} > tolerance)")]
    NotRepresentable { gap: f64 },

    #[error("linear program ended with status {0:?}")]
    Lp(LpStatus),

    #[error("scenario generation failed: {0}")]
    GenerationFailed(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn for_device(self, device: usize) -> Self {
        Error::Device {
            device,
            source: Box::new(self),
        }
    }

    /// True for every variant that signals an empty feasible set, including
    /// wrapped per-device failures. Used by the CLI to choose its exit code.
    pub fn is_infeasibility(&self) -> bool {
        match self {
            Error::Infeasible { .. } | Error::Lp(LpStatus::Infeasible) => true,
            Error::Device { source, .. } => source.is_infeasibility(),
            Error::GenerationFailed(_) => true,
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}
