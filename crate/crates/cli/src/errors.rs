//! Error classification onto the documented exit codes.

use std::fmt;

use msdm_core::arch::ArchError;
use msdm_core::geo::GeoError;
use msdm_core::metrics::MetricsError;
use msdm_core::nn::NnError;
use msdm_core::synth::SynthError;
use msdm_core::train::TrainError;

#[derive(Debug)]
pub enum AppError {
    /// Exit code 1: bad invocation or bad configuration.
    Usage(String),
    /// Exit code 2: unreadable, malformed, or out-of-range data.
    Data(String),
    /// Exit code 3: numerical failure.
    Numerical(String),
}

impl AppError {
    pub fn usage(msg: impl fmt::Display) -> Self {
        AppError::Usage(msg.to_string())
    }
    pub fn data(msg: impl fmt::Display) -> Self {
        AppError::Data(msg.to_string())
    }
    pub fn numerical(msg: impl fmt::Display) -> Self {
        AppError::Numerical(msg.to_string())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            AppError::Usage(_) => 1,
            AppError::Data(_) => 2,
            AppError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AppError::Usage(m) | AppError::Data(m) | AppError::Numerical(m) => write!(f, "{m}"),
        }
    }
}

impl From<GeoError> for AppError {
    fn from(e: GeoError) -> Self {
        AppError::Data(e.to_string())
    }
}

impl From<SynthError> for AppError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Config(_) => AppError::Usage(e.to_string()),
            SynthError::Calibration { .. } => AppError::Numerical(e.to_string()),
            SynthError::Geo(g) => g.into(),
            SynthError::Io(io) => AppError::Data(io.to_string()),
        }
    }
}

impl From<ArchError> for AppError {
    fn from(e: ArchError) -> Self {
        match e {
            ArchError::Nn(nn) => nn.into(),
            other => AppError::Usage(other.to_string()),
        }
    }
}

impl From<NnError> for AppError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::Checkpoint(_) | NnError::Io(_) => AppError::Data(e.to_string()),
            NnError::ShapeMismatch { .. } | NnError::NoForwardState | NnError::NumericalDomain(_) => {
                AppError::Numerical(e.to_string())
            }
        }
    }
}

impl From<TrainError> for AppError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) => AppError::Usage(e.to_string()),
            TrainError::NumericalDomain(_) => AppError::numerical(e.to_string()),
            TrainError::Geo(g) => g.into(),
            TrainError::Nn(nn) => nn.into(),
            TrainError::Arch(a) => a.into(),
            TrainError::Io(io) => AppError::Data(io.to_string()),
        }
    }
}

impl From<MetricsError> for AppError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Nn(nn) => nn.into(),
            other => AppError::Data(other.to_string()),
        }
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Data(e.to_string())
    }
}
