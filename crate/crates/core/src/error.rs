use thiserror::Error;

use crate::flow::UnitTangentVector;
use crate::geometry::ChartPoint;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point ({}, {}) is outside the admissible domain of the {model} model", point.x, point.y)]
    Domain { model: &'static str, point: ChartPoint },

    #[error("flow left the admissible domain at t = {time}")]
    Excursion { last: UnitTangentVector, time: f64 },

    #[error("{what} did not converge (best residual {residual:e})")]
    Convergence { what: &'static str, residual: f64 },

    #[error("Riccati slope blew up (|u| = {slope}) at t = {time}")]
    BlowUp { time: f64, slope: f64 },

    #[error("degenerate splitting: unstable and stable slopes coincide")]
    DegenerateSplitting,

    #[error("folding exceeded {0} side-pairing applications")]
    Folding(usize),

    #[error("inputs are {distance} apart, beyond the proximity scale {scale}")]
    Scale { distance: f64, scale: f64 },

    #[error("unknown generator index {0}")]
    UnknownGenerator(usize),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
