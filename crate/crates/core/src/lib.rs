//! Numerical laboratory for foliated geodesic flows on negatively curved surfaces.

// `!(x <= y)` is used on purpose so that NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod boundary;
pub mod config;
pub mod error;
pub mod experiments;
pub mod flow;
pub mod foliated;
mod fuchsian;
pub mod geometry;
pub mod linearization;
pub mod measures;

pub use error::{Error, Result};
pub use flow::{FlowParams, FuchsianDomain, QuotientSurface, UnitTangentVector};
pub use geometry::{ChartPoint, MetricModel, Profile};
