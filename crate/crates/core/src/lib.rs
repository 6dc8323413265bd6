//! Path-loss modeling and evaluation for LoRaWAN measurement campaigns.
//!
//! The crate is organized around the workflow of a city-scale uplink
//! measurement campaign:
//!
//! * [`geo`] — great-circle distances and link geometry between a mobile
//!   sensor and a stationary gateway.
//! * [`models`] — a catalog of closed-form path-loss models (FSPL,
//!   log-distance, dual-slope, Hata family, Egli, ECC-33, Winner+).
//! * [`pipeline`] — CSV ingestion, the four-stage measurement filter chain,
//!   street snapping, and link-budget arithmetic between RPP and path loss.
//! * [`fitting`] — log-distance curve fitting over distance-binned samples
//!   plus shadow-fading characterization (ECDF, normal fit).
//! * [`analysis`] — model-versus-measurement comparison: RMSE tables,
//!   distance-binned bias, coefficient progression, sample-size convergence,
//!   gateway reception statistics, and SF-7 feasibility.
//! * [`synth`] — a synthetic campaign generator used as an independent
//!   oracle for the fitting and evaluation machinery.
//!
//! The numeric core (`geo`, `models`, `fitting`) is generic over the scalar
//! type via [`Scalar`]; the measurement pipeline works in `f64` and the
//! crate root re-exports `f64` aliases for the generic types.

// Validation guards use the negated form (`!(x > 0)`) so NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

pub mod analysis;
pub mod fitting;
pub mod geo;
pub mod models;
pub mod pipeline;
pub mod synth;

/// Floating-point scalar the numeric core is generic over.
///
/// Implemented for `f32` and `f64`; the pipeline and CLI use `f64`.
pub trait Scalar: Float + FromPrimitive + Sum<Self> + fmt::Debug + fmt::Display {}

impl<T> Scalar for T where T: Float + FromPrimitive + Sum<Self> + fmt::Debug + fmt::Display {}

/// Converts an `f64` constant into the scalar type.
pub(crate) fn cast<T: Scalar>(value: f64) -> T {
    T::from_f64(value).expect("constant representable in scalar type")
}

// `f64` aliases for the generic core types; everything downstream of the
// measurement pipeline uses these.
pub type GeoPoint = geo::GeoPoint<f64>;
pub type LinkGeometry = geo::LinkGeometry<f64>;
pub type LdplParams = models::LdplParams<f64>;
pub type DualSlopeParams = models::DualSlopeParams<f64>;
pub type Environment = models::Environment<f64>;
pub type ModelSpec = models::ModelSpec<f64>;
pub type ModelCatalog = models::ModelCatalog<f64>;
pub type DistanceBin = fitting::DistanceBin<f64>;
pub type FitResult = fitting::FitResult<f64>;
pub type PlPoint = fitting::PlPoint<f64>;
