//! Quality-based VoIP playout delay toolkit.
//!
//! A playout buffer trades delay against loss: waiting longer rescues more
//! late packets but hurts interactivity. This crate makes that trade-off
//! explicit by scoring both sides with the ITU-T E-model and picking the
//! playout delay that maximizes the resulting quality:
//!
//! - [`quality`]: impairment factors, the R factor and its MOS mapping;
//! - [`delay`]: sliding-window delay statistics, Pareto tail fitting,
//!   buffer-loss prediction and Gilbert loss-model estimation;
//! - [`deciders`]: the closed-form optimal playout delay, the grid-search
//!   reference it is verified against, and the classic adaptive estimators;
//! - [`sim`]: a trace-driven simulator with per-talkspurt playout
//!   scheduling, loss accounting and quality scoring;
//! - [`trace`]: the `.ptrace.csv` probe-trace format and a reproducible
//!   seeded synthetic trace generator.
//!
//! The numeric core is generic over the scalar type (f32 or f64) through
//! the [`Scalar`] trait; the simulator and trace I/O work in f64, and the
//! crate root exports f64 aliases for the common types.

// Validation guards are written as `!(x > 0)` on purpose: unlike `x <= 0`
// the negated form also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod deciders;
pub mod delay;
pub mod error;
pub mod quality;
pub mod scalar;
pub mod sim;
pub mod trace;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// f64 instantiations of the generic core types.
pub type ImpairmentConfig64 = quality::ImpairmentConfig<f64>;
pub type GilbertParams64 = quality::GilbertParams<f64>;
pub type DelayWindow64 = delay::DelayWindow<f64>;
pub type ParetoFit64 = delay::ParetoFit<f64>;
pub type GilbertEstimate64 = delay::GilbertEstimate<f64>;
pub type OptimizerInputs64 = deciders::OptimizerInputs<f64>;
pub type GridSpec64 = deciders::GridSpec<f64>;
pub type BaselineState64 = deciders::BaselineState<f64>;
