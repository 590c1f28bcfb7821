//! Joint transport of line segments under rectified-flow velocity fields.
//!
//! A rectified-flow sampler moves one latent point along a learned
//! velocity field. This crate moves a whole *segment* of latents — the
//! convex combinations of two endpoints — so that a pair of conditioned
//! samples stays structurally aligned while it is generated:
//!
//! - every step transports a weighted set of points on the segment and
//!   restores linearity with a closed-form weighted least-squares fit,
//! - endpoint velocities are blended toward a shared anchor velocity on a
//!   decaying schedule to bound how fast the segment can stretch,
//! - the same update is available in integral form, estimated on a
//!   deterministic α-grid or by Monte Carlo.
//!
//! Analytic Gaussian-mixture targets with exact posterior velocities, a
//! small from-scratch MLP trainer, and quadrature/Monte-Carlo oracles make
//! every closed form independently checkable; the `diagnostics` module
//! bundles those checks.
//!
//! See the crate examples for runnable entry points per capability, and
//! the `segflow` binary for the config-driven experiment runner.

pub mod config;
pub mod core;
pub mod diagnostics;
pub mod error;
pub mod fields;
pub mod runner;
pub mod trainer;
pub mod transport;

pub use crate::core::{
    AlphaDensity, AlphaPoint, Atom, Condition, Moments, Piece, Segment, State, StepRecord,
    TimeGrid, TrajectoryLog, WeightSchedule,
};
pub use error::{Error, Result};
