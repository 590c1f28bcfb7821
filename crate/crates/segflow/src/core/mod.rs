//! Shared domain types: states, conditions, segments, α-densities,
//! schedules, time grids, and trajectory logs.
//!
//! Everything here is an immutable value type after construction and safe
//! to share read-only across threads.

mod density;
mod log;
mod schedule;
mod state;
pub(crate) mod vec;

pub use density::{AlphaDensity, AlphaPoint, Atom, Moments, Piece};
pub use log::{fmt_float, StepRecord, TrajectoryLog};
pub use schedule::{TimeGrid, WeightSchedule};
pub use state::{Condition, Segment, State};
