//! Event-triggered control of control-affine systems under real-time
//! temporal logic constraints.
//!
//! A formula is made ε-robust by contracting the regions it must reach and
//! expanding the ones it must avoid. A continuous feedback law that
//! satisfies the robust formula is then implemented with sample-and-hold
//! updates whose trigger keeps the sampled-data trajectory within ε of the
//! continuous one, so the original formula holds for it.

// `!(x >= 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod delay;
pub mod monitor;
pub mod pipeline;
pub mod regions;
pub mod rtl;
pub mod scenarios;
pub mod sim;
pub mod trigger;

pub use monitor::{evaluate, tube_distance, Interval, IntervalSet, Trajectory};
pub use regions::Region;
pub use rtl::{parse, robustify, to_nnf, Formula, Proposition, PropositionTable};
pub use sim::{cosimulate, ControlAffineSystem, EventLog, FeedbackController};
pub use trigger::{LyapunovConstants, TriggerKind, TriggerPolicy};
