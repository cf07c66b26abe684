//! Closed-loop imitation-learning laboratory.
//!
//! A desk-scale 2D driving simulator plus everything needed to study how
//! behavior-cloned policies behave in closed loop: a rule-based expert
//! (pure pursuit + IDM), demonstration collection, a small fully-connected
//! network trained from scratch, multi-seed training with per-epoch
//! checkpoint validation, temporal alternation of expert checkpoints on a
//! fixed schedule, and nuPlan-style scenario scoring with multiplicative
//! gates and weighted sub-metrics.
//!
//! The crate is deterministic end to end: every random draw flows from a
//! named seed stream, rollouts are reproducible bit for bit, and parallel
//! evaluation reduces results in a fixed order.

pub mod env;
pub mod error;
pub mod expert;
pub mod geom;
pub mod pipeline;
pub mod rng;
pub mod scoring;
pub mod soe;
pub mod tinynet;

pub use error::{Error, Result};
