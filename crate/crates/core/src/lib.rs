//! Transfer-synchronized bus timetabling under uncertainty.
//!
//! The crate evaluates a timetable against sampled scenarios of running
//! times, walking times and demand, reduces large scenario sets by
//! cross-evaluation clustering, and optimizes the timetable with progressive
//! hedging over the reduced set.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod eval;
pub mod harness;
pub mod network;
pub mod optimize;
mod par;
pub mod reduction;
pub mod scenario;
pub mod timetable;

pub use error::{Error, Result};
pub use eval::{evaluate, EvaluationResult, Mode};
pub use network::{load_network, parse_network, NetworkSpec};
pub use scenario::{load_scenarios, sample_scenarios, save_scenarios, DistributionConfig, Scenario, ScenarioSet};
pub use timetable::Timetable;
