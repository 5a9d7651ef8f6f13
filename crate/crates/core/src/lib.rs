//! Transient analysis of Erlang queues with batch arrivals, time-changed by
//! inverse subordinators, together with the simulation and matrix oracles
//! used to cross-check every closed-form series.

pub mod analytics;
mod dd;
pub mod error;
pub mod exec;
pub mod fractional;
pub mod montecarlo;
pub mod quad;
pub mod queue;
pub mod special;
pub mod subordinator;
pub mod validation;

pub use error::{Error, Estimate, Result};
pub use exec::Exec;
