//! Slot-level simulation and large-deviation analysis of multi-server
//! wireless scheduling with time-varying connectivity.

pub mod arrivals;
pub mod channel;
pub mod config;
pub mod dist;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod matching;
pub mod plot;
pub mod policies;
pub mod ratefn;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
