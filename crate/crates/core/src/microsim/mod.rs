//! Exact continuous-time simulation of the open exclusion process with a
//! site-wise relaxation field, run directly in macroscopic time.
//!
//! Every rate already carries the hyperbolic factor `N`, so a unit of
//! simulated time is a unit of macroscopic time.

mod configuration;
mod rate_tree;
mod scheme;
mod simulator;

pub use configuration::Configuration;
pub use rate_tree::RateTree;
pub use scheme::{BoundaryRates, ScalingScheme, DEFAULT_K_EXPONENT, DEFAULT_SIGMA_EXPONENT};
pub use simulator::{
    channel_rates, sample_initial, simulate, Channel, Dynamics, EventCounters, EventRecord, SimState, Simulator,
    Trajectory,
};
