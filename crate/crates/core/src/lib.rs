//! Fleet rebalancing for autonomous mobility-on-demand.
//!
//! * [`model`]: regions, time grid, travel times, demand and costs.
//! * [`offline`]: optimal rebalancing with free starting positions, and
//!   minimum fleet size, on a time-expanded flow network.
//! * [`mpc`]: the receding-horizon controller's integer program.
//! * [`forecast`]: demand forecasters feeding the controller.
//! * [`sim`]: tick-level fleet simulator and the reactive baseline.
//! * [`io`]: trip logs, travel matrices, synthetic scenarios and the
//!   experiment harness.

pub mod error;
pub mod forecast;
pub mod io;
pub mod model;
pub mod mpc;
pub mod offline;
pub mod sim;

pub use error::{Error, Result};
