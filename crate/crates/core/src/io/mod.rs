//! File formats, synthetic scenarios and the experiment harness.

pub mod config;
pub mod experiment;
pub mod report;
pub mod synth;
pub mod travel;
pub mod trips;
