//! Simulation, sweeps, verification suites and the command-line front end
//! for synchronous h-majority dynamics.

pub mod audit;
pub mod cli;
pub mod estimate;
pub mod files;
pub mod montecarlo;
pub mod report;
pub mod sweep;
pub mod verify;

/// Version tag carried by every file this crate writes.
pub const SCHEMA_VERSION: u32 = 1;
