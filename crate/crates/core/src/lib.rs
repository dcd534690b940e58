//! Synchronous h-majority opinion dynamics on the complete graph with self-loops.
//!
//! Every agent samples `h` agents uniformly at random with repetition and adopts
//! the most frequent sampled opinion, breaking ties uniformly at random. This
//! crate holds the allocation-light algorithmic pieces:
//!
//! - [`config`]: configurations, bias statistics, relabeling.
//! - [`sampler`]: binomial, multinomial and categorical draws plus the
//!   mode-with-tie-break rule.
//! - [`dynamics`]: one synchronous round and whole trajectories.
//! - [`oracle`]: exact enumeration of winning probabilities and of the
//!   conditional quantities used in the convergence analysis.
//! - [`theory`]: closed-form bounds and verdicts against measured values.
//!
//! IO, parallel execution, Monte Carlo estimation and the CLI live in the
//! `hmaj` companion crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod config;
pub mod dynamics;
pub mod math;
pub mod oracle;
pub mod rng;
pub mod sampler;
pub mod theory;

pub use config::{BiasStats, ConfigError, Configuration, NormalizedConfig, OpinionId, Plurality};
pub use rng::RngHandle;
