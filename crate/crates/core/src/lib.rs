//! Likelihood-regret trust scoring for sensor feature streams.

pub mod eval;
pub mod lab;
pub mod monitor;
pub mod nn;
pub mod pipeline;
pub mod regret;
pub mod rng;
pub mod vae;
pub mod zo;
