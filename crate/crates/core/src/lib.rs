//! Co-adaptive procedural content generation: a PPO-trained hummingbird
//! collects nectar on a procedurally generated island while an island
//! controller adapts the flower layout from the bird's episode feedback.
// Negated float comparisons in validation deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod environment;
pub mod error;
pub mod harness;
pub mod nn;
pub mod placement;
pub mod ppo;
pub mod rng;
pub mod terrain;

pub use error::{Error, Result};
