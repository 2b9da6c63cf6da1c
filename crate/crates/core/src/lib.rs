//! Multi-agent actor-critic training with an attention-based centralized critic.
//!
//! The crate is organised bottom-up:
//!
//! - [`nn`]: dense networks, attention primitives, reverse-mode gradients, Adam and
//!   target-network soft updates, all in `f64`.
//! - [`env`]: the shared multi-agent environment contract.
//! - [`routing`]: a fluid traffic-engineering simulator whose reward is `1 - MLU`.
//! - [`particle`]: cooperative navigation and predator-prey on a 10x10 plane.
//! - [`critic`]: the K-head attention critic plus the fully-connected and
//!   uniformly merged critics used for comparison.
//! - [`train`]: replay, exploration, the DDPG-family update rules and the training loop.
//! - [`baselines`]: WCMP flow splitting and greedy pursuit.
//! - [`checkpoint`]: the named-array parameter container used for dumps and traces.

pub mod baselines;
pub mod checkpoint;
pub mod critic;
pub mod env;
mod error;
pub mod nn;
pub mod particle;
pub mod routing;
pub mod train;

pub use error::{Error, Result};
