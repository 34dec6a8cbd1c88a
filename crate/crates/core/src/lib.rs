//! Self-healing deep reinforcement learning.
//!
//! `healrl` detects when a trained agent stops solving a drifted environment,
//! erases its least active neurons by re-initializing them with under-scaled
//! weights, and fine-tunes the patched agent on the drifted environment. A
//! vanilla continual-learning baseline and an experiment harness (metrics,
//! rank tests, effect sizes, CSV artifacts) are included for comparison.
//!
//! The crate is organized bottom-up:
//!
//! - [`envs`]: parameterized CartPole, MountainCar and Acrobot with drift
//!   injection and solve criteria.
//! - [`nn`]: dense networks with exact backpropagation, initializers and
//!   SGD/Adam.
//! - [`agents`]: DQN and PPO over [`nn`].
//! - [`tracing`]: activation traces and hypoactive-neuron masks.
//! - [`healing`]: forgetting, dual-speed fine-tuning and the baseline.
//! - [`harness`]: experiment orchestration, statistics and reports.
//!
//! The guide under `book/` walks through each stage; its code listings are
//! compiled and run as doc-tests of this crate.

pub mod agents;
pub mod codec;
pub mod envs;
pub mod error;
pub mod harness;
pub mod healing;
pub mod nn;
pub mod seed;
pub mod tracing;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/environments.md")]
    mod environments {}
    #[doc = include_str!("../../../book/src/networks.md")]
    mod networks {}
    #[doc = include_str!("../../../book/src/agents.md")]
    mod agents {}
    #[doc = include_str!("../../../book/src/detection.md")]
    mod detection {}
    #[doc = include_str!("../../../book/src/healing.md")]
    mod healing {}
    #[doc = include_str!("../../../book/src/statistics.md")]
    mod statistics {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
}
