//! Importance-weighted value learning ("V-learning") for infinite-horizon
//! dynamic treatment regimes.
//!
//! The crate is `no_std` with `alloc`: every estimator, environment and
//! experiment routine here is a pure function of its inputs and an explicit
//! random stream. File formats, configuration and parallel orchestration
//! live in the `vlearn` companion crate.
//!
//! The pieces fit together as follows:
//!
//! * [`data`] holds trajectories and utility definitions,
//! * [`basis`] maps states to features for the linear value model,
//! * [`policy`] is the softmax policy class plus exploration wrappers,
//! * [`propensity`] supplies behavior-policy probabilities,
//! * [`vlearn`] assembles and solves the weighted Bellman system and
//!   searches the policy class,
//! * [`ggq`] is the Q-learning baseline,
//! * [`simenv`] generates data from the toy and glucose models,
//! * [`online`] re-estimates policies as data accumulate,
//! * [`evalkit`] runs and aggregates replicated experiments.
#![no_std]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod basis;
pub mod data;
pub mod error;
pub mod evalkit;
pub mod ggq;
pub mod linalg;
pub mod online;
pub mod optim;
pub mod policy;
pub mod propensity;
pub mod rng;
pub mod simenv;
pub mod vlearn;

pub use error::{Error, Result};
