//! Action mapping for state-wise constrained reinforcement learning.
//!
//! The crate is organised bottom-up:
//!
//! - [`autodiff`]: dense networks, a reverse-mode tape and Adam.
//! - [`geometry`]: DH kinematics, capsule/sphere clearance, cubic Bezier math.
//! - [`env`]: the robot-arm, spline path-planning and two-disk toy environments.
//! - [`feasibility`]: joint costs and the Boolean/continuous feasibility models.
//! - [`density`]: kernel density estimates, importance-sampled partition
//!   estimates and the Jensen-Shannon gradient estimator.
//! - [`feaspolicy`]: pretraining and evaluation of the latent-to-action generator.
//! - [`agents`]: SAC/PPO cores, their action-mapping and Lagrangian variants,
//!   and the replacement/resampling/projection safeguards.
//!
//! The guide under `book/` walks through the same pieces with runnable
//! snippets; those snippets are compiled as doc-tests of this crate.

pub mod agents;
pub mod autodiff;
pub mod density;
pub mod env;
mod error;
pub mod feasibility;
pub mod feaspolicy;
pub mod geometry;
pub mod nets;
pub mod rng;

pub use error::{Error, Result};

#[cfg(doctest)]
#[doc = include_str!("../../../README.md")]
mod readme {}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/autodiff.md")]
    mod autodiff {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
    #[doc = include_str!("../../../book/src/environments.md")]
    mod environments {}
    #[doc = include_str!("../../../book/src/feasibility.md")]
    mod feasibility {}
    #[doc = include_str!("../../../book/src/density.md")]
    mod density {}
    #[doc = include_str!("../../../book/src/feasibility_policy.md")]
    mod feasibility_policy {}
    #[doc = include_str!("../../../book/src/agents.md")]
    mod agents {}
}
