//! Entropy-regularized two-timescale actor-critic on finite MDPs, together
//! with exact matrix-form oracles (regularized Bellman operators, the
//! closed-form projected-Bellman fixed point, exact policy gradients) so that
//! the convergence behavior of the stochastic recursions can be checked
//! against ground truth at desk scale.
//!
//! Layout:
//! - [`mdp`]: finite MDPs, tabular policies, induced chains, stationary and
//!   occupancy distributions, assumption validation.
//! - [`regularizer`]: strongly convex regularizers on the action simplex and
//!   their sampled estimates.
//! - [`features`]: linear feature maps over state-action pairs.
//! - [`exact`]: matrix-form ground truth (Bellman operators, fixed points,
//!   mean field, stability tests, objectives, exact gradient field).
//! - [`critic`]: the stochastic linear policy-evaluation recursion (TD(0)
//!   with a regularization term).
//! - [`actor`]: softmax policies, the sampled regularized policy gradient,
//!   projected updates, and the projected-field residual.
//! - [`sampler`] / [`sim`]: trajectory sampling with the discount-restart
//!   mechanism, the coupled two-timescale loop, diagnostics, and seeded
//!   instance generation.

pub mod error;
pub mod exact;
pub mod actor;
pub mod critic;
pub mod features;
pub mod mdp;
pub mod regularizer;
pub mod sampler;
pub mod sim;
pub mod trace;

#[cfg(test)]
pub(crate) mod test_util;

pub use error::{RegMdpError, Result};
