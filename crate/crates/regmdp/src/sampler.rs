//! Single-trajectory sampling on state-action pairs, with or without the
//! discount-restart mechanism: with probability `gamma` the next state
//! follows the model, with probability `1-gamma` it restarts from `xi`.
//! Under the restart mode, the chain's stationary state-marginal equals the
//! normalized discounted occupancy started from `xi`.

use nalgebra::DVector;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::actor::SoftmaxPolicy;
use crate::error::{RegMdpError, Result};
use crate::mdp::{FiniteMdp, TabularPolicy};

/// How successor states are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainMode {
    /// Mix the model with the restart law: `gamma p(.|s,a) + (1-gamma) xi`.
    Restart,
    /// Follow the model only.
    Raw,
}

/// One observed transition `(s, a, r, s', a')` with the next action already
/// drawn on-policy at the landing state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub s: usize,
    pub a: usize,
    pub reward: f64,
    pub s_next: usize,
    pub a_next: usize,
}

/// Anything that exposes per-state action distributions; lets the sampler
/// run against fixed tabular policies and evolving softmax policies alike.
pub trait PolicyDistribution {
    fn n_actions(&self) -> usize;
    /// Writes `pi(.|s)` into `out` (length `n_actions`).
    fn write_action_probs(&self, s: usize, out: &mut [f64]);
}

impl PolicyDistribution for TabularPolicy {
    fn n_actions(&self) -> usize {
        TabularPolicy::n_actions(self)
    }

    fn write_action_probs(&self, s: usize, out: &mut [f64]) {
        for (a, slot) in out.iter_mut().enumerate() {
            *slot = self.prob(s, a);
        }
    }
}

impl PolicyDistribution for SoftmaxPolicy {
    fn n_actions(&self) -> usize {
        SoftmaxPolicy::n_actions(self)
    }

    fn write_action_probs(&self, s: usize, out: &mut [f64]) {
        let row = self.probs_row(s);
        out.copy_from_slice(row.as_slice());
    }
}

/// Sampler mode plus restart law, separated from the RNG so configurations
/// can be shared across seeds.
#[derive(Debug, Clone)]
pub struct SamplerConfig {
    pub mode: ChainMode,
    pub xi: DVector<f64>,
}

impl SamplerConfig {
    pub fn uniform_restart(n_states: usize, mode: ChainMode) -> Self {
        Self {
            mode,
            xi: DVector::from_element(n_states, 1.0 / n_states as f64),
        }
    }

    pub fn build<'a>(
        &self,
        mdp: &'a FiniteMdp,
        policy: &impl PolicyDistribution,
        seed: u64,
    ) -> Result<Sampler<'a>> {
        Sampler::new(mdp, self.xi.clone(), self.mode, policy, seed)
    }
}

/// Walks a single trajectory. Consumes exactly one uniform draw per
/// categorical sample and one per restart coin, so runs replay bitwise for a
/// fixed seed.
#[derive(Debug)]
pub struct Sampler<'a> {
    mdp: &'a FiniteMdp,
    xi: DVector<f64>,
    mode: ChainMode,
    rng: ChaCha8Rng,
    s: usize,
    a: usize,
    prob_buf: Vec<f64>,
}

impl<'a> Sampler<'a> {
    /// Draws the initial pair as `s ~ xi`, `a ~ pi(.|s)`.
    pub fn new(
        mdp: &'a FiniteMdp,
        xi: DVector<f64>,
        mode: ChainMode,
        policy: &impl PolicyDistribution,
        seed: u64,
    ) -> Result<Self> {
        if xi.len() != mdp.n_states() {
            return Err(RegMdpError::Dimension(format!(
                "restart law has {} entries, expected {}",
                xi.len(),
                mdp.n_states()
            )));
        }
        let sum: f64 = xi.iter().sum();
        if xi.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > crate::mdp::ROW_SUM_TOL {
            return Err(RegMdpError::Distribution(
                "restart law is not a distribution".into(),
            ));
        }
        if policy.n_actions() != mdp.n_actions() {
            return Err(RegMdpError::Dimension("policy/mdp action mismatch".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = sample_categorical(&mut rng, xi.iter().copied());
        let mut prob_buf = vec![0.0; mdp.n_actions()];
        policy.write_action_probs(s, &mut prob_buf);
        let a = sample_categorical(&mut rng, prob_buf.iter().copied());
        Ok(Self {
            mdp,
            xi,
            mode,
            rng,
            s,
            a,
            prob_buf,
        })
    }

    pub fn current(&self) -> (usize, usize) {
        (self.s, self.a)
    }

    /// Forces the current pair; used by goodness-of-fit tests that resample
    /// transitions out of one fixed pair.
    pub fn set_current(&mut self, s: usize, a: usize) {
        debug_assert!(s < self.mdp.n_states() && a < self.mdp.n_actions());
        self.s = s;
        self.a = a;
    }

    pub fn mode(&self) -> ChainMode {
        self.mode
    }

    /// Advances one step and returns the observed transition. The next
    /// action is drawn fresh from the policy at the landing state, including
    /// after a restart.
    pub fn sample_step(&mut self, policy: &impl PolicyDistribution) -> Transition {
        let (s, a) = (self.s, self.a);
        let reward = self.mdp.reward(s, a);
        let s_next = match self.mode {
            ChainMode::Raw => self.sample_model_successor(s, a),
            ChainMode::Restart => {
                let coin: f64 = self.rng.random();
                if coin < self.mdp.discount() {
                    self.sample_model_successor(s, a)
                } else {
                    sample_categorical(&mut self.rng, self.xi.iter().copied())
                }
            }
        };
        policy.write_action_probs(s_next, &mut self.prob_buf);
        let a_next = sample_categorical(&mut self.rng, self.prob_buf.iter().copied());
        self.s = s_next;
        self.a = a_next;
        Transition {
            s,
            a,
            reward,
            s_next,
            a_next,
        }
    }

    fn sample_model_successor(&mut self, s: usize, a: usize) -> usize {
        let row = self.mdp.pair_index(s, a);
        let t = self.mdp.transition_matrix();
        let n = self.mdp.n_states();
        sample_categorical(&mut self.rng, (0..n).map(|sp| t[(row, sp)]))
    }
}

/// Inverse-CDF draw with a single uniform. Entries with zero probability can
/// never be selected; rounding shortfall at the tail falls back to the last
/// positive entry.
fn sample_categorical(rng: &mut ChaCha8Rng, probs: impl Iterator<Item = f64>) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    let mut n = 0;
    for (i, p) in probs.enumerate() {
        n = i + 1;
        if p > 0.0 {
            last_positive = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    debug_assert!(n > 0, "empty categorical");
    last_positive
}
