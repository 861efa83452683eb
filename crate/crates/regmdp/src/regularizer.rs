//! Strongly convex differentiable regularizers on the action simplex, their
//! per-state / per-pair lifts, and sampled single-transition estimates.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{RegMdpError, Result};
use crate::mdp::TabularPolicy;

/// Which regularizer to apply to each conditional action distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularizerKind {
    /// `sum_a p_a log p_a` (nonpositive; its negation is the entropy).
    NegativeEntropy,
    /// `(1/2) ||p||^2`.
    HalfSquaredL2,
}

/// A regularizer with a positive strength multiplier. Strength 0 is allowed
/// and turns every value, gradient and estimate into exact zeros, reducing
/// all regularized operators to their classical forms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regularizer {
    pub kind: RegularizerKind,
    pub strength: f64,
}

impl Regularizer {
    pub fn entropy(strength: f64) -> Self {
        Self {
            kind: RegularizerKind::NegativeEntropy,
            strength,
        }
    }

    pub fn half_l2(strength: f64) -> Self {
        Self {
            kind: RegularizerKind::HalfSquaredL2,
            strength,
        }
    }

    /// Strong-convexity modulus with respect to the Euclidean norm on the
    /// simplex. Entropy has Hessian `diag(1/p) >= I` there; the half squared
    /// l2 norm has Hessian `I`. Both scale with the strength.
    pub fn strong_convexity_modulus(&self) -> f64 {
        self.strength
    }

    fn check_domain(&self, p: &[f64]) -> Result<()> {
        if self.kind == RegularizerKind::NegativeEntropy && self.strength != 0.0 {
            for &x in p {
                if x <= 0.0 {
                    return Err(RegMdpError::Domain(format!(
                        "negative entropy needs strictly positive entries, got {x}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Value at a point of the simplex.
    pub fn value(&self, p: &[f64]) -> Result<f64> {
        self.check_domain(p)?;
        if self.strength == 0.0 {
            return Ok(0.0);
        }
        let raw = match self.kind {
            RegularizerKind::NegativeEntropy => p.iter().map(|&x| x * x.ln()).sum::<f64>(),
            RegularizerKind::HalfSquaredL2 => 0.5 * p.iter().map(|&x| x * x).sum::<f64>(),
        };
        Ok(self.strength * raw)
    }

    /// Euclidean gradient at a point of the simplex.
    pub fn grad(&self, p: &[f64]) -> Result<DVector<f64>> {
        self.check_domain(p)?;
        if self.strength == 0.0 {
            return Ok(DVector::zeros(p.len()));
        }
        Ok(match self.kind {
            RegularizerKind::NegativeEntropy => {
                DVector::from_iterator(p.len(), p.iter().map(|&x| self.strength * (1.0 + x.ln())))
            }
            RegularizerKind::HalfSquaredL2 => {
                DVector::from_iterator(p.len(), p.iter().map(|&x| self.strength * x))
            }
        })
    }

    /// One gradient component, used by the actor's sampled gradient.
    #[inline]
    pub fn grad_component(&self, p_a: f64) -> f64 {
        if self.strength == 0.0 {
            return 0.0;
        }
        match self.kind {
            RegularizerKind::NegativeEntropy => self.strength * (1.0 + p_a.ln()),
            RegularizerKind::HalfSquaredL2 => self.strength * p_a,
        }
    }

    /// Values per state and replicated per pair: `pairs[(s,a)] = states[s]`
    /// for every action slot, in the canonical pair ordering.
    pub fn per_state_and_pair_values(
        &self,
        policy: &TabularPolicy,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        let n_states = policy.n_states();
        let n_actions = policy.n_actions();
        let mut per_state = DVector::<f64>::zeros(n_states);
        let mut per_pair = DVector::<f64>::zeros(n_states * n_actions);
        let mut row = vec![0.0; n_actions];
        for s in 0..n_states {
            for (a, slot) in row.iter_mut().enumerate() {
                *slot = policy.prob(s, a);
            }
            let v = self.value(&row)?;
            per_state[s] = v;
            for a in 0..n_actions {
                per_pair[s * n_actions + a] = v;
            }
        }
        Ok((per_state, per_pair))
    }

    /// Values replicated per pair only.
    pub fn pair_values(&self, policy: &TabularPolicy) -> Result<DVector<f64>> {
        Ok(self.per_state_and_pair_values(policy)?.1)
    }

    /// Single-sample estimate of `value(pi(.|s))` given the probability of
    /// the sampled action, unbiased when the action was drawn from
    /// `pi(.|s)`: the integrand of the defining expectation, evaluated at
    /// the sample. For the negative entropy that is `strength * log p`; for
    /// the half squared l2 norm it is `(strength/2) * p`.
    #[inline]
    pub fn sample_estimate_from_prob(&self, p: f64) -> f64 {
        if self.strength == 0.0 {
            return 0.0;
        }
        match self.kind {
            RegularizerKind::NegativeEntropy => self.strength * p.ln(),
            RegularizerKind::HalfSquaredL2 => 0.5 * self.strength * p,
        }
    }

    /// See [`sample_estimate_from_prob`](Self::sample_estimate_from_prob).
    pub fn sample_estimate(&self, policy: &TabularPolicy, s: usize, a: usize) -> f64 {
        self.sample_estimate_from_prob(policy.prob(s, a))
    }

    /// The summand of the defining sum evaluated at the sampled action,
    /// i.e. the expression written inline in the sampled update
    /// (`log(pi) * pi` for the negative entropy). Biased as an estimator of
    /// `value(pi(.|s))`; kept for reproducing the plain sampled recursion.
    #[inline]
    pub fn sample_estimate_literal_from_prob(&self, p: f64) -> f64 {
        if self.strength == 0.0 {
            return 0.0;
        }
        match self.kind {
            RegularizerKind::NegativeEntropy => self.strength * p.ln() * p,
            RegularizerKind::HalfSquaredL2 => 0.5 * self.strength * p * p,
        }
    }

    /// See [`sample_estimate_literal_from_prob`](Self::sample_estimate_literal_from_prob).
    pub fn sample_estimate_literal(&self, policy: &TabularPolicy, s: usize, a: usize) -> f64 {
        self.sample_estimate_literal_from_prob(policy.prob(s, a))
    }
}
