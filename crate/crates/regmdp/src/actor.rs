//! Softmax policy parameterization with an exploration floor, the sampled
//! regularized policy gradient, the projected (clamped) parameter update,
//! and the projected-field residual used to certify stationarity.

use nalgebra::DVector;

use crate::error::{RegMdpError, Result};
use crate::features::FeatureMap;
use crate::mdp::TabularPolicy;
use crate::regularizer::{Regularizer, RegularizerKind};

/// Softmax policy over per-pair logits, mixed with a uniform floor:
/// `pi(a|s) = (1 - eps*|A|) * softmax(theta[s,.])(a) + eps`.
///
/// The floor keeps every action probability at least `eps` for any `theta`,
/// and the log-probability gradient accounts for the mixture exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxPolicy {
    theta: DVector<f64>,
    n_states: usize,
    n_actions: usize,
    floor: f64,
}

impl SoftmaxPolicy {
    /// Zero logits (the floored-uniform policy).
    pub fn new(n_states: usize, n_actions: usize, floor: f64) -> Result<Self> {
        Self::from_theta(
            DVector::zeros(n_states * n_actions),
            n_states,
            n_actions,
            floor,
        )
    }

    pub fn from_theta(
        theta: DVector<f64>,
        n_states: usize,
        n_actions: usize,
        floor: f64,
    ) -> Result<Self> {
        if theta.len() != n_states * n_actions {
            return Err(RegMdpError::Dimension(format!(
                "theta has {} entries, expected {}",
                theta.len(),
                n_states * n_actions
            )));
        }
        if !(floor > 0.0) || floor * n_actions as f64 >= 1.0 {
            return Err(RegMdpError::Domain(format!(
                "floor must satisfy 0 < eps * |A| < 1, got eps = {floor}, |A| = {n_actions}"
            )));
        }
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(RegMdpError::Domain("non-finite logit".into()));
        }
        Ok(Self {
            theta,
            n_states,
            n_actions,
            floor,
        })
    }

    #[inline]
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    #[inline]
    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn n_params(&self) -> usize {
        self.theta.len()
    }

    #[inline]
    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut DVector<f64> {
        &mut self.theta
    }

    pub fn set_theta(&mut self, theta: DVector<f64>) -> Result<()> {
        if theta.len() != self.theta.len() {
            return Err(RegMdpError::Dimension("theta length changed".into()));
        }
        self.theta = theta;
        Ok(())
    }

    /// Raw softmax of the logits of state `s` (max-shifted).
    pub fn softmax_row(&self, s: usize) -> DVector<f64> {
        let base = s * self.n_actions;
        let logits = self.theta.rows(base, self.n_actions);
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut row = DVector::from_iterator(
            self.n_actions,
            logits.iter().map(|&x| (x - max).exp()),
        );
        let sum: f64 = row.iter().sum();
        row /= sum;
        row
    }

    /// The floored action distribution `pi(.|s)`.
    pub fn probs_row(&self, s: usize) -> DVector<f64> {
        let mut row = self.softmax_row(s);
        let mix = 1.0 - self.floor * self.n_actions as f64;
        for p in row.iter_mut() {
            *p = mix * *p + self.floor;
        }
        row
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs_row(s)[a]
    }

    pub fn to_tabular(&self) -> TabularPolicy {
        let mut probs = nalgebra::DMatrix::<f64>::zeros(self.n_states, self.n_actions);
        for s in 0..self.n_states {
            let row = self.probs_row(s);
            for a in 0..self.n_actions {
                probs[(s, a)] = row[a];
            }
        }
        TabularPolicy::new(probs, self.floor).expect("floored softmax rows are valid")
    }

    /// Gradient of `log pi(a|s)` with respect to the logits of state `s`
    /// (all other components are zero):
    /// `(1 - eps*|A|) * sm_a * (delta_{ab} - sm_b) / pi(a|s)`.
    pub fn grad_log_prob_block(&self, s: usize, a: usize) -> DVector<f64> {
        let sm = self.softmax_row(s);
        let mix = 1.0 - self.floor * self.n_actions as f64;
        let p_a = mix * sm[a] + self.floor;
        DVector::from_fn(self.n_actions, |b, _| {
            let delta = if a == b { 1.0 } else { 0.0 };
            mix * sm[a] * (delta - sm[b]) / p_a
        })
    }

    /// Gradient of `pi(a|s)` with respect to the logits of state `s`.
    pub fn grad_prob_block(&self, s: usize, a: usize) -> DVector<f64> {
        let sm = self.softmax_row(s);
        let mix = 1.0 - self.floor * self.n_actions as f64;
        DVector::from_fn(self.n_actions, |b, _| {
            let delta = if a == b { 1.0 } else { 0.0 };
            mix * sm[a] * (delta - sm[b])
        })
    }

    /// Scatters a per-state block into a full-length parameter vector.
    pub fn scatter_block(&self, s: usize, block: &DVector<f64>) -> DVector<f64> {
        let mut full = DVector::zeros(self.theta.len());
        for b in 0..self.n_actions {
            full[s * self.n_actions + b] = block[b];
        }
        full
    }
}

/// The compact convex parameter set `[-bound, bound]^l` with its Euclidean
/// projection (the componentwise clamp) and the induced directional field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionBox {
    bound: f64,
}

impl ProjectionBox {
    pub fn new(bound: f64) -> Result<Self> {
        if !(bound > 0.0) || !bound.is_finite() {
            return Err(RegMdpError::Domain(format!(
                "projection bound must be positive and finite, got {bound}"
            )));
        }
        Ok(Self { bound })
    }

    #[inline]
    pub fn bound(&self) -> f64 {
        self.bound
    }

    #[inline]
    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(-self.bound, self.bound)
    }

    pub fn project(&self, theta: &mut DVector<f64>) {
        for x in theta.iter_mut() {
            *x = self.clamp(*x);
        }
    }

    pub fn contains(&self, theta: &DVector<f64>) -> bool {
        theta.iter().all(|&x| x.abs() <= self.bound)
    }

    pub fn n_active_constraints(&self, theta: &DVector<f64>) -> usize {
        theta.iter().filter(|&&x| x.abs() >= self.bound).count()
    }

    /// The projected directional field
    /// `lim_{eps -> 0} [Gamma(theta + eps*field) - theta] / eps`
    /// in closed form for the box: components that push outward at an active
    /// face are zeroed, everything else passes through.
    pub fn directional_field(&self, theta: &DVector<f64>, field: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(field.len(), |i, _| {
            let t = theta[i];
            let f = field[i];
            if (t >= self.bound && f > 0.0) || (t <= -self.bound && f < 0.0) {
                0.0
            } else {
                f
            }
        })
    }
}

/// Sup-norm of the projected directional field at `theta`; a small value
/// certifies an approximate stationary point of the projected dynamics.
pub fn projected_field_residual(
    theta: &DVector<f64>,
    field: &DVector<f64>,
    bounds: &ProjectionBox,
) -> f64 {
    bounds.directional_field(theta, field).amax()
}

/// One projected ascent step: `theta <- clamp(theta + beta * psi)`.
pub fn actor_step(
    theta: &mut DVector<f64>,
    psi: &DVector<f64>,
    beta: f64,
    bounds: &ProjectionBox,
) {
    for (t, &p) in theta.iter_mut().zip(psi.iter()) {
        *t = bounds.clamp(*t + beta * p);
    }
}

/// The per-state block of the sampled policy gradient at `(s, a)`:
/// `(q - dOmega(pi(.|s))[a]) * grad log pi(a|s)`, where `dOmega` is the
/// regularizer gradient. For the unit-strength negative entropy the scalar
/// factor is the familiar `q - 1 - log pi(a|s)`.
pub fn psi_block(
    policy: &SoftmaxPolicy,
    q_value: f64,
    reg: &Regularizer,
    s: usize,
    a: usize,
) -> DVector<f64> {
    let p_a = policy.prob(s, a);
    let scalar = q_value - reg.grad_component(p_a);
    let mut block = policy.grad_log_prob_block(s, a);
    block *= scalar;
    #[cfg(debug_assertions)]
    {
        if reg.kind == RegularizerKind::NegativeEntropy && reg.strength != 0.0 {
            let literal = psi_literal_block(policy, q_value, reg.strength, s, a);
            debug_assert!(
                (&block - &literal).amax() <= 1e-12,
                "simplified and literal psi disagree"
            );
        }
    }
    block
}

/// Full-length sampled policy gradient with `q = phi(s,a)^T omega`.
pub fn psi_sample(
    policy: &SoftmaxPolicy,
    omega: &DVector<f64>,
    features: &FeatureMap,
    reg: &Regularizer,
    s: usize,
    a: usize,
) -> DVector<f64> {
    let pair = s * policy.n_actions() + a;
    let q = features.dot(pair, omega);
    let block = psi_block(policy, q, reg, s, a);
    policy.scatter_block(s, &block)
}

/// The literal two-term form of the entropy policy gradient,
/// `q * grad log pi - (strength / pi) * grad[log(pi) * pi]`, computed through
/// the probability gradient rather than the simplified scalar factor. Kept
/// as an independent route for equivalence checks.
pub fn psi_literal_block(
    policy: &SoftmaxPolicy,
    q_value: f64,
    strength: f64,
    s: usize,
    a: usize,
) -> DVector<f64> {
    let p_a = policy.prob(s, a);
    let ln_p = p_a.ln();
    let grad_p = policy.grad_prob_block(s, a);
    DVector::from_fn(policy.n_actions(), |b, _| {
        let glog = grad_p[b] / p_a;
        let bracket = ln_p * grad_p[b] + p_a * glog;
        q_value * glog - strength / p_a * bracket
    })
}

/// Full-length literal form; see [`psi_literal_block`].
pub fn psi_sample_literal(
    policy: &SoftmaxPolicy,
    omega: &DVector<f64>,
    features: &FeatureMap,
    strength: f64,
    s: usize,
    a: usize,
) -> DVector<f64> {
    let pair = s * policy.n_actions() + a;
    let q = features.dot(pair, omega);
    let block = psi_literal_block(policy, q, strength, s, a);
    policy.scatter_block(s, &block)
}
