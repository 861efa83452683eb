//! Matrix-form ground truth: regularized Bellman operators, exact values,
//! the closed-form projected fixed point, the critic mean field and its
//! scaled-limit stability test, exact objectives and the exact actor field.
//!
//! Everything here is dense linear algebra on the canonical pair ordering,
//! intended as the oracle the stochastic recursions are measured against.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::actor::SoftmaxPolicy;
use crate::error::{RegMdpError, Result};
use crate::features::FeatureMap;
use crate::mdp::{
    discounted_occupancy, induced_chain, stationary_distribution, DistributionOverPairs,
    FiniteMdp, StateActionChain, TabularPolicy,
};
use crate::regularizer::Regularizer;

/// Condition-number limit beyond which the projected solve refuses to answer.
pub const CONDITION_LIMIT: f64 = 1e12;
/// Residual tolerance for exact fixed points.
pub const FIXED_POINT_TOL: f64 = 1e-9;

/// Exact solution bundle for one (mdp, policy, regularizer, features)
/// quadruple: the regularized action values and state values, the linear
/// fixed-point weights, and the system that defines them,
/// `A = Phi^T N (I - gamma P) Phi`, `b = Phi^T N (r - gamma P Omega)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    pub q_pi: DVector<f64>,
    pub v_pi: DVector<f64>,
    pub omega_star: DVector<f64>,
    pub a_matrix: DMatrix<f64>,
    pub b_vector: DVector<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExactSolutionFile {
    q_pi: Vec<f64>,
    v_pi: Vec<f64>,
    omega_star: Vec<f64>,
    a_matrix: Vec<Vec<f64>>,
    b_vector: Vec<f64>,
}

impl ExactSolution {
    pub fn to_json(&self) -> String {
        let k = self.a_matrix.nrows();
        serde_json::to_string_pretty(&ExactSolutionFile {
            q_pi: self.q_pi.iter().copied().collect(),
            v_pi: self.v_pi.iter().copied().collect(),
            omega_star: self.omega_star.iter().copied().collect(),
            a_matrix: (0..k)
                .map(|i| self.a_matrix.row(i).iter().copied().collect())
                .collect(),
            b_vector: self.b_vector.iter().copied().collect(),
        })
        .expect("solution serialization cannot fail")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let f: ExactSolutionFile = serde_json::from_str(json)?;
        let k = f.b_vector.len();
        if f.a_matrix.len() != k || f.a_matrix.iter().any(|r| r.len() != k) {
            return Err(RegMdpError::Dimension("a_matrix is not k x k".into()));
        }
        Ok(Self {
            q_pi: DVector::from_vec(f.q_pi),
            v_pi: DVector::from_vec(f.v_pi),
            omega_star: DVector::from_vec(f.omega_star),
            a_matrix: DMatrix::from_fn(k, k, |i, j| f.a_matrix[i][j]),
            b_vector: DVector::from_vec(f.b_vector),
        })
    }
}

/// The regularized Bellman operator on action values in matrix form:
/// `T q = r + gamma P (q - Omega_pi)`. With regularizer strength 0 this is
/// the classical operator.
pub fn bellman_q(
    mdp: &FiniteMdp,
    policy: &TabularPolicy,
    reg: &Regularizer,
    q: &DVector<f64>,
) -> Result<DVector<f64>> {
    if q.len() != mdp.n_pairs() {
        return Err(RegMdpError::Dimension(format!(
            "q has {} entries, expected {}",
            q.len(),
            mdp.n_pairs()
        )));
    }
    let chain = induced_chain(mdp, policy)?;
    let omega_pairs = reg.pair_values(policy)?;
    Ok(apply_bellman(
        chain.kernel(),
        mdp.reward_vector(),
        &omega_pairs,
        mdp.discount(),
        q,
    ))
}

fn apply_bellman(
    p: &DMatrix<f64>,
    r: &DVector<f64>,
    omega_pairs: &DVector<f64>,
    gamma: f64,
    q: &DVector<f64>,
) -> DVector<f64> {
    r + p * (q - omega_pairs) * gamma
}

/// State values from action values: `v(s) = sum_a pi(a|s) q(s,a) - Omega(pi(.|s))`.
fn state_values(
    policy: &TabularPolicy,
    reg: &Regularizer,
    q: &DVector<f64>,
) -> Result<DVector<f64>> {
    let (per_state, _) = reg.per_state_and_pair_values(policy)?;
    let na = policy.n_actions();
    Ok(DVector::from_fn(policy.n_states(), |s, _| {
        (0..na).map(|a| policy.prob(s, a) * q[s * na + a]).sum::<f64>() - per_state[s]
    }))
}

/// Exact regularized values of a fixed policy, solved in closed form:
/// `q = (I - gamma P)^{-1} (r - gamma P Omega_pi)`.
pub fn solve_values(
    mdp: &FiniteMdp,
    policy: &TabularPolicy,
    reg: &Regularizer,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let chain = induced_chain(mdp, policy)?;
    let omega_pairs = reg.pair_values(policy)?;
    let n = mdp.n_pairs();
    let gamma = mdp.discount();
    let m = DMatrix::<f64>::identity(n, n) - chain.kernel() * gamma;
    let rhs = mdp.reward_vector() - chain.kernel() * &omega_pairs * gamma;
    let q = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| RegMdpError::Numeric("value solve is singular".into()))?;
    let v = state_values(policy, reg, &q)?;
    Ok((q, v))
}

/// Exact solution with tabular (identity) features, so `omega* = q` and the
/// defining system is `N (I - gamma P) q = N (r - gamma P Omega)`.
pub fn solve_q_pi(
    mdp: &FiniteMdp,
    policy: &TabularPolicy,
    reg: &Regularizer,
) -> Result<ExactSolution> {
    projected_fixed_point(mdp, policy, reg, &FeatureMap::tabular(mdp.n_pairs()))
}

/// The unique weights solving the projected Bellman equation
/// `Phi omega = Pi_N T(Phi omega)` for the chain induced by the policy:
/// `omega* = (Phi^T N (I - gamma P) Phi)^{-1} Phi^T N (r - gamma P Omega)`.
pub fn projected_fixed_point(
    mdp: &FiniteMdp,
    policy: &TabularPolicy,
    reg: &Regularizer,
    features: &FeatureMap,
) -> Result<ExactSolution> {
    let chain = induced_chain(mdp, policy)?;
    let nu = stationary_distribution(&chain)?;
    projected_fixed_point_for_chain(mdp, policy, reg, features, &chain, &nu)
}

/// Same as [`projected_fixed_point`] but for an explicitly supplied chain and
/// weighting distribution — used to get the fixed point the critic actually
/// tracks when it samples the restart chain instead of the raw one.
pub fn projected_fixed_point_for_chain(
    mdp: &FiniteMdp,
    policy: &TabularPolicy,
    reg: &Regularizer,
    features: &FeatureMap,
    chain: &StateActionChain,
    nu: &DistributionOverPairs,
) -> Result<ExactSolution> {
    let n = mdp.n_pairs();
    if features.n_pairs() != n || chain.n_pairs() != n {
        return Err(RegMdpError::Dimension(
            "features/chain size does not match the mdp".into(),
        ));
    }
    let gamma = mdp.discount();
    let omega_pairs = reg.pair_values(policy)?;
    let p = chain.kernel();
    let phi = features.matrix();

    // N-weighted rows of Phi, i.e. N Phi without forming diag(nu).
    let mut weighted_phi = phi.clone();
    for i in 0..n {
        let w = nu.weights()[i];
        for j in 0..phi.ncols() {
            weighted_phi[(i, j)] *= w;
        }
    }
    let a_matrix =
        weighted_phi.transpose() * (DMatrix::<f64>::identity(n, n) - p * gamma) * phi;
    let b_vector = weighted_phi.transpose() * (mdp.reward_vector() - p * &omega_pairs * gamma);

    let svd = a_matrix.clone().svd(false, false);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let smin = svd
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !cond.is_finite() || cond > CONDITION_LIMIT {
        return Err(RegMdpError::IllConditioned {
            cond,
            limit: CONDITION_LIMIT,
        });
    }
    let omega_star = a_matrix
        .clone()
        .lu()
        .solve(&b_vector)
        .ok_or_else(|| RegMdpError::Numeric("projected system is singular".into()))?;

    // Exact values for the same quadruple, solved independently of the
    // projection so the bundle always carries the unprojected ground truth.
    let gmat = DMatrix::<f64>::identity(n, n) - p * gamma;
    let rhs = mdp.reward_vector() - p * &omega_pairs * gamma;
    let q_pi = gmat
        .lu()
        .solve(&rhs)
        .ok_or_else(|| RegMdpError::Numeric("value solve is singular".into()))?;
    let v_pi = state_values(policy, reg, &q_pi)?;

    Ok(ExactSolution {
        q_pi,
        v_pi,
        omega_star,
        a_matrix,
        b_vector,
    })
}

/// Orthogonality residual of the projected Bellman equation at `omega`:
/// `|| Phi^T N (T(Phi omega) - Phi omega) ||_inf`. Zero characterizes the
/// N-weighted projection fixed point.
pub fn pbe_orthogonality_residual(
    mdp: &FiniteMdp,
    policy: &TabularPolicy,
    reg: &Regularizer,
    features: &FeatureMap,
    omega: &DVector<f64>,
) -> Result<f64> {
    let chain = induced_chain(mdp, policy)?;
    let nu = stationary_distribution(&chain)?;
    let q = features.matrix() * omega;
    let t_q = apply_bellman(
        chain.kernel(),
        mdp.reward_vector(),
        &reg.pair_values(policy)?,
        mdp.discount(),
        &q,
    );
    let diff = t_q - q;
    let weighted = DVector::from_fn(diff.len(), |i, _| nu.weights()[i] * diff[i]);
    Ok((features.matrix().transpose() * weighted).amax())
}

/// The critic mean field `h(omega) = Phi^T N (r + gamma P (Phi omega - Omega) - Phi omega)`;
/// zero exactly at the projected fixed point.
pub fn mean_field(
    mdp: &FiniteMdp,
    policy: &TabularPolicy,
    reg: &Regularizer,
    features: &FeatureMap,
    omega: &DVector<f64>,
) -> Result<DVector<f64>> {
    let chain = induced_chain(mdp, policy)?;
    let nu = stationary_distribution(&chain)?;
    mean_field_for_chain(mdp, policy, reg, features, &chain, &nu, omega)
}

/// Chain-parameterized variant of [`mean_field`].
pub fn mean_field_for_chain(
    mdp: &FiniteMdp,
    policy: &TabularPolicy,
    reg: &Regularizer,
    features: &FeatureMap,
    chain: &StateActionChain,
    nu: &DistributionOverPairs,
    omega: &DVector<f64>,
) -> Result<DVector<f64>> {
    let q = features.matrix() * omega;
    let t_q = apply_bellman(
        chain.kernel(),
        mdp.reward_vector(),
        &reg.pair_values(policy)?,
        mdp.discount(),
        &q,
    );
    let diff = t_q - q;
    let weighted = DVector::from_fn(diff.len(), |i, _| nu.weights()[i] * diff[i]);
    Ok(features.matrix().transpose() * weighted)
}

/// Result of the scaled-limit stability test for the critic dynamics.
#[derive(Debug, Clone)]
pub struct StabilityReport {
    /// `M = Phi^T N (gamma P - I) Phi`, the linear field of the scaled limit.
    pub matrix: DMatrix<f64>,
    /// Largest real part among the eigenvalues of `M`.
    pub max_real_eig: f64,
    /// Whether `M` is Hurwitz (all real parts negative), which certifies
    /// almost-sure boundedness of the critic iterates.
    pub stable: bool,
}

/// Computes `M = Phi^T N (gamma P - I) Phi` and checks that it is Hurwitz.
pub fn h_infinity_stability(
    mdp: &FiniteMdp,
    policy: &TabularPolicy,
    features: &FeatureMap,
) -> Result<StabilityReport> {
    let chain = induced_chain(mdp, policy)?;
    let nu = stationary_distribution(&chain)?;
    let n = mdp.n_pairs();
    let mut weighted_phi = features.matrix().clone();
    for i in 0..n {
        let w = nu.weights()[i];
        for j in 0..weighted_phi.ncols() {
            weighted_phi[(i, j)] *= w;
        }
    }
    let m = weighted_phi.transpose()
        * (chain.kernel() * mdp.discount() - DMatrix::<f64>::identity(n, n))
        * features.matrix();
    let eigs = m.complex_eigenvalues();
    let max_real_eig = eigs.iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max);
    if !max_real_eig.is_finite() {
        return Err(RegMdpError::Numeric("eigen-solve failed".into()));
    }
    Ok(StabilityReport {
        matrix: m,
        max_real_eig,
        stable: max_real_eig < 0.0,
    })
}

/// The occupancy-weighted regularized objective
/// `J = sum_s d(s) [sum_a pi(a|s) q(s,a) - Omega(pi(.|s))] = <d, v>`,
/// where `d` is the (unnormalized) discounted occupancy from `start`.
/// Equivalently `(1-gamma)^{-1}` times the stationary expectation of the
/// regularized reward under the restart chain with restart law `start`.
pub fn objective_j(
    mdp: &FiniteMdp,
    policy: &TabularPolicy,
    reg: &Regularizer,
    start: &DVector<f64>,
) -> Result<f64> {
    let (_, v) = solve_values(mdp, policy, reg)?;
    let d = discounted_occupancy(mdp, policy, start)?;
    Ok(d.dot(&v))
}

/// The start-state regularized value `E_{s ~ start} v(s)`. The exact actor
/// field is the parameter gradient of this functional; the occupancy-weighted
/// [`objective_j`] shares its stationary points but weights states by the
/// discounted visitation instead of the start law.
pub fn start_state_objective(
    mdp: &FiniteMdp,
    policy: &TabularPolicy,
    reg: &Regularizer,
    start: &DVector<f64>,
) -> Result<f64> {
    let (_, v) = solve_values(mdp, policy, reg)?;
    Ok(start.dot(&v))
}

/// The exact expectation of the sampled policy gradient under the discounted
/// visitation: `h(theta) = sum_s d(s) sum_a pi(a|s) psi(s,a)` with
/// `psi(s,a) = (q_omega(s,a) - dOmega(pi(.|s))[a]) grad log pi(a|s)` and
/// `omega` the projected fixed point for `features`. With tabular features
/// `q_omega = q_pi` and the field equals the gradient of
/// [`start_state_objective`]; otherwise the difference is the critic bias.
pub fn exact_actor_field(
    mdp: &FiniteMdp,
    policy: &SoftmaxPolicy,
    reg: &Regularizer,
    features: &FeatureMap,
    start: &DVector<f64>,
) -> Result<DVector<f64>> {
    let tab = policy.to_tabular();
    let sol = projected_fixed_point(mdp, &tab, reg, features)?;
    exact_actor_field_with_weights(mdp, policy, reg, features, start, &sol.omega_star)
}

/// The exact field evaluated at explicit critic weights; used both by
/// [`exact_actor_field`] and by diagnostics that freeze `omega`.
pub fn exact_actor_field_with_weights(
    mdp: &FiniteMdp,
    policy: &SoftmaxPolicy,
    reg: &Regularizer,
    features: &FeatureMap,
    start: &DVector<f64>,
    omega: &DVector<f64>,
) -> Result<DVector<f64>> {
    let tab = policy.to_tabular();
    let d = discounted_occupancy(mdp, &tab, start)?;
    let na = mdp.n_actions();
    let mut field = DVector::<f64>::zeros(policy.n_params());
    for s in 0..mdp.n_states() {
        if d[s] == 0.0 {
            continue;
        }
        let row = policy.probs_row(s);
        for a in 0..na {
            let pair = s * na + a;
            let q = features.dot(pair, omega);
            let scalar = q - reg.grad_component(row[a]);
            let block = policy.grad_log_prob_block(s, a);
            let w = d[s] * row[a] * scalar;
            for b in 0..na {
                field[s * na + b] += w * block[b];
            }
        }
    }
    Ok(field)
}

/// Norm of the critic bias in the actor field: the gap between the field
/// computed through the feature-projected critic and the field at the true
/// action values (tabular features). Zero when the features span the values.
pub fn critic_bias_gap(
    mdp: &FiniteMdp,
    policy: &SoftmaxPolicy,
    reg: &Regularizer,
    features: &FeatureMap,
    start: &DVector<f64>,
) -> Result<f64> {
    let biased = exact_actor_field(mdp, policy, reg, features, start)?;
    let tabular = FeatureMap::tabular(mdp.n_pairs());
    let unbiased = exact_actor_field(mdp, policy, reg, &tabular, start)?;
    Ok((biased - unbiased).norm())
}

/// One application of the entropy-regularized optimality backup (unit
/// strength): `[T v](s) = log sum_a exp(r(s,a) + gamma sum_s' p(s'|s,a) v(s'))`,
/// the closed form of the maximization over the simplex. Max-shifted against
/// overflow.
pub fn soft_optimality_backup(mdp: &FiniteMdp, v: &DVector<f64>) -> Result<DVector<f64>> {
    if v.len() != mdp.n_states() {
        return Err(RegMdpError::Dimension(format!(
            "v has {} entries, expected {}",
            v.len(),
            mdp.n_states()
        )));
    }
    let gamma = mdp.discount();
    let na = mdp.n_actions();
    Ok(DVector::from_fn(mdp.n_states(), |s, _| {
        let mut pre = Vec::with_capacity(na);
        for a in 0..na {
            let mut x = mdp.reward(s, a);
            for sp in 0..mdp.n_states() {
                x += gamma * mdp.transition_prob(s, a, sp) * v[sp];
            }
            pre.push(x);
        }
        let max = pre.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        max + pre.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
    }))
}

/// Iterates the soft optimality backup to its fixed point, the optimal
/// regularized state values (an upper baseline for any policy's values).
/// The contraction bound `gamma/(1-gamma) * ||v_{k+1} - v_k||` controls the
/// reported accuracy.
pub fn soft_optimal_values(mdp: &FiniteMdp, tol: f64, max_iter: usize) -> Result<DVector<f64>> {
    let gamma = mdp.discount();
    let mut v = DVector::<f64>::zeros(mdp.n_states());
    for _ in 0..max_iter {
        let next = soft_optimality_backup(mdp, &v)?;
        let diff = (&next - &v).amax();
        v = next;
        if gamma == 0.0 || diff * gamma / (1.0 - gamma) <= tol {
            return Ok(v);
        }
    }
    Err(RegMdpError::Numeric(format!(
        "soft value iteration did not reach tolerance {tol} in {max_iter} iterations"
    )))
}
