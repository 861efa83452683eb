//! Finite MDP representation, tabular policies, the induced Markov chain on
//! state-action pairs, stationary and occupancy distributions, and validation
//! of the standing assumptions (exploration floor, ergodicity).
//!
//! State-action pairs are enumerated canonically as
//! `(s_0,a_0), (s_0,a_1), ..., (s_{S-1},a_{A-1})`, i.e. `index = s * A + a`.
//! Every matrix indexed by pairs in this crate uses that ordering.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{RegMdpError, Result};

/// Row sums of stochastic matrices must match 1 to this tolerance.
pub const ROW_SUM_TOL: f64 = 1e-12;
/// Residual tolerance for returned stationary distributions.
pub const STATIONARY_TOL: f64 = 1e-10;
/// Sum tolerance for distributions over pairs.
pub const PAIR_DIST_TOL: f64 = 1e-10;
/// Iteration cap for the stationary-distribution power iteration.
pub const POWER_ITER_CAP: usize = 1_000_000;
/// Per-sweep convergence tolerance for the power iteration.
pub const POWER_ITER_TOL: f64 = 1e-12;

/// A finite, infinite-horizon, discounted MDP.
///
/// `transition` is stored with one row per state-action pair (canonical
/// ordering) and one column per successor state.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMdp {
    n_states: usize,
    n_actions: usize,
    transition: DMatrix<f64>,
    reward: DVector<f64>,
    discount: f64,
}

/// On-disk JSON schema for an MDP instance.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MdpFile {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    /// Indexed `[s][a][s']`.
    transition: Vec<Vec<Vec<f64>>>,
    /// Indexed `[s][a]`.
    reward: Vec<Vec<f64>>,
}

impl FiniteMdp {
    /// Builds an MDP from nested arrays (the same layout as the JSON file
    /// format), validating stochasticity, discount range and finiteness.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: &[Vec<Vec<f64>>],
        reward: &[Vec<f64>],
        discount: f64,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(RegMdpError::Dimension(
                "n_states and n_actions must be positive".into(),
            ));
        }
        if transition.len() != n_states || reward.len() != n_states {
            return Err(RegMdpError::Dimension(format!(
                "expected {} states, got transition {} / reward {}",
                n_states,
                transition.len(),
                reward.len()
            )));
        }
        let n_pairs = n_states * n_actions;
        let mut t = DMatrix::<f64>::zeros(n_pairs, n_states);
        let mut r = DVector::<f64>::zeros(n_pairs);
        for s in 0..n_states {
            if transition[s].len() != n_actions || reward[s].len() != n_actions {
                return Err(RegMdpError::Dimension(format!(
                    "state {s}: expected {n_actions} actions"
                )));
            }
            for a in 0..n_actions {
                let row = &transition[s][a];
                if row.len() != n_states {
                    return Err(RegMdpError::Dimension(format!(
                        "transition[{s}][{a}]: expected {n_states} successors"
                    )));
                }
                let mut sum = 0.0;
                for (sp, &p) in row.iter().enumerate() {
                    if !(p >= 0.0) {
                        return Err(RegMdpError::Distribution(format!(
                            "transition[{s}][{a}][{sp}] = {p} is negative or NaN"
                        )));
                    }
                    t[(s * n_actions + a, sp)] = p;
                    sum += p;
                }
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(RegMdpError::Distribution(format!(
                        "transition[{s}][{a}] sums to {sum}, not 1"
                    )));
                }
                let rv = reward[s][a];
                if !rv.is_finite() {
                    return Err(RegMdpError::Domain(format!(
                        "reward[{s}][{a}] = {rv} is not finite"
                    )));
                }
                r[s * n_actions + a] = rv;
            }
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(RegMdpError::Domain(format!(
                "discount {discount} outside [0, 1)"
            )));
        }
        Ok(Self {
            n_states,
            n_actions,
            transition: t,
            reward: r,
            discount,
        })
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let file: MdpFile = serde_json::from_str(json)?;
        Self::new(
            file.n_states,
            file.n_actions,
            &file.transition,
            &file.reward,
            file.gamma,
        )
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        let mut transition = vec![vec![vec![0.0; self.n_states]; self.n_actions]; self.n_states];
        let mut reward = vec![vec![0.0; self.n_actions]; self.n_states];
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                for sp in 0..self.n_states {
                    transition[s][a][sp] = self.transition[(self.pair_index(s, a), sp)];
                }
                reward[s][a] = self.reward[self.pair_index(s, a)];
            }
        }
        serde_json::to_string_pretty(&MdpFile {
            n_states: self.n_states,
            n_actions: self.n_actions,
            gamma: self.discount,
            transition,
            reward,
        })
        .expect("mdp serialization cannot fail")
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
    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_actions
    }

    #[inline]
    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// Canonical index of the pair `(s, a)`.
    #[inline]
    pub fn pair_index(&self, s: usize, a: usize) -> usize {
        debug_assert!(s < self.n_states && a < self.n_actions);
        s * self.n_actions + a
    }

    /// Inverse of [`pair_index`](Self::pair_index).
    #[inline]
    pub fn pair_of(&self, index: usize) -> (usize, usize) {
        (index / self.n_actions, index % self.n_actions)
    }

    #[inline]
    pub fn transition_prob(&self, s: usize, a: usize, s_next: usize) -> f64 {
        self.transition[(self.pair_index(s, a), s_next)]
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[self.pair_index(s, a)]
    }

    /// Transition kernel with one row per pair, one column per successor state.
    pub fn transition_matrix(&self) -> &DMatrix<f64> {
        &self.transition
    }

    /// Rewards as a vector over pairs in canonical ordering.
    pub fn reward_vector(&self) -> &DVector<f64> {
        &self.reward
    }

    /// The state-to-state kernel under `policy`: `P(s'|s) = sum_a pi(a|s) p(s'|s,a)`.
    pub fn state_kernel(&self, policy: &TabularPolicy) -> Result<DMatrix<f64>> {
        self.check_policy_shape(policy)?;
        let mut k = DMatrix::<f64>::zeros(self.n_states, self.n_states);
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let w = policy.prob(s, a);
                if w == 0.0 {
                    continue;
                }
                for sp in 0..self.n_states {
                    k[(s, sp)] += w * self.transition[(self.pair_index(s, a), sp)];
                }
            }
        }
        Ok(k)
    }

    fn check_policy_shape(&self, policy: &TabularPolicy) -> Result<()> {
        if policy.n_states() != self.n_states || policy.n_actions() != self.n_actions {
            return Err(RegMdpError::Dimension(format!(
                "policy is {}x{}, mdp is {}x{}",
                policy.n_states(),
                policy.n_actions(),
                self.n_states,
                self.n_actions
            )));
        }
        Ok(())
    }
}

/// A row-stochastic conditional distribution `pi(a|s)` with a declared
/// exploration floor `epsilon`. The floor is the policy-class guarantee
/// checked by [`validate_assumptions`]; construction only requires the rows
/// to be valid distributions so that violating policies can be diagnosed.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    probs: DMatrix<f64>,
    floor: f64,
}

impl TabularPolicy {
    pub fn new(probs: DMatrix<f64>, floor: f64) -> Result<Self> {
        if floor <= 0.0 || !floor.is_finite() {
            return Err(RegMdpError::Domain(format!(
                "policy floor must be positive, got {floor}"
            )));
        }
        for s in 0..probs.nrows() {
            let mut sum = 0.0;
            for a in 0..probs.ncols() {
                let p = probs[(s, a)];
                if !(p >= 0.0) || !p.is_finite() {
                    return Err(RegMdpError::Distribution(format!(
                        "pi({a}|{s}) = {p} is negative or not finite"
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(RegMdpError::Distribution(format!(
                    "policy row {s} sums to {sum}, not 1"
                )));
            }
        }
        Ok(Self { probs, floor })
    }

    /// The uniform policy; its floor is exactly `1/|A|`.
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        let p = 1.0 / n_actions as f64;
        Self {
            probs: DMatrix::from_element(n_states, n_actions, p),
            floor: p,
        }
    }

    #[inline]
    pub fn n_states(&self) -> usize {
        self.probs.nrows()
    }

    #[inline]
    pub fn n_actions(&self) -> usize {
        self.probs.ncols()
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[(s, a)]
    }

    /// The distribution `pi(.|s)` as a slice-backed vector.
    pub fn row(&self, s: usize) -> DVector<f64> {
        self.probs.row(s).transpose()
    }

    pub fn probs(&self) -> &DMatrix<f64> {
        &self.probs
    }

    #[inline]
    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn min_prob(&self) -> f64 {
        self.probs.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Whether every entry meets the declared exploration floor.
    pub fn satisfies_floor(&self) -> bool {
        self.min_prob() >= self.floor - 1e-15
    }
}

/// The Markov chain a policy induces on state-action pairs, optionally with
/// the restart mixture `gamma * p(.|s,a) + (1-gamma) * xi(.)` applied to the
/// state transition before the policy picks the next action.
#[derive(Debug, Clone)]
pub struct StateActionChain {
    p_pi: DMatrix<f64>,
    restart_dist: Option<DVector<f64>>,
    effective_discount: f64,
}

impl StateActionChain {
    /// Row-stochastic kernel on pairs; entry `[(s,a), (s',a')]` is the
    /// probability of moving to `(s',a')` with the policy conditioned on the
    /// landing state `s'`.
    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.p_pi
    }

    pub fn n_pairs(&self) -> usize {
        self.p_pi.nrows()
    }

    pub fn restart_dist(&self) -> Option<&DVector<f64>> {
        self.restart_dist.as_ref()
    }

    pub fn effective_discount(&self) -> f64 {
        self.effective_discount
    }
}

fn validate_state_distribution(xi: &DVector<f64>, n_states: usize) -> Result<()> {
    if xi.len() != n_states {
        return Err(RegMdpError::Dimension(format!(
            "distribution has {} entries, expected {}",
            xi.len(),
            n_states
        )));
    }
    let mut sum = 0.0;
    for &p in xi.iter() {
        if !(p >= 0.0) || !p.is_finite() {
            return Err(RegMdpError::Distribution(format!(
                "entry {p} is negative or not finite"
            )));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(RegMdpError::Distribution(format!(
            "distribution sums to {sum}, not 1"
        )));
    }
    Ok(())
}

fn chain_from_state_kernel(
    mdp: &FiniteMdp,
    policy: &TabularPolicy,
    state_step: impl Fn(usize, usize, usize) -> f64,
) -> DMatrix<f64> {
    let n_pairs = mdp.n_pairs();
    let na = mdp.n_actions();
    let mut p = DMatrix::<f64>::zeros(n_pairs, n_pairs);
    for s in 0..mdp.n_states() {
        for a in 0..na {
            let row = mdp.pair_index(s, a);
            for sp in 0..mdp.n_states() {
                let ps = state_step(s, a, sp);
                if ps == 0.0 {
                    continue;
                }
                for ap in 0..na {
                    p[(row, sp * na + ap)] = ps * policy.prob(sp, ap);
                }
            }
        }
    }
    p
}

/// The chain on pairs induced by following `policy` in `mdp` (no restart).
pub fn induced_chain(mdp: &FiniteMdp, policy: &TabularPolicy) -> Result<StateActionChain> {
    if policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions() {
        return Err(RegMdpError::Dimension(format!(
            "policy is {}x{}, mdp is {}x{}",
            policy.n_states(),
            policy.n_actions(),
            mdp.n_states(),
            mdp.n_actions()
        )));
    }
    let p = chain_from_state_kernel(mdp, policy, |s, a, sp| mdp.transition_prob(s, a, sp));
    Ok(StateActionChain {
        p_pi: p,
        restart_dist: None,
        effective_discount: mdp.discount(),
    })
}

/// The chain on pairs under the restart mixture: with probability `gamma`
/// the next state follows the model, with probability `1-gamma` it is drawn
/// from `xi`; the next action is always drawn from the policy at the landing
/// state. The stationary state-marginal of this chain is the normalized
/// discounted occupancy `(1-gamma) * d` started from `xi`.
pub fn restart_chain(
    mdp: &FiniteMdp,
    policy: &TabularPolicy,
    xi: &DVector<f64>,
) -> Result<StateActionChain> {
    if policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions() {
        return Err(RegMdpError::Dimension("policy/mdp shape mismatch".into()));
    }
    validate_state_distribution(xi, mdp.n_states())?;
    let gamma = mdp.discount();
    let p = chain_from_state_kernel(mdp, policy, |s, a, sp| {
        gamma * mdp.transition_prob(s, a, sp) + (1.0 - gamma) * xi[sp]
    });
    Ok(StateActionChain {
        p_pi: p,
        restart_dist: Some(xi.clone()),
        effective_discount: gamma,
    })
}

/// A probability distribution over state-action pairs in canonical ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionOverPairs {
    weights: DVector<f64>,
}

impl DistributionOverPairs {
    pub fn new(weights: DVector<f64>) -> Result<Self> {
        let mut sum = 0.0;
        for &w in weights.iter() {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(RegMdpError::Distribution(format!(
                    "weight {w} is negative or not finite"
                )));
            }
            sum += w;
        }
        if (sum - 1.0).abs() > PAIR_DIST_TOL {
            return Err(RegMdpError::Distribution(format!(
                "weights sum to {sum}, not 1"
            )));
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    /// Marginal over states (sums the action slots of each state).
    pub fn state_marginal(&self, n_actions: usize) -> DVector<f64> {
        let n_states = self.weights.len() / n_actions;
        DVector::from_fn(n_states, |s, _| {
            (0..n_actions).map(|a| self.weights[s * n_actions + a]).sum()
        })
    }
}

fn stationarity_residual(nu: &DVector<f64>, p: &DMatrix<f64>) -> f64 {
    let next = p.transpose() * nu;
    (&next - nu).amax()
}

/// Stationary distribution of the chain: the left Perron vector of the
/// kernel. Power iteration (cap [`POWER_ITER_CAP`], tolerance
/// [`POWER_ITER_TOL`]) with a dense linear solve as fallback; period-2
/// oscillation is detected early and routed to the dense solve.
pub fn stationary_distribution(chain: &StateActionChain) -> Result<DistributionOverPairs> {
    let p = chain.kernel();
    let n = p.nrows();
    let pt = p.transpose();
    let mut nu = DVector::from_element(n, 1.0 / n as f64);
    let mut prev = nu.clone();
    let mut converged = false;
    for _ in 0..POWER_ITER_CAP {
        let mut next = &pt * &nu;
        let sum: f64 = next.iter().sum();
        next /= sum;
        let diff = (&next - &nu).amax();
        if diff <= POWER_ITER_TOL {
            nu = next;
            converged = true;
            break;
        }
        // Period-2 oscillation: iterates flip between two points without
        // the per-sweep diff shrinking; hand off to the dense solve.
        if (&next - &prev).amax() <= POWER_ITER_TOL {
            nu = next;
            break;
        }
        prev = std::mem::replace(&mut nu, next);
    }
    if !converged {
        nu = dense_stationary_solve(p)?;
    }
    // Clamp tiny negative round-off and renormalize before validating.
    for w in nu.iter_mut() {
        if *w < 0.0 {
            if *w < -1e-9 {
                return Err(RegMdpError::Ergodicity(format!(
                    "stationary solve produced negative mass {w}"
                )));
            }
            *w = 0.0;
        }
    }
    let sum: f64 = nu.iter().sum();
    nu /= sum;
    let residual = stationarity_residual(&nu, p);
    if residual > STATIONARY_TOL {
        return Err(RegMdpError::Ergodicity(format!(
            "no stationary distribution within tolerance (residual {residual:.3e}); \
             the chain is likely not ergodic"
        )));
    }
    DistributionOverPairs::new(nu)
}

/// Solves `nu^T P = nu^T, sum(nu) = 1` directly: replace the last row of
/// `P^T - I` with ones and solve against the matching unit vector.
fn dense_stationary_solve(p: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = p.nrows();
    let mut m = p.transpose() - DMatrix::<f64>::identity(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for j in 0..n {
        m[(n - 1, j)] = 1.0;
    }
    rhs[n - 1] = 1.0;
    m.lu()
        .solve(&rhs)
        .ok_or_else(|| RegMdpError::Ergodicity("stationary system is singular".into()))
}

/// Discounted state-occupancy `d(s) = sum_t gamma^t P(s_t = s)` started from
/// `start`, solved from `d^T = start^T + gamma d^T P_state`. Its entries sum
/// to `1/(1-gamma)`.
pub fn discounted_occupancy(
    mdp: &FiniteMdp,
    policy: &TabularPolicy,
    start: &DVector<f64>,
) -> Result<DVector<f64>> {
    validate_state_distribution(start, mdp.n_states())?;
    let k = mdp.state_kernel(policy)?;
    let n = mdp.n_states();
    let m = DMatrix::<f64>::identity(n, n) - k.transpose() * mdp.discount();
    m.lu()
        .solve(start)
        .ok_or_else(|| RegMdpError::Numeric("occupancy solve is singular".into()))
}

/// Findings about the standing assumptions for one (mdp, policy) pair.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    /// Minimum policy probability across all pairs.
    pub min_policy_prob: f64,
    /// The floor the policy claims to satisfy.
    pub declared_floor: f64,
    /// Assumption 1: every entry of the policy is at least the floor.
    pub floor_satisfied: bool,
    /// Assumption 2 (part 1): the support graph of the induced pair chain is
    /// strongly connected.
    pub irreducible: bool,
    /// Assumption 2 (part 2): gcd of cycle lengths is 1 (only meaningful
    /// when irreducible).
    pub aperiodic: bool,
    /// Period of the chain when irreducible (1 means aperiodic).
    pub period: Option<u64>,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.floor_satisfied && self.irreducible && self.aperiodic
    }
}

/// Checks the exploration floor (Assumption 1) and ergodicity of the induced
/// pair chain (Assumption 2) via the support graph: strong connectivity by
/// forward/backward reachability, aperiodicity by the gcd of level jumps.
pub fn validate_assumptions(mdp: &FiniteMdp, policy: &TabularPolicy) -> Result<AssumptionReport> {
    let chain = induced_chain(mdp, policy)?;
    let p = chain.kernel();
    let n = p.nrows();
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| p[(i, j)] > 0.0).collect())
        .collect();
    let radj: Vec<Vec<usize>> = {
        let mut r = vec![Vec::new(); n];
        for (i, out) in adj.iter().enumerate() {
            for &j in out {
                r[j].push(i);
            }
        }
        r
    };
    let forward = reachable(&adj, 0);
    let backward = reachable(&radj, 0);
    let irreducible = forward.iter().all(|&b| b) && backward.iter().all(|&b| b);
    let period = if irreducible { Some(chain_period(&adj)) } else { None };
    Ok(AssumptionReport {
        min_policy_prob: policy.min_prob(),
        declared_floor: policy.floor(),
        floor_satisfied: policy.satisfies_floor(),
        irreducible,
        aperiodic: period == Some(1),
        period,
    })
}

fn reachable(adj: &[Vec<usize>], from: usize) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![from];
    seen[from] = true;
    while let Some(i) = stack.pop() {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen
}

/// Period of a strongly connected graph: gcd over all edges `(u, v)` of
/// `level(u) + 1 - level(v)` where levels come from a BFS tree.
fn chain_period(adj: &[Vec<usize>]) -> u64 {
    let n = adj.len();
    let mut level = vec![i64::MIN; n];
    let mut queue = std::collections::VecDeque::new();
    level[0] = 0;
    queue.push_back(0usize);
    let mut g: u64 = 0;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if level[v] == i64::MIN {
                level[v] = level[u] + 1;
                queue.push_back(v);
            } else {
                let jump = (level[u] + 1 - level[v]).unsigned_abs();
                g = gcd(g, jump);
            }
        }
    }
    if g == 0 {
        // No non-tree edge was found; a strongly connected graph with n > 1
        // nodes always has one, so this only happens for a single self-loop.
        1
    } else {
        g
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state_cycle() -> FiniteMdp {
        // Deterministic cycle s0 -> s1 -> s0, single action.
        FiniteMdp::new(
            2,
            1,
            &[vec![vec![0.0, 1.0]], vec![vec![1.0, 0.0]]],
            &[vec![1.0], vec![0.0]],
            0.9,
        )
        .unwrap()
    }

    fn seeded_mdp(seed: u64, n_states: usize, n_actions: usize, gamma: f64) -> FiniteMdp {
        // Local deterministic generator; keeps these tests independent of
        // the simulation harness.
        let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut transition = Vec::new();
        let mut reward = Vec::new();
        for _ in 0..n_states {
            let mut rows = Vec::new();
            let mut rrow = Vec::new();
            for _ in 0..n_actions {
                let raw: Vec<f64> = (0..n_states).map(|_| -f64::ln(1.0 - next())).collect();
                let sum: f64 = raw.iter().sum();
                rows.push(raw.iter().map(|x| x / sum).collect());
                rrow.push(next());
            }
            transition.push(rows);
            reward.push(rrow);
        }
        FiniteMdp::new(n_states, n_actions, &transition, &reward, gamma).unwrap()
    }

    #[test]
    fn rejects_bad_rows_and_discount() {
        let bad_row = FiniteMdp::new(1, 1, &[vec![vec![0.5]]], &[vec![0.0]], 0.9);
        assert!(matches!(bad_row, Err(RegMdpError::Distribution(_))));
        let bad_gamma = FiniteMdp::new(1, 1, &[vec![vec![1.0]]], &[vec![0.0]], 1.0);
        assert!(matches!(bad_gamma, Err(RegMdpError::Domain(_))));
        let bad_reward = FiniteMdp::new(1, 1, &[vec![vec![1.0]]], &[vec![f64::NAN]], 0.9);
        assert!(matches!(bad_reward, Err(RegMdpError::Domain(_))));
    }

    #[test]
    fn induced_chain_single_pair() {
        let mdp = FiniteMdp::new(1, 1, &[vec![vec![1.0]]], &[vec![1.0]], 0.9).unwrap();
        let chain = induced_chain(&mdp, &TabularPolicy::uniform(1, 1)).unwrap();
        assert_eq!(chain.kernel().nrows(), 1);
        assert_eq!(chain.kernel()[(0, 0)], 1.0);
    }

    #[test]
    fn induced_chain_deterministic_cycle_is_permutation() {
        let chain = induced_chain(&two_state_cycle(), &TabularPolicy::uniform(2, 1)).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(chain.kernel(), &expected);
    }

    #[test]
    fn induced_chain_matches_per_entry_products() {
        let mdp = seeded_mdp(7, 3, 2, 0.9);
        let policy = TabularPolicy::uniform(3, 2);
        let chain = induced_chain(&mdp, &policy).unwrap();
        for s in 0..3 {
            for a in 0..2 {
                for sp in 0..3 {
                    for ap in 0..2 {
                        let got = chain.kernel()[(mdp.pair_index(s, a), mdp.pair_index(sp, ap))];
                        let want = mdp.transition_prob(s, a, sp) * policy.prob(sp, ap);
                        assert!((got - want).abs() < 1e-15, "entry ({s},{a})->({sp},{ap})");
                    }
                }
            }
        }
        // Rows must be stochastic.
        for i in 0..chain.n_pairs() {
            let sum: f64 = chain.kernel().row(i).iter().sum();
            assert!((sum - 1.0).abs() <= ROW_SUM_TOL);
        }
    }

    #[test]
    fn restart_chain_gamma_zero_is_xi() {
        let mdp = FiniteMdp::new(
            2,
            1,
            &[vec![vec![0.0, 1.0]], vec![vec![1.0, 0.0]]],
            &[vec![0.0], vec![0.0]],
            0.0,
        )
        .unwrap();
        let policy = TabularPolicy::uniform(2, 1);
        let xi = DVector::from_vec(vec![0.3, 0.7]);
        let chain = restart_chain(&mdp, &policy, &xi).unwrap();
        for row in 0..2 {
            assert!((chain.kernel()[(row, 0)] - 0.3).abs() < 1e-15);
            assert!((chain.kernel()[(row, 1)] - 0.7).abs() < 1e-15);
        }
    }

    #[test]
    fn restart_chain_gamma_near_one_matches_induced() {
        let base = seeded_mdp(3, 3, 2, 0.5);
        let mdp = FiniteMdp::new(
            3,
            2,
            &(0..3)
                .map(|s| {
                    (0..2)
                        .map(|a| (0..3).map(|sp| base.transition_prob(s, a, sp)).collect())
                        .collect()
                })
                .collect::<Vec<_>>(),
            &(0..3)
                .map(|s| (0..2).map(|a| base.reward(s, a)).collect())
                .collect::<Vec<_>>(),
            1.0 - 1e-15,
        )
        .unwrap();
        let policy = TabularPolicy::uniform(3, 2);
        let xi = DVector::from_element(3, 1.0 / 3.0);
        let induced = induced_chain(&mdp, &policy).unwrap();
        let restarted = restart_chain(&mdp, &policy, &xi).unwrap();
        assert!((induced.kernel() - restarted.kernel()).amax() <= 1e-12);
    }

    #[test]
    fn restart_chain_is_entrywise_mixture() {
        let mdp = seeded_mdp(11, 2, 2, 0.5);
        let policy = TabularPolicy::uniform(2, 2);
        let xi = DVector::from_vec(vec![0.25, 0.75]);
        let chain = restart_chain(&mdp, &policy, &xi).unwrap();
        for s in 0..2 {
            for a in 0..2 {
                for sp in 0..2 {
                    for ap in 0..2 {
                        let want = (0.5 * mdp.transition_prob(s, a, sp) + 0.5 * xi[sp])
                            * policy.prob(sp, ap);
                        let got = chain.kernel()[(mdp.pair_index(s, a), mdp.pair_index(sp, ap))];
                        assert!((got - want).abs() < 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn restart_chain_rejects_bad_xi() {
        let mdp = seeded_mdp(1, 2, 2, 0.5);
        let policy = TabularPolicy::uniform(2, 2);
        let xi = DVector::from_vec(vec![0.5, 0.6]);
        assert!(matches!(
            restart_chain(&mdp, &policy, &xi),
            Err(RegMdpError::Distribution(_))
        ));
    }

    #[test]
    fn stationary_symmetric_two_pair_chain() {
        let chain = StateActionChain {
            p_pi: DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]),
            restart_dist: None,
            effective_discount: 0.9,
        };
        let nu = stationary_distribution(&chain).unwrap();
        assert!((nu.weights()[0] - 0.5).abs() < 1e-12);
        assert!((nu.weights()[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn stationary_permutation_chain_resolves_to_half_half() {
        // Period-2 chain: irreducible, so (0.5, 0.5) is the unique
        // stationary distribution even though the chain is not ergodic;
        // the aperiodicity failure is what validate_assumptions reports.
        let chain = StateActionChain {
            p_pi: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
            restart_dist: None,
            effective_discount: 0.9,
        };
        let nu = stationary_distribution(&chain).unwrap();
        assert!((nu.weights()[0] - 0.5).abs() < 1e-10);
        let mdp = two_state_cycle();
        let report = validate_assumptions(&mdp, &TabularPolicy::uniform(2, 1)).unwrap();
        assert!(report.irreducible);
        assert!(!report.aperiodic);
        assert_eq!(report.period, Some(2));
    }

    #[test]
    fn stationary_reducible_chain_errors() {
        // Two absorbing pairs: no unique stationary distribution.
        let chain = StateActionChain {
            p_pi: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]),
            restart_dist: None,
            effective_discount: 0.9,
        };
        // Power iteration converges from uniform (both points are fixed),
        // producing a residual-valid distribution; the uniform start makes
        // this the symmetric mixture. Reducibility is flagged by
        // validate_assumptions instead, so just confirm we get *a* valid
        // stationary point here.
        let nu = stationary_distribution(&chain).unwrap();
        assert!(stationarity_residual(nu.weights(), &chain.p_pi) <= STATIONARY_TOL);
    }

    #[test]
    fn stationary_matches_dense_left_eigenvector() {
        let mdp = seeded_mdp(5, 3, 2, 0.9);
        let chain = induced_chain(&mdp, &TabularPolicy::uniform(3, 2)).unwrap();
        let nu = stationary_distribution(&chain).unwrap();
        // Independent dense route.
        let dense = dense_stationary_solve(chain.kernel()).unwrap();
        assert!((nu.weights() - &dense).amax() < 1e-8);
        assert!(stationarity_residual(nu.weights(), chain.kernel()) <= STATIONARY_TOL);
    }

    #[test]
    fn occupancy_single_state_is_geometric_sum() {
        let mdp = FiniteMdp::new(1, 1, &[vec![vec![1.0]]], &[vec![0.0]], 0.9).unwrap();
        let d = discounted_occupancy(
            &mdp,
            &TabularPolicy::uniform(1, 1),
            &DVector::from_vec(vec![1.0]),
        )
        .unwrap();
        assert!((d[0] - 10.0).abs() < 1e-9);
    }

    #[test]
    fn occupancy_gamma_zero_is_start() {
        let mdp = seeded_mdp(13, 4, 2, 0.0);
        let start = DVector::from_vec(vec![0.1, 0.2, 0.3, 0.4]);
        let d = discounted_occupancy(&mdp, &TabularPolicy::uniform(4, 2), &start).unwrap();
        assert!((d - start).amax() < 1e-12);
    }

    #[test]
    fn occupancy_matches_truncated_power_series() {
        let mdp = seeded_mdp(17, 4, 2, 0.9);
        let policy = TabularPolicy::uniform(4, 2);
        let start = DVector::from_vec(vec![0.4, 0.3, 0.2, 0.1]);
        let d = discounted_occupancy(&mdp, &policy, &start).unwrap();
        // Truncated-sum oracle.
        let k = mdp.state_kernel(&policy).unwrap();
        let mut probe = start.clone();
        let mut truncated = DVector::<f64>::zeros(4);
        let mut weight = 1.0;
        for _ in 0..=200 {
            truncated += &probe * weight;
            probe = k.transpose() * probe;
            weight *= 0.9;
        }
        assert!((&d - &truncated).amax() < 1e-6);
        let total: f64 = d.iter().sum();
        assert!((total - 10.0).abs() < 1e-8);
    }

    #[test]
    fn restart_stationary_marginal_matches_occupancy() {
        let mdp = seeded_mdp(23, 4, 3, 0.9);
        let policy = TabularPolicy::uniform(4, 3);
        let xi = DVector::from_vec(vec![0.4, 0.1, 0.3, 0.2]);
        let chain = restart_chain(&mdp, &policy, &xi).unwrap();
        let nu = stationary_distribution(&chain).unwrap();
        let marginal = nu.state_marginal(3);
        let d = discounted_occupancy(&mdp, &policy, &xi).unwrap();
        let scaled = d * (1.0 - 0.9);
        assert!((marginal - scaled).amax() < 1e-6);
    }

    #[test]
    fn validate_assumptions_pass_and_floor_violation() {
        let mdp = seeded_mdp(29, 3, 2, 0.9);
        let report = validate_assumptions(&mdp, &TabularPolicy::uniform(3, 2)).unwrap();
        assert!(report.all_pass(), "{report:?}");

        let mut probs = DMatrix::from_element(3, 2, 0.5);
        probs[(1, 0)] = 0.0;
        probs[(1, 1)] = 1.0;
        let policy = TabularPolicy::new(probs, 0.01).unwrap();
        let report = validate_assumptions(&mdp, &policy).unwrap();
        assert!(!report.floor_satisfied);
    }

    #[test]
    fn validate_assumptions_flags_disconnected_components() {
        // Two components {s0} and {s1} with self-loops only.
        let mdp = FiniteMdp::new(
            2,
            1,
            &[vec![vec![1.0, 0.0]], vec![vec![0.0, 1.0]]],
            &[vec![0.0], vec![0.0]],
            0.9,
        )
        .unwrap();
        let report = validate_assumptions(&mdp, &TabularPolicy::uniform(2, 1)).unwrap();
        assert!(!report.irreducible);
    }

    #[test]
    fn json_round_trip_preserves_instance() {
        let mdp = seeded_mdp(31, 3, 2, 0.85);
        let json = mdp.to_json();
        let back = FiniteMdp::from_json(&json).unwrap();
        assert_eq!(mdp, back);
    }

    #[test]
    fn json_rejects_unknown_fields() {
        let json = r#"{"n_states":1,"n_actions":1,"gamma":0.9,
            "transition":[[[1.0]]],"reward":[[0.0]],"extra":1}"#;
        assert!(FiniteMdp::from_json(json).is_err());
    }
}
