//! The coupled two-timescale loop (critic fast, actor slow), run
//! configuration, convergence diagnostics, and seeded instance generation.
//!
//! Each sampled transition applies one critic step with the fast schedule
//! and one projected actor step with the slow schedule, in the simultaneous
//! single-loop form; a nested ablation mode interleaves extra critic steps
//! per actor step.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::actor::{psi_block, projected_field_residual, ProjectionBox, SoftmaxPolicy};
use crate::critic::{critic_step, sampling_fixed_point, CriticState, OmegaMode, StepSchedule};
use crate::error::{RegMdpError, Result};
use crate::exact::{exact_actor_field, exact_actor_field_with_weights, objective_j, start_state_objective};
use crate::features::FeatureMap;
use crate::mdp::{validate_assumptions, FiniteMdp};
use crate::regularizer::Regularizer;
use crate::sampler::{ChainMode, SamplerConfig};

/// Logarithmically spaced checkpoint steps in `[first, n_steps]` with
/// `n_points` entries (deduplicated, always ending at `n_steps`). The first
/// checkpoint sits at 100 or earlier for short runs.
pub fn log_checkpoints(n_steps: u64, n_points: usize) -> Vec<u64> {
    if n_steps == 0 || n_points == 0 {
        return Vec::new();
    }
    let first = 100u64.min(n_steps);
    if n_points == 1 || first == n_steps {
        return vec![n_steps];
    }
    let ratio = (n_steps as f64 / first as f64).powf(1.0 / (n_points - 1) as f64);
    let mut points = Vec::with_capacity(n_points);
    let mut x = first as f64;
    for _ in 0..n_points {
        let step = (x.round() as u64).clamp(first, n_steps);
        if points.last() != Some(&step) {
            points.push(step);
        }
        x *= ratio;
    }
    if points.last() != Some(&n_steps) {
        points.push(n_steps);
    }
    points
}

/// Everything one coupled run needs besides the instance and the seed.
#[derive(Debug, Clone)]
pub struct AcParams {
    pub reg: Regularizer,
    pub critic_schedule: StepSchedule,
    pub actor_schedule: StepSchedule,
    pub theta_max: f64,
    pub epsilon_floor: f64,
    pub n_steps: u64,
    pub checkpoints: Vec<u64>,
    pub omega_mode: OmegaMode,
    pub sampler_cfg: SamplerConfig,
    /// Extra critic steps per actor step (1 = the simultaneous form).
    pub inner_critic_steps: u64,
    pub initial_theta: Option<DVector<f64>>,
    pub initial_omega: Option<DVector<f64>>,
}

/// Per-checkpoint measurements of one coupled run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcCheckpoint {
    pub step: u64,
    /// Occupancy-weighted objective at the current policy.
    pub j_theta: f64,
    /// Start-state objective (the functional whose gradient the exact actor
    /// field is).
    pub j_start: f64,
    /// Sup-norm of the projected exact actor field at the current policy.
    pub grad_residual: f64,
    /// Distance of the critic weights to the fixed point of the current
    /// policy (matching the sampling chain).
    pub omega_error: f64,
    pub omega_norm: f64,
    pub omega_star_norm: f64,
    pub min_policy_prob: f64,
    pub n_active_constraints: usize,
    /// Gap between the exact field at the current weights and at the
    /// tracked fixed point; the critic-lag term of the actor noise.
    pub zeta2_proxy: f64,
    /// Martingale-noise tail over the window ending here:
    /// `|| sum beta_t (psi_t - mean psi) ||_2`.
    pub noise_tail: f64,
    /// Summed actor movement over the window ending here.
    pub dtheta_window: f64,
    /// Summed critic movement over the window ending here.
    pub domega_window: f64,
    pub td_error_ma: f64,
}

/// Result of one coupled two-timescale run. Serializes to JSON bitwise
/// deterministically for a fixed config and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub n_steps: u64,
    pub final_theta: Vec<f64>,
    pub final_omega: Vec<f64>,
    pub final_j_theta: f64,
    pub final_grad_residual: f64,
    pub checkpoints: Vec<AcCheckpoint>,
}

/// Runs the coupled actor-critic recursion for `params.n_steps` transitions.
pub fn run_actor_critic(
    mdp: &FiniteMdp,
    features: &FeatureMap,
    params: &AcParams,
    seed: u64,
) -> Result<RunReport> {
    if features.n_pairs() != mdp.n_pairs() {
        return Err(RegMdpError::Dimension(
            "feature rows do not match the mdp's pairs".into(),
        ));
    }
    if params.inner_critic_steps == 0 {
        return Err(RegMdpError::Config("inner_critic_steps must be >= 1".into()));
    }
    let bounds = ProjectionBox::new(params.theta_max)?;
    let n_params = mdp.n_pairs();
    let mut theta = params
        .initial_theta
        .clone()
        .unwrap_or_else(|| DVector::zeros(n_params));
    if theta.len() != n_params {
        return Err(RegMdpError::Dimension("initial theta length".into()));
    }
    bounds.project(&mut theta);
    let mut policy =
        SoftmaxPolicy::from_theta(theta, mdp.n_states(), mdp.n_actions(), params.epsilon_floor)?;
    let mut critic = CriticState {
        omega: params
            .initial_omega
            .clone()
            .unwrap_or_else(|| DVector::zeros(features.k())),
        t: 0,
    };
    if critic.omega.len() != features.k() {
        return Err(RegMdpError::Dimension("initial omega length".into()));
    }
    let mut sampler = params.sampler_cfg.build(mdp, &policy, seed)?;

    let na = mdp.n_actions();
    let mut checkpoints = Vec::with_capacity(params.checkpoints.len());
    let mut td_ma = 0.0;
    let mut next_checkpoint = 0usize;
    // Window accumulators (reset at each checkpoint).
    let mut sum_beta_psi = DVector::<f64>::zeros(n_params);
    let mut sum_psi = DVector::<f64>::zeros(n_params);
    let mut sum_beta = 0.0;
    let mut window_count = 0u64;
    let mut dtheta_window = 0.0;
    let mut domega_window = 0.0;

    for step in 1..=params.n_steps {
        // Nested ablation: extra critic-only transitions before the coupled one.
        for _ in 1..params.inner_critic_steps {
            let transition = sampler.sample_step(&policy);
            let delta = critic_step(
                &mut critic,
                &transition,
                &params.critic_schedule,
                mdp,
                &policy,
                &params.reg,
                features,
                params.omega_mode,
            )?;
            td_ma = 0.999 * td_ma + 0.001 * delta;
        }
        let transition = sampler.sample_step(&policy);
        let omega_before = features.dot(
            mdp.pair_index(transition.s, transition.a),
            &critic.omega,
        );
        let delta = critic_step(
            &mut critic,
            &transition,
            &params.critic_schedule,
            mdp,
            &policy,
            &params.reg,
            features,
            params.omega_mode,
        )?;
        td_ma = 0.999 * td_ma + 0.001 * delta;
        // ||d omega|| for the timescale trace: the update is beta*delta*phi.
        let beta_omega = params.critic_schedule.value(critic.t - 1);
        let phi_norm = if features.is_tabular() {
            1.0
        } else {
            features
                .row(mdp.pair_index(transition.s, transition.a))
                .norm()
        };
        domega_window += (beta_omega * delta * phi_norm).abs();
        let _ = omega_before;

        // Actor step on the logits of the visited state.
        let beta_theta = params.actor_schedule.value(step - 1);
        let q_sa = features.dot(mdp.pair_index(transition.s, transition.a), &critic.omega);
        let block = psi_block(&policy, q_sa, &params.reg, transition.s, transition.a);
        let base = transition.s * na;
        let mut dtheta_sq = 0.0;
        {
            let theta = policy.theta_mut();
            for b in 0..na {
                let before = theta[base + b];
                let after = bounds.clamp(before + beta_theta * block[b]);
                theta[base + b] = after;
                dtheta_sq += (after - before) * (after - before);
            }
        }
        dtheta_window += dtheta_sq.sqrt();
        // Window noise accumulators over the full-length psi.
        for b in 0..na {
            sum_beta_psi[base + b] += beta_theta * block[b];
            sum_psi[base + b] += block[b];
        }
        sum_beta += beta_theta;
        window_count += 1;

        if next_checkpoint < params.checkpoints.len()
            && params.checkpoints[next_checkpoint] == step
        {
            let mean_beta = sum_beta / window_count as f64;
            let noise_tail = (&sum_beta_psi - &sum_psi * mean_beta).norm();
            let cp = measure_checkpoint(
                mdp,
                features,
                params,
                &policy,
                &critic,
                step,
                td_ma,
                noise_tail,
                dtheta_window,
                domega_window,
                &bounds,
            )?;
            checkpoints.push(cp);
            sum_beta_psi.fill(0.0);
            sum_psi.fill(0.0);
            sum_beta = 0.0;
            window_count = 0;
            dtheta_window = 0.0;
            domega_window = 0.0;
            while next_checkpoint < params.checkpoints.len()
                && params.checkpoints[next_checkpoint] <= step
            {
                next_checkpoint += 1;
            }
        }
    }

    let at_end = checkpoints.last().filter(|cp| cp.step == params.n_steps);
    let (final_j_theta, final_grad_residual) = match at_end {
        Some(cp) => (cp.j_theta, cp.grad_residual),
        None => {
            let j = objective_j(mdp, &policy.to_tabular(), &params.reg, &params.sampler_cfg.xi)?;
            let field =
                exact_actor_field(mdp, &policy, &params.reg, features, &params.sampler_cfg.xi)?;
            (j, projected_field_residual(policy.theta(), &field, &bounds))
        }
    };
    Ok(RunReport {
        seed,
        n_steps: params.n_steps,
        final_theta: policy.theta().iter().copied().collect(),
        final_omega: critic.omega.iter().copied().collect(),
        final_j_theta,
        final_grad_residual,
        checkpoints,
    })
}

#[allow(clippy::too_many_arguments)]
fn measure_checkpoint(
    mdp: &FiniteMdp,
    features: &FeatureMap,
    params: &AcParams,
    policy: &SoftmaxPolicy,
    critic: &CriticState,
    step: u64,
    td_ma: f64,
    noise_tail: f64,
    dtheta_window: f64,
    domega_window: f64,
    bounds: &ProjectionBox,
) -> Result<AcCheckpoint> {
    let tab = policy.to_tabular();
    let xi = &params.sampler_cfg.xi;
    let j_theta = objective_j(mdp, &tab, &params.reg, xi)?;
    let j_start = start_state_objective(mdp, &tab, &params.reg, xi)?;
    // The fixed point the critic tracks under the configured sampling chain.
    let omega_star = sampling_fixed_point(mdp, &tab, &params.reg, features, &params.sampler_cfg)?;
    let omega_error = (&critic.omega - &omega_star).norm();
    // Exact field at the raw-chain fixed point (the ideal-critic gradient).
    let field = exact_actor_field(mdp, policy, &params.reg, features, xi)?;
    let grad_residual = projected_field_residual(policy.theta(), &field, bounds);
    // Critic-lag proxy: field at current weights vs at the tracked fixed point.
    let field_cur =
        exact_actor_field_with_weights(mdp, policy, &params.reg, features, xi, &critic.omega)?;
    let field_star =
        exact_actor_field_with_weights(mdp, policy, &params.reg, features, xi, &omega_star)?;
    let zeta2_proxy = (&field_cur - &field_star).norm();
    Ok(AcCheckpoint {
        step,
        j_theta,
        j_start,
        grad_residual,
        omega_error,
        omega_norm: critic.omega.norm(),
        omega_star_norm: omega_star.norm(),
        min_policy_prob: tab.min_prob(),
        n_active_constraints: bounds.n_active_constraints(policy.theta()),
        zeta2_proxy,
        noise_tail,
        dtheta_window,
        domega_window,
        td_error_ma: td_ma,
    })
}

/// Step-size and noise-condition diagnostics for a completed run.
#[derive(Debug, Clone, Serialize)]
pub struct KushnerClarkDiagnostics {
    /// Critic schedule satisfies the summability conditions.
    pub critic_robbins_monro: bool,
    /// Actor schedule satisfies the summability conditions.
    pub actor_robbins_monro: bool,
    /// Actor decays strictly faster than the critic.
    pub timescale_separated: bool,
    pub step_sizes_ok: bool,
    /// First/last window martingale-noise tail sums.
    pub noise_tail_first: f64,
    pub noise_tail_last: f64,
    pub noise_tail_decayed: bool,
    /// First/last critic-lag proxies.
    pub zeta2_first: f64,
    pub zeta2_last: f64,
    pub zeta2_trending_down: bool,
}

/// Checks the step-size conditions symbolically and reads the noise decay
/// off the run's checkpoint windows.
pub fn validate_kushner_clark(
    critic_schedule: &StepSchedule,
    actor_schedule: &StepSchedule,
    report: &RunReport,
) -> KushnerClarkDiagnostics {
    let critic_rm = critic_schedule.is_robbins_monro();
    let actor_rm = actor_schedule.is_robbins_monro();
    let separated = actor_schedule.is_faster_decaying_than(critic_schedule);
    let first = report.checkpoints.first();
    let last = report.checkpoints.last();
    let noise_tail_first = first.map_or(f64::NAN, |c| c.noise_tail);
    let noise_tail_last = last.map_or(f64::NAN, |c| c.noise_tail);
    let zeta2_first = first.map_or(f64::NAN, |c| c.zeta2_proxy);
    let zeta2_last = last.map_or(f64::NAN, |c| c.zeta2_proxy);
    KushnerClarkDiagnostics {
        critic_robbins_monro: critic_rm,
        actor_robbins_monro: actor_rm,
        timescale_separated: separated,
        step_sizes_ok: critic_rm && actor_rm && separated,
        noise_tail_first,
        noise_tail_last,
        noise_tail_decayed: noise_tail_last < noise_tail_first,
        zeta2_first,
        zeta2_last,
        zeta2_trending_down: zeta2_last < zeta2_first,
    }
}

/// Draws a random instance: Dirichlet transition rows over a support that
/// always contains the cycle successor and a self-loop (irreducible and
/// aperiodic under any full-support policy, for every sparsity), uniform
/// rewards in [0, 1), and a Gaussian feature matrix redrawn until its
/// smallest singular value exceeds 1e-6.
pub fn generate_random_instance(
    seed: u64,
    n_states: usize,
    n_actions: usize,
    k: usize,
    sparsity: f64,
    gamma: f64,
) -> Result<(FiniteMdp, FeatureMap)> {
    if n_states == 0 || n_actions == 0 {
        return Err(RegMdpError::Config("empty instance".into()));
    }
    if k == 0 || k > n_states * n_actions {
        return Err(RegMdpError::Config(format!(
            "k must lie in 1..={}, got {k}",
            n_states * n_actions
        )));
    }
    if !(0.0..1.0).contains(&sparsity) {
        return Err(RegMdpError::Config(format!("sparsity {sparsity} outside [0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut transition = Vec::with_capacity(n_states);
    let mut reward = Vec::with_capacity(n_states);
    for s in 0..n_states {
        let mut rows = Vec::with_capacity(n_actions);
        let mut rrow = Vec::with_capacity(n_actions);
        for _ in 0..n_actions {
            let mut keep = vec![false; n_states];
            for (sp, slot) in keep.iter_mut().enumerate() {
                let u: f64 = rng.random();
                *slot = sp == (s + 1) % n_states || sp == s || u >= sparsity;
            }
            let mut row = vec![0.0; n_states];
            let mut sum = 0.0;
            for sp in 0..n_states {
                if keep[sp] {
                    let w = -f64::ln(1.0 - rng.random::<f64>());
                    row[sp] = w;
                    sum += w;
                }
            }
            for x in row.iter_mut() {
                *x /= sum;
            }
            rows.push(row);
            rrow.push(rng.random::<f64>());
        }
        transition.push(rows);
        reward.push(rrow);
    }
    let mdp = FiniteMdp::new(n_states, n_actions, &transition, &reward, gamma)?;
    let features = loop {
        let phi = DMatrix::from_fn(n_states * n_actions, k, |_, _| {
            let u1: f64 = rng.random::<f64>().max(1e-12);
            let u2: f64 = rng.random();
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        });
        if let Ok(f) = FeatureMap::from_matrix(phi) {
            if f.min_singular_value() > 1e-6 {
                break f;
            }
        }
    };
    Ok((mdp, features))
}

/// Where the MDP of a run comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MdpSource {
    File { file: String },
    Generator(GeneratorSpec),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub seed: u64,
    pub n_states: usize,
    pub n_actions: usize,
    #[serde(default)]
    pub sparsity: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

fn default_gamma() -> f64 {
    0.9
}

/// Feature selection for a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FeatureSpec {
    Tabular,
    Random {
        k: usize,
        #[serde(default)]
        seed: u64,
    },
    File {
        file: String,
    },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizerSpec {
    pub kind: crate::regularizer::RegularizerKind,
    #[serde(default = "default_strength")]
    pub strength: f64,
}

fn default_strength() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub scale: f64,
    pub exponent: f64,
    #[serde(default = "default_offset")]
    pub offset: f64,
}

fn default_offset() -> f64 {
    1.0
}

/// Restart law selection.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum XiSpec {
    #[default]
    Uniform,
    Explicit(Vec<f64>),
}

/// Versioned on-disk run configuration. Strictly validated: unknown fields
/// are rejected, schedules must satisfy the step-size conditions unless the
/// run is explicitly marked unsafe.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub mdp: MdpSource,
    pub features: FeatureSpec,
    pub regularizer: RegularizerSpec,
    pub critic_schedule: ScheduleSpec,
    pub actor_schedule: ScheduleSpec,
    #[serde(default = "default_theta_max")]
    pub theta_max: f64,
    #[serde(default = "default_floor")]
    pub epsilon_floor: f64,
    pub n_steps: u64,
    #[serde(default = "default_checkpoints")]
    pub n_checkpoints: usize,
    pub seeds: Vec<u64>,
    #[serde(default = "default_omega_mode")]
    pub omega_mode: OmegaMode,
    #[serde(default = "default_chain_mode")]
    pub chain_mode: ChainMode,
    #[serde(default)]
    pub xi: XiSpec,
    #[serde(default = "default_inner")]
    pub inner_critic_steps: u64,
    /// Initial logits; zeros (the floored-uniform policy) when absent.
    #[serde(default)]
    pub initial_theta: Option<Vec<f64>>,
    #[serde(default)]
    pub initial_omega: Option<Vec<f64>>,
}

fn default_theta_max() -> f64 {
    10.0
}

fn default_floor() -> f64 {
    0.01
}

fn default_checkpoints() -> usize {
    30
}

fn default_omega_mode() -> OmegaMode {
    OmegaMode::Exact
}

fn default_chain_mode() -> ChainMode {
    ChainMode::Restart
}

fn default_inner() -> u64 {
    1
}

impl RunConfig {
    pub fn from_json(json: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(json)?;
        if cfg.version != 1 {
            return Err(RegMdpError::Config(format!(
                "unsupported config version {}",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Step-size conditions; violations are errors unless `allow_unsafe`.
    pub fn validate_schedules(&self, allow_unsafe: bool) -> Result<()> {
        let critic = StepSchedule::new(
            self.critic_schedule.scale,
            self.critic_schedule.exponent,
            self.critic_schedule.offset,
        )?;
        let actor = StepSchedule::new(
            self.actor_schedule.scale,
            self.actor_schedule.exponent,
            self.actor_schedule.offset,
        )?;
        if allow_unsafe {
            return Ok(());
        }
        if !critic.is_robbins_monro() {
            return Err(RegMdpError::Config(format!(
                "critic schedule violates the step-size conditions \
                 (need exponent in (0.5, 1], positive scale; got {critic:?}); \
                 pass the unsafe flag to run anyway"
            )));
        }
        // The actor exponent must also keep square-summability; a frozen
        // actor (scale 0) is always admissible.
        if actor.scale > 0.0 && !actor.is_robbins_monro() {
            return Err(RegMdpError::Config(format!(
                "actor schedule violates the step-size conditions \
                 (need exponent in (0.5, 1], got {actor:?}); \
                 pass the unsafe flag to run anyway"
            )));
        }
        if actor.scale > 0.0 && !actor.is_faster_decaying_than(&critic) {
            return Err(RegMdpError::Config(
                "actor schedule must decay strictly faster than the critic \
                 (larger exponent); pass the unsafe flag to run anyway"
                    .into(),
            ));
        }
        Ok(())
    }

    /// Materializes the MDP and feature map, resolving file paths against
    /// `base_dir`.
    pub fn load_instance(&self, base_dir: &std::path::Path) -> Result<(FiniteMdp, FeatureMap)> {
        let mdp = match &self.mdp {
            MdpSource::File { file } => FiniteMdp::load(&base_dir.join(file))?,
            MdpSource::Generator(spec) => {
                // Features may be generated from the same stream below; draw
                // the instance with the full generator (k capped for safety).
                let k = match &self.features {
                    FeatureSpec::Random { k, .. } => {
                        (*k).clamp(1, spec.n_states * spec.n_actions)
                    }
                    _ => 1,
                };
                let (mdp, feats) = generate_random_instance(
                    spec.seed,
                    spec.n_states,
                    spec.n_actions,
                    k,
                    spec.sparsity,
                    spec.gamma,
                )?;
                if let FeatureSpec::Random { k, seed: 0 } = &self.features {
                    if *k == feats.k() {
                        return Ok((mdp, feats));
                    }
                }
                mdp
            }
        };
        let features = match &self.features {
            FeatureSpec::Tabular => FeatureMap::tabular(mdp.n_pairs()),
            FeatureSpec::File { file } => FeatureMap::load(&base_dir.join(file))?,
            FeatureSpec::Random { k, seed } => {
                if *k == 0 || *k > mdp.n_pairs() {
                    return Err(RegMdpError::Config(format!(
                        "k must lie in 1..={}, got {k}",
                        mdp.n_pairs()
                    )));
                }
                random_features_with_seed(*seed, mdp.n_pairs(), *k)
            }
        };
        if features.n_pairs() != mdp.n_pairs() {
            return Err(RegMdpError::Dimension(
                "feature rows do not match the instance".into(),
            ));
        }
        Ok((mdp, features))
    }

    pub fn xi_vector(&self, n_states: usize) -> Result<DVector<f64>> {
        match &self.xi {
            XiSpec::Uniform => Ok(DVector::from_element(n_states, 1.0 / n_states as f64)),
            XiSpec::Explicit(v) => {
                if v.len() != n_states {
                    return Err(RegMdpError::Dimension(format!(
                        "xi has {} entries, expected {n_states}",
                        v.len()
                    )));
                }
                Ok(DVector::from_vec(v.clone()))
            }
        }
    }

    /// Builds the per-run parameter bundle (schedules already validated).
    pub fn ac_params(&self, mdp: &FiniteMdp) -> Result<AcParams> {
        let reg = Regularizer {
            kind: self.regularizer.kind,
            strength: self.regularizer.strength,
        };
        if !(reg.strength >= 0.0) || !reg.strength.is_finite() {
            return Err(RegMdpError::Config(format!(
                "regularizer strength must be a finite nonnegative number, got {}",
                reg.strength
            )));
        }
        let critic_schedule = StepSchedule::new(
            self.critic_schedule.scale,
            self.critic_schedule.exponent,
            self.critic_schedule.offset,
        )?;
        let actor_schedule = StepSchedule::new(
            self.actor_schedule.scale,
            self.actor_schedule.exponent,
            self.actor_schedule.offset,
        )?;
        if self.n_steps == 0 {
            return Err(RegMdpError::Config("n_steps must be positive".into()));
        }
        Ok(AcParams {
            reg,
            critic_schedule,
            actor_schedule,
            theta_max: self.theta_max,
            epsilon_floor: self.epsilon_floor,
            n_steps: self.n_steps,
            checkpoints: log_checkpoints(self.n_steps, self.n_checkpoints),
            omega_mode: self.omega_mode,
            sampler_cfg: SamplerConfig {
                mode: self.chain_mode,
                xi: self.xi_vector(mdp.n_states())?,
            },
            inner_critic_steps: self.inner_critic_steps,
            initial_theta: self.initial_theta.clone().map(DVector::from_vec),
            initial_omega: self.initial_omega.clone().map(DVector::from_vec),
        })
    }

    /// Validates the assumptions on the initial policy of this config.
    pub fn validate_initial_policy(&self, mdp: &FiniteMdp) -> Result<crate::mdp::AssumptionReport> {
        let theta = self
            .initial_theta
            .clone()
            .map(DVector::from_vec)
            .unwrap_or_else(|| DVector::zeros(mdp.n_pairs()));
        let policy =
            SoftmaxPolicy::from_theta(theta, mdp.n_states(), mdp.n_actions(), self.epsilon_floor)?;
        validate_assumptions(mdp, &policy.to_tabular())
    }
}

fn random_features_with_seed(seed: u64, n_pairs: usize, k: usize) -> FeatureMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xFEA7);
    loop {
        let phi = DMatrix::from_fn(n_pairs, k, |_, _| {
            let u1: f64 = rng.random::<f64>().max(1e-12);
            let u2: f64 = rng.random();
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        });
        if let Ok(f) = FeatureMap::from_matrix(phi) {
            if f.min_singular_value() > 1e-6 {
                return f;
            }
        }
    }
}

/// Stable short hash of a config's canonical JSON, used to name run
/// directories.
pub fn config_hash(config_json: &str) -> String {
    let digest = Sha256::digest(config_json.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}
