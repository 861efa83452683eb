//! Shared helpers for module tests: small seeded instances independent of
//! the simulation harness's generator.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::features::FeatureMap;
use crate::mdp::{FiniteMdp, TabularPolicy};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Dirichlet(1) rows: strictly positive, so the induced chain is ergodic for
/// any policy with full support.
pub fn random_mdp(rng: &mut ChaCha8Rng, n_states: usize, n_actions: usize, gamma: f64) -> FiniteMdp {
    let mut transition = Vec::with_capacity(n_states);
    let mut reward = Vec::with_capacity(n_states);
    for _ in 0..n_states {
        let mut rows = Vec::with_capacity(n_actions);
        let mut rrow = Vec::with_capacity(n_actions);
        for _ in 0..n_actions {
            let raw: Vec<f64> = (0..n_states)
                .map(|_| -f64::ln(1.0 - rng.random::<f64>()))
                .collect();
            let sum: f64 = raw.iter().sum();
            rows.push(raw.iter().map(|x| x / sum).collect::<Vec<_>>());
            rrow.push(rng.random::<f64>());
        }
        transition.push(rows);
        reward.push(rrow);
    }
    FiniteMdp::new(n_states, n_actions, &transition, &reward, gamma).unwrap()
}

/// Random policy with entries at least `floor`.
pub fn random_policy(
    rng: &mut ChaCha8Rng,
    n_states: usize,
    n_actions: usize,
    floor: f64,
) -> TabularPolicy {
    let mut probs = DMatrix::<f64>::zeros(n_states, n_actions);
    for s in 0..n_states {
        let raw: Vec<f64> = (0..n_actions)
            .map(|_| -f64::ln(1.0 - rng.random::<f64>()))
            .collect();
        let sum: f64 = raw.iter().sum();
        for a in 0..n_actions {
            probs[(s, a)] = (1.0 - floor * n_actions as f64) * raw[a] / sum + floor;
        }
    }
    TabularPolicy::new(probs, floor).unwrap()
}

/// Gaussian feature matrix, redrawn until the columns are comfortably
/// independent.
pub fn random_features(rng: &mut ChaCha8Rng, n_pairs: usize, k: usize) -> FeatureMap {
    loop {
        let phi = DMatrix::from_fn(n_pairs, k, |_, _| {
            // Box-Muller keeps this free of extra dependencies.
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

pub fn random_simplex_point(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -f64::ln(1.0 - rng.random::<f64>())).collect();
    let sum: f64 = raw.iter().sum();
    DVector::from_iterator(n, raw.iter().map(|x| x / sum))
}
