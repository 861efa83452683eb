use regmdp::critic::{run_policy_evaluation, OmegaMode, StepSchedule};
use regmdp::features::FeatureMap;
use regmdp::mdp::TabularPolicy;
use regmdp::regularizer::Regularizer;
use regmdp::sampler::{ChainMode, SamplerConfig};
use regmdp::sim::{generate_random_instance, run_actor_critic, AcParams};

fn main() {
    // Criterion 6 candidates for the standard 5x3 instance.
    for gamma in [0.65, 0.7, 0.75] {
        let (mdp, _) = generate_random_instance(42, 5, 3, 6, 0.0, gamma).unwrap();
        let features = FeatureMap::tabular(15);
        for (scale, expo, mode) in [
            (0.3, 0.8, ChainMode::Raw),
            (0.5, 0.8, ChainMode::Raw),
            (0.5, 0.8, ChainMode::Restart),
            (0.5, 0.9, ChainMode::Raw),
        ] {
            let params = AcParams {
                reg: Regularizer::entropy(1.0),
                critic_schedule: StepSchedule::new(0.5, 0.6, 1.0).unwrap(),
                actor_schedule: StepSchedule::new(scale, expo, 1.0).unwrap(),
                theta_max: 10.0,
                epsilon_floor: 0.01,
                n_steps: 500_000,
                checkpoints: vec![100, 500_000],
                omega_mode: OmegaMode::Exact,
                sampler_cfg: SamplerConfig::uniform_restart(5, mode),
                inner_critic_steps: 1,
                initial_theta: None,
                initial_omega: None,
            };
            let mut residuals: Vec<f64> = (0..10)
                .map(|s| run_actor_critic(&mdp, &features, &params, s).unwrap().final_grad_residual)
                .collect();
            residuals.sort_by(f64::total_cmp);
            println!("5x3 g={gamma} scale {scale} exp {expo} {mode:?}: med {:.3e} max {:.3e}", residuals[5], residuals[9]);
        }
    }
    println!();
    // Criterion 3: critic with pinned schedule on the same candidates, K=6 random features.
    for gamma in [0.65, 0.7, 0.75, 0.9] {
        let (mdp, features) = generate_random_instance(42, 5, 3, 6, 0.0, gamma).unwrap();
        let policy = TabularPolicy::uniform(5, 3);
        let sched = StepSchedule::new(0.5, 0.6, 1.0).unwrap();
        let cfg = SamplerConfig::uniform_restart(5, ChainMode::Raw);
        let cps = [1_000u64, 10_000, 100_000, 200_000];
        let mut at: Vec<Vec<f64>> = vec![vec![]; 4];
        for seed in 0..10u64 {
            let rep = run_policy_evaluation(&mdp, &policy, &Regularizer::entropy(1.0), &features, &sched, &cfg, OmegaMode::Exact, 200_000, seed, &cps).unwrap();
            let denom = rep.omega_star.norm();
            for (i, row) in rep.trace.iter().enumerate() {
                at[i].push(row.omega_error / denom);
            }
        }
        let med: Vec<f64> = at.iter().map(|v| {
            let mut v = v.clone();
            v.sort_by(f64::total_cmp);
            (v[4] + v[5]) / 2.0
        }).collect();
        println!("critic g={gamma}: medians {:?}", med.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>());
    }
}
