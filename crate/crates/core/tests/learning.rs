use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use edgecache::cache::{CacheState, Owner};
use edgecache::ddpg::{
    actor_ascent_step, actor_objective_gradient, critic_q, critic_update, decode_action, new_actor, new_critic, ActionValue, ActorCritic,
    EnvStateVector, Transition,
};
use edgecache::env::PopularityVector;
use edgecache::fl::{fedavg, new_predictor};
use edgecache::nn::{AdamConfig, AdamState, Matrix, ModelParams};
use edgecache::rng::MasterSeed;
use edgecache::Result;

/// `Q(s, a) = -‖a - a*‖²`, independent of the state.
struct Bowl {
    target: Vec<f64>,
}

impl ActionValue for Bowl {
    fn value_and_action_gradient(&self, _states: &Matrix, actions: &Matrix, weights: &[f64]) -> Result<(Vec<f64>, Matrix)> {
        let mut q = Vec::with_capacity(actions.rows());
        let mut da = Matrix::zeros(actions.rows(), actions.cols());
        for r in 0..actions.rows() {
            let mut v = 0.0;
            for (c, (&a, &t)) in actions.row(r).iter().zip(&self.target).enumerate() {
                v -= (a - t) * (a - t);
                da.row_mut(r)[c] = -2.0 * (a - t) * weights[r];
            }
            q.push(v);
        }
        Ok((q, da))
    }
}

fn random_states(n: usize, rows: usize, seed: u64) -> Matrix {
    let mut rng = MasterSeed(seed).stream("test/states");
    let mut m = Matrix::zeros(rows, 2 * n);
    for r in 0..rows {
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let pop = PopularityVector::from_weights(&p).unwrap();
        let mut cache = CacheState::new(Owner::Server, n / 2);
        let mut ids: Vec<u32> = (1..=n as u32).collect();
        ids.shuffle(&mut rng);
        for &id in &ids[..n / 2] {
            cache.insert_for_fill(id).unwrap();
        }
        m.row_mut(r).copy_from_slice(EnvStateVector::new(&cache, &pop).as_slice());
    }
    m
}

#[test]
fn actor_converges_to_bowl_optimum() {
    let n = 8;
    let mut rng = MasterSeed(3).stream("test/bowl");
    let target: Vec<f64> = (0..n).map(|_| rng.random_range(-0.8..0.8)).collect();
    let bowl = Bowl { target: target.clone() };
    let mut actor = new_actor(n, 32, &mut rng).unwrap();
    let mut opt = AdamState::new(&actor, AdamConfig::with_lr(1e-3));
    // A fresh minibatch per step, as replay sampling would give.
    for step in 0..20_000 {
        actor_ascent_step(&mut actor, &mut opt, &bowl, &random_states(n, 32, 100 + step)).unwrap();
    }
    let held_out = random_states(n, 64, 2);
    let out = actor.predict(&held_out).unwrap();
    let worst = (0..out.rows())
        .flat_map(|r| out.row(r).iter().zip(&target).map(|(a, t)| (a - t).abs()).collect::<Vec<_>>())
        .fold(0.0_f64, f64::max);
    assert!(worst < 1e-2, "max |π(s) - a*| = {worst}");
}

#[test]
fn constant_critic_gives_zero_actor_gradient() {
    let n = 5;
    let mut rng = MasterSeed(4).stream("test/const");
    let actor = new_actor(n, 8, &mut rng).unwrap();
    let mut critic = new_critic(n, 8, &mut rng).unwrap();
    let last = critic.layers().len() - 1;
    for w in critic.layers_mut()[last].weights.iter_mut() {
        *w = 0.0;
    }
    let (_, g) = actor_objective_gradient(&actor, &critic, &random_states(n, 4, 5)).unwrap();
    assert!(g.flat().iter().all(|&x| x == 0.0));
}

#[test]
fn critic_regresses_to_reward_on_a_frozen_transition() {
    let n = 6;
    let mut rng = MasterSeed(5).stream("test/regress");
    let actor = new_actor(n, 16, &mut rng).unwrap();
    let critic = new_critic(n, 16, &mut rng).unwrap();
    let mut nets = ActorCritic::new(actor, critic, 1e-4, 1e-3).unwrap();
    let s = random_states(n, 2, 6);
    let t = Transition {
        state: EnvStateVector::from_raw(s.row(0).to_vec()),
        action: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        reward: 0.7,
        next_state: EnvStateVector::from_raw(s.row(1).to_vec()),
    };
    let mut converged_at = None;
    for step in 1..=5000 {
        critic_update(&mut nets, &[&t], 0.0).unwrap();
        let q = critic_q(&nets.critic, &t.state, &t.action).unwrap();
        if (q - 0.7).abs() < 1e-3 {
            converged_at = Some(step);
            break;
        }
    }
    assert!(converged_at.is_some(), "Q did not reach the reward within 5000 steps");
}

fn cache_from(ids: &[u32], cap: usize) -> CacheState {
    let mut c = CacheState::new(Owner::Server, cap);
    for &id in ids {
        c.insert_for_fill(id).unwrap();
    }
    c
}

fn perturbed_models(seed: u64, k: usize) -> Vec<ModelParams> {
    let mut rng = MasterSeed(seed).stream("test/fedavg");
    (0..k).map(|_| new_predictor(4, 2, 5, &mut rng).unwrap()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn decode_is_invariant_under_increasing_transforms(
        scores in proptest::collection::vec(-1.0_f64..1.0, 10),
        scale in 0.1_f64..10.0,
        shift in -5.0_f64..5.0,
        seed in any::<u64>(),
    ) {
        let mut rng = MasterSeed(seed).stream("test/decode");
        let mut ids: Vec<u32> = (1..=10).collect();
        ids.shuffle(&mut rng);
        let cap = rng.random_range(1..=5);
        let cache = cache_from(&ids[..cap], cap);
        let new: Vec<u32> = ids[cap..cap + rng.random_range(0..=5)].to_vec();
        let moved: Vec<f64> = scores.iter().map(|s| (s * scale + shift).tanh() * 3.0 + s.powi(3)).collect();
        prop_assert_eq!(decode_action(&scores, &cache, &new), decode_action(&moved, &cache, &new));
    }

    #[test]
    fn fedavg_ignores_upload_order(seed in any::<u64>(), k in 2usize..7) {
        let models = perturbed_models(seed, k);
        let refs: Vec<&ModelParams> = models.iter().collect();
        let w = vec![1.0; k];
        let base = fedavg(&refs, &w).unwrap();
        let mut rng = MasterSeed(seed).stream("test/fedavg_perm");
        let mut shuffled = refs.clone();
        shuffled.shuffle(&mut rng);
        prop_assert_eq!(fedavg(&shuffled, &w).unwrap().flat(), base.flat());
    }
}
