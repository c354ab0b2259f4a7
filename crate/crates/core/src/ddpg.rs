//! Actor-critic cache agent: Gaussian exploration on the actor's content
//! scores, replay, critic regression on bootstrapped targets, deterministic
//! policy gradient through the critic, and soft target updates.
//!
//! The actor scores all `N` contents. A ranking decoder turns scores into a
//! feasible eviction/admission pair for whichever cache it drives, so one
//! actor serves the server and every UE.

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::cache::{CacheAction, CacheState};
use crate::env::{ContentId, PopularityVector};
use crate::error::{Error, Result};
use crate::nn::{self, Activation, AdamConfig, AdamState, Matrix, ModelParams};
use crate::rng::Stream;

/// Cache-membership indicator followed by a predicted popularity vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvStateVector(Vec<f64>);

impl EnvStateVector {
    pub fn new(cache: &CacheState, popularity: &PopularityVector) -> Self {
        let n = popularity.len();
        let mut v = cache.indicator(n);
        v.extend_from_slice(popularity.as_slice());
        Self(v)
    }

    pub fn from_raw(v: Vec<f64>) -> Self {
        Self(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn n_contents(&self) -> usize {
        self.0.len() / 2
    }

    pub fn indicator(&self) -> &[f64] {
        &self.0[..self.n_contents()]
    }

    pub fn popularity(&self) -> &[f64] {
        &self.0[self.n_contents()..]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: EnvStateVector,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: EnvStateVector,
}

/// FIFO ring of transitions with uniform minibatch sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    head: usize,
    rng: Stream,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, rng: Stream) -> Self {
        Self { items: Vec::with_capacity(capacity.min(1 << 16)), capacity: capacity.max(1), head: 0, rng }
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        if !(0.0..=1.0).contains(&t.reward) {
            return Err(Error::Domain(format!("reward {} outside [0,1]", t.reward)));
        }
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[Transition] {
        &self.items
    }

    /// Distinct indices, uniformly without replacement.
    pub fn sample_indices(&mut self, k: usize) -> Vec<usize> {
        index::sample(&mut self.rng, self.items.len(), k.min(self.items.len())).into_vec()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExplorationSchedule {
    pub sigma: f64,
    pub decay: f64,
    pub floor: f64,
}

impl ExplorationSchedule {
    pub fn new(initial: f64, decay: f64, floor: f64) -> Result<Self> {
        if !(initial >= floor && floor >= 0.0) || !(0.0..=1.0).contains(&decay) {
            return Err(Error::Domain(format!("bad exploration schedule {initial}/{decay}/{floor}")));
        }
        Ok(Self { sigma: initial, decay, floor })
    }

    pub fn end_episode(&mut self) {
        self.sigma = (self.sigma * self.decay).max(self.floor);
    }
}

pub fn actor_dims(n: usize, hidden: usize) -> Vec<usize> {
    vec![2 * n, hidden, hidden, n]
}

pub fn critic_dims(n: usize, hidden: usize) -> Vec<usize> {
    vec![3 * n, hidden, hidden, 1]
}

pub fn new_actor(n: usize, hidden: usize, rng: &mut Stream) -> Result<ModelParams> {
    ModelParams::xavier(&actor_dims(n, hidden), Activation::Tanh, Activation::Tanh, rng)
}

pub fn new_critic(n: usize, hidden: usize, rng: &mut Stream) -> Result<ModelParams> {
    ModelParams::xavier(&critic_dims(n, hidden), Activation::Tanh, Activation::Linear, rng)
}

/// Policy output plus iid `N(0, σ²)` noise on every component.
pub fn actor_scores(actor: &ModelParams, state: &EnvStateVector, sigma: f64, rng: &mut Stream) -> Result<Vec<f64>> {
    if !(sigma >= 0.0) {
        return Err(Error::Domain(format!("noise scale {sigma} < 0")));
    }
    let mut a = actor.predict_one(state.as_slice())?;
    if sigma > 0.0 {
        for x in &mut a {
            let z: f64 = rng.sample(StandardNormal);
            *x += sigma * z;
        }
    }
    Ok(a)
}

/// Keeps the `capacity` best-scored contents among the cached ones and the
/// new files; ties go to the lower content id.
pub fn decode_action(scores: &[f64], cache: &CacheState, new_files: &[ContentId]) -> CacheAction {
    if new_files.is_empty() {
        return CacheAction::noop(cache.len());
    }
    let score = |id: ContentId| scores[id as usize - 1];
    let mut cand: Vec<ContentId> = cache.entries().iter().chain(new_files).copied().collect();
    cand.sort_by(|&a, &b| score(b).total_cmp(&score(a)).then(a.cmp(&b)));
    cand.truncate(cache.capacity());
    let kept = |id: &ContentId| cand.contains(id);
    CacheAction {
        evict: cache.entries().iter().map(|id| !kept(id)).collect(),
        admit: new_files.iter().map(kept).collect(),
    }
}

fn critic_input(states: &Matrix, actions: &Matrix) -> Result<Matrix> {
    states.hcat(actions)
}

pub fn critic_q(critic: &ModelParams, state: &EnvStateVector, action: &[f64]) -> Result<f64> {
    let mut x = state.as_slice().to_vec();
    x.extend_from_slice(action);
    Ok(critic.predict_one(&x)?[0])
}

/// `dQ/da` at one (state, action) pair.
pub fn critic_action_gradient(critic: &ModelParams, state: &EnvStateVector, action: &[f64]) -> Result<Vec<f64>> {
    let x = critic_input(&Matrix::row_vector(state.as_slice()), &Matrix::row_vector(action))?;
    let (_, tape) = critic.forward(&x)?;
    let dx = critic.input_gradient(&tape, &Matrix::from_vec(1, 1, vec![1.0])?)?;
    Ok(dx.row(0)[state.as_slice().len()..].to_vec())
}

fn stack<'a>(rows: impl Iterator<Item = &'a [f64]>, width: usize) -> Matrix {
    let data: Vec<f64> = rows.flat_map(|r| r.iter().copied()).collect();
    let n = data.len() / width.max(1);
    Matrix::from_vec(n, width, data).unwrap()
}

/// Online and target networks with their optimizers.
#[derive(Debug, Clone)]
pub struct ActorCritic {
    pub actor: ModelParams,
    pub critic: ModelParams,
    pub target_actor: ModelParams,
    pub target_critic: ModelParams,
    pub actor_opt: AdamState,
    pub critic_opt: AdamState,
}

impl ActorCritic {
    pub fn new(actor: ModelParams, critic: ModelParams, actor_lr: f64, critic_lr: f64) -> Result<Self> {
        let n = actor.output_dim();
        if actor.input_dim() != 2 * n || critic.input_dim() != 3 * n || critic.output_dim() != 1 {
            return Err(Error::Shape("actor must map 2N -> N and critic 3N -> 1".into()));
        }
        Ok(Self {
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor_opt: AdamState::new(&actor, AdamConfig::with_lr(actor_lr)),
            critic_opt: AdamState::new(&critic, AdamConfig::with_lr(critic_lr)),
            actor,
            critic,
        })
    }

    pub fn soft_update_targets(&mut self, nu: f64) -> Result<()> {
        nn::soft_update(&mut self.target_actor, &self.actor, nu)?;
        nn::soft_update(&mut self.target_critic, &self.critic, nu)
    }
}

/// Mean squared Bellman error; one Adam step on the online critic.
///
/// `y = r + χ Q̄(s', π̄(s'))`, no terminal cutoff.
pub fn critic_update(nets: &mut ActorCritic, batch: &[&Transition], chi: f64) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Shape("empty minibatch".into()));
    }
    if !(0.0..=1.0).contains(&chi) {
        return Err(Error::Domain(format!("discount {chi} outside [0,1]")));
    }
    let s_dim = batch[0].state.as_slice().len();
    let a_dim = batch[0].action.len();
    let s = stack(batch.iter().map(|t| t.state.as_slice()), s_dim);
    let a = stack(batch.iter().map(|t| t.action.as_slice()), a_dim);
    let s2 = stack(batch.iter().map(|t| t.next_state.as_slice()), s_dim);
    let y: Vec<f64> = if chi > 0.0 {
        let a2 = nets.target_actor.predict(&s2)?;
        let q2 = nets.target_critic.predict(&critic_input(&s2, &a2)?)?;
        batch.iter().zip(q2.data()).map(|(t, q)| t.reward + chi * q).collect()
    } else {
        batch.iter().map(|t| t.reward).collect()
    };
    let (q, tape) = nets.critic.forward(&critic_input(&s, &a)?)?;
    let b = batch.len() as f64;
    let mut loss = 0.0;
    let mut dq = Matrix::zeros(batch.len(), 1);
    for (i, (yi, qi)) in y.iter().zip(q.data()).enumerate() {
        let e = qi - yi;
        loss += e * e / b;
        dq.data_mut()[i] = 2.0 * e / b;
    }
    let (g, _) = nets.critic.backward(&tape, &dq)?;
    nets.critic_opt.step(&mut nets.critic, &g)?;
    Ok(loss)
}

/// Anything that scores state-action rows and differentiates in the action.
pub trait ActionValue {
    /// Returns `Q` per row and `dJ/da` for `J = Σ_r w_r Q(s_r, a_r)`.
    fn value_and_action_gradient(&self, states: &Matrix, actions: &Matrix, weights: &[f64]) -> Result<(Vec<f64>, Matrix)>;
}

impl ActionValue for ModelParams {
    fn value_and_action_gradient(&self, states: &Matrix, actions: &Matrix, weights: &[f64]) -> Result<(Vec<f64>, Matrix)> {
        let (q, tape) = self.forward(&critic_input(states, actions)?)?;
        let dq = Matrix::from_vec(states.rows(), 1, weights.to_vec())?;
        let dx = self.input_gradient(&tape, &dq)?;
        Ok((q.into_data(), dx.columns(states.cols(), dx.cols())))
    }
}

/// Gradient of `J = mean Q(s, π(s))` with respect to the actor parameters,
/// chained through `dQ/da`. Returns `(J, dJ/dΘ^A)`.
pub fn actor_objective_gradient<C: ActionValue + ?Sized>(actor: &ModelParams, critic: &C, states: &Matrix) -> Result<(f64, ModelParams)> {
    if states.rows() == 0 {
        return Err(Error::Shape("empty minibatch".into()));
    }
    let (a, tape_a) = actor.forward(states)?;
    let b = states.rows() as f64;
    let (q, da) = critic.value_and_action_gradient(states, &a, &vec![1.0 / b; states.rows()])?;
    let j = q.iter().sum::<f64>() / b;
    let (g, _) = actor.backward(&tape_a, &da)?;
    Ok((j, g))
}

/// One Adam ascent step on `J` for `actor`; the critic is only read.
pub fn actor_ascent_step<C: ActionValue + ?Sized>(actor: &mut ModelParams, opt: &mut AdamState, critic: &C, states: &Matrix) -> Result<f64> {
    let (j, mut g) = actor_objective_gradient(actor, critic, states)?;
    g.scale(-1.0);
    opt.step(actor, &g)?;
    Ok(j)
}

/// One ascent step on `J` against the online critic.
pub fn actor_update(nets: &mut ActorCritic, states: &[&EnvStateVector]) -> Result<f64> {
    if states.is_empty() {
        return Err(Error::Shape("empty minibatch".into()));
    }
    let width = states[0].as_slice().len();
    let s = stack(states.iter().map(|s| s.as_slice()), width);
    actor_ascent_step(&mut nets.actor, &mut nets.actor_opt, &nets.critic, &s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DdpgConfig {
    pub hidden: usize,
    pub chi: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub sigma_initial: f64,
    pub sigma_decay: f64,
    pub sigma_floor: f64,
    pub target_interval: usize,
    pub nu: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Pair each action with the hit rate of the following slot instead of
    /// the slot whose state it was taken in.
    pub reward_next: bool,
}

impl Default for DdpgConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            chi: 0.95,
            replay_capacity: 100_000,
            batch_size: 64,
            sigma_initial: 0.3,
            sigma_decay: 0.999,
            sigma_floor: 0.02,
            target_interval: 4,
            nu: 0.001,
            actor_lr: 1e-4,
            critic_lr: 1e-4,
            reward_next: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepStats {
    pub critic_loss: f64,
    pub actor_objective: f64,
}

/// Server-side learner: networks, replay, exploration and the pending
/// transition waiting for its successor state.
#[derive(Debug, Clone)]
pub struct Agent {
    pub config: DdpgConfig,
    pub nets: ActorCritic,
    pub replay: ReplayBuffer,
    pub exploration: ExplorationSchedule,
    noise_rng: Stream,
    pending: Option<(EnvStateVector, Vec<f64>, Option<f64>)>,
    updates: usize,
}

impl Agent {
    pub fn new(n: usize, config: DdpgConfig, init_rng: &mut Stream, noise_rng: Stream, replay_rng: Stream) -> Result<Self> {
        let actor = new_actor(n, config.hidden, init_rng)?;
        let critic = new_critic(n, config.hidden, init_rng)?;
        let nets = ActorCritic::new(actor, critic, config.actor_lr, config.critic_lr)?;
        let exploration = ExplorationSchedule::new(config.sigma_initial, config.sigma_decay, config.sigma_floor)?;
        Ok(Self {
            replay: ReplayBuffer::new(config.replay_capacity, replay_rng),
            nets,
            exploration,
            noise_rng,
            pending: None,
            updates: 0,
            config,
        })
    }

    pub fn act(&mut self, state: &EnvStateVector, explore: bool) -> Result<Vec<f64>> {
        let sigma = if explore { self.exploration.sigma } else { 0.0 };
        actor_scores(&self.nets.actor, state, sigma, &mut self.noise_rng)
    }

    /// Closes the pending transition with `state` as its successor and opens
    /// a new one. `reward` is the hit rate observed in the slot that produced
    /// `state`; transitions whose reward slot carried no traffic are dropped.
    pub fn record(&mut self, state: &EnvStateVector, action: &[f64], reward: Option<f64>) -> Result<()> {
        if let Some((s, a, r_prev)) = self.pending.take() {
            let r = if self.config.reward_next { reward } else { r_prev };
            if let Some(r) = r {
                self.replay.push(Transition { state: s, action: a, reward: r, next_state: state.clone() })?;
            }
        }
        self.pending = Some((state.clone(), action.to_vec(), reward));
        Ok(())
    }

    /// Drops the open transition, e.g. when caches are re-initialized.
    pub fn forget_pending(&mut self) {
        self.pending = None;
    }

    /// One critic step and one actor step on a shared minibatch, then the
    /// periodic soft update. No-op until the replay holds a full minibatch.
    pub fn train_step(&mut self) -> Result<Option<StepStats>> {
        if self.replay.len() < self.config.batch_size {
            return Ok(None);
        }
        let idx = self.replay.sample_indices(self.config.batch_size);
        let batch: Vec<&Transition> = idx.iter().map(|&i| &self.replay.items()[i]).collect();
        let critic_loss = critic_update(&mut self.nets, &batch, self.config.chi)?;
        let states: Vec<&EnvStateVector> = batch.iter().map(|t| &t.state).collect();
        let actor_objective = actor_update(&mut self.nets, &states)?;
        self.updates += 1;
        if self.updates % self.config.target_interval.max(1) == 0 {
            self.nets.soft_update_targets(self.config.nu)?;
        }
        Ok(Some(StepStats { critic_loss, actor_objective }))
    }

    pub fn updates(&self) -> usize {
        self.updates
    }
}

/// UE-side inference with a broadcast actor: no noise and no learning.
pub fn ue_act(actor: &ModelParams, cache: &CacheState, local_prediction: &PopularityVector, new_files: &[ContentId]) -> Result<CacheAction> {
    if new_files.is_empty() {
        return Ok(CacheAction::noop(cache.len()));
    }
    let state = EnvStateVector::new(cache, local_prediction);
    let scores = actor.predict_one(state.as_slice())?;
    Ok(decode_action(&scores, cache, new_files))
}
