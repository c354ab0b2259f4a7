//! One time slot of the two-tier caching system: requests, routing, the
//! server decision, batch erasure, and the UE decisions.

use crate::audit::{Message, MessageLog};
use crate::baselines::BaselinePolicy;
use crate::cache::{apply_action, hit_rate_server, hit_rate_ue, CacheState, HitRateSeries, Owner};
use crate::ddpg::{decode_action, ue_act, Agent, EnvStateVector, StepStats};
use crate::env::{route_and_collect, ContentId, Environment, ServerInbox};
use crate::error::{Error, Result};
use crate::fl::{predict_global, predict_local, HistoryEncoding};
use crate::nn::ModelParams;

/// Controller of the server cache for one slot.
pub enum ServerSide<'a> {
    /// Classical policy; it reads the batch, which is what makes it non-private.
    Baseline(&'a mut BaselinePolicy),
    Agent {
        agent: &'a mut Agent,
        predictor: &'a ModelParams,
        explore: bool,
        learn: bool,
    },
}

/// Controllers of the UE caches for one slot.
pub enum UeSide<'a> {
    Baseline(&'a mut [BaselinePolicy]),
    /// Broadcast actor driven by each UE's own local prediction.
    Actor { actor: &'a ModelParams, predictors: &'a [ModelParams] },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotOutcome {
    pub slot: u64,
    pub requests: Vec<Option<ContentId>>,
    pub h0: Option<f64>,
    pub hi: Vec<f64>,
    pub hi_savg: Vec<f64>,
    /// Whether every cache was full when this slot's decisions were taken.
    pub warm: bool,
    pub train: Option<StepStats>,
}

pub struct System {
    env: Environment,
    n_contents: usize,
    window: usize,
    pub server_cache: CacheState,
    pub ue_caches: Vec<CacheState>,
    inbox: ServerInbox,
    series: Vec<HitRateSeries>,
    t_h: usize,
    pub log: MessageLog,
}

impl System {
    pub fn new(env: Environment, server_capacity: usize, ue_capacities: &[usize], window: usize, t_h: usize, log: MessageLog) -> Result<Self> {
        if ue_capacities.len() != env.n_ues() {
            return Err(Error::Shape(format!("{} UE capacities for {} UEs", ue_capacities.len(), env.n_ues())));
        }
        let n_contents = env.catalog().len();
        Ok(Self {
            n_contents,
            window,
            server_cache: CacheState::new(Owner::Server, server_capacity),
            ue_caches: ue_capacities.iter().enumerate().map(|(i, &m)| CacheState::new(Owner::Ue(i), m)).collect(),
            inbox: ServerInbox::new(),
            series: (0..env.n_ues()).map(|_| HitRateSeries::new(t_h)).collect(),
            t_h,
            env,
            log,
        })
    }

    pub fn env(&self) -> &Environment {
        &self.env
    }

    pub fn n_ues(&self) -> usize {
        self.ue_caches.len()
    }

    /// Empties every cache and restarts the sliding averages.
    pub fn reset_caches(&mut self) {
        self.server_cache.clear();
        for c in &mut self.ue_caches {
            c.clear();
        }
        self.series = (0..self.n_ues()).map(|_| HitRateSeries::new(self.t_h)).collect();
    }

    pub fn all_full(&self) -> bool {
        self.server_cache.is_full() && self.ue_caches.iter().all(|c| c.is_full())
    }

    pub fn step(&mut self, server: &mut ServerSide<'_>, ues: &mut UeSide<'_>) -> Result<SlotOutcome> {
        let slot = self.env.slot();
        let warm = self.all_full();
        let requests = self.env.next_requests();
        self.log.begin_slot(slot);

        let routing = route_and_collect(slot, &requests, &self.ue_caches, &self.server_cache);
        for &(ue, content) in &routing.batch.entries {
            self.log.send(Message::RequestUpload { ue, slot, content });
        }
        let h0 = hit_rate_server(routing.server_misses.len(), routing.batch.len())?;
        let batch_contents: Vec<ContentId> = routing.batch.entries.iter().map(|&(_, c)| c).collect();
        self.inbox.receive(routing.batch)?;

        let new_files = &routing.server_misses;
        let mut train = None;
        match server {
            ServerSide::Baseline(policy) => {
                for &c in &batch_contents {
                    policy.touch(c);
                }
                self.inbox.mark_scheduled()?;
                if self.server_cache.is_full() {
                    if self.server_cache.capacity() > 0 {
                        let a = policy.decide(&self.server_cache, new_files)?;
                        self.server_cache = apply_action(&self.server_cache, new_files, &a)?;
                    }
                } else {
                    fill(&mut self.server_cache, new_files)?;
                }
            }
            ServerSide::Agent { agent, predictor, explore, learn } => {
                let p_global = predict_global(predictor, &mut self.inbox, self.n_contents, self.window)?;
                if self.server_cache.is_full() {
                    let state = EnvStateVector::new(&self.server_cache, &p_global);
                    let scores = agent.act(&state, *explore)?;
                    if *learn {
                        agent.record(&state, &scores, h0)?;
                    }
                    let a = decode_action(&scores, &self.server_cache, new_files);
                    self.server_cache = apply_action(&self.server_cache, new_files, &a)?;
                    if *learn {
                        train = agent.train_step()?;
                    }
                } else {
                    agent.forget_pending();
                    fill(&mut self.server_cache, new_files)?;
                }
            }
        }
        self.inbox.erase_batch(slot)?;
        self.log.check_server_after_erase(slot, &self.inbox.request_records());

        let mut hi = Vec::with_capacity(self.n_ues());
        let mut hi_savg = Vec::with_capacity(self.n_ues());
        for (i, r) in requests.iter().enumerate() {
            let missed = routing.ue_missed[i];
            if let (true, Some(c)) = (missed, r) {
                self.log.send(Message::ContentDelivery { ue: i, slot, content: *c });
            }
            match ues {
                UeSide::Baseline(policies) => {
                    if let Some(c) = r {
                        policies[i].touch(*c);
                    }
                }
                UeSide::Actor { .. } => {}
            }
            if let (true, Some(c)) = (missed, r) {
                let cache = &self.ue_caches[i];
                if !cache.is_full() {
                    fill(&mut self.ue_caches[i], &[*c])?;
                } else if cache.capacity() > 0 {
                    let a = match ues {
                        UeSide::Baseline(policies) => policies[i].decide(cache, &[*c])?,
                        UeSide::Actor { actor, predictors } => {
                            let enc = HistoryEncoding::from_window(self.env.user(i).history(), self.n_contents);
                            let p_local = predict_local(&predictors[i], &enc)?;
                            ue_act(actor, cache, &p_local, &[*c])?
                        }
                    };
                    self.ue_caches[i] = apply_action(cache, &[*c], &a)?;
                }
            }
            let h = hit_rate_ue(usize::from(missed))?;
            self.series[i].push(h)?;
            hi.push(h);
            hi_savg.push(self.series[i].latest_average()?);
        }
        self.log.end_slot();
        Ok(SlotOutcome { slot, requests, h0, hi, hi_savg, warm, train })
    }
}

/// Warm-up admission: new files go into free space in arrival order until
/// the cache is full; the rest are discarded.
fn fill(cache: &mut CacheState, new_files: &[ContentId]) -> Result<()> {
    for &c in new_files {
        if cache.is_full() {
            break;
        }
        cache.insert_for_fill(c)?;
    }
    Ok(())
}
