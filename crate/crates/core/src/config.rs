//! Flat `key = value` experiment configuration.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::baselines::PolicyKind;
use crate::ddpg::DdpgConfig;
use crate::env::DemandSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Policy {
    P2d3pg,
    Baseline(PolicyKind),
}

impl Policy {
    pub const ALL: [Policy; 5] = [
        Policy::P2d3pg,
        Policy::Baseline(PolicyKind::Lru),
        Policy::Baseline(PolicyKind::Lfu),
        Policy::Baseline(PolicyKind::Fifo),
        Policy::Baseline(PolicyKind::Random),
    ];

    pub fn name(self) -> &'static str {
        match self {
            Policy::P2d3pg => "P2D3PG",
            Policy::Baseline(k) => k.name(),
        }
    }

    /// Baselines read the identities in the server's request batch.
    pub fn is_private(self) -> bool {
        matches!(self, Policy::P2d3pg)
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("p2d3pg") {
            Ok(Policy::P2d3pg)
        } else {
            s.parse().map(Policy::Baseline)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub policy: Policy,
    pub n_contents: usize,
    pub n_ues: usize,
    pub server_capacity: usize,
    /// One capacity per UE; a single value applies to all of them.
    pub ue_capacity: Vec<usize>,
    pub window: usize,
    pub t_h: usize,
    pub episode_slots: usize,
    pub episodes: usize,
    pub chi: f64,
    pub sigma_initial: f64,
    pub sigma_decay: f64,
    pub sigma_floor: f64,
    pub target_interval: usize,
    pub nu: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub hidden: usize,
    pub reward_next: bool,
    pub fl_rounds: usize,
    pub fl_slots: usize,
    pub fl_epochs: usize,
    pub fl_batch_size: usize,
    pub predictor_hidden: usize,
    pub predictor_lr: f64,
    pub dataset_capacity: usize,
    pub min_states: usize,
    pub max_states: usize,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub arrival_rates: Vec<f64>,
    pub arrival_stickiness: f64,
    pub rank_swaps: usize,
    pub stationary: bool,
    pub warmup_slots: usize,
    pub max_warmup_slots: usize,
    pub test_slots: usize,
    pub parallel: bool,
    pub keep_messages: bool,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let d = DdpgConfig::default();
        let s = DemandSpec::default();
        Self {
            seed: 0,
            policy: Policy::P2d3pg,
            n_contents: s.n_contents,
            n_ues: s.n_ues,
            server_capacity: 6,
            ue_capacity: vec![2],
            window: s.window,
            t_h: 10,
            episode_slots: 200,
            episodes: 100,
            chi: d.chi,
            sigma_initial: d.sigma_initial,
            sigma_decay: d.sigma_decay,
            sigma_floor: d.sigma_floor,
            target_interval: d.target_interval,
            nu: d.nu,
            actor_lr: d.actor_lr,
            critic_lr: d.critic_lr,
            batch_size: d.batch_size,
            replay_capacity: d.replay_capacity,
            hidden: d.hidden,
            reward_next: d.reward_next,
            fl_rounds: 10,
            fl_slots: 200,
            fl_epochs: 5,
            fl_batch_size: 32,
            predictor_hidden: 128,
            predictor_lr: 1e-3,
            dataset_capacity: 2000,
            min_states: s.min_states,
            max_states: s.max_states,
            alpha_min: s.alpha_min,
            alpha_max: s.alpha_max,
            arrival_rates: s.arrival_rates,
            arrival_stickiness: s.arrival_stickiness,
            rank_swaps: s.rank_swaps,
            stationary: s.stationary,
            warmup_slots: 256,
            max_warmup_slots: 1_000_000,
            test_slots: 1024,
            parallel: false,
            keep_messages: false,
            checkpoint_dir: None,
        }
    }
}

/// Every recognised key, in file order.
pub const KEYS: &[&str] = &[
    "seed",
    "policy",
    "n_contents",
    "n_ues",
    "server_capacity",
    "ue_capacity",
    "window",
    "t_h",
    "episode_slots",
    "episodes",
    "chi",
    "sigma_initial",
    "sigma_decay",
    "sigma_floor",
    "target_interval",
    "nu",
    "actor_lr",
    "critic_lr",
    "batch_size",
    "replay_capacity",
    "hidden",
    "reward_alignment",
    "fl_rounds",
    "fl_slots",
    "fl_epochs",
    "fl_batch_size",
    "predictor_hidden",
    "predictor_lr",
    "dataset_capacity",
    "min_states",
    "max_states",
    "alpha_min",
    "alpha_max",
    "arrival_rates",
    "arrival_stickiness",
    "rank_swaps",
    "stationary",
    "warmup_slots",
    "max_warmup_slots",
    "test_slots",
    "parallel",
    "keep_messages",
    "checkpoint_dir",
];

fn num<T: FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("{key}: cannot parse {v:?}"))
}

fn list<T: FromStr>(key: &str, v: &str) -> std::result::Result<Vec<T>, String> {
    v.split(',').map(|x| num(key, x.trim())).collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        self.set_inner(key, v.trim()).map_err(|e| Error::Config(vec![e]))
    }

    fn set_inner(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        match key {
            "seed" => self.seed = num(key, v)?,
            "policy" => self.policy = v.parse().map_err(|_| format!("policy: unknown {v:?}"))?,
            "n_contents" => self.n_contents = num(key, v)?,
            "n_ues" => self.n_ues = num(key, v)?,
            "server_capacity" => self.server_capacity = num(key, v)?,
            "ue_capacity" => self.ue_capacity = list(key, v)?,
            "window" => self.window = num(key, v)?,
            "t_h" => self.t_h = num(key, v)?,
            "episode_slots" => self.episode_slots = num(key, v)?,
            "episodes" => self.episodes = num(key, v)?,
            "chi" => self.chi = num(key, v)?,
            "sigma_initial" => self.sigma_initial = num(key, v)?,
            "sigma_decay" => self.sigma_decay = num(key, v)?,
            "sigma_floor" => self.sigma_floor = num(key, v)?,
            "target_interval" => self.target_interval = num(key, v)?,
            "nu" => self.nu = num(key, v)?,
            "actor_lr" => self.actor_lr = num(key, v)?,
            "critic_lr" => self.critic_lr = num(key, v)?,
            "batch_size" => self.batch_size = num(key, v)?,
            "replay_capacity" => self.replay_capacity = num(key, v)?,
            "hidden" => self.hidden = num(key, v)?,
            "reward_alignment" => {
                self.reward_next = match v {
                    "current" => false,
                    "next" => true,
                    _ => return Err(format!("reward_alignment: expected current or next, got {v:?}")),
                }
            }
            "fl_rounds" => self.fl_rounds = num(key, v)?,
            "fl_slots" => self.fl_slots = num(key, v)?,
            "fl_epochs" => self.fl_epochs = num(key, v)?,
            "fl_batch_size" => self.fl_batch_size = num(key, v)?,
            "predictor_hidden" => self.predictor_hidden = num(key, v)?,
            "predictor_lr" => self.predictor_lr = num(key, v)?,
            "dataset_capacity" => self.dataset_capacity = num(key, v)?,
            "min_states" => self.min_states = num(key, v)?,
            "max_states" => self.max_states = num(key, v)?,
            "alpha_min" => self.alpha_min = num(key, v)?,
            "alpha_max" => self.alpha_max = num(key, v)?,
            "arrival_rates" => self.arrival_rates = list(key, v)?,
            "arrival_stickiness" => self.arrival_stickiness = num(key, v)?,
            "rank_swaps" => self.rank_swaps = num(key, v)?,
            "stationary" => self.stationary = num(key, v)?,
            "warmup_slots" => self.warmup_slots = num(key, v)?,
            "max_warmup_slots" => self.max_warmup_slots = num(key, v)?,
            "test_slots" => self.test_slots = num(key, v)?,
            "parallel" => self.parallel = num(key, v)?,
            "keep_messages" => self.keep_messages = num(key, v)?,
            "checkpoint_dir" => self.checkpoint_dir = (!v.is_empty()).then(|| PathBuf::from(v)),
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Parses a config file over the defaults. `#` and `;` start comments.
    /// Every problem in the file is reported at once.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut errors = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split(['#', ';']).next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                errors.push(format!("line {}: expected key = value", lineno + 1));
                continue;
            };
            let k = k.trim();
            if !seen.insert(k.to_string()) {
                errors.push(format!("line {}: duplicate key {k:?}", lineno + 1));
                continue;
            }
            if let Err(e) = cfg.set_inner(k, v.trim()) {
                errors.push(format!("line {}: {e}", lineno + 1));
            }
        }
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Config(errors))
        }
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "seed" => self.seed.to_string(),
            "policy" => self.policy.name().to_string(),
            "n_contents" => self.n_contents.to_string(),
            "n_ues" => self.n_ues.to_string(),
            "server_capacity" => self.server_capacity.to_string(),
            "ue_capacity" => join(&self.ue_capacity),
            "window" => self.window.to_string(),
            "t_h" => self.t_h.to_string(),
            "episode_slots" => self.episode_slots.to_string(),
            "episodes" => self.episodes.to_string(),
            "chi" => self.chi.to_string(),
            "sigma_initial" => self.sigma_initial.to_string(),
            "sigma_decay" => self.sigma_decay.to_string(),
            "sigma_floor" => self.sigma_floor.to_string(),
            "target_interval" => self.target_interval.to_string(),
            "nu" => self.nu.to_string(),
            "actor_lr" => self.actor_lr.to_string(),
            "critic_lr" => self.critic_lr.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "replay_capacity" => self.replay_capacity.to_string(),
            "hidden" => self.hidden.to_string(),
            "reward_alignment" => if self.reward_next { "next" } else { "current" }.to_string(),
            "fl_rounds" => self.fl_rounds.to_string(),
            "fl_slots" => self.fl_slots.to_string(),
            "fl_epochs" => self.fl_epochs.to_string(),
            "fl_batch_size" => self.fl_batch_size.to_string(),
            "predictor_hidden" => self.predictor_hidden.to_string(),
            "predictor_lr" => self.predictor_lr.to_string(),
            "dataset_capacity" => self.dataset_capacity.to_string(),
            "min_states" => self.min_states.to_string(),
            "max_states" => self.max_states.to_string(),
            "alpha_min" => self.alpha_min.to_string(),
            "alpha_max" => self.alpha_max.to_string(),
            "arrival_rates" => join(&self.arrival_rates),
            "arrival_stickiness" => self.arrival_stickiness.to_string(),
            "rank_swaps" => self.rank_swaps.to_string(),
            "stationary" => self.stationary.to_string(),
            "warmup_slots" => self.warmup_slots.to_string(),
            "max_warmup_slots" => self.max_warmup_slots.to_string(),
            "test_slots" => self.test_slots.to_string(),
            "parallel" => self.parallel.to_string(),
            "keep_messages" => self.keep_messages.to_string(),
            "checkpoint_dir" => self.checkpoint_dir.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            _ => return None,
        })
    }

    pub fn to_ini(&self) -> String {
        let mut s = String::new();
        for k in KEYS {
            let _ = writeln!(s, "{k} = {}", self.get(k).unwrap());
        }
        s
    }

    /// Capacity of every UE, with a single configured value broadcast.
    pub fn ue_capacities(&self) -> Vec<usize> {
        match self.ue_capacity.as_slice() {
            [m] => vec![*m; self.n_ues],
            v => v.to_vec(),
        }
    }

    pub fn demand_spec(&self) -> DemandSpec {
        DemandSpec {
            n_contents: self.n_contents,
            n_ues: self.n_ues,
            window: self.window,
            min_states: self.min_states,
            max_states: self.max_states,
            alpha_min: self.alpha_min,
            alpha_max: self.alpha_max,
            arrival_rates: self.arrival_rates.clone(),
            arrival_stickiness: self.arrival_stickiness,
            rank_swaps: self.rank_swaps,
            stationary: self.stationary,
        }
    }

    pub fn ddpg(&self) -> DdpgConfig {
        DdpgConfig {
            hidden: self.hidden,
            chi: self.chi,
            replay_capacity: self.replay_capacity,
            batch_size: self.batch_size,
            sigma_initial: self.sigma_initial,
            sigma_decay: self.sigma_decay,
            sigma_floor: self.sigma_floor,
            target_interval: self.target_interval,
            nu: self.nu,
            actor_lr: self.actor_lr,
            critic_lr: self.critic_lr,
            reward_next: self.reward_next,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = self.demand_spec().validate();
        let positive = [
            ("t_h", self.t_h),
            ("episode_slots", self.episode_slots),
            ("target_interval", self.target_interval),
            ("batch_size", self.batch_size),
            ("replay_capacity", self.replay_capacity),
            ("hidden", self.hidden),
            ("fl_epochs", self.fl_epochs),
            ("fl_batch_size", self.fl_batch_size),
            ("predictor_hidden", self.predictor_hidden),
            ("dataset_capacity", self.dataset_capacity),
            ("test_slots", self.test_slots),
        ];
        for (k, x) in positive {
            if x == 0 {
                v.push(format!("{k} must be positive"));
            }
        }
        if self.window == 0 {
            v.push("window must be positive".into());
        }
        if self.server_capacity == 0 || self.server_capacity > self.n_contents {
            v.push(format!("server_capacity must be in 1..={}", self.n_contents));
        }
        if self.server_capacity < self.n_ues {
            v.push("server_capacity must be at least n_ues, one slot may bring that many new files".into());
        }
        let caps = self.ue_capacities();
        if caps.len() != self.n_ues {
            v.push(format!("ue_capacity lists {} values for {} UEs", caps.len(), self.n_ues));
        }
        if caps.iter().any(|&m| m > self.server_capacity) {
            v.push("every ue_capacity must be at most server_capacity".into());
        }
        if !(0.0..=1.0).contains(&self.chi) {
            v.push("chi must be in [0,1]".into());
        }
        if !(self.sigma_floor >= 0.0 && self.sigma_initial >= self.sigma_floor) {
            v.push("need 0 <= sigma_floor <= sigma_initial".into());
        }
        if !(0.0..=1.0).contains(&self.sigma_decay) {
            v.push("sigma_decay must be in [0,1]".into());
        }
        if !(0.0..=1.0).contains(&self.nu) {
            v.push("nu must be in [0,1]".into());
        }
        for (k, lr) in [("actor_lr", self.actor_lr), ("critic_lr", self.critic_lr), ("predictor_lr", self.predictor_lr)] {
            if !(lr >= 0.0 && lr.is_finite()) {
                v.push(format!("{k} must be finite and non-negative"));
            }
        }
        if self.max_warmup_slots < self.warmup_slots {
            v.push("max_warmup_slots must be at least warmup_slots".into());
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }
}
