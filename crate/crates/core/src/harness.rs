//! Seeded experiment orchestration, metric traces, sweeps and output files.
//!
//! A run is split into phases that each own an environment instance built
//! from the same hidden demand parameters: federated predictor pre-training
//! (`fl`), agent training (`train`) and evaluation (`eval`). Every policy
//! sees the same evaluation request trace for a given seed.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::audit::{AuditReport, Message, MessageLog};
use crate::baselines::BaselinePolicy;
use crate::cache::mean_with_traffic;
use crate::config::{ExperimentConfig, Policy};
use crate::ddpg::Agent;
use crate::env::{generate_hidden, Catalog, ContentId, Environment, HiddenUeParams};
use crate::error::{Error, Result};
use crate::fl::{self, FlRoundLog, HistoryEncoding, LocalLearner};
use crate::nn::{AdamConfig, ModelParams};
use crate::rng::MasterSeed;
use crate::sim::{ServerSide, System, UeSide};

/// One evaluation slot.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub t: u64,
    pub policy: String,
    pub seed: u64,
    pub h0: Option<f64>,
    pub hi: Vec<f64>,
    pub hi_savg: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub policy: String,
    pub seed: u64,
    pub private: bool,
    /// Mean `H_0` over the test slots that carried server traffic.
    pub mean_h0: Option<f64>,
    /// Population standard deviation of `H_0` over the same slots.
    pub sd_h0: Option<f64>,
    pub traffic_slots: usize,
    pub mean_hi: f64,
}

impl Summary {
    pub fn from_rows(rows: &[MetricRow], policy: Policy, seed: u64) -> Self {
        let h0: Vec<Option<f64>> = rows.iter().map(|r| r.h0).collect();
        let mean_h0 = mean_with_traffic(&h0);
        let traffic: Vec<f64> = h0.iter().flatten().copied().collect();
        let sd_h0 = mean_h0.map(|m| (traffic.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / traffic.len() as f64).sqrt());
        let (s, k) = rows.iter().flat_map(|r| &r.hi).fold((0.0, 0usize), |(s, k), v| (s + v, k + 1));
        Self {
            policy: policy.name().to_string(),
            seed,
            private: policy.is_private(),
            mean_h0,
            sd_h0,
            traffic_slots: traffic.len(),
            mean_hi: if k > 0 { s / k as f64 } else { 0.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub episode: usize,
    pub mean_h0: Option<f64>,
    pub critic_loss: Option<f64>,
    pub sigma: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: ExperimentConfig,
    pub rows: Vec<MetricRow>,
    pub summary: Summary,
    pub training: Vec<EpisodeLog>,
    pub audit: AuditReport,
    pub messages: Vec<Message>,
    pub fl_log: Option<FlRoundLog>,
    /// Every UE's request in each evaluation slot.
    pub requests: Vec<Vec<Option<ContentId>>>,
    pub actor: Option<ModelParams>,
    pub critic: Option<ModelParams>,
}

/// Result of the federated pre-training phase.
pub struct Predictors {
    pub global: ModelParams,
    pub learners: Vec<LocalLearner>,
    pub log: FlRoundLog,
}

fn hidden_params(cfg: &ExperimentConfig) -> Result<(Catalog, Vec<HiddenUeParams>)> {
    let hidden = generate_hidden(&cfg.demand_spec(), MasterSeed(cfg.seed))?;
    Ok((Catalog::new(cfg.n_contents)?, hidden))
}

/// Rounds of local data collection, local training, upload, averaging and
/// broadcast. The UEs start from a common initial model.
pub fn federated_pretrain(cfg: &ExperimentConfig, catalog: &Catalog, hidden: &[HiddenUeParams], log: &mut MessageLog) -> Result<Predictors> {
    let seed = MasterSeed(cfg.seed);
    let n = cfg.n_contents;
    let init = fl::new_predictor(n, cfg.window, cfg.predictor_hidden, &mut seed.stream("fl/init"))?;
    let mut learners: Vec<LocalLearner> = (0..cfg.n_ues)
        .map(|i| LocalLearner::new(init.clone(), AdamConfig::with_lr(cfg.predictor_lr), cfg.dataset_capacity, seed.stream(&format!("fl/ue{i}/shuffle"))))
        .collect();
    let mut env = Environment::new(catalog.clone(), cfg.window, hidden, seed, "fl")?;
    let mut round_log = FlRoundLog::default();
    let mut global = init;
    for round in 0..cfg.fl_rounds as u64 {
        for _ in 0..cfg.fl_slots {
            let reqs = env.next_requests();
            for (i, l) in learners.iter_mut().enumerate() {
                l.observe(env.user(i).history(), reqs[i], n);
            }
        }
        fl::train_all(&mut learners, cfg.fl_epochs, cfg.fl_batch_size, n, cfg.parallel)?;
        let digests: Vec<String> = learners.iter().map(|l| l.params.digest()).collect();
        for (ue, d) in digests.iter().enumerate() {
            log.send(Message::ParamUpload { ue, round, digest: d.clone() });
        }
        let uploads: Vec<&ModelParams> = learners.iter().map(|l| &l.params).collect();
        global = fl::fedavg(&uploads, &vec![1.0; uploads.len()])?;
        fl::broadcast(&global, &mut learners, digests, &mut round_log);
        log.send(Message::ParamBroadcast { round, digest: global.digest() });
    }
    Ok(Predictors { global, learners, log: round_log })
}

/// Mean total-variation distance between each UE's local prediction and its
/// true next-slot popularity, over `slots` fresh slots.
pub fn predictor_tv_error(cfg: &ExperimentConfig, slots: usize) -> Result<f64> {
    cfg.validate()?;
    let (catalog, hidden) = hidden_params(cfg)?;
    let mut log = MessageLog::new(false);
    let pred = federated_pretrain(cfg, &catalog, &hidden, &mut log)?;
    let mut env = Environment::new(catalog, cfg.window, &hidden, MasterSeed(cfg.seed), "probe")?;
    for _ in 0..cfg.window + 1 {
        env.next_requests();
    }
    let mut total = 0.0;
    for _ in 0..slots {
        env.next_requests();
        for i in 0..env.n_ues() {
            let enc = HistoryEncoding::from_window(env.user(i).history(), cfg.n_contents);
            let p = fl::predict_local(&pred.learners[i].params, &enc)?;
            total += p.total_variation(env.oracle().local_popularity(i));
        }
    }
    Ok(total / (slots * cfg.n_ues) as f64)
}

/// Runs slots until at least `min_slots` have passed and every cache is full.
fn warm_up(sys: &mut System, server: &mut ServerSide<'_>, ues: &mut UeSide<'_>, min_slots: usize, max_slots: usize) -> Result<()> {
    let mut k = 0;
    while k < min_slots || !sys.all_full() {
        if k >= max_slots {
            return Err(Error::Constraint(format!("caches still not full after {max_slots} warm-up slots")));
        }
        sys.step(server, ues)?;
        k += 1;
    }
    Ok(())
}

fn evaluate(
    cfg: &ExperimentConfig,
    sys: &mut System,
    server: &mut ServerSide<'_>,
    ues: &mut UeSide<'_>,
) -> Result<(Vec<MetricRow>, Vec<Vec<Option<ContentId>>>)> {
    warm_up(sys, server, ues, cfg.warmup_slots, cfg.max_warmup_slots)?;
    let mut rows = Vec::with_capacity(cfg.test_slots);
    let mut requests = Vec::with_capacity(cfg.test_slots);
    for t in 0..cfg.test_slots as u64 {
        let out = sys.step(server, ues)?;
        rows.push(MetricRow { t, policy: cfg.policy.name().to_string(), seed: cfg.seed, h0: out.h0, hi: out.hi, hi_savg: out.hi_savg });
        requests.push(out.requests);
    }
    Ok((rows, requests))
}

fn baseline_set(cfg: &ExperimentConfig, kind: crate::baselines::PolicyKind, seed: MasterSeed) -> (BaselinePolicy, Vec<BaselinePolicy>) {
    let server = BaselinePolicy::new(kind, cfg.n_contents, seed.stream("policy/server"));
    let ues = (0..cfg.n_ues).map(|i| BaselinePolicy::new(kind, cfg.n_contents, seed.stream(&format!("policy/ue{i}")))).collect();
    (server, ues)
}

/// Episodes of online actor-critic training on the `train` environment.
/// Caches are emptied at the start of every episode and the current actor is
/// broadcast to the UEs.
pub fn train_agent(cfg: &ExperimentConfig, catalog: &Catalog, hidden: &[HiddenUeParams], pred: &Predictors, log: MessageLog) -> Result<(Agent, Vec<EpisodeLog>, MessageLog)> {
    let seed = MasterSeed(cfg.seed);
    let mut agent = Agent::new(cfg.n_contents, cfg.ddpg(), &mut seed.stream("ddpg/init"), seed.stream("ddpg/noise"), seed.stream("ddpg/replay"))?;
    let env = Environment::new(catalog.clone(), cfg.window, hidden, seed, "train")?;
    let mut sys = System::new(env, cfg.server_capacity, &cfg.ue_capacities(), cfg.window, cfg.t_h, log)?;
    let predictors: Vec<ModelParams> = pred.learners.iter().map(|l| l.params.clone()).collect();
    let mut history = Vec::with_capacity(cfg.episodes);
    for episode in 0..cfg.episodes {
        sys.reset_caches();
        agent.forget_pending();
        let actor = agent.nets.actor.clone();
        sys.log.send(Message::ActorBroadcast { digest: actor.digest() });
        let mut ues = UeSide::Actor { actor: &actor, predictors: &predictors };
        {
            let mut server = ServerSide::Agent { agent: &mut agent, predictor: &pred.global, explore: false, learn: false };
            warm_up(&mut sys, &mut server, &mut ues, 0, cfg.max_warmup_slots)?;
        }
        let mut h0 = Vec::with_capacity(cfg.episode_slots);
        let mut losses = Vec::new();
        for _ in 0..cfg.episode_slots {
            let mut server = ServerSide::Agent { agent: &mut agent, predictor: &pred.global, explore: true, learn: true };
            let out = sys.step(&mut server, &mut ues)?;
            h0.push(out.h0);
            losses.extend(out.train.map(|s| s.critic_loss));
        }
        let sigma = agent.exploration.sigma;
        agent.exploration.end_episode();
        let critic_loss = (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64);
        let row = EpisodeLog { episode, mean_h0: mean_with_traffic(&h0), critic_loss, sigma };
        log::debug!("episode {episode}: h0 {:?} loss {:?} sigma {sigma}", row.mean_h0, row.critic_loss);
        history.push(row);
    }
    Ok((agent, history, sys.log))
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let seed = MasterSeed(cfg.seed);
    let (catalog, hidden) = hidden_params(cfg)?;
    let eval_env = Environment::new(catalog.clone(), cfg.window, &hidden, seed, "eval")?;
    let caps = cfg.ue_capacities();
    let mut log = MessageLog::new(cfg.keep_messages);
    let (rows, requests, training, fl_log, nets, log) = match cfg.policy {
        Policy::Baseline(kind) => {
            let (mut server, mut ues) = baseline_set(cfg, kind, seed);
            let mut sys = System::new(eval_env, cfg.server_capacity, &caps, cfg.window, cfg.t_h, log)?;
            let (rows, req) = evaluate(cfg, &mut sys, &mut ServerSide::Baseline(&mut server), &mut UeSide::Baseline(&mut ues))?;
            (rows, req, Vec::new(), None, None, sys.log)
        }
        Policy::P2d3pg => {
            let pred = federated_pretrain(cfg, &catalog, &hidden, &mut log)?;
            let (mut agent, training, log) = train_agent(cfg, &catalog, &hidden, &pred, log)?;
            let mut sys = System::new(eval_env, cfg.server_capacity, &caps, cfg.window, cfg.t_h, log)?;
            let actor = agent.nets.actor.clone();
            sys.log.send(Message::ActorBroadcast { digest: actor.digest() });
            let predictors: Vec<ModelParams> = pred.learners.iter().map(|l| l.params.clone()).collect();
            let (rows, req) = evaluate(
                cfg,
                &mut sys,
                &mut ServerSide::Agent { agent: &mut agent, predictor: &pred.global, explore: false, learn: false },
                &mut UeSide::Actor { actor: &actor, predictors: &predictors },
            )?;
            let nets = (agent.nets.actor, agent.nets.critic);
            (rows, req, training, Some(pred.log), Some(nets), sys.log)
        }
    };
    let summary = Summary::from_rows(&rows, cfg.policy, cfg.seed);
    let (actor, critic) = nets.unzip();
    let out = RunOutput {
        config: cfg.clone(),
        audit: log.report(),
        messages: log.messages().to_vec(),
        rows,
        summary,
        training,
        fl_log,
        requests,
        actor,
        critic,
    };
    if let Some(dir) = &cfg.checkpoint_dir {
        write_checkpoints(&out, dir)?;
    }
    Ok(out)
}

/// Actor and critic in the binary parameter format, plus the FL round log.
pub fn write_checkpoints(out: &RunOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    if let Some(a) = &out.actor {
        std::fs::write(dir.join("actor.nnp"), a.to_bytes())?;
    }
    if let Some(c) = &out.critic {
        std::fs::write(dir.join("critic.nnp"), c.to_bytes())?;
    }
    if let Some(l) = &out.fl_log {
        std::fs::write(dir.join("fl_rounds.log"), l.to_lines())?;
    }
    Ok(())
}

pub const CSV_HEADER: &str = "t,policy,seed,h0,ue_id,hi,hi_savg";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Server row with an empty `ue_id`, then one row per UE.
pub fn to_csv(rows: &[MetricRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},,,", r.t, r.policy, r.seed, opt(r.h0));
        for (i, (h, a)) in r.hi.iter().zip(&r.hi_savg).enumerate() {
            let _ = writeln!(s, "{},{},{},,{i},{h},{a}", r.t, r.policy, r.seed);
        }
    }
    s
}

pub fn parse_csv(text: &str) -> Result<Vec<MetricRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Format("missing or wrong CSV header".into()));
    }
    let bad = |n: usize, what: &str| Error::Format(format!("CSV line {}: {what}", n + 2));
    let mut rows: Vec<MetricRow> = Vec::new();
    for (n, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(bad(n, "expected 7 fields"));
        }
        let t: u64 = f[0].parse().map_err(|_| bad(n, "bad t"))?;
        let seed: u64 = f[2].parse().map_err(|_| bad(n, "bad seed"))?;
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(n, "bad number"));
        if f[4].is_empty() {
            let h0 = if f[3].is_empty() { None } else { Some(num(f[3])?) };
            rows.push(MetricRow { t, policy: f[1].to_string(), seed, h0, hi: Vec::new(), hi_savg: Vec::new() });
        } else {
            let row = rows.last_mut().filter(|r| r.t == t).ok_or_else(|| bad(n, "UE row without a server row"))?;
            let ue: usize = f[4].parse().map_err(|_| bad(n, "bad ue_id"))?;
            if ue != row.hi.len() {
                return Err(bad(n, "UE rows out of order"));
            }
            row.hi.push(num(f[5])?);
            row.hi_savg.push(num(f[6])?);
        }
    }
    Ok(rows)
}

pub fn training_log_csv(log: &[EpisodeLog]) -> String {
    let mut s = String::from("episode,mean_h0,critic_loss,sigma\n");
    for e in log {
        let _ = writeln!(s, "{},{},{},{}", e.episode, opt(e.mean_h0), opt(e.critic_loss), e.sigma);
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    ServerCapacity,
    UeCapacity,
    Window,
    Contents,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "M_0" | "m0" | "server_capacity" => Ok(SweepAxis::ServerCapacity),
            "M_i" | "mi" | "ue_capacity" => Ok(SweepAxis::UeCapacity),
            "H" | "window" => Ok(SweepAxis::Window),
            "N" | "n_contents" => Ok(SweepAxis::Contents),
            _ => Err(Error::Config(vec![format!("unknown sweep axis {s:?}")])),
        }
    }
}

impl SweepAxis {
    pub fn key(self) -> &'static str {
        match self {
            SweepAxis::ServerCapacity => "server_capacity",
            SweepAxis::UeCapacity => "ue_capacity",
            SweepAxis::Window => "window",
            SweepAxis::Contents => "n_contents",
        }
    }

    pub fn apply(self, cfg: &mut ExperimentConfig, v: usize) {
        match self {
            SweepAxis::ServerCapacity => cfg.server_capacity = v,
            SweepAxis::UeCapacity => cfg.ue_capacity = vec![v],
            SweepAxis::Window => cfg.window = v,
            SweepAxis::Contents => cfg.n_contents = v,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepCell {
    pub policy: Policy,
    pub value: usize,
    pub seed: u64,
    pub output: RunOutput,
}

/// Mean and spread over seeds of one (policy, axis value) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub policy: Policy,
    pub value: usize,
    pub mean_h0: f64,
    pub sd_h0: f64,
    pub seeds: usize,
}

/// Every (policy, value, seed) cell, each with its own streams. Cells come
/// back in the same order whether or not they ran in parallel.
pub fn sweep(template: &ExperimentConfig, axis: SweepAxis, values: &[usize], policies: &[Policy], seeds: &[u64], parallel: bool) -> Result<Vec<SweepCell>> {
    let mut cells = Vec::new();
    for &policy in policies {
        for &value in values {
            for &seed in seeds {
                let mut c = template.clone();
                axis.apply(&mut c, value);
                c.policy = policy;
                c.seed = seed;
                c.checkpoint_dir = None;
                if let Err(Error::Config(v)) = c.validate() {
                    return Err(Error::Config(v.into_iter().map(|e| format!("{}={value}: {e}", axis.key())).collect()));
                }
                cells.push((policy, value, seed, c));
            }
        }
    }
    let run = |(policy, value, seed, c): &(Policy, usize, u64, ExperimentConfig)| -> Result<SweepCell> {
        Ok(SweepCell { policy: *policy, value: *value, seed: *seed, output: run_experiment(c)? })
    };
    if parallel {
        cells.par_iter().map(run).collect()
    } else {
        cells.iter().map(run).collect()
    }
}

pub fn aggregate(cells: &[SweepCell]) -> Vec<SweepPoint> {
    let mut keys: Vec<(Policy, usize)> = cells.iter().map(|c| (c.policy, c.value)).collect();
    keys.dedup();
    let mut out: Vec<SweepPoint> = Vec::new();
    for (policy, value) in keys {
        if out.iter().any(|p| p.policy == policy && p.value == value) {
            continue;
        }
        let v: Vec<f64> = cells
            .iter()
            .filter(|c| c.policy == policy && c.value == value)
            .filter_map(|c| c.output.summary.mean_h0)
            .collect();
        let m = if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
        let sd = if v.is_empty() { f64::NAN } else { (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt() };
        out.push(SweepPoint { policy, value, mean_h0: m, sd_h0: sd, seeds: v.len() });
    }
    out
}

pub fn sweep_csv(axis: SweepAxis, cells: &[SweepCell]) -> String {
    let mut s = String::from("policy,axis,value,seed,private,mean_h0,sd_h0,mean_hi\n");
    for c in cells {
        let m = &c.output.summary;
        let _ = writeln!(s, "{},{},{},{},{},{},{},{}", c.policy, axis.key(), c.value, c.seed, m.private, opt(m.mean_h0), opt(m.sd_h0), m.mean_hi);
    }
    s
}

/// Line plot of mean `H_0` against the sweep axis, one line per policy.
pub fn sweep_svg(axis: SweepAxis, points: &[SweepPoint]) -> Result<String> {
    if points.is_empty() {
        return Err(Error::Domain("nothing to plot".into()));
    }
    let (w, h, pad) = (640.0, 420.0, 56.0);
    let xs: Vec<f64> = points.iter().map(|p| p.value as f64).collect();
    let (x0, x1) = xs.iter().fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
    let span = if x1 > x0 { x1 - x0 } else { 1.0 };
    let px = |x: f64| pad + (x - x0) / span * (w - 2.0 * pad);
    let py = |y: f64| h - pad - y.clamp(0.0, 1.0) * (h - 2.0 * pad);
    let colors = ["#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd"];
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<line x1="{pad}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, h - pad, w - pad, h - pad);
    let _ = writeln!(s, r#"<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{}" stroke="black"/>"#, h - pad);
    for k in 0..=5 {
        let y = k as f64 / 5.0;
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" font-size="11" text-anchor="end">{y:.1}</text>"#, pad - 6.0, py(y) + 4.0);
    }
    let mut ticks = xs.clone();
    ticks.sort_by(f64::total_cmp);
    ticks.dedup();
    for x in &ticks {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" font-size="11" text-anchor="middle">{x}</text>"#, px(*x), h - pad + 16.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{}</text>"#, w / 2.0, h - 12.0, axis.key());
    let _ = writeln!(s, r#"<text x="14" y="{}" font-size="12" transform="rotate(-90 14 {})" text-anchor="middle">mean hit rate</text>"#, h / 2.0, h / 2.0);
    let mut policies: Vec<Policy> = points.iter().map(|p| p.policy).collect();
    policies.dedup();
    policies.sort();
    policies.dedup();
    for (k, pol) in policies.iter().enumerate() {
        let color = colors[k % colors.len()];
        let mut pts: Vec<&SweepPoint> = points.iter().filter(|p| p.policy == *pol && p.mean_h0.is_finite()).collect();
        pts.sort_by_key(|p| p.value);
        let path: Vec<String> = pts.iter().map(|p| format!("{:.1},{:.1}", px(p.value as f64), py(p.mean_h0))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, path.join(" "));
        for p in &pts {
            let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#, px(p.value as f64), py(p.mean_h0));
        }
        let ly = pad + 16.0 * k as f64;
        let _ = writeln!(s, r#"<text x="{}" y="{ly:.1}" font-size="12" fill="{color}">{pol}</text>"#, w - pad - 70.0);
    }
    s.push_str("</svg>\n");
    Ok(s)
}
