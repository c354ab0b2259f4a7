//! Demand side of the simulator: Markov-modulated Zipf popularity per UE,
//! request generation, UE -> server routing and the server-side batch
//! lifecycle with its privacy erase.

use std::collections::{BTreeSet, VecDeque};

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::cache::CacheState;
use crate::error::{Error, Result};
use crate::rng::{MasterSeed, Stream};

/// Content ids are 1-based: `1..=N`.
pub type ContentId = u32;
pub type UeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Catalog {
    n_contents: usize,
}

impl Catalog {
    pub fn new(n_contents: usize) -> Result<Self> {
        if n_contents < 2 {
            return Err(Error::Domain(format!("catalog needs at least 2 contents, got {n_contents}")));
        }
        Ok(Self { n_contents })
    }

    pub fn len(&self) -> usize {
        self.n_contents
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn ids(&self) -> impl Iterator<Item = ContentId> {
        1..=self.n_contents as ContentId
    }

    pub fn contains(&self, id: ContentId) -> bool {
        id >= 1 && (id as usize) <= self.n_contents
    }
}

/// Probability vector over the catalog; index `k` holds content `k + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PopularityVector(Vec<f64>);

impl PopularityVector {
    /// Wraps a vector that must be non-negative and sum to one within 1e-9.
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::Domain("popularity entries must be finite and non-negative".into()));
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("popularity sums to {s}, not 1")));
        }
        Ok(Self(p))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    /// Normalizes arbitrary non-negative weights.
    pub fn from_weights(w: &[f64]) -> Result<Self> {
        let s: f64 = w.iter().sum();
        if !(s > 0.0) {
            return Err(Error::Domain("weights must have positive mass".into()));
        }
        Self::new(w.iter().map(|x| x / s).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn prob(&self, id: ContentId) -> f64 {
        self.0[id as usize - 1]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total_variation(&self, other: &PopularityVector) -> f64 {
        0.5 * self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }

    /// Content ids ordered by decreasing probability, ties by lower id.
    pub fn ranked(&self) -> Vec<ContentId> {
        let mut ids: Vec<ContentId> = (1..=self.0.len() as ContentId).collect();
        ids.sort_by(|a, b| {
            self.prob(*b).partial_cmp(&self.prob(*a)).unwrap().then(a.cmp(b))
        });
        ids
    }

    pub fn sample(&self, rng: &mut Stream) -> ContentId {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (k, p) in self.0.iter().enumerate() {
            acc += p;
            if u < acc {
                return k as ContentId + 1;
            }
        }
        // Rounding left a sliver above the cumulative sum; take the last
        // content with positive mass.
        self.0.iter().rposition(|&p| p > 0.0).unwrap_or(self.0.len() - 1) as ContentId + 1
    }
}

/// Bijection from popularity rank (1-based) to content id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation(Vec<ContentId>);

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Self((1..=n as ContentId).collect())
    }

    pub fn new(by_rank: Vec<ContentId>) -> Result<Self> {
        let n = by_rank.len();
        let mut seen = vec![false; n];
        for &id in &by_rank {
            let k = id as usize;
            if k == 0 || k > n || seen[k - 1] {
                return Err(Error::Domain(format!("not a permutation of 1..={n}")));
            }
            seen[k - 1] = true;
        }
        Ok(Self(by_rank))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Content id occupying the given 1-based rank.
    pub fn content_at(&self, rank: usize) -> ContentId {
        self.0[rank - 1]
    }

    pub fn by_rank(&self) -> &[ContentId] {
        &self.0
    }
}

/// Zipf law over ranks, placed onto content ids through `perm`.
pub fn zipf_pmf(alpha: f64, catalog: &Catalog, perm: &Permutation) -> Result<PopularityVector> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::Domain(format!("zipf exponent must be finite and >= 0, got {alpha}")));
    }
    let n = catalog.len();
    if perm.len() != n {
        return Err(Error::Shape(format!("permutation over {} ids for catalog of {n}", perm.len())));
    }
    let weights: Vec<f64> = (1..=n).map(|r| (r as f64).powf(-alpha)).collect();
    let z: f64 = weights.iter().sum();
    let mut p = vec![0.0; n];
    for (r, w) in weights.iter().enumerate() {
        p[perm.content_at(r + 1) as usize - 1] = w / z;
    }
    Ok(PopularityVector(p))
}

/// Finite Markov chain with a validated row-stochastic matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChain {
    states: Vec<f64>,
    matrix: Vec<Vec<f64>>,
    current: usize,
}

impl MarkovChain {
    pub fn new(states: Vec<f64>, matrix: Vec<Vec<f64>>, current: usize) -> Result<Self> {
        let g = states.len();
        if g == 0 {
            return Err(Error::Domain("markov chain needs at least one state".into()));
        }
        if matrix.len() != g || matrix.iter().any(|r| r.len() != g) {
            return Err(Error::Shape(format!("transition matrix must be {g}x{g}")));
        }
        for (i, row) in matrix.iter().enumerate() {
            if row.iter().any(|&x| !(x >= 0.0)) {
                return Err(Error::Domain(format!("row {i} has a negative entry")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::Domain(format!("row {i} sums to {s}")));
            }
        }
        if current >= g {
            return Err(Error::Domain(format!("initial state {current} out of range")));
        }
        Ok(Self { states, matrix, current })
    }

    /// Chain that never leaves its initial state.
    pub fn frozen(states: Vec<f64>, current: usize) -> Result<Self> {
        let g = states.len();
        let matrix = (0..g).map(|i| (0..g).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        Self::new(states, matrix, current)
    }

    pub fn current_state(&self) -> usize {
        self.current
    }

    pub fn value(&self) -> f64 {
        self.states[self.current]
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.matrix
    }

    pub fn step(&mut self, rng: &mut Stream) -> usize {
        let row = &self.matrix[self.current];
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut next = row.iter().rposition(|&p| p > 0.0).unwrap_or(self.current);
        for (j, p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                next = j;
                break;
            }
        }
        self.current = next;
        next
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovPopularityModel {
    chain: MarkovChain,
    permutation: Permutation,
    pmfs: Vec<PopularityVector>,
}

impl MarkovPopularityModel {
    pub fn new(chain: MarkovChain, permutation: Permutation, catalog: &Catalog) -> Result<Self> {
        let pmfs = chain
            .states()
            .iter()
            .map(|&a| zipf_pmf(a, catalog, &permutation))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { chain, permutation, pmfs })
    }

    pub fn alpha(&self) -> f64 {
        self.chain.value()
    }

    pub fn chain(&self) -> &MarkovChain {
        &self.chain
    }

    pub fn permutation(&self) -> &Permutation {
        &self.permutation
    }

    pub fn current_pmf(&self) -> &PopularityVector {
        &self.pmfs[self.chain.current_state()]
    }

    pub fn step(&mut self, rng: &mut Stream) -> usize {
        self.chain.step(rng)
    }
}

/// The last `H + 1` request outcomes of one UE, oldest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistoryWindow {
    slots: VecDeque<Option<ContentId>>,
    len: usize,
}

impl HistoryWindow {
    pub fn new(window: usize) -> Self {
        Self { slots: VecDeque::with_capacity(window + 1), len: window + 1 }
    }

    pub fn push(&mut self, outcome: Option<ContentId>) {
        if self.slots.len() == self.len {
            self.slots.pop_front();
        }
        self.slots.push_back(outcome);
    }

    pub fn is_warm(&self) -> bool {
        self.slots.len() == self.len
    }

    /// Window contents, left-padded with "no request" before warm-up.
    pub fn padded(&self) -> Vec<Option<ContentId>> {
        let mut v = vec![None; self.len - self.slots.len()];
        v.extend(self.slots.iter().copied());
        v
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.len
    }
}

#[derive(Debug, Clone)]
pub struct UserProfile {
    pub ue_id: UeId,
    arrival: MarkovChain,
    popularity: MarkovPopularityModel,
    history: HistoryWindow,
    rng_arrival: Stream,
    rng_popularity: Stream,
    rng_request: Stream,
}

impl UserProfile {
    pub fn history(&self) -> &HistoryWindow {
        &self.history
    }

    pub fn arrival_rate(&self) -> f64 {
        self.arrival.value()
    }

    /// Advances the hidden arrival and popularity chains by one slot.
    fn advance(&mut self) {
        self.arrival.step(&mut self.rng_arrival);
        self.popularity.step(&mut self.rng_popularity);
    }
}

/// Draws this slot's request for one UE and records it in its window.
pub fn generate_request(profile: &mut UserProfile) -> Option<ContentId> {
    let lambda = profile.arrival.value();
    let fire = profile.rng_request.random::<f64>() < lambda;
    let outcome = if fire {
        Some(profile.popularity.current_pmf().sample(&mut profile.rng_request))
    } else {
        None
    };
    profile.history.push(outcome);
    outcome
}

/// Parameters from which the hidden per-UE demand models are generated.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandSpec {
    pub n_contents: usize,
    pub n_ues: usize,
    pub window: usize,
    pub min_states: usize,
    pub max_states: usize,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub arrival_rates: Vec<f64>,
    pub arrival_stickiness: f64,
    /// Number of local rank swaps applied to the shared base order per UE.
    pub rank_swaps: usize,
    /// Identity popularity transitions: each UE stays at one exponent.
    pub stationary: bool,
}

impl Default for DemandSpec {
    fn default() -> Self {
        Self {
            n_contents: 24,
            n_ues: 6,
            window: 10,
            min_states: 3,
            max_states: 5,
            alpha_min: 0.4,
            alpha_max: 2.0,
            arrival_rates: vec![0.6, 0.8, 1.0],
            arrival_stickiness: 0.9,
            rank_swaps: 12,
            stationary: false,
        }
    }
}

impl DemandSpec {
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.n_contents < 2 {
            v.push("n_contents must be >= 2".into());
        }
        if self.n_ues == 0 {
            v.push("n_ues must be positive".into());
        }
        if self.min_states == 0 || self.min_states > self.max_states {
            v.push("need 1 <= min_states <= max_states".into());
        }
        if !(self.alpha_min >= 0.0 && self.alpha_min <= self.alpha_max) {
            v.push("need 0 <= alpha_min <= alpha_max".into());
        }
        if self.arrival_rates.is_empty() || self.arrival_rates.iter().any(|l| !(0.0..=1.0).contains(l)) {
            v.push("arrival rates must be a non-empty list in [0,1]".into());
        }
        if !(0.0..=1.0).contains(&self.arrival_stickiness) {
            v.push("arrival_stickiness must be in [0,1]".into());
        }
        v
    }
}

/// Hidden demand parameters of one UE. Only the environment and evaluation
/// oracles see these.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenUeParams {
    pub alphas: Vec<f64>,
    pub alpha_matrix: Vec<Vec<f64>>,
    pub alpha_initial: usize,
    pub permutation: Permutation,
    pub arrival_rates: Vec<f64>,
    pub arrival_matrix: Vec<Vec<f64>>,
    pub arrival_initial: usize,
}

fn dirichlet_row(g: usize, rng: &mut Stream) -> Vec<f64> {
    let draws: Vec<f64> = (0..g).map(|_| Exp1.sample(rng)).collect();
    let s: f64 = draws.iter().sum();
    let mut row: Vec<f64> = draws.iter().map(|x| x / s).collect();
    // Push the rounding residue into the largest entry so the row is
    // stochastic to machine precision.
    let resid = 1.0 - row.iter().sum::<f64>();
    let k = (0..g).max_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap()).unwrap();
    row[k] += resid;
    row
}

fn sticky_matrix(g: usize, stay: f64) -> Vec<Vec<f64>> {
    (0..g)
        .map(|i| {
            (0..g)
                .map(|j| {
                    if g == 1 {
                        1.0
                    } else if i == j {
                        stay
                    } else {
                        (1.0 - stay) / (g - 1) as f64
                    }
                })
                .collect()
        })
        .collect()
}

/// Draws every UE's hidden parameters from the seed's `env/params` stream.
pub fn generate_hidden(spec: &DemandSpec, seed: MasterSeed) -> Result<Vec<HiddenUeParams>> {
    let problems = spec.validate();
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    let n = spec.n_contents;
    let mut rng = seed.stream("env/params");
    let mut base: Vec<ContentId> = (1..=n as ContentId).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        base.swap(i, j);
    }
    let mut out = Vec::with_capacity(spec.n_ues);
    for _ in 0..spec.n_ues {
        let g = rng.random_range(spec.min_states..=spec.max_states);
        let alphas: Vec<f64> = (0..g).map(|_| rng.random_range(spec.alpha_min..=spec.alpha_max)).collect();
        let alpha_matrix: Vec<Vec<f64>> = if spec.stationary {
            (0..g).map(|i| (0..g).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
        } else {
            (0..g).map(|_| dirichlet_row(g, &mut rng)).collect()
        };
        let alpha_initial = rng.random_range(0..g);
        let mut by_rank = base.clone();
        for _ in 0..spec.rank_swaps {
            let r = rng.random_range(0..n - 1);
            let d = rng.random_range(1..=3usize);
            by_rank.swap(r, (r + d).min(n - 1));
        }
        let arrival_rates = spec.arrival_rates.clone();
        let arrival_matrix = sticky_matrix(arrival_rates.len(), spec.arrival_stickiness);
        let arrival_initial = rng.random_range(0..arrival_rates.len());
        out.push(HiddenUeParams {
            alphas,
            alpha_matrix,
            alpha_initial,
            permutation: Permutation::new(by_rank)?,
            arrival_rates,
            arrival_matrix,
            arrival_initial,
        });
    }
    Ok(out)
}

/// The demand process of all UEs. Each phase of an experiment (predictor
/// pre-training, agent training, evaluation) owns a separate instance built
/// from the same hidden parameters but its own request streams.
#[derive(Debug, Clone)]
pub struct Environment {
    catalog: Catalog,
    users: Vec<UserProfile>,
    slot: u64,
}

impl Environment {
    pub fn new(catalog: Catalog, window: usize, hidden: &[HiddenUeParams], seed: MasterSeed, phase: &str) -> Result<Self> {
        let mut users = Vec::with_capacity(hidden.len());
        for (i, h) in hidden.iter().enumerate() {
            let arrival = MarkovChain::new(h.arrival_rates.clone(), h.arrival_matrix.clone(), h.arrival_initial)?;
            let chain = MarkovChain::new(h.alphas.clone(), h.alpha_matrix.clone(), h.alpha_initial)?;
            let popularity = MarkovPopularityModel::new(chain, h.permutation.clone(), &catalog)?;
            users.push(UserProfile {
                ue_id: i,
                arrival,
                popularity,
                history: HistoryWindow::new(window),
                rng_arrival: seed.stream(&format!("{phase}/ue{i}/arrival")),
                rng_popularity: seed.stream(&format!("{phase}/ue{i}/popularity")),
                rng_request: seed.stream(&format!("{phase}/ue{i}/request")),
            });
        }
        Ok(Self { catalog, users, slot: 0 })
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn n_ues(&self) -> usize {
        self.users.len()
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    pub fn user(&self, ue: UeId) -> &UserProfile {
        &self.users[ue]
    }

    /// Generates every UE's request for the current slot, then advances the
    /// hidden chains so the next call sees slot `t + 1`.
    pub fn next_requests(&mut self) -> Vec<Option<ContentId>> {
        let reqs: Vec<_> = self.users.iter_mut().map(generate_request).collect();
        for u in &mut self.users {
            u.advance();
        }
        self.slot += 1;
        reqs
    }

    /// Evaluation-only view of the hidden state.
    pub fn oracle(&self) -> Oracle<'_> {
        Oracle { env: self }
    }
}

/// Ground-truth access for scoring and tests. Agent code never receives one.
pub struct Oracle<'a> {
    env: &'a Environment,
}

impl Oracle<'_> {
    pub fn local_popularity(&self, ue: UeId) -> &PopularityVector {
        self.env.users[ue].popularity.current_pmf()
    }

    pub fn arrival_rate(&self, ue: UeId) -> f64 {
        self.env.users[ue].arrival.value()
    }

    pub fn alpha(&self, ue: UeId) -> f64 {
        self.env.users[ue].popularity.alpha()
    }

    /// `P^G_n ∝ Σ_i λ_i P^i_n`.
    pub fn global_popularity(&self) -> Result<PopularityVector> {
        let n = self.env.catalog.len();
        let mut w = vec![0.0; n];
        for u in &self.env.users {
            let lam = u.arrival.value();
            for (k, p) in u.popularity.current_pmf().as_slice().iter().enumerate() {
                w[k] += lam * p;
            }
        }
        PopularityVector::from_weights(&w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RequestRecord {
    pub ue_id: UeId,
    pub content: ContentId,
    pub slot: u64,
}

/// Requests that missed at the UE side during one slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlobalRequestBatch {
    pub slot: u64,
    pub entries: Vec<(UeId, ContentId)>,
}

impl GlobalRequestBatch {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Routing {
    pub batch: GlobalRequestBatch,
    /// Distinct batch contents absent from the server cache, first-seen order.
    pub server_misses: Vec<ContentId>,
    /// Whether each UE missed locally; a slot without a request is a hit.
    pub ue_missed: Vec<bool>,
}

pub fn route_and_collect(
    slot: u64,
    requests: &[Option<ContentId>],
    ue_caches: &[CacheState],
    server_cache: &CacheState,
) -> Routing {
    let mut entries = Vec::new();
    let mut ue_missed = Vec::with_capacity(requests.len());
    for (i, r) in requests.iter().enumerate() {
        match r {
            Some(c) if !ue_caches[i].contains(*c) => {
                entries.push((i, *c));
                ue_missed.push(true);
            }
            _ => ue_missed.push(false),
        }
    }
    let mut seen = BTreeSet::new();
    let server_misses = entries
        .iter()
        .filter_map(|&(_, c)| (!server_cache.contains(c) && seen.insert(c)).then_some(c))
        .collect();
    Routing { batch: GlobalRequestBatch { slot, entries }, server_misses, ue_missed }
}

/// Server-side holder of the one live request batch.
///
/// A batch is received, scheduled (global prediction or policy bookkeeping),
/// then erased before the next slot. Nothing else about requests is kept.
#[derive(Debug, Default)]
pub struct ServerInbox {
    live: Option<GlobalRequestBatch>,
    scheduled: bool,
}

impl ServerInbox {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn receive(&mut self, batch: GlobalRequestBatch) -> Result<()> {
        if let Some(b) = &self.live {
            return Err(Error::Ordering(format!("batch of slot {} still live when slot {} arrived", b.slot, batch.slot)));
        }
        self.live = Some(batch);
        self.scheduled = false;
        Ok(())
    }

    pub fn batch(&self) -> Result<&GlobalRequestBatch> {
        self.live.as_ref().ok_or_else(|| Error::Ordering("no live batch (already erased?)".into()))
    }

    pub fn mark_scheduled(&mut self) -> Result<()> {
        self.batch()?;
        self.scheduled = true;
        Ok(())
    }

    pub fn is_scheduled(&self) -> bool {
        self.live.is_some() && self.scheduled
    }

    /// Destroys the slot-`t` batch. Rejected unless the batch was scheduled.
    pub fn erase_batch(&mut self, slot: u64) -> Result<()> {
        match &self.live {
            None => Err(Error::Ordering(format!("no live batch to erase at slot {slot}"))),
            Some(b) if b.slot != slot => Err(Error::Ordering(format!("live batch is from slot {}, not {slot}", b.slot))),
            Some(_) if !self.scheduled => {
                Err(Error::Ordering(format!("batch of slot {slot} erased before its global prediction")))
            }
            Some(_) => {
                self.live = None;
                self.scheduled = false;
                Ok(())
            }
        }
    }

    /// Every per-UE request record the server currently holds.
    pub fn request_records(&self) -> Vec<RequestRecord> {
        self.live
            .iter()
            .flat_map(|b| b.entries.iter().map(|&(ue_id, content)| RequestRecord { ue_id, content, slot: b.slot }))
            .collect()
    }
}
