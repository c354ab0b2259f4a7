//! Federated popularity prediction.
//!
//! Every UE trains a next-request classifier on its own window history. Only
//! parameters leave the device: the server averages the uploads into the
//! global model and broadcasts it back. The same architecture, fed with an
//! encoding of the current-slot batch, gives the server's global prediction.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::env::{ContentId, GlobalRequestBatch, HistoryWindow, PopularityVector, ServerInbox};
use crate::error::{Error, Result};
use crate::nn::{Activation, AdamConfig, AdamState, Matrix, ModelParams};
use crate::rng::Stream;

/// One-hot window encoding: `H + 1` blocks of `N + 1` indicators, the last
/// indicator of a block meaning "no request".
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEncoding(Vec<f64>);

impl HistoryEncoding {
    pub fn encode(window: &[Option<ContentId>], n_contents: usize) -> Self {
        let w = n_contents + 1;
        let mut v = vec![0.0; window.len() * w];
        for (s, r) in window.iter().enumerate() {
            let k = match r {
                Some(c) => *c as usize - 1,
                None => n_contents,
            };
            v[s * w + k] = 1.0;
        }
        Self(v)
    }

    pub fn from_window(h: &HistoryWindow, n_contents: usize) -> Self {
        Self::encode(&h.padded(), n_contents)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Normalized content counts of the current batch, replicated into every
/// block of the history input shape. An empty batch sets the no-request
/// channel instead.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchEncoding(Vec<f64>);

impl BatchEncoding {
    pub fn encode(batch: &GlobalRequestBatch, n_contents: usize, window: usize) -> Self {
        let w = n_contents + 1;
        let mut block = vec![0.0; w];
        if batch.is_empty() {
            block[n_contents] = 1.0;
        } else {
            let k = 1.0 / batch.len() as f64;
            for &(_, c) in &batch.entries {
                block[c as usize - 1] += k;
            }
        }
        Self(block.repeat(window + 1))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn predictor_dims(n_contents: usize, window: usize, hidden: usize) -> Vec<usize> {
    vec![(window + 1) * (n_contents + 1), hidden, hidden, n_contents]
}

pub fn new_predictor(n_contents: usize, window: usize, hidden: usize, rng: &mut Stream) -> Result<ModelParams> {
    ModelParams::xavier(&predictor_dims(n_contents, window, hidden), Activation::Tanh, Activation::Softmax, rng)
}

fn to_popularity(p: Vec<f64>) -> Result<PopularityVector> {
    // Softmax output sums to one up to rounding; renormalize to be exact.
    PopularityVector::from_weights(&p)
}

pub fn predict_local(theta: &ModelParams, history: &HistoryEncoding) -> Result<PopularityVector> {
    to_popularity(theta.predict_one(history.as_slice())?)
}

/// Global prediction from the live batch. Marks the batch as scheduled so it
/// may be erased; fails once the batch is gone.
pub fn predict_global(theta: &ModelParams, inbox: &mut ServerInbox, n_contents: usize, window: usize) -> Result<PopularityVector> {
    let enc = BatchEncoding::encode(inbox.batch()?, n_contents, window);
    let p = to_popularity(theta.predict_one(enc.as_slice())?)?;
    inbox.mark_scheduled()?;
    Ok(p)
}

/// UE-private training pairs: (encoded window ending at t, request at t+1).
#[derive(Debug, Clone)]
pub struct LocalDataset {
    samples: VecDeque<(Vec<f64>, ContentId)>,
    cap: usize,
}

impl LocalDataset {
    pub fn new(cap: usize) -> Self {
        Self { samples: VecDeque::with_capacity(cap.min(1 << 16)), cap: cap.max(1) }
    }

    pub fn push(&mut self, window: HistoryEncoding, next: ContentId) {
        if self.samples.len() == self.cap {
            self.samples.pop_front();
        }
        self.samples.push_back((window.0, next));
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn batch(&self, idx: &[usize], n_contents: usize) -> (Matrix, Vec<ContentId>) {
        let width = self.samples[0].0.len();
        let mut data = Vec::with_capacity(idx.len() * width);
        let mut targets = Vec::with_capacity(idx.len());
        for &i in idx {
            data.extend_from_slice(&self.samples[i].0);
            targets.push(self.samples[i].1);
        }
        debug_assert!(targets.iter().all(|&t| (t as usize) <= n_contents));
        (Matrix::from_vec(idx.len(), width, data).unwrap(), targets)
    }
}

/// Mean cross-entropy of softmax outputs against class targets, with `dL/dP`.
pub fn cross_entropy(probs: &Matrix, targets: &[ContentId]) -> (f64, Matrix) {
    let b = probs.rows() as f64;
    let mut grad = Matrix::zeros(probs.rows(), probs.cols());
    let mut loss = 0.0;
    for (r, &t) in targets.iter().enumerate() {
        let k = t as usize - 1;
        let p = probs.row(r)[k].max(1e-300);
        loss -= p.ln();
        grad.row_mut(r)[k] = -1.0 / (p * b);
    }
    (loss / b, grad)
}

pub fn dataset_loss(theta: &ModelParams, data: &LocalDataset, n_contents: usize) -> Result<Option<f64>> {
    if data.is_empty() {
        return Ok(None);
    }
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut total = 0.0;
    for chunk in idx.chunks(256) {
        let (x, y) = data.batch(chunk, n_contents);
        let p = theta.predict(&x)?;
        total += cross_entropy(&p, &y).0 * chunk.len() as f64;
    }
    Ok(Some(total / data.len() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundReport {
    pub loss_before: f64,
    pub loss_after: f64,
    pub steps: usize,
}

/// `epochs` shuffled passes of minibatch Adam over the UE's own dataset.
/// An empty dataset skips the round.
pub fn local_train_round(
    theta: &mut ModelParams,
    data: &LocalDataset,
    epochs: usize,
    batch_size: usize,
    adam: &mut AdamState,
    rng: &mut Stream,
    n_contents: usize,
) -> Result<Option<RoundReport>> {
    if data.is_empty() {
        log::warn!("local training round skipped: empty dataset");
        return Ok(None);
    }
    let loss_before = dataset_loss(theta, data, n_contents)?.unwrap();
    let mut idx: Vec<usize> = (0..data.len()).collect();
    let mut steps = 0;
    for _ in 0..epochs {
        idx.shuffle(rng);
        for chunk in idx.chunks(batch_size.max(1)) {
            let (x, y) = data.batch(chunk, n_contents);
            let (p, tape) = theta.forward(&x)?;
            let (_, dp) = cross_entropy(&p, &y);
            let (g, _) = theta.backward(&tape, &dp)?;
            adam.step(theta, &g)?;
            steps += 1;
        }
    }
    let loss_after = dataset_loss(theta, data, n_contents)?.unwrap();
    Ok(Some(RoundReport { loss_before, loss_after, steps }))
}

/// `Θ^G = (1/I) Σ ω_i Θ^i`, elementwise.
///
/// Per coordinate the weighted terms are summed in sorted order, so the
/// result does not depend on the order the uploads arrived in.
pub fn fedavg(uploads: &[&ModelParams], weights: &[f64]) -> Result<ModelParams> {
    let first = *uploads.first().ok_or_else(|| Error::Shape("no uploads to aggregate".into()))?;
    if weights.len() != uploads.len() {
        return Err(Error::Shape(format!("{} weights for {} uploads", weights.len(), uploads.len())));
    }
    if uploads.iter().any(|u| !u.same_architecture(first)) {
        return Err(Error::Shape("uploads have different architectures".into()));
    }
    let inv = 1.0 / uploads.len() as f64;
    let mut out = first.zeros_like();
    let mut terms = vec![0.0; uploads.len()];
    for k in 0..out.layers().len() {
        let n_w = out.layers()[k].weights.len();
        let n_b = out.layers()[k].bias.len();
        for j in 0..n_w + n_b {
            for (slot, (u, w)) in terms.iter_mut().zip(uploads.iter().zip(weights)) {
                let l = &u.layers()[k];
                let v = if j < n_w { l.weights[j] } else { l.bias[j - n_w] };
                *slot = w * v;
            }
            terms.sort_by(f64::total_cmp);
            let avg = terms.iter().sum::<f64>() * inv;
            let l = &mut out.layers_mut()[k];
            if j < n_w {
                l.weights[j] = avg;
            } else {
                l.bias[j - n_w] = avg;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlRoundRecord {
    pub round: u64,
    pub uploads: Vec<String>,
    pub broadcast: String,
}

/// Per-round parameter digests; contains nothing but digests.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FlRoundLog {
    pub records: Vec<FlRoundRecord>,
}

impl FlRoundLog {
    /// Tab-separated lines: round, comma-joined upload digests, broadcast digest.
    pub fn to_lines(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            let _ = writeln!(s, "{}\t{}\t{}", r.round, r.uploads.join(","), r.broadcast);
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (ln, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::Format(format!("line {}: expected 3 fields, got {}", ln + 1, fields.len())));
            }
            let round = fields[0].parse().map_err(|_| Error::Format(format!("line {}: bad round index", ln + 1)))?;
            let uploads = if fields[1].is_empty() { Vec::new() } else { fields[1].split(',').map(str::to_string).collect() };
            records.push(FlRoundRecord { round, uploads, broadcast: fields[2].to_string() });
        }
        Ok(Self { records })
    }

    /// Every field must be a round index or a 64-digit hex digest. Returns a
    /// description of each offending field.
    pub fn audit(&self) -> Vec<String> {
        let is_digest = |s: &str| s.len() == 64 && s.bytes().all(|b| b.is_ascii_hexdigit());
        let mut bad = Vec::new();
        for r in &self.records {
            for d in r.uploads.iter().chain(std::iter::once(&r.broadcast)) {
                if !is_digest(d) {
                    bad.push(format!("round {}: field {d:?} is not a parameter digest", r.round));
                }
            }
        }
        bad
    }
}

/// A UE's side of federated prediction: its predictor and its private data.
#[derive(Debug, Clone)]
pub struct LocalLearner {
    pub params: ModelParams,
    adam: AdamState,
    dataset: LocalDataset,
    rng: Stream,
    prev_window: Option<HistoryEncoding>,
}

impl LocalLearner {
    pub fn new(params: ModelParams, adam: AdamConfig, dataset_cap: usize, rng: Stream) -> Self {
        let adam = AdamState::new(&params, adam);
        Self { params, adam, dataset: LocalDataset::new(dataset_cap), rng, prev_window: None }
    }

    pub fn dataset(&self) -> &LocalDataset {
        &self.dataset
    }

    /// Records the latest outcome: the previous window gets this request as
    /// its target. `window` must already include the outcome.
    pub fn observe(&mut self, window: &HistoryWindow, outcome: Option<ContentId>, n_contents: usize) {
        if let (Some(prev), Some(c)) = (self.prev_window.take(), outcome) {
            self.dataset.push(prev, c);
        }
        self.prev_window = Some(HistoryEncoding::from_window(window, n_contents));
    }

    pub fn train(&mut self, epochs: usize, batch_size: usize, n_contents: usize) -> Result<Option<RoundReport>> {
        local_train_round(&mut self.params, &self.dataset, epochs, batch_size, &mut self.adam, &mut self.rng, n_contents)
    }

    /// Replaces the local parameters with a broadcast copy. Optimizer moments
    /// are kept.
    pub fn receive(&mut self, global: &ModelParams) {
        self.params = global.clone();
    }
}

/// Runs one round of local training on every UE. The parallel and sequential
/// schedules give identical results since each UE only touches its own state.
pub fn train_all(learners: &mut [LocalLearner], epochs: usize, batch_size: usize, n_contents: usize, parallel: bool) -> Result<Vec<Option<RoundReport>>> {
    if parallel {
        learners.par_iter_mut().map(|l| l.train(epochs, batch_size, n_contents)).collect()
    } else {
        learners.iter_mut().map(|l| l.train(epochs, batch_size, n_contents)).collect()
    }
}

/// Replaces every UE predictor with `Θ^G` and logs the round.
pub fn broadcast(theta_g: &ModelParams, learners: &mut [LocalLearner], uploads: Vec<String>, log: &mut FlRoundLog) {
    for l in learners.iter_mut() {
        l.receive(theta_g);
    }
    let round = log.records.len() as u64;
    log.records.push(FlRoundRecord { round, uploads, broadcast: theta_g.digest() });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::MasterSeed;

    #[test]
    fn history_encoding_is_one_hot_per_slot() {
        let e = HistoryEncoding::encode(&[Some(2), None, Some(3)], 3);
        assert_eq!(e.as_slice().len(), 12);
        for blk in e.as_slice().chunks(4) {
            assert_eq!(blk.iter().sum::<f64>(), 1.0);
        }
        assert_eq!(e.as_slice()[1], 1.0);
        assert_eq!(e.as_slice()[7], 1.0);
        assert_eq!(e.as_slice()[10], 1.0);
    }

    #[test]
    fn batch_encoding_blocks_sum_to_one() {
        let b = GlobalRequestBatch { slot: 0, entries: vec![(0, 1), (1, 1), (2, 3)] };
        let e = BatchEncoding::encode(&b, 3, 2);
        assert_eq!(e.as_slice().len(), 12);
        for blk in e.as_slice().chunks(4) {
            assert!((blk.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            assert_eq!(blk[3], 0.0);
            assert!((blk[0] - 2.0 / 3.0).abs() < 1e-15);
        }
    }

    fn zero_net(n: usize, h: usize) -> ModelParams {
        let mut rng = MasterSeed(0).stream("z");
        let mut p = new_predictor(n, h, 8, &mut rng).unwrap();
        p.scale(0.0);
        p
    }

    #[test]
    fn zero_weights_predict_uniform() {
        let p = zero_net(5, 2);
        let out = predict_local(&p, &HistoryEncoding::encode(&[Some(1), Some(2), None], 5)).unwrap();
        for x in out.as_slice() {
            assert!((x - 0.2).abs() < 1e-15);
        }
        let mut inbox = ServerInbox::new();
        inbox.receive(GlobalRequestBatch { slot: 0, entries: vec![(0, 4)] }).unwrap();
        let g = predict_global(&p, &mut inbox, 5, 2).unwrap();
        assert!((g.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((g.as_slice()[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn global_prediction_after_erase_is_rejected() {
        let p = zero_net(5, 2);
        let mut inbox = ServerInbox::new();
        inbox.receive(GlobalRequestBatch { slot: 1, entries: vec![(0, 4)] }).unwrap();
        predict_global(&p, &mut inbox, 5, 2).unwrap();
        inbox.erase_batch(1).unwrap();
        assert!(matches!(predict_global(&p, &mut inbox, 5, 2), Err(Error::Ordering(_))));
    }

    #[test]
    fn empty_dataset_skips() {
        let mut p = zero_net(4, 1);
        let mut adam = AdamState::new(&p, AdamConfig::default());
        let mut rng = MasterSeed(0).stream("r");
        assert_eq!(local_train_round(&mut p, &LocalDataset::new(10), 5, 8, &mut adam, &mut rng, 4).unwrap(), None);
    }

    #[test]
    fn overfits_single_example() {
        let mut rng = MasterSeed(1).stream("p");
        let mut p = new_predictor(6, 2, 16, &mut rng).unwrap();
        let mut data = LocalDataset::new(10);
        let w = HistoryEncoding::encode(&[Some(1), None, Some(4)], 6);
        data.push(w.clone(), 5);
        let mut adam = AdamState::new(&p, AdamConfig::with_lr(1e-2));
        local_train_round(&mut p, &data, 100, 1, &mut adam, &mut rng, 6).unwrap();
        assert!(predict_local(&p, &w).unwrap().prob(5) >= 0.9);
    }

    #[test]
    fn identical_ues_train_identically() {
        let mut data = LocalDataset::new(100);
        for k in 0..40u32 {
            data.push(HistoryEncoding::encode(&[Some(k % 3 + 1), None], 4), (k * 7) % 4 + 1);
        }
        let mut rng = MasterSeed(2).stream("init");
        let init = new_predictor(4, 1, 8, &mut rng).unwrap();
        let run = || {
            let mut p = init.clone();
            let mut adam = AdamState::new(&p, AdamConfig::with_lr(1e-3));
            let mut r = MasterSeed(3).stream("shuffle");
            local_train_round(&mut p, &data, 3, 8, &mut adam, &mut r, 4).unwrap();
            p
        };
        assert_eq!(run(), run());
    }

    fn scalar(v: f64) -> ModelParams {
        let l = crate::nn::Layer { n_in: 1, n_out: 1, weights: vec![v], bias: vec![0.0], activation: Activation::Linear };
        ModelParams::from_layers(vec![l]).unwrap()
    }

    #[test]
    fn fedavg_examples() {
        let a = scalar(0.0);
        let b = scalar(2.0);
        assert_eq!(fedavg(&[&a, &b], &[1.0, 1.0]).unwrap().layers()[0].weights[0], 1.0);
        let c = scalar(3.25);
        assert_eq!(fedavg(&[&c, &c, &c], &[1.0; 3]).unwrap(), c);
        let a = scalar(0.7);
        assert_eq!(fedavg(&[&a, &b], &[2.0, 0.0]).unwrap().layers()[0].weights[0], 0.7);
    }

    #[test]
    fn fedavg_rejects_mismatch() {
        let a = scalar(0.0);
        let mut rng = MasterSeed(0).stream("x");
        let other = new_predictor(3, 1, 4, &mut rng).unwrap();
        assert!(fedavg(&[&a, &other], &[1.0, 1.0]).is_err());
        assert!(fedavg(&[&a, &a], &[1.0]).is_err());
        assert!(fedavg(&[], &[]).is_err());
    }

    #[test]
    fn broadcast_clones_and_logs() {
        let mut rng = MasterSeed(4).stream("b");
        let mk = |rng: &mut Stream| LocalLearner::new(new_predictor(4, 1, 8, rng).unwrap(), AdamConfig::default(), 10, MasterSeed(9).stream("s"));
        let mut ues = vec![mk(&mut rng), mk(&mut rng)];
        let g = new_predictor(4, 1, 8, &mut rng).unwrap();
        let mut log = FlRoundLog::default();
        let uploads = ues.iter().map(|u| u.params.digest()).collect();
        broadcast(&g, &mut ues, uploads, &mut log);
        assert_eq!(log.records.len(), 1);
        let x = HistoryEncoding::encode(&[Some(2), Some(1)], 4);
        assert_eq!(predict_local(&ues[0].params, &x).unwrap(), predict_local(&ues[1].params, &x).unwrap());
        assert!(log.audit().is_empty());
        let parsed = FlRoundLog::parse(&log.to_lines()).unwrap();
        assert_eq!(parsed, log);
    }

    #[test]
    fn round_log_audit_flags_non_digest_fields() {
        let log = FlRoundLog::parse("0\tabc,17\tdeadbeef\n").unwrap();
        assert_eq!(log.audit().len(), 3);
    }
}
