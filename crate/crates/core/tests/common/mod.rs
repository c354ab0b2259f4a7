//! Shared helpers and independent oracles for the integration tests.
#![allow(dead_code)]

use edgecache::env::{generate_hidden, HiddenUeParams};
use edgecache::rng::MasterSeed;
use edgecache::ExperimentConfig;

/// Zipf pmf over content ids, computed directly from the rank order.
pub fn zipf_by_rank(alpha: f64, by_rank: &[u32]) -> Vec<f64> {
    let n = by_rank.len();
    let w: Vec<f64> = (1..=n).map(|r| (r as f64).powf(-alpha)).collect();
    let z: f64 = w.iter().sum();
    let mut p = vec![0.0; n];
    for (r, &id) in by_rank.iter().enumerate() {
        p[id as usize - 1] = w[r] / z;
    }
    p
}

/// Stationary configuration where each UE sends one request per slot and
/// every request reaches the server.
pub fn stationary_config(seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.set("seed", &seed.to_string()).unwrap();
    cfg.set("stationary", "true").unwrap();
    cfg.set("arrival_rates", "1.0").unwrap();
    cfg.set("ue_capacity", "0").unwrap();
    cfg.validate().unwrap();
    cfg
}

pub struct StaticOracle {
    /// Expected `H_0` of the best fixed server cache.
    pub optimum: f64,
    /// Expected `H_0` of caching the top contents of the mixture popularity.
    pub mixture_top: f64,
}

fn expected_h0(q: &[f64], cached: &[usize], n_ues: usize) -> f64 {
    let missed: f64 = (0..q.len()).filter(|n| !cached.contains(n)).map(|n| q[n]).sum();
    1.0 - missed / n_ues as f64
}

fn top(scores: &[f64], m: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(m);
    idx
}

/// With every UE requesting once per slot, `E[H_0] = 1 - (1/I) Σ_{n∉S} q_n`
/// where `q_n = 1 - Π_i (1 - P^i_n)` is the chance that `n` is requested at
/// all. The best fixed cache holds the top `M_0` contents by `q_n`.
pub fn static_oracle(cfg: &ExperimentConfig) -> StaticOracle {
    let hidden: Vec<HiddenUeParams> = generate_hidden(&cfg.demand_spec(), MasterSeed(cfg.seed)).unwrap();
    let pmfs: Vec<Vec<f64>> = hidden.iter().map(|h| zipf_by_rank(h.alphas[h.alpha_initial], h.permutation.by_rank())).collect();
    let n = cfg.n_contents;
    let i = pmfs.len();
    let q: Vec<f64> = (0..n).map(|c| 1.0 - pmfs.iter().map(|p| 1.0 - p[c]).product::<f64>()).collect();
    let mix: Vec<f64> = (0..n).map(|c| pmfs.iter().map(|p| p[c]).sum::<f64>() / i as f64).collect();
    StaticOracle {
        optimum: expected_h0(&q, &top(&q, cfg.server_capacity), i),
        mixture_top: expected_h0(&q, &top(&mix, cfg.server_capacity), i),
    }
}
