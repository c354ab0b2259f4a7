use edgecache::cache::mean_with_traffic;
use edgecache::harness::{aggregate, parse_csv, predictor_tv_error, run_experiment, sweep, sweep_csv, to_csv, SweepAxis};
use edgecache::{ExperimentConfig, Policy};

fn quick(policy: &str, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    for (k, v) in [
        ("policy", policy),
        ("episodes", "2"),
        ("episode_slots", "50"),
        ("hidden", "16"),
        ("predictor_hidden", "16"),
        ("fl_rounds", "2"),
        ("fl_slots", "40"),
        ("fl_epochs", "1"),
        ("test_slots", "256"),
        ("seed", &seed.to_string()),
    ] {
        cfg.set(k, v).unwrap();
    }
    cfg.validate().unwrap();
    cfg
}

fn baseline_mean(policy: &str, m0: usize, seeds: &[u64]) -> f64 {
    let v: Vec<f64> = seeds
        .iter()
        .map(|&s| {
            let mut c = quick(policy, s);
            c.server_capacity = m0;
            c.test_slots = 1024;
            run_experiment(&c).unwrap().summary.mean_h0.unwrap()
        })
        .collect();
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn same_config_gives_identical_csv() {
    for p in ["p2d3pg", "lru", "random"] {
        let a = to_csv(&run_experiment(&quick(p, 11)).unwrap().rows);
        let b = to_csv(&run_experiment(&quick(p, 11)).unwrap().rows);
        assert_eq!(a, b, "{p}");
    }
}

#[test]
fn full_server_cache_hits_everything() {
    for p in Policy::ALL {
        let mut c = quick(p.name(), 1);
        c.server_capacity = c.n_contents;
        let out = run_experiment(&c).unwrap();
        assert_eq!(out.summary.mean_h0, Some(1.0), "{p}");
        assert!(out.rows.iter().all(|r| r.h0.is_none_or(|h| h == 1.0)));
    }
}

#[test]
fn csv_round_trips_and_matches_summary() {
    let out = run_experiment(&quick("lfu", 2)).unwrap();
    let text = to_csv(&out.rows);
    let back = parse_csv(&text).unwrap();
    assert_eq!(back, out.rows);
    let h0: Vec<Option<f64>> = back.iter().map(|r| r.h0).collect();
    assert!((mean_with_traffic(&h0).unwrap() - out.summary.mean_h0.unwrap()).abs() < 1e-12);
}

#[test]
fn csv_shape_for_two_slots_and_one_ue() {
    let mut c = quick("fifo", 0);
    c.set("n_ues", "1").unwrap();
    c.set("ue_capacity", "1").unwrap();
    c.test_slots = 2;
    let text = to_csv(&run_experiment(&c).unwrap().rows);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[1].split(',').nth(4) == Some(""));
    assert!(lines[2].split(',').nth(4) == Some("0"));
}

#[test]
fn no_traffic_slots_render_an_empty_h0() {
    let mut c = quick("lru", 4);
    c.set("arrival_rates", "0.05").unwrap();
    c.set("ue_capacity", "0").unwrap();
    let out = run_experiment(&c).unwrap();
    assert!(out.rows.iter().any(|r| r.h0.is_none()));
    let text = to_csv(&out.rows);
    let server_lines = text.lines().skip(1).filter(|l| l.split(',').nth(4) == Some(""));
    for (row, line) in out.rows.iter().zip(server_lines) {
        let field = line.split(',').nth(3).unwrap();
        assert_eq!(field.is_empty(), row.h0.is_none(), "{line}");
    }
}

#[test]
fn policy_does_not_change_the_request_trace() {
    let reference = run_experiment(&quick("lru", 5)).unwrap().requests;
    for p in ["lfu", "fifo", "random", "p2d3pg"] {
        assert_eq!(run_experiment(&quick(p, 5)).unwrap().requests, reference, "{p}");
    }
}

#[test]
fn random_is_below_lru_over_five_seeds() {
    let seeds = [0, 1, 2, 3, 4];
    let lru = baseline_mean("lru", 6, &seeds);
    let random = baseline_mean("random", 6, &seeds);
    assert!(random < lru, "RANDOM {random} vs LRU {lru}");
}

#[test]
fn lru_hit_rate_grows_with_server_capacity() {
    let seeds = [0, 1, 2, 3, 4];
    let means: Vec<f64> = [6, 9, 12, 18, 24].iter().map(|&m| baseline_mean("lru", m, &seeds)).collect();
    for w in means.windows(2) {
        assert!(w[1] >= w[0] - 0.02, "{means:?}");
    }
    assert_eq!(*means.last().unwrap(), 1.0);
}

#[test]
fn sweep_endpoint_and_parallel_equivalence() {
    let t = quick("lru", 0);
    let values = [6, 24];
    let seq = sweep(&t, SweepAxis::ServerCapacity, &values, &Policy::ALL, &[0, 1], false).unwrap();
    let par = sweep(&t, SweepAxis::ServerCapacity, &values, &Policy::ALL, &[0, 1], true).unwrap();
    assert_eq!(sweep_csv(SweepAxis::ServerCapacity, &seq), sweep_csv(SweepAxis::ServerCapacity, &par));
    for (a, b) in seq.iter().zip(&par) {
        assert_eq!(to_csv(&a.output.rows), to_csv(&b.output.rows));
    }
    for p in aggregate(&seq).iter().filter(|p| p.value == 24) {
        assert_eq!(p.mean_h0, 1.0, "{}", p.policy);
    }
}

#[test]
fn longer_history_window_predicts_better() {
    let tv = |h: usize| {
        let mut c = quick("p2d3pg", 3);
        c.set("stationary", "true").unwrap();
        c.set("predictor_hidden", "64").unwrap();
        c.set("fl_rounds", "5").unwrap();
        c.set("fl_slots", "200").unwrap();
        c.set("fl_epochs", "3").unwrap();
        c.window = h;
        predictor_tv_error(&c, 400).unwrap()
    };
    let (short, long) = (tv(1), tv(10));
    assert!(short > long, "TV at H=1 {short} vs H=10 {long}");
}

#[test]
fn unknown_keys_are_rejected() {
    let err = ExperimentConfig::parse("seed = 1\nno_such_key = 3\n").unwrap_err();
    assert_eq!(err.kind(), "config");
}
