use std::collections::BTreeSet;

use edgecache::audit::Message;
use edgecache::harness::run_experiment;
use edgecache::ExperimentConfig;

fn small_config(policy: &str) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    for (k, v) in [
        ("policy", policy),
        ("n_contents", "10"),
        ("n_ues", "3"),
        ("server_capacity", "4"),
        ("ue_capacity", "1"),
        ("window", "3"),
        ("episodes", "3"),
        ("episode_slots", "40"),
        ("batch_size", "8"),
        ("hidden", "8"),
        ("predictor_hidden", "8"),
        ("fl_rounds", "2"),
        ("fl_slots", "20"),
        ("fl_epochs", "1"),
        ("warmup_slots", "16"),
        ("test_slots", "64"),
        ("keep_messages", "true"),
    ] {
        cfg.set(k, v).unwrap();
    }
    cfg.validate().unwrap();
    cfg
}

/// Production code of the learning and policy modules, without unit tests.
fn production_source(src: &str) -> &str {
    src.split("#[cfg(test)]").next().unwrap()
}

#[test]
fn learners_never_touch_hidden_environment_state() {
    let sources = [
        ("ddpg.rs", include_str!("../src/ddpg.rs")),
        ("fl.rs", include_str!("../src/fl.rs")),
        ("baselines.rs", include_str!("../src/baselines.rs")),
        ("sim.rs", include_str!("../src/sim.rs")),
    ];
    for (name, src) in sources {
        let code = production_source(src);
        for forbidden in ["oracle", "Oracle", "HiddenUeParams", "generate_hidden", "alpha_matrix", "arrival_matrix"] {
            assert!(!code.contains(forbidden), "{name} references {forbidden}");
        }
    }
}

#[test]
fn training_run_sends_only_allowed_messages() {
    let out = run_experiment(&small_config("p2d3pg")).unwrap();
    assert!(out.audit.is_clean(), "{:?}", out.audit.violations);
    assert!(out.audit.slots_checked > 0);
    assert!(out.audit.param_uploads > 0 && out.audit.param_broadcasts > 0 && out.audit.actor_broadcasts > 0);
    let mut current_slot = None;
    for m in &out.messages {
        match m {
            Message::ParamUpload { digest, .. } | Message::ParamBroadcast { digest, .. } | Message::ActorBroadcast { digest } => {
                assert_eq!(digest.len(), 64);
            }
            Message::RequestUpload { slot, .. } => current_slot = Some(*slot),
            Message::ContentDelivery { slot, .. } => assert_eq!(Some(*slot), current_slot),
        }
    }
}

#[test]
fn upward_traffic_is_parameters_or_current_batches() {
    let out = run_experiment(&small_config("p2d3pg")).unwrap();
    let kinds: BTreeSet<&str> = out
        .messages
        .iter()
        .filter(|m| m.is_upward())
        .map(|m| match m {
            Message::ParamUpload { .. } => "param",
            Message::RequestUpload { .. } => "request",
            _ => "other",
        })
        .collect();
    assert_eq!(kinds, BTreeSet::from(["param", "request"]));
}

#[test]
fn baseline_runs_are_audited_too() {
    for p in ["lru", "lfu", "fifo", "random"] {
        let out = run_experiment(&small_config(p)).unwrap();
        assert!(out.audit.is_clean(), "{p}: {:?}", out.audit.violations);
        assert_eq!(out.audit.param_uploads, 0);
    }
}
