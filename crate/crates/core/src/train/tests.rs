use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::nn::Params;
use crate::scene::{nearest_neighbors, Scenario};
use crate::simulator::{generate_layout, rollout, LayoutGenParams, RuleParams};

fn four_agent_demo(seed: u64, steps: usize, scenario: Scenario) -> Demonstration {
    let lp = LayoutGenParams {
        n_groups_min: 2,
        n_groups_max: 2,
        group_size_min: 2,
        group_size_max: 2,
        ..LayoutGenParams::default()
    };
    let layout = generate_layout(&lp, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    rollout(&layout, scenario, steps, &RuleParams::for_layout(&lp), seed).unwrap()
}

fn demos(n: u64, steps: usize) -> Vec<Demonstration> {
    let lp = LayoutGenParams::default();
    (0..n)
        .map(|s| {
            let layout = generate_layout(&lp, &mut ChaCha8Rng::seed_from_u64(100 + s)).unwrap();
            rollout(&layout, Scenario::Static, steps, &RuleParams::for_layout(&lp), s).unwrap()
        })
        .collect()
}

fn tiny(variant: Variant, seed: u64) -> TrainConfig {
    let mut c = TrainConfig::new(variant, 6, seed);
    c.model.horizon = 3;
    c.model.encoder_hidden = 8;
    c.model.gate_hidden = 8;
    c.model.policy_hidden = 8;
    c.epochs = 3;
    c.batch_size = 64;
    c.neighbors = 2;
    c
}

#[test]
fn dataset_counts_and_targets() {
    let d = vec![four_agent_demo(1, 600, Scenario::Static)];
    let samples = make_dataset(&d, 15, 4, 100.0).unwrap();
    assert_eq!(samples.len(), 2340);
    let ds = Dataset::build(&d, 15, 12, 100.0).unwrap();
    assert_eq!(ds.len(), 2340);
    for (i, (st, target)) in samples.iter().enumerate() {
        assert_eq!(st.neighbors.len(), 3);
        let s = &ds.samples()[i];
        assert!((15..600).contains(&(s.t as usize)));
        let frame_next = d[0].frame(s.t as usize + 1).unwrap();
        assert_eq!(frame_next.agents[s.agent as usize].action, *target);
    }
    let again = make_dataset(&d, 15, 4, 100.0).unwrap();
    assert_eq!(samples, again);
}

#[test]
fn dataset_neighbors_follow_nearest_rule() {
    let d = demos(1, 40);
    let ds = Dataset::build(&d, 5, 3, 100.0).unwrap();
    for i in (0..ds.len()).step_by(7) {
        let s = &ds.samples()[i];
        let id = d[0].layout.agents[s.agent as usize].id;
        let expected = nearest_neighbors(d[0].frame(s.t as usize).unwrap(), id, 3).unwrap();
        assert_eq!(ds.state(i).neighbor_ids(), expected);
    }
}

#[test]
fn dataset_errors() {
    assert!(Dataset::build(&[], 5, 2, 100.0).is_err());
    let short = vec![four_agent_demo(2, 5, Scenario::Static)];
    assert!(matches!(Dataset::build(&short, 5, 2, 100.0), Err(Error::Config(_))));
    let mixed = vec![four_agent_demo(3, 30, Scenario::Static), four_agent_demo(3, 30, Scenario::Dynamic)];
    assert!(Dataset::build(&mixed, 5, 2, 100.0).is_err());
}

#[test]
fn zero_learning_rate_freezes_parameters() {
    let d = demos(2, 40);
    let mut cfg = tiny(Variant::Mgpi, 5);
    cfg.adam.lr = 0.0;
    let out = behavior_clone(&d, &cfg).unwrap();
    assert_eq!(out.network, MgpiNetwork::init(cfg.model, 5).unwrap());
    let first = out.loss_trace[0].mean_loss;
    for e in &out.loss_trace {
        assert!((e.mean_loss - first).abs() < 1e-12);
    }
}

#[test]
fn training_is_reproducible() {
    let d = demos(2, 40);
    let cfg = tiny(Variant::Socpool, 8);
    let a = behavior_clone(&d, &cfg).unwrap();
    let b = behavior_clone(&d, &cfg).unwrap();
    assert_eq!(a.network.to_checkpoint_json(), b.network.to_checkpoint_json());
    assert_eq!(a.loss_trace, b.loss_trace);
    let c = behavior_clone(&d, &TrainConfig { seed: 9, ..cfg }).unwrap();
    assert_ne!(a.network.flat(), c.network.flat());
    let csv = loss_trace_csv(&a.loss_trace);
    assert_eq!(csv.lines().count(), cfg.epochs + 1);
}

#[test]
fn training_reduces_loss() {
    let d = demos(3, 120);
    let mut cfg = tiny(Variant::Mgpi, 1);
    cfg.epochs = 6;
    cfg.adam.lr = 5e-3;
    let out = behavior_clone(&d, &cfg).unwrap();
    let trace = &out.loss_trace;
    assert!(trace.last().unwrap().mean_loss < trace[0].mean_loss, "{trace:?}");
}

#[test]
fn action_count_mismatch_is_rejected() {
    let d = vec![four_agent_demo(4, 30, Scenario::Dynamic)];
    let cfg = tiny(Variant::Mgpi, 1);
    assert!(matches!(behavior_clone(&d, &cfg), Err(Error::Config(_))));
}

#[test]
fn evaluation_of_untrained_zero_network() {
    let d = demos(1, 30);
    let net = MgpiNetwork::zeros(tiny(Variant::Nso, 0).model).unwrap();
    let r = evaluate(&net, &d, 2).unwrap();
    assert!((r.cross_entropy - 6f64.ln()).abs() < 1e-12);
    assert_eq!(r.samples, d[0].layout.len() * (30 - 3));
    let trace: u64 = (0..6).map(|i| r.confusion[i][i]).sum();
    assert_eq!(r.accuracy, trace as f64 / r.samples as f64);
    // every prediction ties, so argmax picks class 0
    assert!(r.confusion.iter().all(|row| row[1..].iter().all(|&v| v == 0)));
}

#[test]
fn fold_split_by_layout() {
    let mut d = demos(4, 20);
    let [a, b] = split_folds(&d, 3).unwrap();
    assert_eq!((a.len(), b.len()), (2, 2));
    let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
    all.sort_unstable();
    assert_eq!(all, vec![0, 1, 2, 3]);
    assert_eq!(split_folds(&d, 3).unwrap(), [a, b]);
    // a second episode on layout 0 stays with its sibling
    let mut twin = d[0].clone();
    twin.seed = 77;
    d.push(twin);
    let [a, b] = split_folds(&d, 5).unwrap();
    assert!(a.contains(&0) == a.contains(&4) && b.contains(&0) == b.contains(&4));
    assert!(split_folds(&d[..1], 0).is_err());
}

#[test]
fn cross_validation_reports() {
    let d = demos(4, 30);
    let cfg = tiny(Variant::Sso, 2);
    let r = cross_validate(&d, &cfg).unwrap();
    assert_eq!(r.test_sets[0].len() + r.test_sets[1].len(), 4);
    let mean = |x: f64, y: f64| (x + y) / 2.0;
    assert_eq!(r.mean.map, mean(r.folds[0].map, r.folds[1].map));
    assert_eq!(r.mean.accuracy, mean(r.folds[0].accuracy, r.folds[1].accuracy));
    assert_eq!(r.mean.cross_entropy, mean(r.folds[0].cross_entropy, r.folds[1].cross_entropy));
    assert_eq!(r.loss_traces[0].len(), cfg.epochs);
    assert_eq!(cross_validate(&d, &cfg).unwrap(), r);
}

#[test]
fn parallel_evaluation_matches_serial() {
    let d = demos(2, 40);
    let cfg = tiny(Variant::Mgpi, 3);
    let net = MgpiNetwork::init(cfg.model, 3).unwrap();
    let ds = Dataset::build(&d, cfg.model.horizon, 2, cfg.model.position_scale).unwrap();
    let serial = evaluate_dataset(&net, &ds).unwrap();
    for jobs in [2, 3, 1000] {
        assert_eq!(evaluate_dataset_parallel(&net, &ds, jobs).unwrap(), serial);
    }
}
