mod common;

use common::{oracle_achievable, oracle_points};
use gsa_core::achievable::{achievable_dof, model_points};
use gsa_core::channel::ScenarioConfig;
use gsa_core::route::RouteKind;
use gsa_core::sim::{run_batch, run_once, run_with, SimOptions, Summary};
use gsa_core::{make_pattern, Model, Pattern, SystemConfig, TolerancePolicy};

fn y4(n: usize) -> (SystemConfig, gsa_core::DataSwitchMatrix) {
    (SystemConfig::new(4, 3, n).unwrap(), make_pattern(Pattern::Y, 4, 1, None).unwrap())
}

#[test]
fn deactivation_fallback_matches_achievable_dof() {
    let (cfg, d) = y4(5);
    let r = run_once(&cfg, &d, Some(Model::Y), 1, 0.0, &TolerancePolicy::default());
    assert!(r.error.is_none(), "{:?}", r.error);
    assert!(r.fallback);
    assert!(!r.expected_feasible);
    let pts = model_points(Model::Y, 4).unwrap();
    let target = achievable_dof(&pts, 3.0, 5.0);
    assert_eq!(target, oracle_achievable(&oracle_points("y", 4), 5.0 / 3.0) * 3.0);
    assert_eq!(r.dof_per_channel_use, target.floor());
}

#[test]
fn delivered_streams_grow_with_relay_antennas() {
    let tol = TolerancePolicy::default();
    let mut last = 0.0;
    for n in 2..=10 {
        let (cfg, d) = y4(n);
        let r = run_once(&cfg, &d, Some(Model::Y), 3, 0.0, &tol);
        assert!(r.dof_per_channel_use >= last, "N={n}: {} < {last}", r.dof_per_channel_use);
        let bound = achievable_dof(&model_points(Model::Y, 4).unwrap(), 3.0, n as f64);
        assert!(r.dof_per_channel_use <= bound + 1e-9);
        last = r.dof_per_channel_use;
    }
    assert_eq!(last, 12.0);
}

#[test]
fn corner_configurations_deliver_their_dof() {
    let tol = TolerancePolicy::default();
    let cases = [
        (Pattern::Y, Model::Y, 5, 4, 13, 1, 20.0),
        (Pattern::Pairwise, Model::Pairwise, 6, 2, 10, 2, 12.0),
        (Pattern::X, Model::X, 4, 2, 5, 1, 8.0),
        (Pattern::Pairwise, Model::Pairwise, 6, 3, 8, 2, 12.0),
    ];
    for (pattern, model, k, m, n, streams, expected) in cases {
        let cfg = SystemConfig::new(k, m, n).unwrap();
        let d = make_pattern(pattern, k, streams, None).unwrap();
        let r = run_once(&cfg, &d, Some(model), 21, 0.0, &tol);
        let ach = achievable_dof(&model_points(model, k).unwrap(), m as f64, n as f64);
        assert_eq!(r.dof_per_channel_use, expected, "{model} K={k} M={m} N={n}: {:?}", r.error);
        assert_eq!(expected, ach.floor());
        assert!(r.dof_per_channel_use <= ach + 1e-9);
    }
}

#[test]
fn halving_noise_amplitude_halves_error() {
    let (cfg, d) = y4(7);
    let tol = TolerancePolicy::default();
    let median = |var: f64| {
        let errs: Vec<f64> = (0..30).map(|s| run_once(&cfg, &d, Some(Model::Y), s, var, &tol).relay_error).collect();
        Summary::of(&errs).unwrap().median
    };
    let ratio = median(4e-6) / median(1e-6);
    assert!((ratio - 2.0).abs() <= 0.6, "{ratio}");
}

#[test]
fn batches_are_deterministic_and_flag_failures() {
    let (cfg, d) = y4(7);
    let opts = SimOptions::default();
    let a = run_batch(&cfg, &d, Some(Model::Y), &[5, 6, 7], &opts).unwrap();
    let b = run_batch(&cfg, &d, Some(Model::Y), &[5, 6, 7], &opts).unwrap();
    assert_eq!(a, b);
    assert!(a.unexpected_failures().is_empty());

    let (cfg, d) = y4(6);
    let forced = SimOptions {
        route: Some(RouteKind::Generic),
        ..SimOptions::default()
    };
    let c = run_batch(&cfg, &d, Some(Model::Y), &[1, 2], &forced).unwrap();
    assert_eq!(c.failed_seeds, vec![1, 2]);
    assert!(c.runs.iter().all(|r| !r.expected_feasible));
    let r = run_with(&cfg, &d, Some(Model::Y), 1, &forced);
    assert!(r.error.as_deref().unwrap().contains("null space"));
}

#[test]
fn lcluster_scenario_from_json() {
    let text = r#"{"K": 6, "M": 2, "N": 9, "pattern": "l-cluster", "per_pair_streams": 1, "L": 2, "seed": 4}"#;
    let sc = ScenarioConfig::from_json(text).unwrap();
    let (cfg, d) = sc.resolve().unwrap();
    // clusters of 3: generic needs N >= 4M + 1 = 9
    let r = run_once(&cfg, &d, None, sc.seed.unwrap(), 0.0, &TolerancePolicy::default());
    assert_eq!(r.streams_delivered, 12, "{:?}", r.error);
    assert!(ScenarioConfig::from_json(r#"{"K": 4, "M": 2, "N": 5}"#).unwrap().resolve().is_err());
}
