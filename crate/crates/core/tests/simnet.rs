//! Simulator invariants on small configurations.

use edgesel::aggregator::{self, AnnParams};
use edgesel::dataset::{Dataset, FeatureVector};
use edgesel::seed;
use edgesel::simnet::{self, Destination, SimConfig, StreamSource, SynthSettings, Variant};
use edgesel::stream::NodeState;
use rand_distr::{Distribution, StandardNormal};

fn small() -> SimConfig {
    SimConfig {
        m: 6,
        arrivals: 300,
        warmup: 150,
        window_w: 25,
        min_history: 100,
        ..SimConfig::default()
    }
}

fn fusion() -> aggregator::AnnWeights {
    aggregator::train_default(&AnnParams::default()).unwrap().weights
}

#[test]
fn every_arrival_is_stored_once() {
    let cfg = small();
    let ann = fusion();
    let scored = simnet::bootstrap_scored(&cfg, &ann).unwrap();
    let nodes = scored.with_selection(&ann, &cfg.cell_pipeline()).unwrap();
    let regime = scored.scenario.warmup_corpus().unwrap();
    let entries = simnet::entry_sequence(&cfg);
    for variant in [Variant::Os, Variant::Bns, Variant::Nns] {
        let run = simnet::run_variant(
            nodes.clone(),
            &regime,
            &scored.scenario.arrivals,
            &entries,
            variant,
            &cfg,
            &ann,
            &cfg.cell_pipeline(),
        )
        .unwrap();
        let stored: usize = run.nodes.iter().map(|n| n.dataset.len()).sum();
        assert_eq!(stored + run.cloud_count, regime.len() + cfg.arrivals, "{variant:?}");
        assert_eq!(run.n_local + run.n_peer + run.n_cloud, cfg.arrivals);
        assert_eq!(run.placements.len(), cfg.arrivals);
        if variant == Variant::Os {
            assert_eq!(run.n_local, cfg.arrivals);
            assert!(run.latencies_us.is_empty());
        } else {
            assert_eq!(run.latencies_us.len(), cfg.arrivals);
        }
    }
}

#[test]
fn lone_node_keeps_everything() {
    let mut rng = seed::rng(3);
    let mut d = Dataset::with_dim(3);
    for _ in 0..40 {
        let x = (0..3)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect::<Vec<f64>>();
        d.push(FeatureVector::labeled(x, 0)).unwrap();
    }
    let ann = fusion();
    let cfg = small();
    let node = NodeState::build(0, d.clone(), &[], 10, Vec::new(), &ann, &cfg.cell_pipeline()).unwrap();
    let nodes = vec![node];
    for v in d.vectors() {
        for variant in [Variant::Bns, Variant::Nns] {
            let (decision, dest) = simnet::route(&nodes, v, 0, variant, 0.9).unwrap();
            assert_eq!(dest, Destination::Node(0));
            assert_eq!(decision.posterior, vec![1.0]);
        }
    }
}

#[test]
fn separated_clusters_are_placed_correctly() {
    // absorption is switched off: it moves a whole window, foreign
    // arrivals included, onto the entry node
    let cfg = SimConfig {
        n_nodes: 2,
        min_history: usize::MAX,
        source: StreamSource::Synthetic(SynthSettings {
            separation: 8.0,
            ..SynthSettings::default()
        }),
        ..small()
    };
    let report = simnet::run_experiment(&cfg).unwrap();
    assert_eq!(report.novelty_events, 0);
    assert!(report.delta_wcd >= 95.0, "{}", report.summary_line());
    assert!(report.delta_cd >= 95.0, "{}", report.summary_line());
}

#[test]
fn full_subset_matches_all_features() {
    let cfg = SimConfig { w: 1.0, ..small() };
    let report = simnet::run_experiment(&cfg).unwrap();
    assert_eq!(report.delta_wcd, report.delta_cd);
    assert_eq!(report.sigma_nns, report.sigma_bns);
    assert!(report.selected.iter().all(|s| s.len() == cfg.m));
}

fn without_tau(row: &str) -> String {
    let mut cols: Vec<&str> = row.split(',').collect();
    cols.remove(7);
    cols.join(",")
}

#[test]
fn reports_are_reproducible() {
    let cfg = small();
    let a = simnet::run_grid(&cfg, &[4, 6], &[0.5, 1.0]).unwrap();
    let b = simnet::run_grid(&cfg, &[4, 6], &[0.5, 1.0]).unwrap();
    assert_eq!(a.len(), 4);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(without_tau(&x.csv_row()), without_tau(&y.csv_row()));
        assert_eq!(x.selected, y.selected);
    }
    let other = simnet::run_grid(&SimConfig { seed: 2, ..cfg }, &[4], &[0.5]).unwrap();
    assert_ne!(without_tau(&a[0].csv_row()), without_tau(&other[0].csv_row()));
}

#[test]
fn parallel_grid_matches_serial() {
    let cfg = small();
    let serial = simnet::run_grid(&cfg, &[4, 6], &[0.5]).unwrap();
    let parallel = simnet::run_grid(&SimConfig { parallel: 2, ..cfg }, &[4, 6], &[0.5]).unwrap();
    for (x, y) in serial.iter().zip(&parallel) {
        assert_eq!(without_tau(&x.csv_row()), without_tau(&y.csv_row()));
    }
}

#[test]
fn smoke_run_writes_outputs() {
    let cfg = SimConfig { arrivals: 120, ..small() };
    let reports = simnet::run_grid(&cfg, &[4], &[0.5]).unwrap();
    let r = &reports[0];
    for v in [r.delta_cd, r.delta_wcd] {
        assert!((0.0..=100.0).contains(&v));
    }
    assert!(r.sigma_os > 0.0 && r.tau_mean_us > 0.0 && r.tau_nns_us > 0.0);
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("grid.csv");
    let json = dir.path().join("grid.json");
    simnet::write_csv(&csv, &reports).unwrap();
    simnet::write_json(&json, &reports).unwrap();
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(simnet::CSV_HEADER));
    assert_eq!(lines.next().unwrap().split(',').count(), 11);
    let parsed: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(parsed[0]["M"], 4);
}

#[test]
fn invalid_configs_are_rejected() {
    for cfg in [
        SimConfig { n_nodes: 1, ..small() },
        SimConfig { w: 0.0, ..small() },
        SimConfig { warmup: 3, ..small() },
        SimConfig { p_min: 2.0, ..small() },
        SimConfig { threshold: Some(1.0), ..small() },
    ] {
        assert!(simnet::run_experiment(&cfg).is_err());
    }
    assert!(simnet::delta_metric(&[]).is_err());
}
