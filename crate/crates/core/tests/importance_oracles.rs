//! Estimators checked against brute-force references.

use edgesel::dataset::{Dataset, FeatureVector};
use edgesel::importance::{self, ImportanceConfig, LocalPosterior, LossKind, PredictiveModel};
use edgesel::{nbc, oracle, seed};
use rand::Rng;

struct Closure<F: Fn(&[f64]) -> f64 + Sync>(F);

impl<F: Fn(&[f64]) -> f64 + Sync> PredictiveModel for Closure<F> {
    fn predict(&self, x: &[f64]) -> f64 {
        (self.0)(x)
    }

    fn loss(&self, d: &Dataset) -> f64 {
        d.vectors().iter().map(|v| (self.0)(&v.values).powi(2)).sum::<f64>() / d.len() as f64
    }
}

fn uniform_rows(seed_value: u64, n: usize, m: usize) -> Vec<Vec<f64>> {
    let mut rng = seed::rng(seed_value);
    (0..n).map(|_| (0..m).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

fn two_class(seed_value: u64, n: usize, m: usize, relevant: usize) -> Dataset {
    let mut rng = seed::rng(seed_value);
    let mut d = Dataset::with_dim(m);
    for i in 0..n {
        let c = i % 2;
        let x = (0..m)
            .map(|j| rng.random_range(-1.0..1.0) + if j < relevant && c == 1 { 1.2 } else { 0.0 })
            .collect();
        d.push(FeatureVector::labeled(x, c)).unwrap();
    }
    d
}

fn all(m: usize) -> Vec<usize> {
    (0..m).collect()
}

#[test]
fn pfi_matches_exhaustive_pairings() {
    // with four rows the split-half swap has only 4! orderings
    let rows = vec![
        vec![1.0, 2.0],
        vec![-1.0, 0.5],
        vec![3.0, -2.0],
        vec![0.5, 1.5],
    ];
    let d = Dataset::from_rows(rows.clone()).unwrap();
    let model = Closure(|x: &[f64]| x[0] * x[1] + 0.3);
    let baseline = model.loss(&d);
    let mut orders = Vec::new();
    permutations(&mut (0..4).collect(), 0, &mut orders);
    let exact: f64 = orders
        .iter()
        .map(|o| {
            let mut r = rows.clone();
            for t in 0..2 {
                let (a, b) = (o[t], o[2 + t]);
                r[a][0] = rows[b][0];
                r[b][0] = rows[a][0];
            }
            model.loss(&Dataset::from_rows(r).unwrap()) / baseline
        })
        .sum::<f64>()
        / orders.len() as f64;
    let reps = 20_000;
    let est = importance::pfi(&model, &d, 0, reps, 5).unwrap().ratio;
    let spread = orders
        .iter()
        .map(|o| {
            let mut r = rows.clone();
            for t in 0..2 {
                r[o[t]][0] = rows[o[2 + t]][0];
                r[o[2 + t]][0] = rows[o[t]][0];
            }
            (model.loss(&Dataset::from_rows(r).unwrap()) / baseline - exact).powi(2)
        })
        .sum::<f64>()
        / orders.len() as f64;
    let se = (spread / reps as f64).sqrt();
    assert!((est - exact).abs() <= 4.0 * se + 1e-12, "est {est} exact {exact} se {se}");
}

fn permutations(v: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == v.len() {
        out.push(v.clone());
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permutations(v, k + 1, out);
        v.swap(k, i);
    }
}

#[test]
fn pfi_of_unused_feature_is_one() {
    let d = two_class(3, 60, 4, 2);
    let model = nbc::train(&d, &[0, 1]).unwrap();
    let bb = LocalPosterior::new(&model, 1, LossKind::LogLoss).unwrap();
    for s in 0..30 {
        let r = importance::pfi(&bb, &d, 3, 2, s).unwrap();
        assert!((r.ratio - 1.0).abs() <= 1e-9);
        assert!(!r.zero_baseline);
    }
    let used = importance::pfi(&bb, &d, 0, 5, 1).unwrap().ratio;
    assert!(used > 1.0);
}

#[test]
fn pfi_zero_baseline_sentinel() {
    let d = Dataset::from_rows(uniform_rows(1, 8, 2)).unwrap();
    let r = importance::pfi(&Closure(|_: &[f64]| 0.0), &d, 0, 3, 1).unwrap();
    assert!(r.zero_baseline);
    assert_eq!(r.ratio, 1.0);
}

#[test]
fn shapley_of_linear_model_is_centered_term() {
    let rows = uniform_rows(4, 200, 3);
    let d = Dataset::from_rows(rows.clone()).unwrap();
    let beta = [2.0, -1.5, 0.5];
    let model = Closure(move |x: &[f64]| beta.iter().zip(x).map(|(b, v)| b * v).sum());
    for j in 0..3 {
        let mean_j = rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64;
        for i in [0, 7, 42] {
            let e = importance::shapley_instance_stats(&model, &d, i, j, 4000, 9 + i as u64).unwrap();
            let want = beta[j] * (rows[i][j] - mean_j);
            let se = e.std_dev / (4000f64).sqrt();
            assert!((e.value - want).abs() <= 4.0 * se + 1e-12, "i {i} j {j}: {} vs {want}", e.value);
        }
    }
}

#[test]
fn exact_shapley_is_efficient() {
    let d = two_class(5, 24, 4, 2);
    let model = nbc::train(&d, &all(4)).unwrap();
    let bb = LocalPosterior::new(&model, 0, LossKind::LogLoss).unwrap();
    let f = |x: &[f64]| bb.predict(x);
    let bg: Vec<Vec<f64>> = d.vectors().iter().map(|v| v.values.clone()).collect();
    let mean_f = bg.iter().map(|r| f(r)).sum::<f64>() / bg.len() as f64;
    for x in bg.iter().take(5) {
        let total: f64 = (0..4).map(|j| oracle::exact_shapley(&f, &bg, x, j)).sum();
        assert!((total - (f(x) - mean_f)).abs() <= 1e-12);
    }
}

#[test]
fn monte_carlo_shapley_within_three_sigma() {
    let d = two_class(6, 32, 4, 2);
    let model = nbc::train(&d, &all(4)).unwrap();
    let bb = LocalPosterior::new(&model, 0, LossKind::LogLoss).unwrap();
    let f = |x: &[f64]| bb.predict(x);
    let bg: Vec<Vec<f64>> = d.vectors().iter().map(|v| v.values.clone()).collect();
    let iters = 2000;
    let mut inside = 0;
    let mut total = 0;
    for i in 0..8 {
        for j in 0..4 {
            let exact = oracle::exact_shapley(&f, &bg, &bg[i], j);
            let e = importance::shapley_instance_stats(&bb, &d, i, j, iters, seed::derive_seed(1, i as u64, j as u64))
                .unwrap();
            let se = e.std_dev / (iters as f64).sqrt();
            total += 1;
            if (e.value - exact).abs() <= 3.0 * se + 1e-12 {
                inside += 1;
            }
        }
    }
    // a 3-sigma band holds with probability ~0.997 per pair
    assert!(inside >= total - 2, "{inside} of {total} inside");
}

#[test]
fn shapley_feature_is_mean_absolute_value() {
    let d = two_class(7, 40, 3, 1);
    let model = nbc::train(&d, &all(3)).unwrap();
    let bb = LocalPosterior::new(&model, 0, LossKind::LogLoss).unwrap();
    let s = importance::shapley_feature(&bb, &d, 0, 40, 50, 3).unwrap();
    assert!(s > 0.0);
    let unused = nbc::train(&d, &[0, 1]).unwrap();
    let bb2 = LocalPosterior::new(&unused, 0, LossKind::LogLoss).unwrap();
    assert_eq!(importance::shapley_feature(&bb2, &d, 2, 20, 50, 3).unwrap(), 0.0);
    assert!(importance::shapley_feature(&bb, &d, 0, 41, 50, 3).is_err());
}

#[test]
fn partial_dependence_of_product() {
    let rows = uniform_rows(8, 50, 2);
    let mean1 = rows.iter().map(|r| r[1]).sum::<f64>() / rows.len() as f64;
    let d = Dataset::from_rows(rows).unwrap();
    let model = Closure(|x: &[f64]| x[0] * x[1]);
    for v in [-2.0, 0.0, 0.7] {
        let pd = importance::partial_dependence(&model, &d, 0, v).unwrap();
        assert!((pd - v * mean1).abs() <= 1e-12);
    }
}

#[test]
fn interaction_matches_direct_summation() {
    let d = two_class(9, 30, 3, 2);
    let model = nbc::train(&d, &all(3)).unwrap();
    let bb = LocalPosterior::new(&model, 1, LossKind::LogLoss).unwrap();
    let f = |x: &[f64]| bb.predict(x);
    let rows: Vec<Vec<f64>> = d.vectors().iter().map(|v| v.values.clone()).collect();
    for j in 0..3 {
        let got = importance::fit_interaction(&bb, &d, j).unwrap().value;
        let want = oracle::direct_interaction(&f, &rows, j);
        assert!((got - want).abs() <= 1e-9, "feature {j}: {got} vs {want}");
    }
}

#[test]
fn interaction_of_additive_and_multiplicative_models() {
    let d = Dataset::from_rows(uniform_rows(10, 80, 3)).unwrap();
    let additive = Closure(|x: &[f64]| x[0] + 2.0 * x[1].powi(3) - x[2]);
    for j in 0..3 {
        assert!(importance::fit_interaction(&additive, &d, j).unwrap().value <= 1e-9);
    }
    let product = Closure(|x: &[f64]| x[0] * x[1]);
    for j in 0..2 {
        assert!(importance::fit_interaction(&product, &d, j).unwrap().value >= 0.5);
    }
    let flat = importance::fit_interaction(&Closure(|_: &[f64]| 1.0), &d, 0).unwrap();
    assert!(flat.degenerate && flat.value == 0.0);
}

#[test]
fn compute_all_is_deterministic_and_order_free() {
    let d = two_class(11, 120, 5, 2);
    let model = nbc::train(&d, &all(5)).unwrap();
    let bb = LocalPosterior::new(&model, 0, LossKind::LogLoss).unwrap();
    let cfg = ImportanceConfig {
        shapley_instances: 20,
        shapley_iters: 30,
        fit_max_rows: Some(40),
        ..ImportanceConfig::default()
    };
    let a = importance::compute_all(&bb, &d, &cfg, 77).unwrap();
    let b = importance::compute_all(&bb, &d, &cfg, 77).unwrap();
    let serial = importance::compute_all(&bb, &d, &ImportanceConfig { parallel: false, ..cfg.clone() }, 77).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, serial);
    let other = importance::compute_all(&bb, &d, &cfg, 78).unwrap();
    assert_ne!(a.shapley, other.shapley);
    for j in 0..2 {
        for k in 2..5 {
            assert!(a.pfi[j] > a.pfi[k] && a.shapley[j] > a.shapley[k]);
        }
    }
}

#[test]
fn estimator_argument_errors() {
    let d = Dataset::from_rows(uniform_rows(12, 10, 2)).unwrap();
    let model = Closure(|x: &[f64]| x[0]);
    assert!(importance::pfi(&model, &d, 2, 1, 0).is_err());
    assert!(importance::pfi(&model, &d, 0, 0, 0).is_err());
    assert!(importance::shapley_instance(&model, &d, 10, 0, 5, 0).is_err());
    assert!(importance::shapley_instance(&model, &d, 0, 0, 0, 0).is_err());
    let tiny = Dataset::from_rows(uniform_rows(12, 3, 2)).unwrap();
    assert!(importance::pfi(&model, &tiny, 0, 1, 0).is_err());
    let bad = ImportanceConfig { fit_max_rows: Some(1), ..ImportanceConfig::default() };
    assert!(importance::compute_all(&model, &d, &bad, 0).is_err());
}
