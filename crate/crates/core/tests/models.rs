use std::sync::Arc;

use asv::data::Dataset;
use asv::models::{evaluate, train, BayesPredictor, Model, TrainConfig};
use asv::scenarios::{generate, GenerativeProcess, ProcessSpec};
use asv::value::Predictor;
use asv::AsvError;

fn admissions(spec: &ProcessSpec, rows: usize, seed: u64) -> (Arc<dyn GenerativeProcess>, Dataset, Dataset) {
    let process = spec.build().unwrap();
    let data = generate(process.as_ref(), rows, seed).unwrap().dataset;
    let (train_set, test_set) = data.split(0.75, seed).unwrap();
    (process, train_set, test_set)
}

#[test]
fn fair_admissions_models_approach_bayes_accuracy() {
    let (process, train_set, test_set) = admissions(&ProcessSpec::FairAdmissions, 10_000, 51);
    let bayes = process.bayes_accuracy();
    for cfg in [TrainConfig::logistic(51), TrainConfig::mlp(51)] {
        let (model, report) = train(&train_set, &cfg).unwrap();
        let m = evaluate(&model, &test_set).unwrap();
        assert!((m.max_class_accuracy - bayes).abs() <= 0.02, "{:?}: {} vs {bayes}", cfg.kind, m.max_class_accuracy);
        assert!(report.validation_accuracy.is_some());
        assert!(m.sampled_label_accuracy < m.max_class_accuracy);
    }
}

/// Mean and stderr of the paired per-row difference `score(a) − score(b)`.
fn paired_gap(a: &dyn Predictor, b: &dyn Predictor, data: &Dataset, score: impl Fn(&[f64], usize) -> f64) -> (f64, f64) {
    let d: Vec<f64> = data
        .rows()
        .enumerate()
        .map(|(r, x)| score(&a.predict_proba(x), data.label(r)) - score(&b.predict_proba(x), data.label(r)))
        .collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn log_score(p: &[f64], y: usize) -> f64 {
    p[y].max(1e-15).ln()
}

fn label_probability(p: &[f64], y: usize) -> f64 {
    p[y]
}

#[test]
fn bayes_predictor_has_the_best_log_score() {
    for (spec, seed) in [(ProcessSpec::FairAdmissions, 52), (ProcessSpec::UnfairAdmissions, 53)] {
        let (process, train_set, test_set) = admissions(&spec, 10_000, seed);
        let bayes = BayesPredictor::new(process);
        for cfg in [TrainConfig::logistic(seed), TrainConfig::mlp(seed)] {
            let (model, _) = train(&train_set, &cfg).unwrap();
            let (gap, se) = paired_gap(&bayes, &model, &test_set, log_score);
            assert!(gap > -3.0 * se, "{spec:?} {:?}: gap {gap} se {se}", cfg.kind);
        }
    }
}

/// One-hot on the most probable class of the wrapped predictor.
struct Sharpened(BayesPredictor);

impl Predictor for Sharpened {
    fn n_features(&self) -> usize {
        self.0.n_features()
    }
    fn n_classes(&self) -> usize {
        self.0.n_classes()
    }
    fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.n_classes()];
        p[self.0.predict_class(x)] = 1.0;
        p
    }
}

#[test]
fn sampled_label_accuracy_rewards_overconfidence() {
    // E[f_y(x)] is linear in f, so a sharpened Bayes predictor beats the
    // calibrated one: E[max p] >= E[sum p^2].
    let (process, _, test_set) = admissions(&ProcessSpec::UnfairAdmissions, 10_000, 55);
    let bayes = BayesPredictor::new(Arc::clone(&process));
    let sharp = Sharpened(BayesPredictor::new(process));
    let (gap, se) = paired_gap(&sharp, &bayes, &test_set, label_probability);
    assert!(gap > 3.0 * se, "gap {gap} se {se}");
}

#[test]
fn model_files_round_trip_and_check_their_schema() {
    let (_, train_set, test_set) = admissions(&ProcessSpec::UnfairAdmissions, 2_000, 54);
    let (net, _) = train(&train_set, &TrainConfig::mlp(54)).unwrap();
    let model = Model::Network(net);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    model.save(&path).unwrap();
    let loaded = Model::load(&path).unwrap();
    assert_eq!(loaded.to_json().unwrap(), model.to_json().unwrap());
    for x in test_set.rows().take(20) {
        assert_eq!(loaded.predict_proba(x), model.predict_proba(x));
    }
    loaded.check_schema(test_set.schema()).unwrap();

    let other = generate(ProcessSpec::Xor.build().unwrap().as_ref(), 100, 1).unwrap().dataset;
    assert!(matches!(loaded.check_schema(other.schema()), Err(AsvError::Schema(_))));
}
