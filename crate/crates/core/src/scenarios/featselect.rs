//! Compares cumulative chain-ordered attributions of one model with the
//! accuracy gains of models retrained on growing prefixes of the features.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::GenerativeProcess;
use crate::attribution::{global_asv, partition_sum_check, GlobalAttribution, GlobalConfig, Method};
use crate::data::Dataset;
use crate::error::{AsvError, Result};
use crate::models::{evaluate, train, Metrics, TrainConfig};
use crate::ordering::OrderingSpec;
use crate::rng::derive_seed;
use crate::stats::{combined_stderr, Estimate, RunningMoments};
use crate::value::{Explainer, Marginalizer, Predictor, ValueConfig};

fn default_trials() -> usize {
    5
}
fn default_test_fraction() -> f64 {
    0.25
}
fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSelectionConfig {
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub train: TrainConfig,
    pub value: ValueConfig,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    /// Test points explained for the attribution curve; `None` uses all.
    #[serde(default)]
    pub budget: Option<usize>,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepResult {
    pub t: usize,
    pub feature: String,
    /// Attribution of this step under the chain ordering.
    pub asv: Estimate,
    /// `Σ_{t' ≤ t} Φ(t')`.
    pub cumulative_asv: Estimate,
    /// Accuracy gain of each retrained model using steps `0..=t`.
    pub trial_gains: Vec<f64>,
    pub empirical_mean: f64,
    /// Spread of the retrained gains across trials.
    pub empirical_sd: f64,
    /// `|cumulative_asv − empirical_mean|`.
    pub gap: f64,
    /// Sum of the two half-widths, `stderr(cumulative) + sd(trials)`.
    pub band: f64,
    pub agrees: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayCheck {
    /// Steps `t` with `Φ(t+1) > Φ(t) + 3·combined stderr`.
    pub increases: Vec<usize>,
    /// `(Φ(0) − Φ(T−1)) / combined stderr`.
    pub first_over_last_z: f64,
    pub passes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureSelectionStudy {
    pub steps: Vec<StepResult>,
    pub full_model_test: Metrics,
    /// `A_f(N) − A_f({})` of the full model.
    pub accuracy_gain: f64,
    /// `|Σ_t Φ(t) − (A_f(N) − A_f({}))|`.
    pub telescoping_gap: f64,
    pub all_agree: bool,
    pub decay: DecayCheck,
    pub attribution: GlobalAttribution,
}

/// Retrains on steps `0..=t` and returns `A(N) − A({})` on the held-out part.
fn retrained_gain(data: &Dataset, t: usize, trial_seed: u64, cfg: &FeatureSelectionConfig) -> Result<f64> {
    let prefix: Vec<usize> = (0..=t).collect();
    let projected = data.project(&prefix)?;
    let (train_set, test_set) = projected.split(1.0 - cfg.test_fraction, trial_seed)?;
    let tcfg = TrainConfig {
        seed: trial_seed,
        ..cfg.train.clone()
    };
    let (model, _) = train(&train_set, &tcfg)?;
    // A({}) averages f_y over every (x', y) pair, which factorises into the
    // label frequencies times the mean predicted distribution.
    let n = test_set.len() as f64;
    let mut mean_proba = vec![0.0; model.n_classes()];
    let mut accuracy = 0.0;
    for (r, x) in test_set.rows().enumerate() {
        let p = model.predict_proba(x);
        accuracy += p[test_set.label(r)] / n;
        for (m, v) in mean_proba.iter_mut().zip(&p) {
            *m += v / n;
        }
    }
    let baseline: f64 = test_set
        .class_counts()
        .iter()
        .zip(&mean_proba)
        .map(|(&c, m)| c as f64 / n * m)
        .sum();
    Ok(accuracy - baseline)
}

pub fn run_feature_selection_study(
    data: &Dataset,
    process: Option<Arc<dyn GenerativeProcess>>,
    cfg: &FeatureSelectionConfig,
) -> Result<FeatureSelectionStudy> {
    if cfg.trials == 0 {
        return Err(AsvError::InvalidArgument("at least one trial is required".into()));
    }
    if !(0.0..1.0).contains(&cfg.test_fraction) || cfg.test_fraction == 0.0 {
        return Err(AsvError::InvalidArgument("test fraction must be in (0, 1)".into()));
    }
    let t_max = data.n_features();
    let seed = cfg.train.seed;
    let (train_set, test_set) = data.split(1.0 - cfg.test_fraction, seed)?;
    let (model, _) = train(&train_set, &cfg.train)?;
    let full_model_test = evaluate(&model, &test_set)?;

    let test_arc = Arc::new(test_set);
    let marginalizer = Marginalizer::from_config(&cfg.value, Arc::clone(&test_arc), process)?;
    let explainer = Explainer::new(&model, &marginalizer, &cfg.value);
    let spec = OrderingSpec::chain(t_max)?;
    let gcfg = GlobalConfig {
        method: Method::Exact,
        permutations: 1,
        budget: cfg.budget,
        workers: cfg.workers,
        enumeration_cap: t_max,
    };
    let attribution = global_asv(&explainer, &test_arc, &spec, &gcfg)?;
    let singletons: Vec<Vec<usize>> = (0..t_max).map(|t| vec![t]).collect();
    let partition = partition_sum_check(&attribution, &singletons, &explainer, &test_arc)?;

    let pairs: Vec<(usize, usize)> = (0..cfg.trials).flat_map(|k| (0..t_max).map(move |t| (k, t))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .map_err(|e| AsvError::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    let gains: Vec<f64> = pool.install(|| {
        pairs
            .par_iter()
            .map(|&(k, t)| retrained_gain(data, t, derive_seed(seed, 1 + k as u64), cfg))
            .collect::<Result<_>>()
    })?;

    let names = data.schema().feature_names();
    let steps: Vec<StepResult> = (0..t_max)
        .map(|t| {
            let trial_gains: Vec<f64> = (0..cfg.trials).map(|k| gains[k * t_max + t]).collect();
            let mut m = RunningMoments::new();
            for &g in &trial_gains {
                m.push(g);
            }
            let cumulative_asv = partition.cumulative[t];
            let empirical_sd = m.variance().sqrt();
            let gap = (cumulative_asv.value - m.mean()).abs();
            let band = cumulative_asv.stderr + empirical_sd;
            StepResult {
                t,
                feature: names[t].clone(),
                asv: attribution.values[t],
                cumulative_asv,
                trial_gains,
                empirical_mean: m.mean(),
                empirical_sd,
                gap,
                band,
                agrees: gap <= band,
            }
        })
        .collect();

    let accuracy_gain = attribution.accuracy_gain();
    let telescoping_gap = (partition.cumulative[t_max - 1].value - accuracy_gain).abs();
    let phi = &attribution.values;
    let increases = (0..t_max.saturating_sub(1))
        .filter(|&t| phi[t + 1].value > phi[t].value + 3.0 * combined_stderr(&[phi[t].stderr, phi[t + 1].stderr]))
        .collect::<Vec<_>>();
    let (first, last) = (phi[0], phi[t_max - 1]);
    let se = combined_stderr(&[first.stderr, last.stderr]);
    let diff = first.value - last.value;
    let first_over_last_z = if se > 0.0 { diff / se } else if diff > 0.0 { f64::MAX } else { 0.0 };
    let decay = DecayCheck {
        passes: increases.is_empty() && (t_max == 1 || first_over_last_z > 3.0),
        increases,
        first_over_last_z,
    };
    Ok(FeatureSelectionStudy {
        all_agree: steps.iter().all(|s| s.agrees),
        steps,
        full_model_test,
        accuracy_gain,
        telescoping_gap,
        decay,
        attribution,
    })
}
