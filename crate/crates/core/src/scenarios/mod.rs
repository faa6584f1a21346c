//! Synthetic data-generating processes and the experiment pipelines built on
//! them.

pub mod admissions;
mod fairness;
mod featselect;
mod graphs;
mod markov;
mod xor;

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coalition::Coalition;
use crate::data::{Dataset, Schema};
use crate::error::{AsvError, Result};
use crate::rng::{stream, StreamRng};

pub use admissions::{admissions_summary, Admissions, AdmissionsSummary};
pub use fairness::{run_fairness_audit, FairnessReport, SensitiveVerdict};
pub use featselect::{run_feature_selection_study, FeatureSelectionConfig, FeatureSelectionStudy, StepResult};
pub use graphs::{GraphKind, TwoFeatureGraph};
pub use markov::{MarkovConfig, MarkovSeries};
pub use xor::Xor;

/// One draw from a process.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledRow {
    pub features: Vec<f64>,
    /// Variables that influence the label but are not recorded as features.
    pub hidden: Vec<f64>,
    pub label: usize,
}

/// Points paired with their probabilities.
pub type WeightedPoints = Vec<(f64, Vec<f64>)>;

/// A synthetic data-generating process with a known label rule and known
/// conditionals of its features.
pub trait GenerativeProcess: Send + Sync + fmt::Debug {
    fn spec(&self) -> ProcessSpec;

    fn schema(&self) -> Arc<Schema>;

    fn hidden_names(&self) -> Vec<String> {
        Vec::new()
    }

    fn sample(&self, rng: &mut StreamRng) -> SampledRow;

    /// `P(Y = y | x)` for every class, marginalising hidden variables.
    fn label_proba(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// Draws the features outside `s` from `p(x' | x'_S = x_S)`; members of
    /// `s` are copied from `x`.
    fn complete(&self, x: &[f64], s: Coalition, rng: &mut StreamRng) -> Result<Vec<f64>>;

    /// The full conditional distribution of completions as weighted points,
    /// when it is finite.
    fn completion_support(&self, _x: &[f64], _s: Coalition) -> Result<Option<WeightedPoints>> {
        Ok(None)
    }

    /// Accuracy of predicting the most probable class under the true label
    /// rule.
    fn bayes_accuracy(&self) -> f64;

    fn n_features(&self) -> usize {
        self.schema().n_features()
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        self.schema().validate_point(x)
    }
}

/// Serializable description of a process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "process", rename_all = "kebab-case")]
pub enum ProcessSpec {
    FairAdmissions,
    UnfairAdmissions,
    TwoFeature { graph: GraphKind },
    Markov(MarkovConfig),
    Xor,
}

impl ProcessSpec {
    pub fn build(&self) -> Result<Arc<dyn GenerativeProcess>> {
        Ok(match self {
            ProcessSpec::FairAdmissions => Arc::new(Admissions::fair()),
            ProcessSpec::UnfairAdmissions => Arc::new(Admissions::unfair()),
            ProcessSpec::TwoFeature { graph } => Arc::new(TwoFeatureGraph::new(*graph)),
            ProcessSpec::Markov(cfg) => Arc::new(MarkovSeries::new(cfg.clone())?),
            ProcessSpec::Xor => Arc::new(Xor::new()),
        })
    }
}

/// Rows drawn from a process, with any hidden variables kept apart.
#[derive(Debug, Clone)]
pub struct GeneratedData {
    pub dataset: Dataset,
    pub hidden_names: Vec<String>,
    pub hidden: Vec<Vec<f64>>,
}

/// Draws `n_rows` rows. Row `r` uses its own stream, so the output does not
/// depend on how rows are scheduled.
pub fn generate(process: &dyn GenerativeProcess, n_rows: usize, seed: u64) -> Result<GeneratedData> {
    if n_rows == 0 {
        return Err(AsvError::InvalidArgument("n_rows must be at least 1".into()));
    }
    let rows: Vec<SampledRow> = (0..n_rows)
        .into_par_iter()
        .map(|r| process.sample(&mut stream(seed, r as u64)))
        .collect();
    let mut features = Vec::with_capacity(n_rows);
    let mut labels = Vec::with_capacity(n_rows);
    let mut hidden = Vec::with_capacity(n_rows);
    for row in rows {
        features.push(row.features);
        labels.push(row.label);
        hidden.push(row.hidden);
    }
    Ok(GeneratedData {
        dataset: Dataset::new(process.schema(), features, labels)?,
        hidden_names: process.hidden_names(),
        hidden,
    })
}

pub(crate) fn bernoulli<R: Rng + ?Sized>(rng: &mut R, p: f64) -> f64 {
    if rng.random::<f64>() < p {
        1.0
    } else {
        0.0
    }
}

pub(crate) fn binary_proba(p1: f64) -> Vec<f64> {
    vec![1.0 - p1, p1]
}

/// Checks that the discrete feature `j` of `x` holds a binary code.
pub(crate) fn binary_code(x: &[f64], j: usize) -> Result<usize> {
    match x[j] {
        0.0 => Ok(0),
        1.0 => Ok(1),
        v => Err(AsvError::Schema(format!("feature {j} must be 0 or 1, got {v}"))),
    }
}

/// `E[g(Z)]` for `Z ~ N(0, 1)` by composite Simpson quadrature on ±12.
pub(crate) fn standard_normal_expectation<F: Fn(f64) -> f64>(g: F) -> f64 {
    const STEPS: usize = 4000;
    const HALF_WIDTH: f64 = 12.0;
    let h = 2.0 * HALF_WIDTH / STEPS as f64;
    let density = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut total = 0.0;
    for k in 0..=STEPS {
        let z = -HALF_WIDTH + k as f64 * h;
        let w = if k == 0 || k == STEPS {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        total += w * density(z) * g(z);
    }
    total * h / 3.0
}

/// Every assignment of the binary features outside `s`, weighted by
/// `joint`, renormalised.
pub(crate) fn binary_completions<F: Fn(&[f64]) -> f64>(
    x: &[f64],
    s: Coalition,
    free: &[usize],
    joint: F,
) -> Vec<(f64, Vec<f64>)> {
    let missing: Vec<usize> = free.iter().copied().filter(|&j| !s.contains(j)).collect();
    let mut out = Vec::with_capacity(1 << missing.len());
    for mask in 0..(1usize << missing.len()) {
        let mut p = x.to_vec();
        for (b, &j) in missing.iter().enumerate() {
            p[j] = ((mask >> b) & 1) as f64;
        }
        let w = joint(&p);
        if w > 0.0 {
            out.push((w, p));
        }
    }
    let z: f64 = out.iter().map(|(w, _)| w).sum();
    for (w, _) in &mut out {
        *w /= z;
    }
    out
}

pub(crate) fn sample_support<R: Rng + ?Sized>(support: &[(f64, Vec<f64>)], rng: &mut R) -> Vec<f64> {
    let mut u: f64 = rng.random();
    for (w, p) in support {
        if u < *w {
            return p.clone();
        }
        u -= w;
    }
    support.last().expect("nonempty support").1.clone()
}
