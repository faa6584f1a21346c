//! Two binary features and a binary label wired as a chain, a collider or a
//! mix of both.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    bernoulli, binary_code, binary_completions, binary_proba, sample_support, GenerativeProcess,
    ProcessSpec, SampledRow, WeightedPoints,
};
use crate::coalition::Coalition;
use crate::data::{Column, Schema};
use crate::error::Result;
use crate::rng::StreamRng;
use crate::stats::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphKind {
    /// `X1 → X2 → Y`.
    Chain,
    /// `X1 → Y ← X2` with independent parents.
    Collider,
    /// `X1 → X2`, and both point into `Y`.
    Mixed,
}

#[derive(Debug, Clone)]
pub struct TwoFeatureGraph {
    kind: GraphKind,
    schema: Arc<Schema>,
}

impl TwoFeatureGraph {
    pub fn new(kind: GraphKind) -> Self {
        let schema = Schema::with_label(
            vec![Column::discrete("x1", 2), Column::discrete("x2", 2)],
            "y",
            2,
        )
        .expect("static schema");
        Self {
            kind,
            schema: Arc::new(schema),
        }
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    /// `P(X2 = 1 | X1 = x1)`.
    pub fn p_x2(&self, x1: f64) -> f64 {
        match self.kind {
            GraphKind::Chain | GraphKind::Mixed => 0.8 * x1 + 0.1 * (1.0 - x1),
            GraphKind::Collider => 0.5,
        }
    }

    /// `p(x2 | x1)` as a distribution over `x2 ∈ {0, 1}`.
    pub fn conditional_x2(&self, x1: f64) -> [f64; 2] {
        let p = self.p_x2(x1);
        [1.0 - p, p]
    }

    /// `P(Y = 1 | x1, x2)`.
    pub fn p_label(&self, x1: f64, x2: f64) -> f64 {
        match self.kind {
            GraphKind::Chain => sigmoid(2.0 * x2 - 1.0),
            GraphKind::Collider | GraphKind::Mixed => sigmoid(x1 + x2 - 1.0),
        }
    }

    pub fn joint(&self, x1: f64, x2: f64) -> f64 {
        0.5 * self.conditional_x2(x1)[x2 as usize]
    }
}

impl GenerativeProcess for TwoFeatureGraph {
    fn spec(&self) -> ProcessSpec {
        ProcessSpec::TwoFeature { graph: self.kind }
    }

    fn schema(&self) -> Arc<Schema> {
        Arc::clone(&self.schema)
    }

    fn sample(&self, rng: &mut StreamRng) -> SampledRow {
        let x1 = bernoulli(rng, 0.5);
        let x2 = bernoulli(rng, self.p_x2(x1));
        let label = bernoulli(rng, self.p_label(x1, x2)) as usize;
        SampledRow {
            features: vec![x1, x2],
            hidden: Vec::new(),
            label,
        }
    }

    fn label_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        binary_code(x, 0)?;
        binary_code(x, 1)?;
        Ok(binary_proba(self.p_label(x[0], x[1])))
    }

    fn complete(&self, x: &[f64], s: Coalition, rng: &mut StreamRng) -> Result<Vec<f64>> {
        let support = self.completion_support(x, s)?.expect("finite support");
        Ok(sample_support(&support, rng))
    }

    fn completion_support(&self, x: &[f64], s: Coalition) -> Result<Option<WeightedPoints>> {
        self.check_point(x)?;
        for j in s.iter() {
            binary_code(x, j)?;
        }
        Ok(Some(binary_completions(x, s, &[0, 1], |p| self.joint(p[0], p[1]))))
    }

    fn bayes_accuracy(&self) -> f64 {
        let mut acc = 0.0;
        for x1 in [0.0, 1.0] {
            for x2 in [0.0, 1.0] {
                let p = self.p_label(x1, x2);
                acc += self.joint(x1, x2) * p.max(1.0 - p);
            }
        }
        acc
    }
}
