//! Two standard normal features labelled by whether their signs agree.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use super::{binary_proba, GenerativeProcess, ProcessSpec, SampledRow};
use crate::coalition::Coalition;
use crate::data::{Column, Schema};
use crate::error::Result;
use crate::rng::StreamRng;

#[derive(Debug, Clone)]
pub struct Xor {
    schema: Arc<Schema>,
}

impl Xor {
    pub fn new() -> Self {
        let schema = Schema::with_label(
            vec![Column::continuous("x1"), Column::continuous("x2")],
            "y",
            2,
        )
        .expect("static schema");
        Self {
            schema: Arc::new(schema),
        }
    }
}

impl Default for Xor {
    fn default() -> Self {
        Self::new()
    }
}

impl GenerativeProcess for Xor {
    fn spec(&self) -> ProcessSpec {
        ProcessSpec::Xor
    }

    fn schema(&self) -> Arc<Schema> {
        Arc::clone(&self.schema)
    }

    fn sample(&self, rng: &mut StreamRng) -> SampledRow {
        let x1: f64 = rng.sample(StandardNormal);
        let x2: f64 = rng.sample(StandardNormal);
        SampledRow {
            features: vec![x1, x2],
            hidden: Vec::new(),
            label: usize::from(x1 * x2 > 0.0),
        }
    }

    fn label_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        Ok(binary_proba(if x[0] * x[1] > 0.0 { 1.0 } else { 0.0 }))
    }

    fn complete(&self, x: &[f64], s: Coalition, rng: &mut StreamRng) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let mut out = x.to_vec();
        for j in s.complement().iter() {
            out[j] = rng.sample(StandardNormal);
        }
        Ok(out)
    }

    fn bayes_accuracy(&self) -> f64 {
        1.0
    }
}
