//! Binary-labelled autoregressive series. The label shifts the innovation
//! mean by an amount that decays geometrically with the step, so early steps
//! carry most of the new information about the label.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{bernoulli, binary_proba, GenerativeProcess, ProcessSpec, SampledRow};
use crate::coalition::Coalition;
use crate::data::{Column, Schema};
use crate::error::{AsvError, Result};
use crate::rng::StreamRng;
use crate::stats::sigmoid;

pub const MAX_STEPS: usize = 16;

fn default_steps() -> usize {
    12
}
fn default_ar() -> f64 {
    0.7
}
fn default_shift() -> f64 {
    1.0
}
fn default_decay() -> f64 {
    0.7
}
fn default_noise_sd() -> f64 {
    0.5
}

/// `x_t = ar·x_{t-1} + (y - ½)·shift·decay^t + noise_sd·ε_t`, with
/// `x_{-1} = 0` and `Y ~ Bernoulli(½)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovConfig {
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_ar")]
    pub ar: f64,
    #[serde(default = "default_shift")]
    pub shift: f64,
    #[serde(default = "default_decay")]
    pub decay: f64,
    #[serde(default = "default_noise_sd")]
    pub noise_sd: f64,
}

impl Default for MarkovConfig {
    fn default() -> Self {
        Self {
            steps: default_steps(),
            ar: default_ar(),
            shift: default_shift(),
            decay: default_decay(),
            noise_sd: default_noise_sd(),
        }
    }
}

impl MarkovConfig {
    pub fn with_steps(steps: usize) -> Self {
        Self {
            steps,
            ..Self::default()
        }
    }
}

/// Gaussian conditioning on one coalition, shared by both classes.
#[derive(Debug)]
struct Conditioning {
    observed: Vec<usize>,
    free: Vec<usize>,
    /// `log P(Y=1|x_S) / P(Y=0|x_S) = weights · x_S`.
    weights: DVector<f64>,
    /// `Σ_FS Σ_SS⁻¹`.
    gain: DMatrix<f64>,
    /// Lower Cholesky factor of `Σ_FF − Σ_FS Σ_SS⁻¹ Σ_SF`.
    chol: DMatrix<f64>,
}

#[derive(Debug)]
pub struct MarkovSeries {
    config: MarkovConfig,
    schema: Arc<Schema>,
    /// Class-1 mean; the class-0 mean is its negative.
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    cache: Mutex<HashMap<u64, Arc<Conditioning>>>,
}

impl MarkovSeries {
    pub fn new(config: MarkovConfig) -> Result<Self> {
        let t = config.steps;
        if t == 0 || t > MAX_STEPS {
            return Err(AsvError::InvalidArgument(format!(
                "steps must be in 1..={MAX_STEPS}, got {t}"
            )));
        }
        if config.noise_sd.is_nan() || config.noise_sd <= 0.0 || !config.ar.is_finite() || !config.shift.is_finite() || !config.decay.is_finite() {
            return Err(AsvError::InvalidArgument(
                "noise_sd must be positive and all parameters finite".into(),
            ));
        }
        let features = (0..t).map(|i| Column::continuous(&format!("x{i}"))).collect();
        let schema = Arc::new(Schema::with_label(features, "y", 2)?);
        let m = DMatrix::from_fn(t, t, |r, c| if c <= r { config.ar.powi((r - c) as i32) } else { 0.0 });
        let half_shift = DVector::from_fn(t, |i, _| 0.5 * config.shift * config.decay.powi(i as i32));
        let mean = &m * half_shift;
        let cov = (&m * m.transpose()) * config.noise_sd.powi(2);
        Ok(Self {
            config,
            schema,
            mean,
            cov,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &MarkovConfig {
        &self.config
    }

    /// Squared Mahalanobis distance between the class means restricted to `s`.
    pub fn separation(&self, s: Coalition) -> Result<f64> {
        let idx = s.indices();
        if idx.is_empty() {
            return Ok(0.0);
        }
        let c = self.conditioning(s)?;
        let delta = self.mean.select_rows(&idx) * 2.0;
        Ok(c.weights.dot(&delta))
    }

    /// Max-class Bayes accuracy using only the features in `s`.
    pub fn bayes_accuracy_of(&self, s: Coalition) -> Result<f64> {
        let d = self.separation(s)?.max(0.0).sqrt();
        Ok(Normal::standard().cdf(d / 2.0))
    }

    fn conditioning(&self, s: Coalition) -> Result<Arc<Conditioning>> {
        if s.n() != self.config.steps {
            return Err(AsvError::DimensionMismatch {
                expected: self.config.steps,
                found: s.n(),
            });
        }
        let mut cache = self.cache.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(c) = cache.get(&s.bits()) {
            return Ok(Arc::clone(c));
        }
        let observed = s.indices();
        let free = s.complement().indices();
        let sigma_ff = self.cov.select_rows(&free).select_columns(&free);
        let c = if observed.is_empty() {
            Conditioning {
                weights: DVector::zeros(0),
                gain: DMatrix::zeros(free.len(), 0),
                chol: cholesky(sigma_ff)?,
                observed,
                free,
            }
        } else {
            let sigma_ss = self.cov.select_rows(&observed).select_columns(&observed);
            let sigma_fs = self.cov.select_rows(&free).select_columns(&observed);
            let ss = sigma_ss
                .cholesky()
                .ok_or_else(|| AsvError::NoConditional("covariance is not positive definite".into()))?;
            let weights = ss.solve(&(self.mean.select_rows(&observed) * 2.0));
            let gain = ss.solve(&sigma_fs.transpose()).transpose();
            let chol = if free.is_empty() {
                DMatrix::zeros(0, 0)
            } else {
                cholesky(&sigma_ff - &gain * sigma_fs.transpose())?
            };
            Conditioning {
                observed,
                free,
                weights,
                gain,
                chol,
            }
        };
        let c = Arc::new(c);
        cache.insert(s.bits(), Arc::clone(&c));
        Ok(c)
    }

    fn log_odds(c: &Conditioning, x: &[f64]) -> f64 {
        c.observed.iter().zip(c.weights.iter()).map(|(&j, w)| w * x[j]).sum()
    }
}

fn cholesky(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    // Symmetrise against round-off before factorising.
    let sym = (&m + m.transpose()) * 0.5;
    sym.cholesky()
        .map(|c| c.l())
        .ok_or_else(|| AsvError::NoConditional("conditional covariance is not positive definite".into()))
}

impl GenerativeProcess for MarkovSeries {
    fn spec(&self) -> ProcessSpec {
        ProcessSpec::Markov(self.config.clone())
    }

    fn schema(&self) -> Arc<Schema> {
        Arc::clone(&self.schema)
    }

    fn sample(&self, rng: &mut StreamRng) -> SampledRow {
        let y = bernoulli(rng, 0.5);
        let cfg = &self.config;
        let mut prev = 0.0;
        let features = (0..cfg.steps)
            .map(|t| {
                let eps: f64 = rng.sample(StandardNormal);
                let x = cfg.ar * prev + (y - 0.5) * cfg.shift * cfg.decay.powi(t as i32) + cfg.noise_sd * eps;
                prev = x;
                x
            })
            .collect();
        SampledRow {
            features,
            hidden: Vec::new(),
            label: y as usize,
        }
    }

    fn label_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let c = self.conditioning(Coalition::full(self.config.steps))?;
        Ok(binary_proba(sigmoid(Self::log_odds(&c, x))))
    }

    fn complete(&self, x: &[f64], s: Coalition, rng: &mut StreamRng) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let c = self.conditioning(s)?;
        let mut out = x.to_vec();
        if c.free.is_empty() {
            return Ok(out);
        }
        let sign = if rng.random::<f64>() < sigmoid(Self::log_odds(&c, x)) { 1.0 } else { -1.0 };
        let resid = DVector::from_iterator(
            c.observed.len(),
            c.observed.iter().map(|&j| x[j] - sign * self.mean[j]),
        );
        let z = DVector::from_fn(c.free.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let draw = &c.gain * resid + &c.chol * z;
        for (k, &j) in c.free.iter().enumerate() {
            out[j] = sign * self.mean[j] + draw[k];
        }
        Ok(out)
    }

    fn bayes_accuracy(&self) -> f64 {
        self.bayes_accuracy_of(Coalition::full(self.config.steps))
            .expect("full covariance is positive definite")
    }
}
