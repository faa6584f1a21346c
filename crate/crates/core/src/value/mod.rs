//! Coalition value functions.
//!
//! For a fixed predictor, data point `x` and class `y`, the value of a
//! coalition `S` is the expected predicted probability of `y` when the
//! features in `S` are held at their values in `x` and the rest are
//! marginalised. Off-manifold marginalisation draws the missing features
//! from the unconditional background distribution; on-manifold
//! marginalisation draws them conditionally on `x_S`.

mod conditional;

use std::collections::HashMap;
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coalition::Coalition;
use crate::data::Dataset;
use crate::error::{AsvError, Result};
use crate::rng::{stream, STREAM_BACKGROUND};
use crate::scenarios::GenerativeProcess;
use crate::stats::{Estimate, NeumaierSum, RunningMoments};

pub use conditional::{ConditionalSampler, ConditionalStrategy, EmpiricalConditional};

/// A model mapping a data point to a probability vector over classes.
pub trait Predictor: Send + Sync {
    fn n_features(&self) -> usize;
    fn n_classes(&self) -> usize;
    fn predict_proba(&self, x: &[f64]) -> Vec<f64>;

    fn predict_class_proba(&self, x: &[f64], y: usize) -> f64 {
        self.predict_proba(x)[y]
    }

    fn predict_class(&self, x: &[f64]) -> usize {
        argmax(&self.predict_proba(x))
    }
}

pub(crate) fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// A coalition → value map.
pub trait ValueFunction {
    fn n_features(&self) -> usize;
    fn value(&mut self, s: Coalition) -> Result<f64>;
}

/// A game given by an explicit table of `2^n` values indexed by mask.
#[derive(Debug, Clone, PartialEq)]
pub struct TableGame {
    n: usize,
    values: Vec<f64>,
}

impl TableGame {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if n >= 32 || values.len() != 1usize << n {
            return Err(AsvError::InvalidArgument(format!(
                "table for {n} features needs 2^{n} entries, got {}",
                values.len()
            )));
        }
        Ok(Self { n, values })
    }

    pub fn from_fn<F: FnMut(Coalition) -> f64>(n: usize, mut f: F) -> Self {
        let values = Coalition::all(n).map(&mut f).collect();
        Self { n, values }
    }

    pub fn get(&self, s: Coalition) -> f64 {
        self.values[s.bits() as usize]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `alpha·self + beta·other`.
    pub fn combine(&self, alpha: f64, other: &TableGame, beta: f64) -> TableGame {
        assert_eq!(self.n, other.n);
        TableGame {
            n: self.n,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(u, v)| alpha * u + beta * v)
                .collect(),
        }
    }
}

impl ValueFunction for TableGame {
    fn n_features(&self) -> usize {
        self.n
    }

    fn value(&mut self, s: Coalition) -> Result<f64> {
        if s.n() != self.n {
            return Err(AsvError::DimensionMismatch {
                expected: self.n,
                found: s.n(),
            });
        }
        Ok(self.get(s))
    }
}

/// Takes feature `i` from `x` when `i ∈ s`, otherwise from `x_prime`.
pub fn splice(x: &[f64], s: Coalition, x_prime: &[f64]) -> Result<Vec<f64>> {
    if x.len() != x_prime.len() || s.n() != x.len() {
        return Err(AsvError::Schema(format!(
            "cannot splice points of arity {} and {} over {} features",
            x.len(),
            x_prime.len(),
            s.n()
        )));
    }
    let mut out = x_prime.to_vec();
    overwrite_with(&mut out, x, s);
    Ok(out)
}

/// Copies the members of `s` from `x` into `out`.
pub(crate) fn overwrite_with(out: &mut [f64], x: &[f64], s: Coalition) {
    for i in s.iter() {
        out[i] = x[i];
    }
}

/// Background sample for off-manifold marginalisation.
#[derive(Debug, Clone)]
pub struct BackgroundSet {
    n_features: usize,
    values: Vec<f64>,
    weights: Option<WeightedIndex<f64>>,
}

impl BackgroundSet {
    pub fn new(rows: Vec<Vec<f64>>, weights: Option<Vec<f64>>) -> Result<Self> {
        let first = rows.first().ok_or(AsvError::EmptyBackground)?;
        let n_features = first.len();
        let mut values = Vec::with_capacity(rows.len() * n_features);
        for r in &rows {
            if r.len() != n_features {
                return Err(AsvError::DimensionMismatch {
                    expected: n_features,
                    found: r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        let weights = match weights {
            None => None,
            Some(w) => {
                if w.len() != rows.len() {
                    return Err(AsvError::DimensionMismatch {
                        expected: rows.len(),
                        found: w.len(),
                    });
                }
                Some(WeightedIndex::new(&w).map_err(|e| {
                    AsvError::InvalidArgument(format!("invalid background weights: {e}"))
                })?)
            }
        };
        Ok(Self {
            n_features,
            values,
            weights,
        })
    }

    pub fn from_dataset(data: &Dataset) -> Result<Self> {
        if data.is_empty() {
            return Err(AsvError::EmptyBackground);
        }
        Ok(Self {
            n_features: data.n_features(),
            values: data.rows().flatten().copied().collect(),
            weights: None,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.n_features.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn is_weighted(&self) -> bool {
        self.weights.is_some()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_features..(i + 1) * self.n_features]
    }

    /// Rows to average over for `m` requested samples. When `m` covers an
    /// unweighted background, every row is used once and the mean is exact.
    pub fn draw<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> BackgroundDraw {
        let n = self.len();
        match &self.weights {
            None if m >= n => BackgroundDraw {
                rows: (0..n).collect(),
                exact: true,
            },
            None => BackgroundDraw {
                rows: (0..m).map(|_| rng.random_range(0..n)).collect(),
                exact: false,
            },
            Some(w) => BackgroundDraw {
                rows: (0..m).map(|_| w.sample(rng)).collect(),
                exact: false,
            },
        }
    }
}

/// A frozen selection of background rows.
#[derive(Debug, Clone)]
pub struct BackgroundDraw {
    rows: Vec<usize>,
    exact: bool,
}

fn check_point(pred: &dyn Predictor, x: &[f64], y: usize, s: Coalition) -> Result<()> {
    if x.len() != pred.n_features() || s.n() != x.len() {
        return Err(AsvError::DimensionMismatch {
            expected: pred.n_features(),
            found: x.len(),
        });
    }
    if y >= pred.n_classes() {
        return Err(AsvError::InvalidArgument(format!(
            "class {y} out of range for {} classes",
            pred.n_classes()
        )));
    }
    Ok(())
}

fn mean_over_background(
    pred: &dyn Predictor,
    x: &[f64],
    y: usize,
    s: Coalition,
    bg: &BackgroundSet,
    draw: &BackgroundDraw,
) -> Estimate {
    let mut moments = RunningMoments::new();
    let mut point = vec![0.0; x.len()];
    for &r in &draw.rows {
        point.copy_from_slice(bg.row(r));
        overwrite_with(&mut point, x, s);
        moments.push(pred.predict_class_proba(&point, y));
    }
    let mut est = moments.estimate();
    if draw.exact {
        est.stderr = 0.0;
    }
    est
}

/// Unconditional (off-manifold) marginalisation of the features outside `s`.
pub fn off_manifold_value<R: Rng + ?Sized>(
    pred: &dyn Predictor,
    x: &[f64],
    y: usize,
    s: Coalition,
    bg: &BackgroundSet,
    m: usize,
    rng: &mut R,
) -> Result<Estimate> {
    check_point(pred, x, y, s)?;
    if bg.is_empty() {
        return Err(AsvError::EmptyBackground);
    }
    if bg.n_features() != x.len() {
        return Err(AsvError::DimensionMismatch {
            expected: x.len(),
            found: bg.n_features(),
        });
    }
    if m == 0 {
        return Err(AsvError::InvalidArgument("sample count must be at least 1".into()));
    }
    if s.is_full() {
        return Ok(Estimate::exact(pred.predict_class_proba(x, y)));
    }
    let draw = bg.draw(m, rng);
    Ok(mean_over_background(pred, x, y, s, bg, &draw))
}

/// Conditional (on-manifold) marginalisation of the features outside `s`.
pub fn on_manifold_value<R: Rng>(
    pred: &dyn Predictor,
    x: &[f64],
    y: usize,
    s: Coalition,
    cond: &ConditionalSampler,
    m: usize,
    rng: &mut R,
) -> Result<Estimate> {
    check_point(pred, x, y, s)?;
    if m == 0 {
        return Err(AsvError::InvalidArgument("sample count must be at least 1".into()));
    }
    if s.is_full() {
        return Ok(Estimate::exact(pred.predict_class_proba(x, y)));
    }
    cond.expectation(pred, x, y, s, m, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    OffManifold,
    ExactMatch,
    Knn,
    /// Exact-match when every conditioning feature is discrete, k-NN otherwise.
    Empirical,
    Generative,
}

/// Which class a local explanation attributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ClassChoice {
    #[default]
    TrueLabel,
    Argmax,
}

fn default_k() -> usize {
    10
}

fn default_samples() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueConfig {
    pub strategy: Strategy,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    pub seed: u64,
    #[serde(default)]
    pub class: ClassChoice,
}

impl ValueConfig {
    pub fn new(strategy: Strategy, samples: usize, seed: u64) -> Self {
        Self {
            strategy,
            k: default_k(),
            samples,
            seed,
            class: ClassChoice::TrueLabel,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(AsvError::InvalidArgument("samples must be at least 1".into()));
        }
        if self.k == 0 {
            return Err(AsvError::InvalidArgument("k must be at least 1".into()));
        }
        Ok(())
    }
}

/// The marginalisation backing a value function.
#[derive(Debug)]
pub enum Marginalizer {
    Off(BackgroundSet),
    On(ConditionalSampler),
}

impl Marginalizer {
    /// Builds the marginaliser named by `config.strategy` from a reference
    /// dataset and, for the generative strategy, a process.
    pub fn from_config(
        config: &ValueConfig,
        reference: Arc<Dataset>,
        process: Option<Arc<dyn GenerativeProcess>>,
    ) -> Result<Self> {
        config.validate()?;
        Ok(match config.strategy {
            Strategy::OffManifold => Marginalizer::Off(BackgroundSet::from_dataset(&reference)?),
            Strategy::ExactMatch => {
                Marginalizer::On(ConditionalSampler::exact_match(reference, config.k)?)
            }
            Strategy::Knn => Marginalizer::On(ConditionalSampler::knn(reference, config.k)?),
            Strategy::Empirical => {
                Marginalizer::On(ConditionalSampler::empirical(reference, config.k)?)
            }
            Strategy::Generative => {
                let process = process.ok_or_else(|| {
                    AsvError::StrategyMismatch(
                        "generative strategy needs a generative process".into(),
                    )
                })?;
                Marginalizer::On(ConditionalSampler::generative(process))
            }
        })
    }
}

/// A predictor, marginaliser and value configuration: everything needed to
/// build per-point value functions.
#[derive(Clone, Copy)]
pub struct Explainer<'a> {
    pub predictor: &'a dyn Predictor,
    pub marginalizer: &'a Marginalizer,
    pub config: &'a ValueConfig,
}

impl<'a> Explainer<'a> {
    pub fn new(
        predictor: &'a dyn Predictor,
        marginalizer: &'a Marginalizer,
        config: &'a ValueConfig,
    ) -> Self {
        Self {
            predictor,
            marginalizer,
            config,
        }
    }

    /// The class to explain for a point with true label `label`.
    pub fn class_for(&self, x: &[f64], label: usize) -> usize {
        match self.config.class {
            ClassChoice::TrueLabel => label,
            ClassChoice::Argmax => self.predictor.predict_class(x),
        }
    }

    /// A memoising value function for one data point. All Monte Carlo draws
    /// are keyed on `seed`.
    pub fn value_fn(&self, x: &[f64], y: usize, seed: u64) -> CachedValueFn<'a> {
        CachedValueFn {
            predictor: self.predictor,
            marginalizer: self.marginalizer,
            x: x.to_vec(),
            y,
            samples: self.config.samples,
            seed,
            frozen_background: None,
            cache: HashMap::new(),
            stats: CacheStats::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CacheStats {
    pub hits: usize,
    pub misses: usize,
    /// Predictor evaluations spent filling the cache.
    pub model_evaluations: usize,
}

/// Memoised value function for one (predictor, point, class, strategy, seed).
///
/// Off-manifold values share a single frozen set of background rows across
/// coalitions. On-manifold values draw their completions from a stream
/// keyed on the coalition, so the value of a coalition does not depend on
/// query order.
pub struct CachedValueFn<'a> {
    predictor: &'a dyn Predictor,
    marginalizer: &'a Marginalizer,
    x: Vec<f64>,
    y: usize,
    samples: usize,
    seed: u64,
    frozen_background: Option<BackgroundDraw>,
    cache: HashMap<Coalition, Estimate>,
    stats: CacheStats,
}

impl CachedValueFn<'_> {
    pub fn point(&self) -> &[f64] {
        &self.x
    }

    pub fn class(&self) -> usize {
        self.y
    }

    pub fn stats(&self) -> CacheStats {
        self.stats
    }

    pub fn len(&self) -> usize {
        self.cache.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cache.is_empty()
    }

    pub fn estimate(&mut self, s: Coalition) -> Result<Estimate> {
        if let Some(e) = self.cache.get(&s) {
            self.stats.hits += 1;
            return Ok(*e);
        }
        check_point(self.predictor, &self.x, self.y, s)?;
        let est = if s.is_full() {
            Estimate::exact(self.predictor.predict_class_proba(&self.x, self.y))
        } else {
            match self.marginalizer {
                Marginalizer::Off(bg) => {
                    if bg.n_features() != self.x.len() {
                        return Err(AsvError::DimensionMismatch {
                            expected: self.x.len(),
                            found: bg.n_features(),
                        });
                    }
                    let (samples, seed) = (self.samples, self.seed);
                    let draw = self.frozen_background.get_or_insert_with(|| {
                        bg.draw(samples, &mut stream(seed, STREAM_BACKGROUND))
                    });
                    mean_over_background(self.predictor, &self.x, self.y, s, bg, draw)
                }
                Marginalizer::On(cond) => {
                    let mut rng = stream(self.seed, s.bits());
                    on_manifold_value(
                        self.predictor,
                        &self.x,
                        self.y,
                        s,
                        cond,
                        self.samples,
                        &mut rng,
                    )?
                }
            }
        };
        self.stats.misses += 1;
        self.stats.model_evaluations += est.n_samples;
        self.cache.insert(s, est);
        Ok(est)
    }
}

impl ValueFunction for CachedValueFn<'_> {
    fn n_features(&self) -> usize {
        self.x.len()
    }

    fn value(&mut self, s: Coalition) -> Result<f64> {
        self.estimate(s).map(|e| e.value)
    }
}

/// Weighted mean of `f_y` over an explicit discrete distribution of points.
pub(crate) fn expectation_over_support(
    pred: &dyn Predictor,
    y: usize,
    support: &[(f64, Vec<f64>)],
) -> Estimate {
    let mut num = NeumaierSum::new();
    let mut den = NeumaierSum::new();
    for (w, point) in support {
        num.add(w * pred.predict_class_proba(point, y));
        den.add(*w);
    }
    Estimate {
        value: num.total() / den.total(),
        stderr: 0.0,
        n_samples: support.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Column, Schema};
    use crate::stats::sigmoid;

    /// Logistic model on three binary features.
    struct LinearLogit {
        w: [f64; 3],
        b: f64,
    }

    impl Predictor for LinearLogit {
        fn n_features(&self) -> usize {
            3
        }
        fn n_classes(&self) -> usize {
            2
        }
        fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
            let z = self.b + self.w.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            let p = sigmoid(z);
            vec![1.0 - p, p]
        }
    }

    struct Constant(f64);

    impl Predictor for Constant {
        fn n_features(&self) -> usize {
            3
        }
        fn n_classes(&self) -> usize {
            2
        }
        fn predict_proba(&self, _x: &[f64]) -> Vec<f64> {
            vec![1.0 - self.0, self.0]
        }
    }

    fn binary_cube() -> BackgroundSet {
        let rows = (0..8)
            .map(|m| (0..3).map(|i| ((m >> i) & 1) as f64).collect())
            .collect();
        BackgroundSet::new(rows, None).unwrap()
    }

    #[test]
    fn splice_examples() {
        let x = [1.0, 2.0, 3.0];
        let xp = [4.0, 5.0, 6.0];
        assert_eq!(splice(&x, Coalition::full(3), &xp).unwrap(), x);
        assert_eq!(splice(&x, Coalition::empty(3), &xp).unwrap(), xp);
        let s = Coalition::from_indices(3, [0, 2]).unwrap();
        assert_eq!(splice(&x, s, &xp).unwrap(), vec![1.0, 5.0, 3.0]);
        assert!(splice(&x, s, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn full_coalition_is_exact_prediction() {
        let f = LinearLogit { w: [1.0, -2.0, 0.5], b: 0.1 };
        let x = [1.0, 0.0, 1.0];
        let mut rng = stream(0, 0);
        let e = off_manifold_value(&f, &x, 1, Coalition::full(3), &binary_cube(), 3, &mut rng)
            .unwrap();
        assert_eq!(e.value, f.predict_proba(&x)[1]);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn constant_predictor_has_constant_value() {
        let f = Constant(0.3);
        let mut rng = stream(0, 0);
        for bits in 0..8u64 {
            let s = Coalition::from_bits(3, bits).unwrap();
            let e = off_manifold_value(&f, &[0.0, 1.0, 0.0], 1, s, &binary_cube(), 5, &mut rng)
                .unwrap();
            assert_eq!(e.value, 0.3);
            assert_eq!(e.stderr, 0.0);
        }
    }

    #[test]
    fn linear_logit_matches_brute_force_completion_average() {
        let f = LinearLogit { w: [1.0, -2.0, 0.5], b: 0.1 };
        let x = [1.0, 1.0, 0.0];
        let s = Coalition::from_indices(3, [0]).unwrap();
        // Oracle: average over the 4 completions of features 1 and 2; every
        // completion appears twice in the binary cube background.
        let mut expected = 0.0;
        for x1 in [0.0, 1.0] {
            for x2 in [0.0, 1.0] {
                expected += sigmoid(0.1 + 1.0 * x[0] - 2.0 * x1 + 0.5 * x2) / 4.0;
            }
        }
        let mut rng = stream(0, 0);
        let e = off_manifold_value(&f, &x, 1, s, &binary_cube(), 8, &mut rng).unwrap();
        assert!((e.value - expected).abs() < 1e-15);
        assert_eq!(e.stderr, 0.0);
        assert_eq!(e.n_samples, 8);
    }

    #[test]
    fn errors() {
        let f = Constant(0.5);
        let mut rng = stream(0, 0);
        let s = Coalition::empty(3);
        assert!(BackgroundSet::new(vec![], None).is_err());
        assert!(off_manifold_value(&f, &[0.0; 3], 1, s, &binary_cube(), 0, &mut rng).is_err());
        assert!(off_manifold_value(&f, &[0.0; 2], 1, s, &binary_cube(), 1, &mut rng).is_err());
        assert!(off_manifold_value(&f, &[0.0; 3], 2, s, &binary_cube(), 1, &mut rng).is_err());
    }

    fn small_dataset() -> Arc<Dataset> {
        let schema = Arc::new(
            Schema::with_label(
                vec![
                    Column::discrete("a", 2),
                    Column::discrete("b", 2),
                    Column::discrete("c", 2),
                ],
                "y",
                2,
            )
            .unwrap(),
        );
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|r: usize| vec![(r % 2) as f64, ((r / 2) % 2) as f64, ((r * 7 / 3) % 2) as f64])
            .collect();
        let labels = (0..40).map(|r| (r / 3) % 2).collect();
        Arc::new(Dataset::new(schema, rows, labels).unwrap())
    }

    #[test]
    fn cached_value_fn_is_deterministic_and_bounded() {
        let data = small_dataset();
        let f = LinearLogit { w: [0.3, -1.0, 2.0], b: 0.0 };
        for strategy in [Strategy::OffManifold, Strategy::ExactMatch] {
            let cfg = ValueConfig::new(strategy, 5, 11);
            let marg = Marginalizer::from_config(&cfg, Arc::clone(&data), None).unwrap();
            let ex = Explainer::new(&f, &marg, &cfg);
            let mut v = ex.value_fn(data.row(3), data.label(3), 99);
            let s = Coalition::from_indices(3, [1]).unwrap();
            let a = v.value(s).unwrap();
            let b = v.value(s).unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
            let mut fresh = ex.value_fn(data.row(3), data.label(3), 99);
            assert_eq!(fresh.value(s).unwrap().to_bits(), a.to_bits());
            for c in Coalition::all(3) {
                v.value(c).unwrap();
            }
            assert_eq!(v.len(), 8);
            assert_eq!(v.stats().misses, 8);
        }
    }

    #[test]
    fn off_manifold_empty_coalition_ignores_the_point() {
        let data = small_dataset();
        let f = LinearLogit { w: [0.3, -1.0, 2.0], b: 0.0 };
        let cfg = ValueConfig::new(Strategy::OffManifold, 7, 5);
        let marg = Marginalizer::from_config(&cfg, Arc::clone(&data), None).unwrap();
        let ex = Explainer::new(&f, &marg, &cfg);
        let e = Coalition::empty(3);
        let a = ex.value_fn(data.row(0), 1, 42).value(e).unwrap();
        let b = ex.value_fn(data.row(5), 1, 42).value(e).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ignored_feature_gives_identical_values_with_frozen_draws() {
        let data = small_dataset();
        // Weight on feature 1 is zero, so the predictor never reads it.
        struct IgnoresMiddle;
        impl Predictor for IgnoresMiddle {
            fn n_features(&self) -> usize {
                3
            }
            fn n_classes(&self) -> usize {
                2
            }
            fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
                let p = sigmoid(0.7 * x[0] - 1.3 * x[2] + 0.2);
                vec![1.0 - p, p]
            }
        }
        let cfg = ValueConfig::new(Strategy::OffManifold, 9, 3);
        let marg = Marginalizer::from_config(&cfg, Arc::clone(&data), None).unwrap();
        let ex = Explainer::new(&IgnoresMiddle, &marg, &cfg);
        let mut v = ex.value_fn(data.row(7), data.label(7), 8);
        for s in Coalition::all(3).filter(|s| !s.contains(1)) {
            assert_eq!(v.value(s).unwrap().to_bits(), v.value(s.with(1)).unwrap().to_bits());
        }
    }

    #[test]
    fn generative_strategy_requires_process() {
        let cfg = ValueConfig::new(Strategy::Generative, 5, 1);
        assert!(matches!(
            Marginalizer::from_config(&cfg, small_dataset(), None),
            Err(AsvError::StrategyMismatch(_))
        ));
    }

    #[test]
    fn config_json() {
        let cfg: ValueConfig =
            serde_json::from_str(r#"{"strategy":"knn","samples":50,"seed":3}"#).unwrap();
        assert_eq!(cfg.k, 10);
        assert_eq!(cfg.strategy, Strategy::Knn);
        assert_eq!(cfg.class, ClassChoice::TrueLabel);
        assert!(serde_json::from_str::<ValueConfig>(r#"{"strategy":"vae","seed":1}"#).is_err());
    }
}
