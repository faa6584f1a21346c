//! Local and global asymmetric Shapley values.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coalition::Coalition;
use crate::data::Dataset;
use crate::error::{AsvError, Result};
use crate::ordering::{OrderingSpec, DEFAULT_ENUMERATION_CAP};
use crate::rng::{derive_seed, stream, STREAM_PERMUTATIONS, STREAM_POINT_SELECTION};
use crate::stats::{combined_stderr, Estimate, NeumaierSum, RunningMoments};
use crate::value::{argmax, Explainer, ValueFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Exact,
    MonteCarlo,
}

/// Per-feature attributions for one value function.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttributionResult {
    pub values: Vec<Estimate>,
    /// `v({})`.
    pub baseline: f64,
    /// `v(N)`.
    pub total: f64,
    pub spec: OrderingSpec,
    pub method: Method,
    /// Orderings averaged over.
    pub n_orderings: usize,
}

impl AttributionResult {
    pub fn means(&self) -> Vec<f64> {
        self.values.iter().map(|e| e.value).collect()
    }

    pub fn sum(&self) -> f64 {
        crate::stats::compensated_sum(self.values.iter().map(|e| e.value))
    }
}

fn check_arity<V: ValueFunction + ?Sized>(v: &V, spec: &OrderingSpec) -> Result<()> {
    if v.n_features() != spec.n() {
        return Err(AsvError::DimensionMismatch {
            expected: spec.n(),
            found: v.n_features(),
        });
    }
    Ok(())
}

/// Adds `v(pred ∪ {i}) − v(pred)` to `out[i]` for each feature along `order`.
fn walk<V: ValueFunction + ?Sized>(
    v: &mut V,
    order: &[usize],
    base: f64,
    mut out: impl FnMut(usize, f64),
) -> Result<()> {
    let mut s = Coalition::empty(order.len());
    let mut prev = base;
    for &i in order {
        s = s.with(i);
        let cur = v.value(s)?;
        out(i, cur - prev);
        prev = cur;
    }
    Ok(())
}

/// Averages marginal contributions uniformly over every ordering consistent
/// with `spec`.
pub fn exact_asv<V: ValueFunction + ?Sized>(v: &mut V, spec: &OrderingSpec, cap: usize) -> Result<AttributionResult> {
    check_arity(v, spec)?;
    let n = spec.n();
    let baseline = v.value(Coalition::empty(n))?;
    let total = v.value(Coalition::full(n))?;
    let mut sums = vec![NeumaierSum::new(); n];
    let mut count = 0usize;
    let mut failure = None;
    spec.for_each_consistent(cap, |order| {
        if failure.is_some() {
            return;
        }
        count += 1;
        if let Err(e) = walk(v, order, baseline, |i, c| sums[i].add(c)) {
            failure = Some(e);
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    if count == 0 {
        return Err(AsvError::InvalidSpec("no consistent orderings".into()));
    }
    Ok(AttributionResult {
        values: sums.iter().map(|s| Estimate::exact(s.total() / count as f64)).collect(),
        baseline,
        total,
        spec: spec.clone(),
        method: Method::Exact,
        n_orderings: count,
    })
}

/// The coalition-weighted Shapley formula, independent of any ordering
/// enumeration.
pub fn exact_shapley_subset_form<V: ValueFunction + ?Sized>(v: &mut V, cap: usize) -> Result<AttributionResult> {
    let n = v.n_features();
    if n > cap {
        return Err(AsvError::EnumerationCap { n, cap });
    }
    // weight[k] = k!(n-k-1)!/n! = 1 / (n · C(n-1, k))
    let mut weight = vec![0.0; n.max(1)];
    let mut binom = 1.0f64;
    for (k, w) in weight.iter_mut().enumerate().take(n) {
        *w = 1.0 / (n as f64 * binom);
        binom = binom * (n - 1 - k) as f64 / (k + 1) as f64;
    }
    let table: Vec<f64> = Coalition::all(n).map(|s| v.value(s)).collect::<Result<_>>()?;
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let mut acc = NeumaierSum::new();
        for s in Coalition::all(n).filter(|s| !s.contains(i)) {
            let with = table[s.with(i).bits() as usize];
            acc.add(weight[s.len()] * (with - table[s.bits() as usize]));
        }
        values.push(Estimate::exact(acc.total()));
    }
    Ok(AttributionResult {
        values,
        baseline: table[0],
        total: table[table.len() - 1],
        spec: OrderingSpec::uniform(n)?,
        method: Method::Exact,
        n_orderings: (1..=n).product(),
    })
}

/// Monte Carlo estimate from `n_perms` orderings drawn uniformly from those
/// consistent with `spec`. Each draw's contributions telescope to
/// `v(N) − v({})`.
pub fn mc_asv<V: ValueFunction + ?Sized, R: Rng + ?Sized>(
    v: &mut V,
    spec: &OrderingSpec,
    n_perms: usize,
    rng: &mut R,
) -> Result<AttributionResult> {
    check_arity(v, spec)?;
    if n_perms == 0 || (n_perms == 1 && spec.count_consistent().ok() != Some(1)) {
        return Err(AsvError::InvalidArgument(
            "at least 2 permutations are needed for a standard error".into(),
        ));
    }
    let n = spec.n();
    let baseline = v.value(Coalition::empty(n))?;
    let total = v.value(Coalition::full(n))?;
    let mut moments = vec![RunningMoments::new(); n];
    let mut draw = vec![0.0; n];
    for _ in 0..n_perms {
        let perm = spec.sample_consistent(rng)?;
        walk(v, perm.order(), baseline, |i, c| draw[i] = c)?;
        for (m, &c) in moments.iter_mut().zip(&draw) {
            m.push(c);
        }
    }
    Ok(AttributionResult {
        values: moments.iter().map(RunningMoments::estimate).collect(),
        baseline,
        total,
        spec: spec.clone(),
        method: Method::MonteCarlo,
        n_orderings: n_perms,
    })
}

/// How a global run computes each local attribution and which points it visits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalConfig {
    pub method: Method,
    /// Orderings per data point for Monte Carlo runs.
    pub permutations: usize,
    /// Maximum number of data points; `None` visits all of them.
    pub budget: Option<usize>,
    pub workers: usize,
    pub enumeration_cap: usize,
}

impl Default for GlobalConfig {
    fn default() -> Self {
        Self {
            method: Method::Exact,
            permutations: 100,
            budget: None,
            workers: 1,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
        }
    }
}

/// Dataset-level attributions with the terms of the accuracy sum rule.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlobalAttribution {
    pub feature_names: Vec<String>,
    pub values: Vec<Estimate>,
    /// `A(N) = E[f_y(x)]`: sampled-label accuracy with every feature.
    pub accuracy: Estimate,
    /// `A({})`: sampled-label accuracy with every feature marginalised.
    pub baseline_accuracy: Estimate,
    /// Fraction of visited points whose most probable class is the label.
    pub max_class_accuracy: f64,
    pub spec: OrderingSpec,
    pub method: Method,
    pub value_evaluations: usize,
    pub model_evaluations: usize,
    /// Row indices of the visited points, in increasing order.
    pub rows: Vec<usize>,
    /// Local attributions, one row per visited point.
    #[serde(skip)]
    pub local: Vec<Vec<f64>>,
    #[serde(skip)]
    pub local_baselines: Vec<f64>,
    #[serde(skip)]
    pub local_totals: Vec<f64>,
}

impl GlobalAttribution {
    pub fn means(&self) -> Vec<f64> {
        self.values.iter().map(|e| e.value).collect()
    }

    /// `Σ_i Φ(i)`.
    pub fn sum(&self) -> f64 {
        crate::stats::compensated_sum(self.values.iter().map(|e| e.value))
    }

    /// `A(N) − A({})`.
    pub fn accuracy_gain(&self) -> f64 {
        self.accuracy.value - self.baseline_accuracy.value
    }
}

/// Rows visited by a global run: all of them, or a seeded sample without
/// replacement of size `budget`, sorted.
pub fn select_points(n_rows: usize, budget: Option<usize>, seed: u64) -> Vec<usize> {
    match budget {
        Some(b) if b < n_rows => {
            let mut rng = stream(seed, STREAM_POINT_SELECTION);
            let mut rows = rand::seq::index::sample(&mut rng, n_rows, b).into_vec();
            rows.sort_unstable();
            rows
        }
        _ => (0..n_rows).collect(),
    }
}

/// Seed of the frozen draws for data row `row`.
pub fn point_seed(seed: u64, row: usize) -> u64 {
    derive_seed(seed, row as u64)
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| AsvError::InvalidArgument(format!("cannot start worker pool: {e}")))
}

fn estimate_of(samples: impl IntoIterator<Item = f64>) -> Estimate {
    let mut m = RunningMoments::new();
    for s in samples {
        m.push(s);
    }
    m.estimate()
}

struct LocalRun {
    values: Vec<f64>,
    baseline: f64,
    total: f64,
    max_class_hit: bool,
    value_evaluations: usize,
    model_evaluations: usize,
}

/// Averages local attributions over data points, explaining each point's
/// class as chosen by the value configuration (the true label by default).
pub fn global_asv(
    explainer: &Explainer<'_>,
    data: &Dataset,
    spec: &OrderingSpec,
    config: &GlobalConfig,
) -> Result<GlobalAttribution> {
    if data.is_empty() {
        return Err(AsvError::InvalidArgument("cannot explain an empty dataset".into()));
    }
    if spec.n() != data.n_features() {
        return Err(AsvError::DimensionMismatch {
            expected: data.n_features(),
            found: spec.n(),
        });
    }
    if config.method == Method::Exact && spec.n() > config.enumeration_cap {
        return Err(AsvError::EnumerationCap {
            n: spec.n(),
            cap: config.enumeration_cap,
        });
    }
    let seed = explainer.config.seed;
    let rows = select_points(data.len(), config.budget, seed);
    let run = |&r: &usize| -> Result<LocalRun> {
        let x = data.row(r);
        let y = explainer.class_for(x, data.label(r));
        let ps = point_seed(seed, r);
        let mut v = explainer.value_fn(x, y, ps);
        let local = match config.method {
            Method::Exact => exact_asv(&mut v, spec, config.enumeration_cap)?,
            Method::MonteCarlo => {
                mc_asv(&mut v, spec, config.permutations, &mut stream(ps, STREAM_PERMUTATIONS))?
            }
        };
        let stats = v.stats();
        Ok(LocalRun {
            values: local.means(),
            baseline: local.baseline,
            total: local.total,
            max_class_hit: argmax(&explainer.predictor.predict_proba(x)) == data.label(r),
            value_evaluations: stats.misses,
            model_evaluations: stats.model_evaluations,
        })
    };
    let runs: Vec<LocalRun> = pool(config.workers)?.install(|| rows.par_iter().map(run).collect::<Result<_>>())?;

    let n = spec.n();
    let values = (0..n).map(|i| estimate_of(runs.iter().map(|r| r.values[i]))).collect();
    Ok(GlobalAttribution {
        feature_names: data.schema().feature_names(),
        values,
        accuracy: estimate_of(runs.iter().map(|r| r.total)),
        baseline_accuracy: estimate_of(runs.iter().map(|r| r.baseline)),
        max_class_accuracy: runs.iter().filter(|r| r.max_class_hit).count() as f64 / runs.len() as f64,
        spec: spec.clone(),
        method: config.method,
        value_evaluations: runs.iter().map(|r| r.value_evaluations).sum(),
        model_evaluations: runs.iter().map(|r| r.model_evaluations).sum(),
        rows,
        local: runs.iter().map(|r| r.values.clone()).collect(),
        local_baselines: runs.iter().map(|r| r.baseline).collect(),
        local_totals: runs.iter().map(|r| r.total).collect(),
    })
}

/// Per-point values `v_{f_y(x)}(U)` over the given rows, with the same
/// frozen draws a global run on those rows uses.
pub fn coalition_values(explainer: &Explainer<'_>, data: &Dataset, rows: &[usize], u: Coalition) -> Result<Vec<f64>> {
    if u.n() != data.n_features() {
        return Err(AsvError::DimensionMismatch {
            expected: data.n_features(),
            found: u.n(),
        });
    }
    let seed = explainer.config.seed;
    rows.par_iter()
        .map(|&r| {
            let x = data.row(r);
            explainer.value_fn(x, data.label(r), point_seed(seed, r)).value(u)
        })
        .collect()
}

/// `A_f(U) = E_{p(x,y)}[v_{f_y(x)}(U)]`: sampled-label accuracy using only the
/// features in `u`.
pub fn accuracy_of_coalition(explainer: &Explainer<'_>, data: &Dataset, u: Coalition, budget: Option<usize>) -> Result<Estimate> {
    if data.is_empty() {
        return Err(AsvError::InvalidArgument("cannot evaluate an empty dataset".into()));
    }
    let rows = select_points(data.len(), budget, explainer.config.seed);
    Ok(estimate_of(coalition_values(explainer, data, &rows, u)?))
}

/// One group of a partition sum check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupCheck {
    pub features: Vec<usize>,
    /// `Σ_{i ∈ group} Φ(i)`.
    pub attribution_sum: Estimate,
    /// `A(U ∪ group) − A(U)` for the union `U` of earlier groups.
    pub accuracy_difference: Estimate,
    pub combined_stderr: f64,
    /// `|attribution_sum − accuracy_difference| / combined_stderr`.
    pub discrepancy: f64,
    /// Absolute gap between the two sides.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionReport {
    pub groups: Vec<GroupCheck>,
    /// Cumulative attribution sums after each group.
    pub cumulative: Vec<Estimate>,
    /// `A(U_k) − A({})` for each prefix union `U_k`.
    pub cumulative_accuracy: Vec<Estimate>,
}

/// Compares group sums of a global attribution computed under an ordered
/// group spec with accuracy differences of nested coalitions, on the same
/// points and frozen draws.
pub fn partition_sum_check(
    global: &GlobalAttribution,
    partition: &[Vec<usize>],
    explainer: &Explainer<'_>,
    data: &Dataset,
) -> Result<PartitionReport> {
    let n = global.spec.n();
    let expected = OrderingSpec::from_groups(n, partition.to_vec())?;
    if expected != global.spec {
        return Err(AsvError::InvalidSpec(
            "global attribution was not computed with this ordered partition".into(),
        ));
    }
    if global.local.len() != global.rows.len() {
        return Err(AsvError::InvalidArgument("global attribution carries no local values".into()));
    }
    let mut prefix = Coalition::empty(n);
    let mut prev_acc = global.local_baselines.clone();
    let mut cum_attr = vec![0.0; global.rows.len()];
    let mut groups = Vec::new();
    let mut cumulative = Vec::new();
    let mut cumulative_accuracy = Vec::new();
    for group in partition {
        for &i in group {
            prefix = prefix.with(i);
        }
        let acc = if prefix.is_full() {
            global.local_totals.clone()
        } else {
            coalition_values(explainer, data, &global.rows, prefix)?
        };
        let group_sums: Vec<f64> = global
            .local
            .iter()
            .map(|row| crate::stats::compensated_sum(group.iter().map(|&i| row[i])))
            .collect();
        for (c, g) in cum_attr.iter_mut().zip(&group_sums) {
            *c += g;
        }
        let attribution_sum = estimate_of(group_sums.iter().copied());
        let accuracy_difference = estimate_of(acc.iter().zip(&prev_acc).map(|(a, b)| a - b));
        let combined = combined_stderr(&[attribution_sum.stderr, accuracy_difference.stderr]);
        let gap = (attribution_sum.value - accuracy_difference.value).abs();
        groups.push(GroupCheck {
            features: group.clone(),
            attribution_sum,
            accuracy_difference,
            combined_stderr: combined,
            discrepancy: if combined > 0.0 { gap / combined } else if gap == 0.0 { 0.0 } else { f64::INFINITY },
            gap,
        });
        cumulative.push(estimate_of(cum_attr.iter().copied()));
        cumulative_accuracy.push(estimate_of(acc.iter().zip(&global.local_baselines).map(|(a, b)| a - b)));
        prev_acc = acc;
    }
    Ok(PartitionReport {
        groups,
        cumulative,
        cumulative_accuracy,
    })
}
