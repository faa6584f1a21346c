//! Conditional samplers for on-manifold value functions.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};

use super::{expectation_over_support, overwrite_with, Predictor};
use crate::coalition::Coalition;
use crate::data::Dataset;
use crate::error::{AsvError, Result};
use crate::rng::StreamRng;
use crate::scenarios::GenerativeProcess;
use crate::stats::{Estimate, RunningMoments};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionalStrategy {
    ExactMatch,
    Knn,
    Empirical,
    Generative,
}

type Group = Arc<Vec<usize>>;
type GroupIndex = HashMap<Vec<i64>, Group>;

/// Empirical conditional distribution estimated from a reference dataset.
pub struct EmpiricalConditional {
    data: Arc<Dataset>,
    k: usize,
    /// Standard deviation of each continuous feature; zero for discrete or
    /// constant features.
    scales: Vec<f64>,
    /// Discrete features ordered by increasing mutual information with the
    /// label, which is the order in which matching constraints are dropped.
    relax_order: Vec<usize>,
    all_rows: Group,
    index: Mutex<HashMap<u64, Arc<GroupIndex>>>,
    warned: Mutex<HashSet<(u64, &'static str)>>,
}

impl fmt::Debug for EmpiricalConditional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EmpiricalConditional")
            .field("rows", &self.data.len())
            .field("k", &self.k)
            .field("relax_order", &self.relax_order)
            .finish()
    }
}

impl EmpiricalConditional {
    pub fn new(data: Arc<Dataset>, k: usize) -> Result<Self> {
        if data.is_empty() {
            return Err(AsvError::EmptyBackground);
        }
        if k == 0 {
            return Err(AsvError::InvalidArgument("k must be at least 1".into()));
        }
        let d = data.n_features();
        let mut scales = vec![0.0; d];
        for (j, scale) in scales.iter_mut().enumerate() {
            if !data.schema().is_discrete(j) {
                let mut m = RunningMoments::new();
                for v in data.column(j) {
                    m.push(v);
                }
                let sd = m.variance().sqrt();
                *scale = if sd > 1e-12 { sd } else { 0.0 };
            }
        }
        let mut relax: Vec<(f64, usize)> = (0..d)
            .filter(|&j| data.schema().is_discrete(j))
            .map(|j| (mutual_information(&data, j), j))
            .collect();
        relax.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let all_rows = Arc::new((0..data.len()).collect());
        Ok(Self {
            data,
            k,
            scales,
            relax_order: relax.into_iter().map(|(_, j)| j).collect(),
            all_rows,
            index: Mutex::new(HashMap::new()),
            warned: Mutex::new(HashSet::new()),
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.data
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn relaxation_order(&self) -> &[usize] {
        &self.relax_order
    }

    fn warn_once(&self, s: Coalition, what: &'static str, msg: impl FnOnce() -> String) {
        let mut warned = self.warned.lock().unwrap_or_else(|e| e.into_inner());
        if warned.insert((s.bits(), what)) {
            log::warn!("{}", msg());
        }
    }

    fn key(x: &[f64], mask: Coalition) -> Vec<i64> {
        mask.iter().map(|j| x[j].round() as i64).collect()
    }

    /// Rows whose discrete features in `mask` equal those of `x`.
    fn matching_rows(&self, x: &[f64], mask: Coalition) -> Option<Group> {
        if mask.is_empty() {
            return Some(Arc::clone(&self.all_rows));
        }
        let groups = {
            let mut index = self.index.lock().unwrap_or_else(|e| e.into_inner());
            Arc::clone(index.entry(mask.bits()).or_insert_with(|| {
                let mut g: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
                for (r, row) in self.data.rows().enumerate() {
                    g.entry(Self::key(row, mask)).or_default().push(r);
                }
                Arc::new(g.into_iter().map(|(k, v)| (k, Arc::new(v))).collect())
            }))
        };
        groups.get(&Self::key(x, mask)).cloned()
    }

    fn discrete_part(&self, s: Coalition) -> Coalition {
        let mut d = s;
        for j in s.iter() {
            if !self.data.schema().is_discrete(j) {
                d = d.without(j);
            }
        }
        d
    }

    /// Reference rows that exactly match `x` on `s`, or `None` if there are
    /// none. Fails if `s` contains a continuous feature.
    pub fn exact_match(&self, x: &[f64], s: Coalition) -> Result<Option<Group>> {
        if self.discrete_part(s) != s {
            return Err(AsvError::StrategyMismatch(format!(
                "exact matching needs discrete conditioning features, coalition {s:?} has continuous ones"
            )));
        }
        Ok(self.matching_rows(x, s))
    }

    /// The `k` reference rows nearest to `x` on the continuous features of
    /// `s`, among rows matching `x` on its discrete features. When no row
    /// matches, discrete constraints are dropped one by one, least
    /// informative about the label first.
    pub fn nearest(&self, x: &[f64], s: Coalition) -> Group {
        let mut discrete = self.discrete_part(s);
        let continuous: Vec<usize> = s.iter().filter(|&j| !discrete.contains(j)).collect();
        let group = loop {
            if let Some(g) = self.matching_rows(x, discrete) {
                break g;
            }
            let drop = *self
                .relax_order
                .iter()
                .find(|&&j| discrete.contains(j))
                .expect("empty discrete mask always matches");
            self.warn_once(s, "relax", || {
                format!(
                    "no reference row matches coalition {s:?}; relaxing discrete feature {}",
                    self.data.schema().feature(drop).name
                )
            });
            discrete = discrete.without(drop);
        };
        if continuous.is_empty() || group.len() <= self.k {
            return group;
        }
        let mut dist: Vec<(f64, usize)> = group
            .iter()
            .map(|&r| {
                let row = self.data.row(r);
                let d2 = continuous
                    .iter()
                    .filter(|&&j| self.scales[j] > 0.0)
                    .map(|&j| {
                        let z = (x[j] - row[j]) / self.scales[j];
                        z * z
                    })
                    .sum::<f64>();
                (d2, r)
            })
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        dist.select_nth_unstable_by(self.k - 1, cmp);
        dist.truncate(self.k);
        dist.sort_by(cmp);
        Arc::new(dist.into_iter().map(|(_, r)| r).collect())
    }
}

/// Empirical mutual information (nats) between a discrete feature and the label.
fn mutual_information(data: &Dataset, j: usize) -> f64 {
    let n = data.len() as f64;
    let mut joint: HashMap<(i64, usize), f64> = HashMap::new();
    let mut px: HashMap<i64, f64> = HashMap::new();
    let mut py: HashMap<usize, f64> = HashMap::new();
    for (r, row) in data.rows().enumerate() {
        let v = row[j].round() as i64;
        let y = data.label(r);
        *joint.entry((v, y)).or_default() += 1.0;
        *px.entry(v).or_default() += 1.0;
        *py.entry(y).or_default() += 1.0;
    }
    joint
        .iter()
        .map(|(&(v, y), &c)| c / n * (c * n / (px[&v] * py[&y])).ln())
        .sum()
}

/// Source of draws from `p(x' | x'_S = x_S)`.
#[derive(Debug)]
pub struct ConditionalSampler {
    strategy: ConditionalStrategy,
    empirical: Option<EmpiricalConditional>,
    process: Option<Arc<dyn GenerativeProcess>>,
}

impl ConditionalSampler {
    pub fn exact_match(data: Arc<Dataset>, k: usize) -> Result<Self> {
        Self::empirical_with(ConditionalStrategy::ExactMatch, data, k)
    }

    pub fn knn(data: Arc<Dataset>, k: usize) -> Result<Self> {
        Self::empirical_with(ConditionalStrategy::Knn, data, k)
    }

    pub fn empirical(data: Arc<Dataset>, k: usize) -> Result<Self> {
        Self::empirical_with(ConditionalStrategy::Empirical, data, k)
    }

    fn empirical_with(strategy: ConditionalStrategy, data: Arc<Dataset>, k: usize) -> Result<Self> {
        Ok(Self {
            strategy,
            empirical: Some(EmpiricalConditional::new(data, k)?),
            process: None,
        })
    }

    pub fn generative(process: Arc<dyn GenerativeProcess>) -> Self {
        Self {
            strategy: ConditionalStrategy::Generative,
            empirical: None,
            process: Some(process),
        }
    }

    pub fn strategy(&self) -> ConditionalStrategy {
        self.strategy
    }

    /// Reference rows standing in for the conditional distribution at
    /// `(x, s)` under an empirical strategy.
    pub fn candidates(&self, x: &[f64], s: Coalition) -> Result<Group> {
        let emp = self.empirical.as_ref().ok_or_else(|| {
            AsvError::StrategyMismatch("generative sampler has no reference rows".into())
        })?;
        match self.strategy {
            ConditionalStrategy::ExactMatch => match emp.exact_match(x, s)? {
                Some(g) => Ok(g),
                None => {
                    emp.warn_once(s, "fallback", || {
                        format!("no exact match for coalition {s:?}; falling back to k-NN")
                    });
                    Ok(emp.nearest(x, s))
                }
            },
            ConditionalStrategy::Empirical => {
                if emp.discrete_part(s) == s {
                    if let Some(g) = emp.matching_rows(x, s) {
                        return Ok(g);
                    }
                }
                Ok(emp.nearest(x, s))
            }
            ConditionalStrategy::Knn => Ok(emp.nearest(x, s)),
            ConditionalStrategy::Generative => unreachable!("generative sampler has no reference rows"),
        }
    }

    /// `E[f_y(x_S, X'_{S̄}) | X'_S = x_S]`, estimated with `m` draws.
    pub(crate) fn expectation<R: Rng>(
        &self,
        pred: &dyn Predictor,
        x: &[f64],
        y: usize,
        s: Coalition,
        m: usize,
        rng: &mut R,
    ) -> Result<Estimate> {
        if let Some(process) = &self.process {
            if let Some(support) = process.completion_support(x, s)? {
                return Ok(expectation_over_support(pred, y, &support));
            }
            let mut seeded = StreamRng::from_rng(rng);
            let mut moments = RunningMoments::new();
            for _ in 0..m {
                let point = process.complete(x, s, &mut seeded)?;
                moments.push(pred.predict_class_proba(&point, y));
            }
            return Ok(moments.estimate());
        }
        let emp = self.empirical.as_ref().expect("empirical sampler");
        let rows = self.candidates(x, s)?;
        let mut moments = RunningMoments::new();
        let mut point = vec![0.0; x.len()];
        let exact = m >= rows.len();
        let mut eval = |r: usize, moments: &mut RunningMoments| {
            point.copy_from_slice(emp.data.row(r));
            overwrite_with(&mut point, x, s);
            moments.push(pred.predict_class_proba(&point, y));
        };
        if exact {
            for &r in rows.iter() {
                eval(r, &mut moments);
            }
        } else {
            for _ in 0..m {
                eval(rows[rng.random_range(0..rows.len())], &mut moments);
            }
        }
        let mut est = moments.estimate();
        if exact {
            est.stderr = 0.0;
        }
        Ok(est)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Column, Schema};

    fn mixed_data() -> Arc<Dataset> {
        let schema = Arc::new(
            Schema::with_label(
                vec![
                    Column::discrete("g", 2),
                    Column::continuous("s"),
                    Column::discrete("d", 3),
                    Column::continuous("const"),
                ],
                "y",
                2,
            )
            .unwrap(),
        );
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|r| vec![(r % 2) as f64, r as f64, (r % 3) as f64, 5.0])
            .collect();
        // The label copies g, so g is informative and d is not.
        let labels = (0..30).map(|r| r % 2).collect();
        Arc::new(Dataset::new(schema, rows, labels).unwrap())
    }

    #[test]
    fn relaxation_drops_least_informative_first() {
        let emp = EmpiricalConditional::new(mixed_data(), 3).unwrap();
        assert_eq!(emp.relaxation_order(), &[2, 0]);
    }

    #[test]
    fn exact_match_groups() {
        let emp = EmpiricalConditional::new(mixed_data(), 3).unwrap();
        let x = [1.0, 0.0, 2.0, 5.0];
        let s = Coalition::from_indices(4, [0, 2]).unwrap();
        let rows = emp.exact_match(&x, s).unwrap().unwrap();
        assert_eq!(*rows, vec![5, 11, 17, 23, 29]);
        let cont = Coalition::from_indices(4, [1]).unwrap();
        assert!(matches!(emp.exact_match(&x, cont), Err(AsvError::StrategyMismatch(_))));
        let unseen = [1.0, 0.0, 7.0, 5.0];
        assert!(emp.exact_match(&unseen, s).unwrap().is_none());
    }

    #[test]
    fn nearest_neighbours_within_discrete_match() {
        let emp = EmpiricalConditional::new(mixed_data(), 2).unwrap();
        let x = [0.0, 13.2, 0.0, 5.0];
        let s = Coalition::from_indices(4, [0, 1, 3]).unwrap();
        // Even rows only; nearest on s are 14 then 12. The constant column
        // does not contribute.
        assert_eq!(*emp.nearest(&x, s), vec![14, 12]);
    }

    #[test]
    fn unseen_discrete_value_is_relaxed() {
        let emp = EmpiricalConditional::new(mixed_data(), 2).unwrap();
        let x = [1.0, 4.0, 9.0, 5.0];
        let s = Coalition::from_indices(4, [0, 1, 2]).unwrap();
        // d = 9 never occurs, so d is dropped and g = 1 is kept.
        assert_eq!(*emp.nearest(&x, s), vec![3, 5]);
    }
}
