//! Precedence constraints over feature orderings.
//!
//! An [`OrderingSpec`] describes the distribution over permutations that is
//! uniform on every permutation consistent with its constraints (its linear
//! extensions) and zero elsewhere. Constraints come in two forms: an ordered
//! partition into groups, where every member of an earlier group precedes
//! every member of a later one, and individual `i → j` edges. With neither,
//! the spec is the uniform distribution over all `n!` permutations.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coalition::{Coalition, Permutation, MAX_FEATURES};
use crate::error::{AsvError, Result};

pub const DEFAULT_ENUMERATION_CAP: usize = 10;
pub const DEFAULT_MAX_REJECTIONS: u64 = 1_000_000;
/// Largest `n` for which extensions of edge-constrained specs are counted by
/// dynamic programming over subsets.
pub const COUNT_DP_CAP: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct OrderingSpec {
    n: usize,
    groups: Vec<Vec<usize>>,
    edges: Vec<(usize, usize)>,
    /// Direct predecessors of each feature as a mask.
    predecessors: Vec<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawSpec {
    n: usize,
    #[serde(default)]
    groups: Vec<Vec<usize>>,
    #[serde(default)]
    edges: Vec<[usize; 2]>,
}

impl TryFrom<RawSpec> for OrderingSpec {
    type Error = AsvError;
    fn try_from(raw: RawSpec) -> Result<Self> {
        OrderingSpec::new(
            raw.n,
            raw.groups,
            raw.edges.into_iter().map(|[i, j]| (i, j)).collect(),
        )
    }
}

impl From<OrderingSpec> for RawSpec {
    fn from(spec: OrderingSpec) -> RawSpec {
        RawSpec {
            n: spec.n,
            groups: spec.groups,
            edges: spec.edges.into_iter().map(|(i, j)| [i, j]).collect(),
        }
    }
}

impl OrderingSpec {
    /// Validates and builds a spec. `groups` may be empty (no group
    /// structure); if given it must partition `0..n`.
    pub fn new(n: usize, groups: Vec<Vec<usize>>, edges: Vec<(usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(AsvError::InvalidSpec("spec must cover at least one feature".into()));
        }
        if n > MAX_FEATURES {
            return Err(AsvError::InvalidSpec(format!(
                "at most {MAX_FEATURES} features supported, got {n}"
            )));
        }
        let mut predecessors = vec![0u64; n];
        if !groups.is_empty() {
            let mut seen = 0u64;
            for group in &groups {
                if group.is_empty() {
                    return Err(AsvError::InvalidSpec("empty group".into()));
                }
                let mut mask = 0u64;
                for &i in group {
                    if i >= n {
                        return Err(AsvError::IndexOutOfRange { index: i, n });
                    }
                    if (seen | mask) & (1 << i) != 0 {
                        return Err(AsvError::InvalidSpec(format!(
                            "feature {i} appears in more than one group"
                        )));
                    }
                    mask |= 1 << i;
                }
                for &i in group {
                    predecessors[i] |= seen;
                }
                seen |= mask;
            }
            if seen != Coalition::full(n).bits() {
                let missing: Vec<usize> =
                    (0..n).filter(|i| seen & (1 << i) == 0).collect();
                return Err(AsvError::InvalidSpec(format!(
                    "groups must cover every feature; missing {missing:?}"
                )));
            }
        }
        for &(i, j) in &edges {
            for k in [i, j] {
                if k >= n {
                    return Err(AsvError::IndexOutOfRange { index: k, n });
                }
            }
            if i == j {
                return Err(AsvError::CyclicSpec);
            }
            predecessors[j] |= 1 << i;
        }
        let spec = Self {
            n,
            groups,
            edges,
            predecessors,
        };
        spec.check_acyclic()?;
        Ok(spec)
    }

    /// No constraints: uniform over all permutations.
    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(n, Vec::new(), Vec::new())
    }

    pub fn from_groups(n: usize, groups: Vec<Vec<usize>>) -> Result<Self> {
        Self::new(n, groups, Vec::new())
    }

    pub fn from_edges(n: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        Self::new(n, Vec::new(), edges)
    }

    /// Total order `0 → 1 → … → n-1`, expressed as singleton groups.
    pub fn chain(n: usize) -> Result<Self> {
        Self::from_groups(n, (0..n).map(|i| vec![i]).collect())
    }

    /// Every feature in `before` precedes every feature in `after`; all other
    /// pairs are unconstrained.
    pub fn precedence(n: usize, before: &[usize], after: &[usize]) -> Result<Self> {
        let edges = before
            .iter()
            .flat_map(|&i| after.iter().map(move |&j| (i, j)))
            .collect();
        Self::from_edges(n, edges)
    }

    /// A random consistent spec: a hidden permutation is cut into groups
    /// (or left ungrouped) and edges are drawn only forward along it.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self> {
        let mut hidden: Vec<usize> = (0..n).collect();
        hidden.shuffle(rng);
        let groups = if rng.random_bool(0.5) {
            let mut groups = vec![vec![hidden[0]]];
            for &i in &hidden[1..] {
                if rng.random_bool(0.4) {
                    groups.push(vec![i]);
                } else {
                    groups.last_mut().expect("nonempty").push(i);
                }
            }
            groups
        } else {
            Vec::new()
        };
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if rng.random_bool(0.15) {
                    edges.push((hidden[a], hidden[b]));
                }
            }
        }
        Self::new(n, groups, edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn is_unconstrained(&self) -> bool {
        self.edges.is_empty() && self.groups.len() <= 1
    }

    /// Reverses every precedence: group order is flipped and each edge `i → j`
    /// becomes `j → i`.
    pub fn reversed(&self) -> Self {
        let groups: Vec<Vec<usize>> = self.groups.iter().rev().cloned().collect();
        let edges: Vec<(usize, usize)> = self.edges.iter().map(|&(i, j)| (j, i)).collect();
        Self::new(self.n, groups, edges).expect("reversal preserves validity")
    }

    fn check_acyclic(&self) -> Result<()> {
        // Kahn's algorithm on the predecessor masks.
        let mut placed = 0u64;
        for _ in 0..self.n {
            let next = (0..self.n).find(|&i| {
                placed & (1 << i) == 0 && self.predecessors[i] & !placed == 0
            });
            match next {
                Some(i) => placed |= 1 << i,
                None => return Err(AsvError::CyclicSpec),
            }
        }
        Ok(())
    }

    pub fn is_consistent(&self, perm: &Permutation) -> Result<bool> {
        if perm.n() != self.n {
            return Err(AsvError::DimensionMismatch {
                expected: self.n,
                found: perm.n(),
            });
        }
        Ok(self.respects(perm.order()))
    }

    fn respects(&self, order: &[usize]) -> bool {
        let mut placed = 0u64;
        for &i in order {
            if self.predecessors[i] & !placed != 0 {
                return false;
            }
            placed |= 1 << i;
        }
        true
    }

    /// Calls `visit` on every consistent permutation in lexicographic order.
    pub fn for_each_consistent<F: FnMut(&[usize])>(&self, cap: usize, mut visit: F) -> Result<()> {
        if self.n > cap {
            return Err(AsvError::EnumerationCap { n: self.n, cap });
        }
        let mut order = Vec::with_capacity(self.n);
        self.extend(&mut order, 0, &mut visit);
        Ok(())
    }

    fn extend<F: FnMut(&[usize])>(&self, order: &mut Vec<usize>, placed: u64, visit: &mut F) {
        if order.len() == self.n {
            visit(order);
            return;
        }
        for i in 0..self.n {
            if placed & (1 << i) == 0 && self.predecessors[i] & !placed == 0 {
                order.push(i);
                self.extend(order, placed | (1 << i), visit);
                order.pop();
            }
        }
    }

    /// The linear extensions of the precedence relation.
    pub fn enumerate_consistent(&self, cap: usize) -> Result<Vec<Permutation>> {
        let mut out = Vec::new();
        self.for_each_consistent(cap, |order| {
            out.push(Permutation::from_vec_unchecked(order.to_vec()))
        })?;
        Ok(out)
    }

    /// Number of consistent permutations. Group-only specs use the product
    /// of group-size factorials; edge constraints are counted by dynamic
    /// programming over downsets for `n <= COUNT_DP_CAP`.
    pub fn count_consistent(&self) -> Result<u128> {
        if self.edges.is_empty() {
            let sizes: Vec<usize> = if self.groups.is_empty() {
                vec![self.n]
            } else {
                self.groups.iter().map(Vec::len).collect()
            };
            let mut total: u128 = 1;
            for s in sizes {
                total = total
                    .checked_mul(factorial(s).ok_or_else(|| overflow(self.n))?)
                    .ok_or_else(|| overflow(self.n))?;
            }
            return Ok(total);
        }
        if self.n > COUNT_DP_CAP {
            return Err(AsvError::EnumerationCap {
                n: self.n,
                cap: COUNT_DP_CAP,
            });
        }
        // ways[mask] = number of valid orderings of the downset `mask`.
        let size = 1usize << self.n;
        let mut ways = vec![0u128; size];
        ways[0] = 1;
        for mask in 0..size {
            let w = ways[mask];
            if w == 0 {
                continue;
            }
            for i in 0..self.n {
                let bit = 1usize << i;
                if mask & bit == 0 && self.predecessors[i] as usize & !mask == 0 {
                    ways[mask | bit] += w;
                }
            }
        }
        Ok(ways[size - 1])
    }

    /// One permutation drawn uniformly from the consistent set, with the
    /// default rejection budget.
    pub fn sample_consistent<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Permutation> {
        self.sample_consistent_with_budget(rng, DEFAULT_MAX_REJECTIONS)
    }

    /// Group structure is sampled directly by shuffling within each group.
    /// Edge constraints are enforced by rejecting group-consistent draws,
    /// which keeps the result exactly uniform over the consistent set.
    pub fn sample_consistent_with_budget<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        max_rejections: u64,
    ) -> Result<Permutation> {
        let mut order = Vec::with_capacity(self.n);
        let mut rejected = 0u64;
        loop {
            order.clear();
            if self.groups.is_empty() {
                order.extend(0..self.n);
                order.shuffle(rng);
            } else {
                for group in &self.groups {
                    let start = order.len();
                    order.extend_from_slice(group);
                    order[start..].shuffle(rng);
                }
            }
            if self.edges.is_empty() || self.respects(&order) {
                return Ok(Permutation::from_vec_unchecked(order));
            }
            rejected += 1;
            if rejected >= max_rejections {
                return Err(AsvError::SamplingBudgetExhausted { attempts: rejected });
            }
        }
    }
}

fn factorial(k: usize) -> Option<u128> {
    (1..=k as u128).try_fold(1u128, |acc, x| acc.checked_mul(x))
}

fn overflow(n: usize) -> AsvError {
    AsvError::InvalidArgument(format!("extension count for {n} features overflows u128"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Ancestors first.
    #[default]
    Distal,
    /// Descendants first: every precedence is reversed before use.
    Proximate,
}

/// An ordering spec together with the direction in which its precedences
/// are read. This is the on-disk ordering format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightedOrdering {
    #[serde(flatten)]
    pub spec: OrderingSpec,
    #[serde(default)]
    pub direction: Direction,
}

impl WeightedOrdering {
    pub fn distal(spec: OrderingSpec) -> Self {
        Self {
            spec,
            direction: Direction::Distal,
        }
    }

    pub fn proximate(spec: OrderingSpec) -> Self {
        Self {
            spec,
            direction: Direction::Proximate,
        }
    }

    /// The spec actually used for attribution.
    pub fn resolve(&self) -> OrderingSpec {
        match self.direction {
            Direction::Distal => self.spec.clone(),
            Direction::Proximate => self.spec.reversed(),
        }
    }
}
