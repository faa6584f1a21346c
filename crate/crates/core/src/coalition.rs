//! Feature-index sets and permutations.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{AsvError, Result};

/// Maximum number of features a [`Coalition`] can address.
pub const MAX_FEATURES: usize = 64;

/// A subset of `{0, …, n-1}` stored as a bitmask.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coalition {
    n: usize,
    bits: u64,
}

impl Coalition {
    pub fn empty(n: usize) -> Self {
        assert!(n <= MAX_FEATURES, "at most {MAX_FEATURES} features supported");
        Self { n, bits: 0 }
    }

    pub fn full(n: usize) -> Self {
        assert!(n <= MAX_FEATURES, "at most {MAX_FEATURES} features supported");
        let bits = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
        Self { n, bits }
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(n: usize, indices: I) -> Result<Self> {
        if n > MAX_FEATURES {
            return Err(AsvError::InvalidArgument(format!(
                "at most {MAX_FEATURES} features supported, got {n}"
            )));
        }
        let mut c = Self::empty(n);
        for i in indices {
            if i >= n {
                return Err(AsvError::IndexOutOfRange { index: i, n });
            }
            c.bits |= 1 << i;
        }
        Ok(c)
    }

    /// Builds a coalition from a raw mask; bits at or above `n` are an error.
    pub fn from_bits(n: usize, bits: u64) -> Result<Self> {
        let full = Self::full(n);
        if bits & !full.bits != 0 {
            return Err(AsvError::InvalidArgument(format!(
                "mask {bits:#x} has members outside 0..{n}"
            )));
        }
        Ok(Self { n, bits })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    pub fn is_full(&self) -> bool {
        *self == Self::full(self.n)
    }

    pub fn contains(&self, i: usize) -> bool {
        i < self.n && self.bits & (1 << i) != 0
    }

    /// Returns `self ∪ {i}`.
    ///
    /// # Panics
    /// If `i >= n`.
    pub fn with(&self, i: usize) -> Self {
        assert!(i < self.n, "feature {i} out of range for {} features", self.n);
        Self {
            n: self.n,
            bits: self.bits | (1 << i),
        }
    }

    pub fn without(&self, i: usize) -> Self {
        Self {
            n: self.n,
            bits: self.bits & !(1u64.checked_shl(i as u32).unwrap_or(0)),
        }
    }

    pub fn complement(&self) -> Self {
        Self {
            n: self.n,
            bits: Self::full(self.n).bits & !self.bits,
        }
    }

    pub fn union(&self, other: &Self) -> Self {
        debug_assert_eq!(self.n, other.n);
        Self {
            n: self.n,
            bits: self.bits | other.bits,
        }
    }

    pub fn intersection(&self, other: &Self) -> Self {
        debug_assert_eq!(self.n, other.n);
        Self {
            n: self.n,
            bits: self.bits & other.bits,
        }
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.bits & !other.bits == 0
    }

    /// Members in increasing order.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        let bits = self.bits;
        (0..self.n).filter(move |&i| bits & (1 << i) != 0)
    }

    pub fn indices(&self) -> Vec<usize> {
        self.iter().collect()
    }

    /// All `2^n` coalitions in mask order.
    pub fn all(n: usize) -> impl Iterator<Item = Coalition> {
        assert!(n < 64, "cannot enumerate subsets of {n} features");
        (0..(1u64 << n)).map(move |bits| Coalition { n, bits })
    }
}

impl fmt::Debug for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, i) in self.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{i}")?;
        }
        write!(f, "}}/{}", self.n)
    }
}

/// A bijection on `{0, …, n-1}`, listed in the order features are added.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation {
    order: Vec<usize>,
}

impl Permutation {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let n = order.len();
        let mut seen = vec![false; n];
        for &i in &order {
            if i >= n {
                return Err(AsvError::IndexOutOfRange { index: i, n });
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(AsvError::InvalidArgument(format!(
                    "index {i} repeated in permutation"
                )));
            }
        }
        Ok(Self { order })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            order: (0..n).collect(),
        }
    }

    pub(crate) fn from_vec_unchecked(order: Vec<usize>) -> Self {
        Self { order }
    }

    pub fn n(&self) -> usize {
        self.order.len()
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// `position[i]` is where feature `i` appears in the order.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.order.len()];
        for (p, &i) in self.order.iter().enumerate() {
            pos[i] = p;
        }
        pos
    }
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = AsvError;
    fn try_from(order: Vec<usize>) -> Result<Self> {
        Permutation::new(order)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Vec<usize> {
        p.order
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_out_of_range_members() {
        assert!(matches!(
            Coalition::from_indices(3, [0, 3]),
            Err(AsvError::IndexOutOfRange { index: 3, n: 3 })
        ));
        assert!(Coalition::from_bits(3, 0b1000).is_err());
    }

    #[test]
    fn set_semantics() {
        let a = Coalition::from_indices(5, [3, 1, 1]).unwrap();
        let b = Coalition::from_indices(5, [1, 3]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
        assert_eq!(a.indices(), vec![1, 3]);
        assert_eq!(format!("{a:?}"), "{1,3}/5");
    }

    #[test]
    fn permutation_validation() {
        assert!(Permutation::new(vec![1, 0, 2]).is_ok());
        assert!(Permutation::new(vec![1, 1, 2]).is_err());
        assert!(Permutation::new(vec![0, 3, 1]).is_err());
        let p = Permutation::new(vec![2, 0, 1]).unwrap();
        assert_eq!(p.positions(), vec![1, 2, 0]);
    }

    proptest! {
        #[test]
        fn complement_partitions_the_full_set(n in 1usize..20, bits in any::<u64>()) {
            let c = Coalition::from_bits(n, bits & Coalition::full(n).bits()).unwrap();
            let comp = c.complement();
            prop_assert_eq!(c.union(&comp), Coalition::full(n));
            prop_assert!(c.intersection(&comp).is_empty());
            prop_assert_eq!(c.len() + comp.len(), n);
        }
    }
}
