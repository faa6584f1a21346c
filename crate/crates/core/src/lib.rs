//! Asymmetric Shapley values: feature attributions averaged over the
//! feature orderings consistent with declared precedence constraints.

pub mod attribution;
pub mod cli;
pub mod coalition;
pub mod data;
pub mod error;
pub mod models;
pub mod ordering;
pub mod rng;
pub mod scenarios;
pub mod stats;
pub mod value;

pub use coalition::{Coalition, Permutation};
pub use error::{AsvError, Result};
pub use ordering::OrderingSpec;
