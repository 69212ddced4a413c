//! Exact and Monte Carlo randomization tests and group invariance tests.
//!
//! A randomization test is valid because the experimenter drew the
//! treatment assignment from a declared finite scheme; the scheme need not
//! be a group. A group invariance (permutation) test is valid because the
//! data distribution is invariant under a group of transformations, and
//! there the group axioms are essential.
//!
//! - [`schemes`]: assignment patterns, randomization schemes and
//!   transformation groups, with a group-axiom checker.
//! - [`statistics`]: test statistics `T(w, y)`.
//! - [`engine`]: exact p-values, threshold tests, attainable levels and
//!   Monte Carlo variants.
//! - [`ltt`]: the tea-tasting experiment.
//! - [`power`]: size and power simulation.

pub mod combinatorics;
pub mod engine;
mod error;
pub mod ltt;
pub mod power;
pub mod rational;
pub mod schemes;
pub mod statistics;

pub use error::{Error, Result};
pub use rational::Fraction;
