//! The tea-tasting experiment: `2m` cups, `m` of them milk-first, and a
//! taster who labels cups.
//!
//! Milk-first is coded as 1. The experimenter's randomized order is the
//! assignment `w`; the taster's labelling is the response `y`. The statistic
//! counts milk-first cups labelled milk-first, so the test coincides with
//! Fisher's exact test with fixed margins.

use serde::{Deserialize, Serialize};

use crate::combinatorics::binomial;
use crate::engine::{randomization_test, TestReport};
use crate::error::{invalid, Result};
use crate::rational::Fraction;
use crate::schemes::{AssignmentPattern, RandomizationScheme};
use crate::statistics::{OutcomeVector, StatisticKind, StatisticSpec};

/// Number of truth patterns yielding exactly `j` correct milk-first picks,
/// for `j = 0..=m`: `C(m, j) C(m, m - j)`.
pub fn ltt_count_distribution(m: usize) -> Result<Vec<u128>> {
    if m == 0 {
        return invalid("tea tasting needs m >= 1");
    }
    let m = m as u64;
    Ok((0..=m)
        .map(|j| binomial(m, j).unwrap() * binomial(m, m - j).unwrap())
        .collect())
}

/// One row of the level table: reject when at least `min_correct` picks are right.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelRow {
    pub min_correct: usize,
    /// Truth patterns with exactly `min_correct` correct picks.
    pub count: u128,
    pub level: Fraction,
}

/// Exact levels of every rule "reject if at least `j` correct".
pub fn level_table(m: usize) -> Result<Vec<LevelRow>> {
    let counts = ltt_count_distribution(m)?;
    let total: u128 = counts.iter().sum();
    let mut tail = 0u128;
    let mut rows: Vec<LevelRow> = counts
        .iter()
        .enumerate()
        .rev()
        .map(|(j, &count)| {
            tail += count;
            LevelRow {
                min_correct: j,
                count,
                level: Fraction::new(tail, total),
            }
        })
        .collect();
    rows.reverse();
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LttOutcome {
    pub m: usize,
    pub correct_milk_first: usize,
    pub p_value: Fraction,
    pub level_table: Vec<LevelRow>,
}

impl LttOutcome {
    /// Tabulates the outcome for a taster who knows there are `m` of each cup.
    pub fn new(truth: &AssignmentPattern, guess: &AssignmentPattern) -> Result<Self> {
        let m = check_truth(truth)?;
        check_known_design_guess(guess, m)?;
        let correct = truth.overlap(guess);
        let table = level_table(m)?;
        Ok(LttOutcome {
            m,
            correct_milk_first: correct,
            p_value: table[correct].level,
            level_table: table,
        })
    }
}

fn check_truth(truth: &AssignmentPattern) -> Result<usize> {
    let n = truth.len();
    if n == 0 || !n.is_multiple_of(2) {
        return invalid(format!("expected an even number of cups, got {n}"));
    }
    let m = n / 2;
    if truth.count_ones() != m {
        return invalid(format!(
            "truth must mark exactly {m} milk-first cups, marks {}",
            truth.count_ones()
        ));
    }
    Ok(m)
}

fn check_known_design_guess(guess: &AssignmentPattern, m: usize) -> Result<()> {
    if guess.len() != 2 * m {
        return invalid(format!(
            "guess has {} cups, expected {}",
            guess.len(),
            2 * m
        ));
    }
    if guess.count_ones() != m {
        return invalid(format!(
            "guess labels {} cups milk-first but the design has {m}; use the free-guess test",
            guess.count_ones()
        ));
    }
    Ok(())
}

/// Tea-tasting test when the taster knows the design and labels exactly `m` cups.
pub fn ltt_run(
    truth: &AssignmentPattern,
    guess: &AssignmentPattern,
    alpha: f64,
) -> Result<TestReport> {
    let m = check_truth(truth)?;
    check_known_design_guess(guess, m)?;
    run(truth, guess, m, alpha)
}

/// Tea-tasting test when the taster may label any number of cups milk-first.
///
/// The reference set is still the experimenter's scheme, so the size bound
/// is unaffected by what the taster does.
pub fn ltt_run_free_guess(
    truth: &AssignmentPattern,
    guess: &AssignmentPattern,
    alpha: f64,
) -> Result<TestReport> {
    let m = check_truth(truth)?;
    if guess.len() != truth.len() {
        return invalid(format!(
            "guess has {} cups, truth has {}",
            guess.len(),
            truth.len()
        ));
    }
    run(truth, guess, m, alpha)
}

fn run(
    truth: &AssignmentPattern,
    guess: &AssignmentPattern,
    m: usize,
    alpha: f64,
) -> Result<TestReport> {
    let scheme = RandomizationScheme::ltt(m)?;
    let y = OutcomeVector::from(guess);
    randomization_test(
        &scheme,
        truth,
        &y,
        &StatisticSpec::upper(StatisticKind::FisherMatch),
        alpha,
    )
}
