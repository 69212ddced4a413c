//! Exact and Monte Carlo randomization tests and group invariance tests.
//!
//! Two procedures live here. The randomization test draws its validity from
//! the declared scheme: the observed assignment must be a member, and the
//! reference distribution is `T(w, y)` over every admissible `w`. The group
//! invariance test draws its validity from the algebraic structure of the
//! transformation set, so the safe entry point refuses sets that fail the
//! group axioms.
//!
//! P-values count `T(w, y) >= T(w_obs, y)`; the threshold rule rejects when
//! the observed statistic strictly exceeds the `k`-th order statistic with
//! `k = ceil((1 - alpha) R)`. Both forms are reported side by side. With
//! all-distinct statistic values they agree: the test rejects exactly when
//! `p R <= floor(alpha R)`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rational::{alpha_floor, threshold_index, Fraction};
use crate::schemes::{
    check_group, AssignmentPattern, RandomizationScheme, Transformation, TransformationGroup,
};
use crate::statistics::{OutcomeVector, StatisticSpec};

const PARALLEL_THRESHOLD: usize = 1 << 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ExactEnumeration,
    MonteCarlo,
}

/// Outcome of one test, in both threshold form and p-value form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub observed_t: f64,
    pub p_value: Fraction,
    pub p_value_real: f64,
    /// `R`, `|𝒢|`, or `draws + 1` for Monte Carlo.
    pub reference_size: u128,
    pub threshold_index: u128,
    pub threshold_value: f64,
    pub reject: bool,
    pub alpha: f64,
    pub method: Method,
    /// False only for reports from the unchecked group path.
    pub valid: bool,
}

/// A p-value: exact for uniform schemes, a weight sum otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PValue {
    Exact(Fraction),
    Weighted(f64),
}

impl PValue {
    pub fn to_f64(self) -> f64 {
        match self {
            PValue::Exact(f) => f.to_f64(),
            PValue::Weighted(p) => p,
        }
    }

    pub fn exact(self) -> Option<Fraction> {
        match self {
            PValue::Exact(f) => Some(f),
            PValue::Weighted(_) => None,
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return invalid(format!("alpha must lie in (0, 1), got {alpha}"));
    }
    Ok(())
}

fn check_membership(scheme: &RandomizationScheme, w_obs: &AssignmentPattern) -> Result<()> {
    if w_obs.len() != scheme.n() {
        return invalid(format!(
            "observed assignment has {} units, scheme {} has {}",
            w_obs.len(),
            scheme.label(),
            scheme.n()
        ));
    }
    if !scheme.contains(w_obs) {
        return Err(Error::DesignViolation(format!(
            "observed assignment {w_obs} is not a pattern of the declared {} scheme",
            scheme.label()
        )));
    }
    Ok(())
}

fn check_outcome_len(n: usize, y: &OutcomeVector) -> Result<()> {
    if y.len() != n {
        return invalid(format!("expected {n} responses, got {}", y.len()));
    }
    Ok(())
}

/// `T(w, y)` for every pattern, in scheme order.
pub fn statistic_values(
    patterns: &[AssignmentPattern],
    y: &OutcomeVector,
    stat: &StatisticSpec,
) -> Result<Vec<f64>> {
    let eval = |w: &AssignmentPattern| stat.evaluate(w, y.values());
    if patterns.len() >= PARALLEL_THRESHOLD {
        patterns.par_iter().map(eval).collect()
    } else {
        patterns.iter().map(eval).collect()
    }
}

/// Exact p-value: the proportion (or weight) of patterns whose statistic is
/// at least the observed one.
pub fn randomization_pvalue(
    scheme: &RandomizationScheme,
    w_obs: &AssignmentPattern,
    y: &OutcomeVector,
    stat: &StatisticSpec,
) -> Result<PValue> {
    check_membership(scheme, w_obs)?;
    check_outcome_len(scheme.n(), y)?;
    let patterns = scheme.patterns()?;
    let observed = stat.evaluate(w_obs, y.values())?;
    let values = statistic_values(patterns, y, stat)?;
    if scheme.is_uniform() {
        let count = values.iter().filter(|&&t| t >= observed).count() as u128;
        Ok(PValue::Exact(Fraction::new(count, patterns.len() as u128)))
    } else {
        let mass = patterns
            .iter()
            .zip(&values)
            .filter(|(_, &t)| t >= observed)
            .map(|(w, _)| scheme.weight(w))
            .sum();
        Ok(PValue::Weighted(mass))
    }
}

/// Sorts `values` and evaluates the threshold rule against `observed`.
fn threshold_report(
    mut values: Vec<f64>,
    observed: f64,
    alpha: f64,
    method: Method,
    valid: bool,
    p_num: u128,
) -> TestReport {
    let r = values.len() as u128;
    values.sort_by(f64::total_cmp);
    let k = threshold_index(alpha, r);
    let threshold_value = values[(k - 1) as usize];
    let p_value = Fraction::new(p_num, r);
    TestReport {
        observed_t: observed,
        p_value,
        p_value_real: p_value.to_f64(),
        reference_size: r,
        threshold_index: k,
        threshold_value,
        reject: observed > threshold_value,
        alpha,
        method,
        valid,
    }
}

/// The general randomization test over a uniform, enumerable scheme.
pub fn randomization_test(
    scheme: &RandomizationScheme,
    w_obs: &AssignmentPattern,
    y: &OutcomeVector,
    stat: &StatisticSpec,
    alpha: f64,
) -> Result<TestReport> {
    check_alpha(alpha)?;
    check_membership(scheme, w_obs)?;
    check_outcome_len(scheme.n(), y)?;
    if !scheme.is_uniform() {
        return invalid(format!(
            "the threshold rule needs uniform weights; scheme {} is weighted, use randomization_pvalue",
            scheme.label()
        ));
    }
    let observed = stat.evaluate(w_obs, y.values())?;
    let values = statistic_values(scheme.patterns()?, y, stat)?;
    let count = values.iter().filter(|&&t| t >= observed).count() as u128;
    Ok(threshold_report(
        values,
        observed,
        alpha,
        Method::ExactEnumeration,
        true,
        count,
    ))
}

/// Monte Carlo randomization test: the observed statistic plus `draws`
/// statistics from independently sampled patterns.
pub fn randomization_test_mc<R: Rng + ?Sized>(
    scheme: &RandomizationScheme,
    w_obs: &AssignmentPattern,
    y: &OutcomeVector,
    stat: &StatisticSpec,
    alpha: f64,
    draws: u64,
    rng: &mut R,
) -> Result<TestReport> {
    check_alpha(alpha)?;
    if draws == 0 {
        return invalid("Monte Carlo needs at least one draw");
    }
    check_membership(scheme, w_obs)?;
    check_outcome_len(scheme.n(), y)?;
    if !scheme.is_uniform() {
        return invalid("the threshold rule needs uniform weights");
    }
    let observed = stat.evaluate(w_obs, y.values())?;
    let mut values = Vec::with_capacity(draws as usize + 1);
    values.push(observed);
    for _ in 0..draws {
        values.push(stat.evaluate(&scheme.sample(rng), y.values())?);
    }
    let count = values.iter().filter(|&&t| t >= observed).count() as u128;
    Ok(threshold_report(
        values,
        observed,
        alpha,
        Method::MonteCarlo,
        true,
        count,
    ))
}

/// `(1 + #{j : T(w_j, y) >= T(w_obs, y)}) / (draws + 1)` with `w_j` drawn
/// from the scheme.
pub fn monte_carlo_pvalue<R: Rng + ?Sized>(
    scheme: &RandomizationScheme,
    w_obs: &AssignmentPattern,
    y: &OutcomeVector,
    stat: &StatisticSpec,
    draws: u64,
    rng: &mut R,
) -> Result<Fraction> {
    if draws == 0 {
        return invalid("Monte Carlo needs at least one draw");
    }
    check_membership(scheme, w_obs)?;
    check_outcome_len(scheme.n(), y)?;
    let observed = stat.evaluate(w_obs, y.values())?;
    let mut hits = 0u128;
    for _ in 0..draws {
        if stat.evaluate(&scheme.sample(rng), y.values())? >= observed {
            hits += 1;
        }
    }
    Ok(Fraction::new(1 + hits, u128::from(draws) + 1))
}

/// Achievable rejection probabilities given `y`, ascending.
///
/// Includes the trivial level 1 reached by the smallest statistic value.
pub fn attainable_alphas(
    scheme: &RandomizationScheme,
    stat: &StatisticSpec,
    y: &OutcomeVector,
) -> Result<Vec<Fraction>> {
    if !scheme.is_uniform() {
        return invalid("attainable levels are defined for uniform schemes");
    }
    check_outcome_len(scheme.n(), y)?;
    let mut values = statistic_values(scheme.patterns()?, y, stat)?;
    let r = values.len() as u128;
    values.sort_by(|a, b| b.total_cmp(a));
    let mut levels = Vec::new();
    for (i, t) in values.iter().enumerate() {
        let last_of_run = values.get(i + 1).is_none_or(|next| next != t);
        if last_of_run {
            levels.push(Fraction::new(i as u128 + 1, r));
        }
    }
    Ok(levels)
}

/// `1/R`, the smallest p-value a uniform scheme can produce.
pub fn min_pvalue(scheme: &RandomizationScheme) -> Result<Fraction> {
    if !scheme.is_uniform() {
        return invalid("minimum p-value 1/R is defined for uniform schemes");
    }
    Ok(Fraction::new(1, scheme.size()))
}

/// True iff a p-value `num / r` rejects at level `alpha`.
pub fn rejects_at(alpha: f64, num: u128, r: u128) -> bool {
    num <= alpha_floor(alpha, r)
}

/// A transformation set that has passed the group axioms.
#[derive(Debug, Clone, Copy)]
pub struct ValidatedGroup<'a> {
    group: &'a TransformationGroup,
}

impl<'a> ValidatedGroup<'a> {
    /// Symmetric and sign-flip families are accepted as-is; explicit sets
    /// must pass [`check_group`].
    pub fn new(group: &'a TransformationGroup) -> Result<Self> {
        if !group.is_structural_group() {
            let report = check_group(group)?;
            if let Some(summary) = report.failure_summary() {
                return Err(Error::GroupViolation(summary));
            }
        }
        Ok(ValidatedGroup { group })
    }

    pub fn group(&self) -> &'a TransformationGroup {
        self.group
    }

    pub fn test(
        &self,
        x: &OutcomeVector,
        stat: &StatisticSpec,
        labels: &AssignmentPattern,
        alpha: f64,
    ) -> Result<TestReport> {
        if x.len() != self.group.n() {
            return invalid(format!(
                "group acts on {} coordinates, data has {}",
                self.group.n(),
                x.len()
            ));
        }
        group_report(self.group.elements()?, x, stat, labels, alpha, true)
    }

    /// `(1 + #{j : T(g_j x) >= T(x)}) / (draws + 1)` with `g_j` uniform on the group.
    pub fn monte_carlo_pvalue<R: Rng + ?Sized>(
        &self,
        x: &OutcomeVector,
        stat: &StatisticSpec,
        labels: &AssignmentPattern,
        draws: u64,
        rng: &mut R,
    ) -> Result<Fraction> {
        if draws == 0 {
            return invalid("Monte Carlo needs at least one draw");
        }
        let observed = stat.evaluate(labels, x.values())?;
        let mut scratch = vec![0.0; x.len()];
        let mut hits = 0u128;
        for _ in 0..draws {
            self.group
                .sample(rng)
                .apply_into(x.values(), &mut scratch)?;
            if stat.evaluate(labels, &scratch)? >= observed {
                hits += 1;
            }
        }
        Ok(Fraction::new(1 + hits, u128::from(draws) + 1))
    }
}

/// Statistic values `T(g x)` for every element, where `T(x) = stat(labels, x)`.
pub fn group_statistic_values(
    elements: &[Transformation],
    x: &OutcomeVector,
    stat: &StatisticSpec,
    labels: &AssignmentPattern,
) -> Result<Vec<f64>> {
    if elements.len() >= PARALLEL_THRESHOLD {
        let chunks: Vec<Vec<f64>> = elements
            .par_chunks(PARALLEL_THRESHOLD)
            .map(|chunk| group_statistic_values_serial(chunk, x, stat, labels))
            .collect::<Result<_>>()?;
        Ok(chunks.concat())
    } else {
        group_statistic_values_serial(elements, x, stat, labels)
    }
}

pub(crate) fn group_statistic_values_serial(
    elements: &[Transformation],
    x: &OutcomeVector,
    stat: &StatisticSpec,
    labels: &AssignmentPattern,
) -> Result<Vec<f64>> {
    let mut scratch = vec![0.0; x.len()];
    elements
        .iter()
        .map(|g| {
            g.apply_into(x.values(), &mut scratch)?;
            stat.evaluate(labels, &scratch)
        })
        .collect()
}

fn group_report(
    elements: &[Transformation],
    x: &OutcomeVector,
    stat: &StatisticSpec,
    labels: &AssignmentPattern,
    alpha: f64,
    valid: bool,
) -> Result<TestReport> {
    check_alpha(alpha)?;
    if elements.is_empty() {
        return invalid("empty transformation set");
    }
    let observed = stat.evaluate(labels, x.values())?;
    let values = group_statistic_values(elements, x, stat, labels)?;
    let count = values.iter().filter(|&&t| t >= observed).count() as u128;
    Ok(threshold_report(
        values,
        observed,
        alpha,
        Method::ExactEnumeration,
        valid,
        count,
    ))
}

/// Group invariance test. `T(x) = stat(labels, x)`, so `labels` fixes the
/// grouping (e.g. first half versus second half). Refuses non-groups.
pub fn group_invariance_test(
    group: &TransformationGroup,
    x: &OutcomeVector,
    stat: &StatisticSpec,
    labels: &AssignmentPattern,
    alpha: f64,
) -> Result<TestReport> {
    ValidatedGroup::new(group)?.test(x, stat, labels, alpha)
}

/// The same computation without checking the group axioms.
///
/// Reports are marked `valid: false`. Exists to demonstrate what goes wrong
/// when the reference set is not a group.
pub fn group_invariance_test_unsafe(
    elements: &[Transformation],
    x: &OutcomeVector,
    stat: &StatisticSpec,
    labels: &AssignmentPattern,
    alpha: f64,
) -> Result<TestReport> {
    if let Some(bad) = elements.iter().find(|g| g.len() != x.len()) {
        return invalid(format!(
            "element of length {} applied to data of length {}",
            bad.len(),
            x.len()
        ));
    }
    group_report(elements, x, stat, labels, alpha, false)
}
