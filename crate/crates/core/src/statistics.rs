//! Test statistics `T(w, y)` shared by the randomization and group tests.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{invalid, Error, Result};
use crate::schemes::{AssignmentPattern, Transformation};

/// Real-valued responses, one per unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct OutcomeVector(Vec<f64>);

impl OutcomeVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return invalid(format!("outcome {} is not finite: {v}", i + 1));
        }
        Ok(OutcomeVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mean(&self) -> f64 {
        mean(&self.0)
    }
}

impl TryFrom<Vec<f64>> for OutcomeVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        OutcomeVector::new(values)
    }
}

impl From<OutcomeVector> for Vec<f64> {
    fn from(y: OutcomeVector) -> Self {
        y.0
    }
}

impl From<&AssignmentPattern> for OutcomeVector {
    fn from(p: &AssignmentPattern) -> Self {
        OutcomeVector(p.to_indicators())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StatisticKind {
    /// Number of units labelled 1 in both `w` and `y`.
    FisherMatch,
    /// Treated sum minus untreated sum.
    DiffSums,
    /// `DiffSums` applied to mean-centred responses.
    CenteredDiff,
    /// Absolute difference of the two group means.
    AbsMeanDiff,
}

impl StatisticKind {
    pub fn name(self) -> &'static str {
        match self {
            StatisticKind::FisherMatch => "fisher-match",
            StatisticKind::DiffSums => "diff-sums",
            StatisticKind::CenteredDiff => "centered-diff",
            StatisticKind::AbsMeanDiff => "abs-mean-diff",
        }
    }
}

impl fmt::Display for StatisticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StatisticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fisher-match" => Ok(StatisticKind::FisherMatch),
            "diff-sums" => Ok(StatisticKind::DiffSums),
            "centered-diff" => Ok(StatisticKind::CenteredDiff),
            "abs-mean-diff" => Ok(StatisticKind::AbsMeanDiff),
            other => invalid(format!(
                "unknown statistic {other:?}; expected fisher-match, diff-sums, centered-diff or abs-mean-diff"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sidedness {
    #[default]
    Upper,
    /// Large values of `|T|` count as evidence.
    TwoSided,
}

impl FromStr for Sidedness {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "upper" => Ok(Sidedness::Upper),
            "two-sided" => Ok(Sidedness::TwoSided),
            other => invalid(format!(
                "unknown sidedness {other:?}; expected upper or two-sided"
            )),
        }
    }
}

/// A named statistic with its sidedness.
///
/// Two-sided tests use `|T|` as the statistic; the p-value machinery is
/// unchanged. This is meaningful for statistics centred at zero under the
/// null, such as `centered-diff` or `diff-sums` on balanced designs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StatisticSpec {
    pub kind: StatisticKind,
    pub sidedness: Sidedness,
}

impl StatisticSpec {
    pub fn new(kind: StatisticKind, sidedness: Sidedness) -> Result<Self> {
        if kind == StatisticKind::FisherMatch && sidedness == Sidedness::TwoSided {
            return invalid("fisher-match is an upper-tail statistic only");
        }
        Ok(StatisticSpec { kind, sidedness })
    }

    pub fn upper(kind: StatisticKind) -> Self {
        StatisticSpec {
            kind,
            sidedness: Sidedness::Upper,
        }
    }

    /// `T(w, y)`.
    pub fn evaluate(&self, w: &AssignmentPattern, y: &[f64]) -> Result<f64> {
        check_lengths(w, y.len())?;
        let t = match self.kind {
            StatisticKind::FisherMatch => {
                if let Some(v) = y.iter().find(|v| **v != 0.0 && **v != 1.0) {
                    return invalid(format!("fisher-match needs binary responses, got {v}"));
                }
                fisher_match_raw(w, y) as f64
            }
            StatisticKind::DiffSums => diff_sums_raw(w, y),
            StatisticKind::CenteredDiff => centered_diff_raw(w, y),
            StatisticKind::AbsMeanDiff => abs_mean_diff_raw(w, y)?,
        };
        Ok(match self.sidedness {
            Sidedness::Upper => t,
            Sidedness::TwoSided => t.abs(),
        })
    }
}

fn check_lengths(w: &AssignmentPattern, n: usize) -> Result<()> {
    if w.len() != n {
        return invalid(format!(
            "assignment has {} units but responses have {n}",
            w.len()
        ));
    }
    Ok(())
}

type Buf = SmallVec<[f64; 16]>;

const INLINE_UNITS: usize = 16;

/// Sums in ascending order so the result depends only on the multiset of
/// values. Permuted copies of the same data then give bit-identical
/// statistics, and exact ties stay ties.
fn canonical_sum(buf: &mut [f64]) -> f64 {
    if buf.len() <= INLINE_UNITS {
        // insertion sort; short slices dominate the hot loops
        for i in 1..buf.len() {
            let v = buf[i];
            let mut j = i;
            while j > 0 && buf[j - 1].total_cmp(&v).is_gt() {
                buf[j] = buf[j - 1];
                j -= 1;
            }
            buf[j] = v;
        }
    } else {
        buf.sort_unstable_by(f64::total_cmp);
    }
    buf.iter().sum()
}

fn mean(y: &[f64]) -> f64 {
    let mut buf: Buf = y.iter().copied().collect();
    canonical_sum(&mut buf) / y.len() as f64
}

/// `(Σ treated, Σ untreated)` of `y_i - shift`.
fn group_sums(w: &AssignmentPattern, y: &[f64], shift: f64) -> (f64, f64) {
    if y.len() <= INLINE_UNITS {
        let mask = w.mask().expect("short pattern has a mask");
        let mut treated = [0.0; INLINE_UNITS];
        let mut control = [0.0; INLINE_UNITS];
        let (mut nt, mut nc) = (0, 0);
        for (i, &v) in y.iter().enumerate() {
            if (mask >> i) & 1 == 1 {
                treated[nt] = v - shift;
                nt += 1;
            } else {
                control[nc] = v - shift;
                nc += 1;
            }
        }
        return (
            canonical_sum(&mut treated[..nt]),
            canonical_sum(&mut control[..nc]),
        );
    }
    let mut treated = Vec::with_capacity(y.len());
    let mut control = Vec::with_capacity(y.len());
    for (i, &v) in y.iter().enumerate() {
        if w.get(i) {
            treated.push(v - shift);
        } else {
            control.push(v - shift);
        }
    }
    (canonical_sum(&mut treated), canonical_sum(&mut control))
}

fn fisher_match_raw(w: &AssignmentPattern, y: &[f64]) -> u64 {
    y.iter()
        .enumerate()
        .filter(|&(i, &v)| v == 1.0 && w.get(i))
        .count() as u64
}

fn diff_sums_raw(w: &AssignmentPattern, y: &[f64]) -> f64 {
    let (treated, control) = group_sums(w, y, 0.0);
    treated - control
}

fn centered_diff_raw(w: &AssignmentPattern, y: &[f64]) -> f64 {
    let ybar = mean(y);
    let (treated, control) = group_sums(w, y, ybar);
    treated - control
}

fn abs_mean_diff_raw(w: &AssignmentPattern, y: &[f64]) -> Result<f64> {
    let ones = w.count_ones();
    if ones == 0 || ones == w.len() {
        return Err(Error::UndefinedStatistic(format!(
            "group mean undefined for constant assignment {w}"
        )));
    }
    let (treated, control) = group_sums(w, y, 0.0);
    Ok((treated / ones as f64 - control / (w.len() - ones) as f64).abs())
}

/// Count of positions where both `w` and `y` are 1.
pub fn stat_fisher_match(w: &AssignmentPattern, y: &AssignmentPattern) -> Result<u64> {
    check_lengths(w, y.len())?;
    Ok(w.overlap(y) as u64)
}

pub fn stat_diff_sums(w: &AssignmentPattern, y: &OutcomeVector) -> Result<f64> {
    check_lengths(w, y.len())?;
    Ok(diff_sums_raw(w, y.values()))
}

pub fn stat_centered_diff(w: &AssignmentPattern, y: &OutcomeVector) -> Result<f64> {
    check_lengths(w, y.len())?;
    if y.is_empty() {
        return invalid("centered statistic needs at least one unit");
    }
    Ok(centered_diff_raw(w, y.values()))
}

pub fn stat_abs_mean_diff(w: &AssignmentPattern, y: &OutcomeVector) -> Result<f64> {
    check_lengths(w, y.len())?;
    abs_mean_diff_raw(w, y.values())
}

/// `g · x`. The input is left untouched.
pub fn apply_transformation(g: &Transformation, x: &OutcomeVector) -> Result<OutcomeVector> {
    Ok(OutcomeVector(g.apply(x.values())?))
}
