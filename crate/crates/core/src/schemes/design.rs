use std::collections::HashMap;
use std::sync::OnceLock;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::pattern::AssignmentPattern;
use crate::combinatorics::{binomial, FixedWeightMasks};
use crate::error::{invalid, Error, Result};

/// Largest unit count for which structured schemes are enumerated.
pub const MAX_ENUMERABLE_UNITS: usize = 24;

const WEIGHT_TOLERANCE: f64 = 1e-12;

/// How the covariate-balanced design weights its patterns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovariateWeighting {
    /// Every admissible pattern has probability `1/R`.
    Uniform,
    /// The law induced by coin-flipping stratum A, then drawing the same
    /// number of treated units uniformly from stratum B.
    Sequential,
}

#[derive(Debug, Clone)]
enum Design {
    /// All patterns with exactly `ones` treated units.
    FixedCount {
        ones: usize,
    },
    Bernoulli {
        exclude_constants: bool,
    },
    CovariateBalanced {
        stratum: AssignmentPattern,
        weighting: CovariateWeighting,
    },
    Explicit {
        patterns: Vec<AssignmentPattern>,
        weights: Option<Vec<f64>>,
        index: HashMap<AssignmentPattern, usize>,
    },
}

/// A finite, weighted set of admissible treatment patterns, fixed before
/// the experiment is run.
#[derive(Debug, Clone)]
pub struct RandomizationScheme {
    n: usize,
    label: String,
    design: Design,
    enumerated: OnceLock<Vec<AssignmentPattern>>,
}

/// Serialized form of an enumerated scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeFile {
    pub n: usize,
    pub label: String,
    pub patterns: Vec<AssignmentPattern>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl RandomizationScheme {
    fn structured(n: usize, label: String, design: Design) -> Self {
        RandomizationScheme {
            n,
            label,
            design,
            enumerated: OnceLock::new(),
        }
    }

    /// All patterns of even length `n` with exactly `n/2` treated units.
    pub fn forced_balance(n: usize) -> Result<Self> {
        if n == 0 || !n.is_multiple_of(2) {
            return invalid(format!("forced balance needs an even positive n, got {n}"));
        }
        Ok(Self::structured(
            n,
            "forced-balance".into(),
            Design::FixedCount { ones: n / 2 },
        ))
    }

    /// `{0,1}^n`, optionally without the all-zero and all-one patterns.
    pub fn bernoulli(n: usize, exclude_constants: bool) -> Result<Self> {
        if n == 0 {
            return invalid("bernoulli scheme needs n >= 1");
        }
        if exclude_constants && n < 2 {
            return Err(Error::EmptyScheme(
                "excluding both constant patterns at n = 1 leaves nothing".into(),
            ));
        }
        let label = if exclude_constants {
            "bernoulli-nc"
        } else {
            "bernoulli"
        };
        Ok(Self::structured(
            n,
            label.into(),
            Design::Bernoulli { exclude_constants },
        ))
    }

    /// Lady Tasting Tea design: `2m` cups, exactly `m` of them milk-first.
    pub fn ltt(m: usize) -> Result<Self> {
        if m == 0 {
            return invalid("tea tasting needs m >= 1");
        }
        Ok(Self::structured(
            2 * m,
            "ltt".into(),
            Design::FixedCount { ones: m },
        ))
    }

    /// Bernoulli-type design balanced on a binary covariate.
    ///
    /// `stratum` marks the `n/2` units of group A. Admissible patterns treat
    /// the same number of units in each stratum.
    pub fn covariate_balanced(
        n: usize,
        stratum: AssignmentPattern,
        weighting: CovariateWeighting,
    ) -> Result<Self> {
        if n == 0 || !n.is_multiple_of(4) {
            return invalid(format!(
                "covariate-balanced design needs n divisible by 4, got {n}"
            ));
        }
        if stratum.len() != n {
            return invalid(format!(
                "stratum has length {}, expected {n}",
                stratum.len()
            ));
        }
        if stratum.count_ones() != n / 2 {
            return invalid(format!(
                "stratum must mark exactly {} units, marks {}",
                n / 2,
                stratum.count_ones()
            ));
        }
        let label = match weighting {
            CovariateWeighting::Uniform => "covariate-uniform",
            CovariateWeighting::Sequential => "covariate-sequential",
        };
        Ok(Self::structured(
            n,
            label.into(),
            Design::CovariateBalanced { stratum, weighting },
        ))
    }

    /// A scheme given by an explicit pattern list, uniform unless `weights`
    /// is supplied.
    pub fn custom(
        label: impl Into<String>,
        patterns: Vec<AssignmentPattern>,
        weights: Option<Vec<f64>>,
    ) -> Result<Self> {
        let Some(first) = patterns.first() else {
            return Err(Error::EmptyScheme("no patterns given".into()));
        };
        let n = first.len();
        if n == 0 {
            return invalid("patterns must have at least one unit");
        }
        let mut index = HashMap::with_capacity(patterns.len());
        for (i, p) in patterns.iter().enumerate() {
            if p.len() != n {
                return invalid(format!("pattern {p} has length {}, expected {n}", p.len()));
            }
            if index.insert(p.clone(), i).is_some() {
                return invalid(format!("duplicate pattern {p}"));
            }
        }
        if let Some(w) = &weights {
            if w.len() != patterns.len() {
                return invalid(format!(
                    "{} weights for {} patterns",
                    w.len(),
                    patterns.len()
                ));
            }
            if let Some(bad) = w.iter().find(|x| !x.is_finite() || **x <= 0.0) {
                return invalid(format!("weights must be positive and finite, got {bad}"));
            }
            let total: f64 = w.iter().sum();
            if (total - 1.0).abs() > WEIGHT_TOLERANCE {
                return invalid(format!("weights sum to {total}, expected 1"));
            }
        }
        Ok(Self::structured(
            n,
            label.into(),
            Design::Explicit {
                patterns,
                weights,
                index,
            },
        ))
    }

    pub fn from_file(file: SchemeFile) -> Result<Self> {
        if file.patterns.first().is_some_and(|p| p.len() != file.n) {
            return invalid(format!(
                "declared n = {} does not match pattern length",
                file.n
            ));
        }
        Self::custom(file.label, file.patterns, file.weights)
    }

    pub fn to_file(&self) -> Result<SchemeFile> {
        let patterns = self.patterns()?.to_vec();
        let weights = if self.is_uniform() {
            None
        } else {
            Some(patterns.iter().map(|p| self.weight(p)).collect())
        };
        Ok(SchemeFile {
            n: self.n,
            label: self.label.clone(),
            patterns,
            weights,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// `R`, the number of admissible patterns.
    pub fn size(&self) -> u128 {
        let n = self.n as u64;
        match &self.design {
            Design::FixedCount { ones } => binomial(n, *ones as u64).unwrap_or(u128::MAX),
            Design::Bernoulli { exclude_constants } => {
                let full = if n >= 128 { u128::MAX } else { 1u128 << n };
                if *exclude_constants {
                    full - 2
                } else {
                    full
                }
            }
            Design::CovariateBalanced { .. } => covariate_pattern_count(n / 2),
            Design::Explicit { patterns, .. } => patterns.len() as u128,
        }
    }

    pub fn is_uniform(&self) -> bool {
        match &self.design {
            Design::CovariateBalanced { weighting, .. } => {
                *weighting == CovariateWeighting::Uniform
            }
            Design::Explicit { weights, .. } => weights.is_none(),
            _ => true,
        }
    }

    pub fn is_enumerable(&self) -> bool {
        matches!(self.design, Design::Explicit { .. }) || self.n <= MAX_ENUMERABLE_UNITS
    }

    pub fn contains(&self, w: &AssignmentPattern) -> bool {
        if w.len() != self.n {
            return false;
        }
        match &self.design {
            Design::FixedCount { ones } => w.count_ones() == *ones,
            Design::Bernoulli { exclude_constants } => !(*exclude_constants && w.is_constant()),
            Design::CovariateBalanced { stratum, .. } => {
                let in_a = w.overlap(stratum);
                in_a * 2 == w.count_ones()
            }
            Design::Explicit { index, .. } => index.contains_key(w),
        }
    }

    /// Probability of drawing `w`; zero outside the scheme.
    pub fn weight(&self, w: &AssignmentPattern) -> f64 {
        if !self.contains(w) {
            return 0.0;
        }
        match &self.design {
            Design::CovariateBalanced {
                stratum,
                weighting: CovariateWeighting::Sequential,
            } => {
                let half = (self.n / 2) as u64;
                let l = w.overlap(stratum) as u64;
                let ways = binomial(half, l).expect("stratum size fits") as f64;
                0.5f64.powi(half as i32) / ways
            }
            Design::Explicit {
                weights: Some(weights),
                index,
                ..
            } => weights[index[w]],
            _ => 1.0 / self.size() as f64,
        }
    }

    /// Every admissible pattern, in a fixed deterministic order.
    ///
    /// Structured designs are enumerated on first use and cached.
    pub fn patterns(&self) -> Result<&[AssignmentPattern]> {
        if let Design::Explicit { patterns, .. } = &self.design {
            return Ok(patterns);
        }
        if !self.is_enumerable() {
            return Err(Error::InfeasibleEnumeration(format!(
                "{} scheme with n = {} exceeds the enumeration limit of {} units",
                self.label, self.n, MAX_ENUMERABLE_UNITS
            )));
        }
        Ok(self.enumerated.get_or_init(|| self.enumerate_structured()))
    }

    fn enumerate_structured(&self) -> Vec<AssignmentPattern> {
        let n = self.n;
        let bits = n as u32;
        match &self.design {
            Design::FixedCount { ones } => FixedWeightMasks::new(bits, *ones as u32)
                .map(|m| AssignmentPattern::from_mask(m, n))
                .collect(),
            Design::Bernoulli { .. } | Design::CovariateBalanced { .. } => (0..1u64 << n)
                .map(|m| AssignmentPattern::from_mask(m, n))
                .filter(|p| self.contains(p))
                .collect(),
            Design::Explicit { .. } => unreachable!("explicit patterns are stored"),
        }
    }

    /// Draws one pattern according to the scheme's weights.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> AssignmentPattern {
        let n = self.n;
        match &self.design {
            Design::FixedCount { ones } => {
                let mut p = AssignmentPattern::zeros(n);
                for i in index::sample(rng, n, *ones) {
                    p.set(i, true);
                }
                p
            }
            Design::Bernoulli { exclude_constants } => loop {
                let mut p = AssignmentPattern::zeros(n);
                for i in 0..n {
                    p.set(i, rng.random::<bool>());
                }
                if !(*exclude_constants && p.is_constant()) {
                    break p;
                }
            },
            Design::CovariateBalanced { stratum, weighting } => {
                let half = n / 2;
                let group_a: Vec<usize> = (0..n).filter(|&i| stratum.get(i)).collect();
                let group_b: Vec<usize> = (0..n).filter(|&i| !stratum.get(i)).collect();
                let mut p = AssignmentPattern::zeros(n);
                let l = match weighting {
                    CovariateWeighting::Sequential => {
                        for &i in &group_a {
                            p.set(i, rng.random::<bool>());
                        }
                        p.overlap(stratum)
                    }
                    CovariateWeighting::Uniform => {
                        // P(l) ∝ C(h, l)^2
                        let sizes: Vec<f64> = (0..=half)
                            .map(|l| {
                                let c = binomial(half as u64, l as u64).unwrap() as f64;
                                c * c
                            })
                            .collect();
                        let l = WeightedIndex::new(&sizes).unwrap().sample(rng);
                        for j in index::sample(rng, half, l) {
                            p.set(group_a[j], true);
                        }
                        l
                    }
                };
                for j in index::sample(rng, half, l) {
                    p.set(group_b[j], true);
                }
                p
            }
            Design::Explicit {
                patterns, weights, ..
            } => match weights {
                None => patterns[rng.random_range(0..patterns.len())].clone(),
                Some(w) => {
                    let dist = WeightedIndex::new(w).expect("weights validated");
                    patterns[dist.sample(rng)].clone()
                }
            },
        }
    }
}

/// `Σ_l C(h, l)^2` for stratum size `h`.
pub fn covariate_pattern_count(half: u64) -> u128 {
    (0..=half)
        .map(|l| {
            let c = binomial(half, l).expect("binomial overflow");
            c * c
        })
        .sum()
}

/// Builds a scheme from its CLI/config name.
///
/// Covariate designs take units `1..=n/2` as stratum A.
pub fn scheme_by_name(name: &str, n: usize) -> Result<RandomizationScheme> {
    let first_half = || {
        let mut s = AssignmentPattern::zeros(n);
        for i in 0..n / 2 {
            s.set(i, true);
        }
        s
    };
    match name {
        "forced-balance" => RandomizationScheme::forced_balance(n),
        "bernoulli" => RandomizationScheme::bernoulli(n, false),
        "bernoulli-nc" => RandomizationScheme::bernoulli(n, true),
        "ltt" => {
            if !n.is_multiple_of(2) {
                return invalid(format!("ltt scheme needs an even number of cups, got {n}"));
            }
            RandomizationScheme::ltt(n / 2)
        }
        "covariate-uniform" => {
            RandomizationScheme::covariate_balanced(n, first_half(), CovariateWeighting::Uniform)
        }
        "covariate-sequential" => {
            RandomizationScheme::covariate_balanced(n, first_half(), CovariateWeighting::Sequential)
        }
        other => invalid(format!(
            "unknown scheme {other:?}; expected one of forced-balance, bernoulli, bernoulli-nc, \
             ltt, covariate-uniform, covariate-sequential"
        )),
    }
}
