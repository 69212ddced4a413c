use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

/// An unreduced non-negative fraction.
///
/// P-values keep the reference-set size as denominator, so `35/70` stays
/// `35/70` rather than collapsing to `1/2`. Equality is by value.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Fraction {
    pub num: u128,
    pub den: u128,
}

impl Fraction {
    pub fn new(num: u128, den: u128) -> Self {
        assert!(den > 0, "zero denominator");
        Fraction { num, den }
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Structural equality: same numerator and same denominator.
    pub fn same_terms(&self, other: &Fraction) -> bool {
        self.num == other.num && self.den == other.den
    }
}

impl PartialEq for Fraction {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Fraction {}

impl PartialOrd for Fraction {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Fraction {
    fn cmp(&self, other: &Self) -> Ordering {
        match (
            self.num.checked_mul(other.den),
            other.num.checked_mul(self.den),
        ) {
            (Some(a), Some(b)) => a.cmp(&b),
            _ => self.to_f64().total_cmp(&other.to_f64()),
        }
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

/// `floor(alpha * r)`, snapping products within 1e-9 (relative) of an integer.
///
/// Levels such as `1/70` are not representable in binary; without the snap
/// `(1/70) * 70` could land just below 1 and lose an attainable level.
pub fn alpha_floor(alpha: f64, r: u128) -> u128 {
    let x = alpha * r as f64;
    let nearest = x.round();
    let q = if (x - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest
    } else {
        x.floor()
    };
    (q.max(0.0) as u128).min(r.saturating_sub(1))
}

/// Threshold index `k = ceil((1 - alpha) r)`, computed as `r - floor(alpha r)`.
pub fn threshold_index(alpha: f64, r: u128) -> u128 {
    r - alpha_floor(alpha, r)
}
