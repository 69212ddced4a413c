use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use smallvec::SmallVec;

use crate::error::{invalid, Error, Result};

/// A treatment allocation `w ∈ {0,1}^n`, stored as a dense bit vector.
///
/// Bit `i` is unit `i + 1`. The string form lists unit 1 first, so
/// `"1100"` treats units 1 and 2.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AssignmentPattern {
    len: usize,
    words: SmallVec<[u64; 1]>,
}

impl AssignmentPattern {
    pub fn zeros(len: usize) -> Self {
        AssignmentPattern {
            len,
            words: SmallVec::from_elem(0, len.div_ceil(64).max(1)),
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut p = Self::zeros(len);
        for i in 0..len {
            p.set(i, true);
        }
        p
    }

    /// Builds a pattern of `len <= 64` units from the low bits of `mask`.
    pub fn from_mask(mask: u64, len: usize) -> Self {
        assert!(len <= 64, "from_mask supports at most 64 units");
        let mask = if len == 64 {
            mask
        } else {
            mask & ((1u64 << len) - 1)
        };
        let mut words = SmallVec::new();
        words.push(mask);
        AssignmentPattern { len, words }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut p = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            p.set(i, b);
        }
        p
    }

    /// Parses 0/1 integers, rejecting anything else.
    pub fn from_indicators(values: &[u8]) -> Result<Self> {
        let mut p = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            match v {
                0 => {}
                1 => p.set(i, true),
                other => return invalid(format!("entry {} is {other}, expected 0 or 1", i + 1)),
            }
        }
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        assert!(
            i < self.len,
            "unit index {i} out of range for length {}",
            self.len
        );
        let bit = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= bit;
        } else {
            self.words[i / 64] &= !bit;
        }
    }

    /// Number of treated units.
    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// The low-word mask, available when the pattern has at most 64 units.
    pub fn mask(&self) -> Option<u64> {
        (self.len <= 64).then(|| self.words[0])
    }

    pub fn is_constant(&self) -> bool {
        let ones = self.count_ones();
        ones == 0 || ones == self.len
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    /// Count of units treated in both patterns.
    pub fn overlap(&self, other: &AssignmentPattern) -> usize {
        self.words
            .iter()
            .zip(other.words.iter())
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    pub fn to_indicators(&self) -> Vec<f64> {
        self.iter().map(|b| if b { 1.0 } else { 0.0 }).collect()
    }
}

impl fmt::Display for AssignmentPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for AssignmentPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AssignmentPattern({self})")
    }
}

impl FromStr for AssignmentPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return invalid("empty assignment pattern");
        }
        let mut p = Self::zeros(s.len());
        for (i, c) in s.chars().enumerate() {
            match c {
                '0' => {}
                '1' => p.set(i, true),
                other => return invalid(format!("invalid character {other:?} in pattern {s:?}")),
            }
        }
        Ok(p)
    }
}

impl Serialize for AssignmentPattern {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AssignmentPattern {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
