use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Largest `n` for which the full symmetric group is enumerated (10! elements).
pub const MAX_ENUMERABLE_PERMUTATION_UNITS: usize = 10;
/// Largest `n` for which all sign-flip vectors are enumerated.
pub const MAX_ENUMERABLE_SIGN_UNITS: usize = 24;

const MAX_WITNESSES: usize = 3;

/// A data transformation: an index rearrangement or a sign flip.
///
/// A permutation `π` maps `x` to `(x[π[0]], …, x[π[n-1]])`. Indices are
/// stored zero-based; the text and JSON forms are one-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "TransformationRepr", into = "TransformationRepr")]
pub enum Transformation {
    Permutation(Vec<usize>),
    SignFlip(Vec<i8>),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TransformationRepr {
    Perm { perm: Vec<usize> },
    Signs { signs: String },
}

impl From<Transformation> for TransformationRepr {
    fn from(t: Transformation) -> Self {
        match t {
            Transformation::Permutation(p) => TransformationRepr::Perm {
                perm: p.into_iter().map(|i| i + 1).collect(),
            },
            t @ Transformation::SignFlip(_) => TransformationRepr::Signs {
                signs: t.to_string(),
            },
        }
    }
}

impl TryFrom<TransformationRepr> for Transformation {
    type Error = Error;

    fn try_from(repr: TransformationRepr) -> Result<Self> {
        match repr {
            TransformationRepr::Perm { perm } => {
                if perm.contains(&0) {
                    return invalid("permutation indices are one-based");
                }
                Transformation::permutation(perm.into_iter().map(|i| i - 1).collect())
            }
            TransformationRepr::Signs { signs } => signs.parse(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformationKind {
    Permutation,
    SignFlip,
}

impl Transformation {
    /// Validates a zero-based index rearrangement.
    pub fn permutation(indices: Vec<usize>) -> Result<Self> {
        let n = indices.len();
        let mut seen = vec![false; n];
        for &i in &indices {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return invalid(format!("{indices:?} is not a permutation of 0..{n}"));
            }
        }
        Ok(Transformation::Permutation(indices))
    }

    pub fn sign_flip(signs: Vec<i8>) -> Result<Self> {
        if let Some(bad) = signs.iter().find(|s| **s != 1 && **s != -1) {
            return invalid(format!("sign entries must be ±1, got {bad}"));
        }
        Ok(Transformation::SignFlip(signs))
    }

    pub fn identity(kind: TransformationKind, n: usize) -> Self {
        match kind {
            TransformationKind::Permutation => Transformation::Permutation((0..n).collect()),
            TransformationKind::SignFlip => Transformation::SignFlip(vec![1; n]),
        }
    }

    pub fn kind(&self) -> TransformationKind {
        match self {
            Transformation::Permutation(_) => TransformationKind::Permutation,
            Transformation::SignFlip(_) => TransformationKind::SignFlip,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Transformation::Permutation(p) => p.len(),
            Transformation::SignFlip(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_identity(&self) -> bool {
        match self {
            Transformation::Permutation(p) => p.iter().enumerate().all(|(i, &j)| i == j),
            Transformation::SignFlip(s) => s.iter().all(|&x| x == 1),
        }
    }

    /// `self ∘ other`, the map `x ↦ self(other(x))`.
    pub fn compose(&self, other: &Transformation) -> Result<Transformation> {
        if self.len() != other.len() {
            return invalid("cannot compose transformations of different lengths");
        }
        match (self, other) {
            (Transformation::Permutation(g), Transformation::Permutation(h)) => {
                // self(other(x))[i] = other(x)[g[i]] = x[h[g[i]]]
                Ok(Transformation::Permutation(
                    g.iter().map(|&gi| h[gi]).collect(),
                ))
            }
            (Transformation::SignFlip(g), Transformation::SignFlip(h)) => Ok(
                Transformation::SignFlip(g.iter().zip(h).map(|(a, b)| a * b).collect()),
            ),
            _ => invalid("cannot compose a permutation with a sign flip"),
        }
    }

    pub fn inverse(&self) -> Transformation {
        match self {
            Transformation::Permutation(p) => {
                let mut inv = vec![0; p.len()];
                for (i, &j) in p.iter().enumerate() {
                    inv[j] = i;
                }
                Transformation::Permutation(inv)
            }
            Transformation::SignFlip(s) => Transformation::SignFlip(s.clone()),
        }
    }

    /// Applies the transformation to `x`, returning a new vector.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        self.apply_into(x, &mut out)?;
        Ok(out)
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.len() || out.len() != self.len() {
            return invalid(format!(
                "transformation of length {} applied to data of length {}",
                self.len(),
                x.len()
            ));
        }
        match self {
            Transformation::Permutation(p) => {
                for (o, &j) in out.iter_mut().zip(p) {
                    *o = x[j];
                }
            }
            Transformation::SignFlip(s) => {
                for ((o, &xi), &si) in out.iter_mut().zip(x).zip(s) {
                    *o = if si < 0 { -xi } else { xi };
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for Transformation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transformation::Permutation(p) => {
                for (k, i) in p.iter().enumerate() {
                    if k > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{}", i + 1)?;
                }
                Ok(())
            }
            Transformation::SignFlip(s) => {
                for &x in s {
                    f.write_str(if x < 0 { "-" } else { "+" })?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for Transformation {
    type Err = Error;

    /// `"+-+"` is a sign flip; `"2 3 1"` (or `"2,3,1"`) a one-based permutation.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return invalid("empty transformation");
        }
        if s.chars().all(|c| c == '+' || c == '-') {
            return Transformation::sign_flip(
                s.chars().map(|c| if c == '-' { -1 } else { 1 }).collect(),
            );
        }
        let indices = s
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| match t.parse::<usize>() {
                Ok(i) if i >= 1 => Ok(i - 1),
                _ => invalid(format!("bad permutation entry {t:?}")),
            })
            .collect::<Result<Vec<_>>>()?;
        Transformation::permutation(indices)
    }
}

#[derive(Debug, Clone)]
enum Family {
    Symmetric,
    SignFlips,
    Explicit(Vec<Transformation>),
}

/// A finite set of transformations intended to form a group.
///
/// The symmetric and sign-flip families are groups by construction. Sets
/// built from explicit elements are unvalidated until checked.
#[derive(Debug, Clone)]
pub struct TransformationGroup {
    n: usize,
    label: String,
    family: Family,
    enumerated: OnceLock<Vec<Transformation>>,
}

impl TransformationGroup {
    fn with_family(n: usize, label: String, family: Family) -> Self {
        TransformationGroup {
            n,
            label,
            family,
            enumerated: OnceLock::new(),
        }
    }

    /// All `n!` permutations.
    pub fn symmetric(n: usize) -> Result<Self> {
        if n == 0 {
            return invalid("symmetric group needs n >= 1");
        }
        Ok(Self::with_family(
            n,
            format!("perms:{n}"),
            Family::Symmetric,
        ))
    }

    /// All `2^n` sign-flip maps.
    pub fn sign_flips(n: usize) -> Result<Self> {
        if n == 0 {
            return invalid("sign-flip group needs n >= 1");
        }
        Ok(Self::with_family(
            n,
            format!("sign-flips:{n}"),
            Family::SignFlips,
        ))
    }

    /// An explicit element set. Elements must share one length and be distinct.
    pub fn from_elements(label: impl Into<String>, elements: Vec<Transformation>) -> Result<Self> {
        let Some(first) = elements.first() else {
            return invalid("transformation set is empty");
        };
        let n = first.len();
        let mut seen = HashSet::with_capacity(elements.len());
        for e in &elements {
            if e.len() != n {
                return invalid(format!("element {e} has length {}, expected {n}", e.len()));
            }
            if !seen.insert(e) {
                return invalid(format!("duplicate element {e}"));
            }
        }
        Ok(Self::with_family(
            n,
            label.into(),
            Family::Explicit(elements),
        ))
    }

    /// The cyclic subgroup generated by `generator`.
    pub fn cyclic(generator: &Transformation) -> Result<Self> {
        let identity = Transformation::identity(generator.kind(), generator.len());
        let mut elements = vec![identity.clone()];
        let mut current = generator.clone();
        while current != identity {
            elements.push(current.clone());
            current = current.compose(generator)?;
        }
        Self::from_elements(format!("cyclic:{generator}"), elements)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// True for families that are groups by construction.
    pub fn is_structural_group(&self) -> bool {
        !matches!(self.family, Family::Explicit(_))
    }

    /// `|𝒢|`, saturating at `u128::MAX`.
    pub fn order(&self) -> u128 {
        match &self.family {
            Family::Symmetric => (1..=self.n as u128)
                .try_fold(1u128, |acc, k| acc.checked_mul(k))
                .unwrap_or(u128::MAX),
            Family::SignFlips => {
                if self.n >= 128 {
                    u128::MAX
                } else {
                    1u128 << self.n
                }
            }
            Family::Explicit(e) => e.len() as u128,
        }
    }

    pub fn elements(&self) -> Result<&[Transformation]> {
        match &self.family {
            Family::Explicit(e) => Ok(e),
            Family::Symmetric if self.n > MAX_ENUMERABLE_PERMUTATION_UNITS => Err(
                Error::InfeasibleEnumeration(format!("{} has {}! elements", self.label, self.n)),
            ),
            Family::SignFlips if self.n > MAX_ENUMERABLE_SIGN_UNITS => Err(
                Error::InfeasibleEnumeration(format!("{} has 2^{} elements", self.label, self.n)),
            ),
            Family::Symmetric => Ok(self.enumerated.get_or_init(|| all_permutations(self.n))),
            Family::SignFlips => Ok(self.enumerated.get_or_init(|| all_sign_flips(self.n))),
        }
    }

    /// Draws one element uniformly.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Transformation {
        match &self.family {
            Family::Symmetric => {
                let mut p: Vec<usize> = (0..self.n).collect();
                p.shuffle(rng);
                Transformation::Permutation(p)
            }
            Family::SignFlips => Transformation::SignFlip(
                (0..self.n)
                    .map(|_| if rng.random::<bool>() { 1 } else { -1 })
                    .collect(),
            ),
            Family::Explicit(e) => e[rng.random_range(0..e.len())].clone(),
        }
    }
}

fn all_permutations(n: usize) -> Vec<Transformation> {
    // lexicographic order via next-permutation
    let mut current: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    loop {
        out.push(Transformation::Permutation(current.clone()));
        let Some(i) = (1..n).rev().find(|&i| current[i - 1] < current[i]) else {
            break;
        };
        let j = (i..n).rev().find(|&j| current[j] > current[i - 1]).unwrap();
        current.swap(i - 1, j);
        current[i..].reverse();
    }
    out
}

fn all_sign_flips(n: usize) -> Vec<Transformation> {
    (0..1u64 << n)
        .map(|m| {
            Transformation::SignFlip(
                (0..n)
                    .map(|i| if (m >> i) & 1 == 1 { -1 } else { 1 })
                    .collect(),
            )
        })
        .collect()
}

/// Every permutation of `n_cases + n_controls` positions (cases first) that
/// places control observations into exactly half of the case positions.
///
/// Because a permutation is a bijection, the same number of case
/// observations then lands in control positions. The identity is never a
/// member.
pub fn balanced_permutations(n_cases: usize, n_controls: usize) -> Result<TransformationGroup> {
    if n_cases == 0 || n_cases != n_controls || !n_cases.is_multiple_of(2) {
        return invalid(format!(
            "balanced permutations need equal, even, positive group sizes; got {n_cases} and {n_controls}"
        ));
    }
    let n = n_cases + n_controls;
    if n > MAX_ENUMERABLE_PERMUTATION_UNITS {
        return Err(Error::InfeasibleEnumeration(format!(
            "balanced permutations over {n} positions"
        )));
    }
    let elements = all_permutations(n)
        .into_iter()
        .filter(|t| match t {
            Transformation::Permutation(p) => {
                p[..n_cases].iter().filter(|&&src| src >= n_cases).count() == n_cases / 2
            }
            Transformation::SignFlip(_) => false,
        })
        .collect();
    TransformationGroup::from_elements(format!("balanced-perms:{n_cases},{n_controls}"), elements)
}

/// A concrete reason why a transformation set is not a group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Witness {
    /// `g ∘ h` is not in the set.
    NotClosed {
        g: Transformation,
        h: Transformation,
        composite: Transformation,
    },
    MissingInverse {
        element: Transformation,
        inverse: Transformation,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupCheckReport {
    pub label: String,
    pub size: u128,
    pub is_group: bool,
    pub has_identity: bool,
    pub closed: bool,
    pub has_inverses: bool,
    pub witnesses: Vec<Witness>,
}

/// Checks the group axioms by exhaustive composition.
///
/// Membership uses exact hashing of canonical encodings. The closure scan is
/// `O(|𝒢|²)` and stops once three non-closure witnesses are found.
pub fn check_group(group: &TransformationGroup) -> Result<GroupCheckReport> {
    let elements = group.elements()?;
    let kind = elements[0].kind();
    if elements.iter().any(|e| e.kind() != kind) {
        return invalid("transformation set mixes permutations and sign flips");
    }
    let members: HashSet<&Transformation> = elements.iter().collect();

    let has_identity = members.contains(&Transformation::identity(kind, group.n()));

    let mut witnesses = Vec::new();
    let mut closed = true;
    'outer: for g in elements {
        for h in elements {
            let gh = g.compose(h)?;
            if !members.contains(&gh) {
                closed = false;
                witnesses.push(Witness::NotClosed {
                    g: g.clone(),
                    h: h.clone(),
                    composite: gh,
                });
                if witnesses.len() == MAX_WITNESSES {
                    break 'outer;
                }
            }
        }
    }

    let mut has_inverses = true;
    for g in elements {
        let inv = g.inverse();
        if !members.contains(&inv) {
            has_inverses = false;
            if witnesses.len() < MAX_WITNESSES {
                witnesses.push(Witness::MissingInverse {
                    element: g.clone(),
                    inverse: inv,
                });
            } else {
                break;
            }
        }
    }

    Ok(GroupCheckReport {
        label: group.label().to_owned(),
        size: elements.len() as u128,
        is_group: has_identity && closed && has_inverses,
        has_identity,
        closed,
        has_inverses,
        witnesses,
    })
}

impl GroupCheckReport {
    /// Names the first failed axiom, for error messages.
    pub fn failure_summary(&self) -> Option<String> {
        if self.is_group {
            return None;
        }
        let mut failed = Vec::new();
        if !self.has_identity {
            failed.push("identity missing");
        }
        if !self.closed {
            failed.push("not closed under composition");
        }
        if !self.has_inverses {
            failed.push("inverses missing");
        }
        let witness = self.witnesses.first().map(|w| match w {
            Witness::NotClosed { g, h, composite } => {
                format!("; witness: ({g}) ∘ ({h}) = ({composite}) is outside the set")
            }
            Witness::MissingInverse { element, inverse } => {
                format!("; witness: ({element}) has inverse ({inverse}) outside the set")
            }
        });
        Some(format!(
            "{}: {}{}",
            self.label,
            failed.join(", "),
            witness.unwrap_or_default()
        ))
    }
}
