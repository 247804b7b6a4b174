//! Ground-truth computations on the input multiset, independent of the
//! simulation: greedy layers, the predicted stable bra-ket multiset, the
//! plurality winner, the lexicographic potential and modulo ranges.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::protocol::{Color, Weight};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("input multiset is empty")]
    Empty,
    #[error("weight vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("modulus must be at least 1")]
    ZeroModulus,
}

/// Counts per color.
pub fn color_counts(colors: &[Color]) -> BTreeMap<Color, usize> {
    let mut counts = BTreeMap::new();
    for &c in colors {
        *counts.entry(c).or_insert(0) += 1;
    }
    counts
}

/// The layers `G_1 ⊇ G_2 ⊇ … ⊇ G_q` of the input multiset, where `G_p` holds
/// every color occurring at least `p` times.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GreedyPartition {
    sets: Vec<BTreeSet<Color>>,
}

impl GreedyPartition {
    pub fn sets(&self) -> &[BTreeSet<Color>] {
        &self.sets
    }

    /// Number of layers, equal to the largest multiplicity.
    pub fn depth(&self) -> usize {
        self.sets.len()
    }

    pub fn last(&self) -> &BTreeSet<Color> {
        self.sets.last().expect("partition is never empty")
    }
}

pub fn greedy_partition(colors: &[Color]) -> Result<GreedyPartition, OracleError> {
    if colors.is_empty() {
        return Err(OracleError::Empty);
    }
    let counts = color_counts(colors);
    let depth = counts.values().copied().max().unwrap_or(0);
    let sets = (1..=depth)
        .map(|p| {
            counts
                .iter()
                .filter(|&(_, &c)| c >= p)
                .map(|(&color, _)| color)
                .collect()
        })
        .collect();
    Ok(GreedyPartition { sets })
}

/// A multiset of `(bra, ket)` pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct BraKetMultiset {
    counts: BTreeMap<(Color, Color), usize>,
}

impl BraKetMultiset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, bra: Color, ket: Color) {
        *self.counts.entry((bra, ket)).or_insert(0) += 1;
    }

    pub fn extend(&mut self, other: &BraKetMultiset) {
        for (&bk, &c) in &other.counts {
            *self.counts.entry(bk).or_insert(0) += c;
        }
    }

    pub fn count(&self, bra: Color, ket: Color) -> usize {
        self.counts.get(&(bra, ket)).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((Color, Color), usize)> + '_ {
        self.counts.iter().map(|(&bk, &c)| (bk, c))
    }

    pub fn bra_counts(&self) -> BTreeMap<Color, usize> {
        let mut m = BTreeMap::new();
        for (&(bra, _), &c) in &self.counts {
            *m.entry(bra).or_insert(0) += c;
        }
        m
    }

    pub fn ket_counts(&self) -> BTreeMap<Color, usize> {
        let mut m = BTreeMap::new();
        for (&(_, ket), &c) in &self.counts {
            *m.entry(ket).or_insert(0) += c;
        }
        m
    }

    /// Every color occurs as often as a bra as it does as a ket.
    pub fn is_balanced(&self) -> bool {
        self.bra_counts() == self.ket_counts()
    }

    /// Self-loop colors present, with multiplicity.
    pub fn self_loops(&self) -> BTreeMap<Color, usize> {
        self.counts
            .iter()
            .filter(|((b, k), _)| b == k)
            .map(|(&(b, _), &c)| (b, c))
            .collect()
    }
}

impl FromIterator<(Color, Color)> for BraKetMultiset {
    fn from_iter<I: IntoIterator<Item = (Color, Color)>>(iter: I) -> Self {
        let mut m = BraKetMultiset::new();
        for (b, k) in iter {
            m.insert(b, k);
        }
        m
    }
}

impl fmt::Display for BraKetMultiset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        let mut first = true;
        for (&(b, k), &c) in &self.counts {
            for _ in 0..c {
                if !first {
                    write!(f, ", ")?;
                }
                first = false;
                write!(f, "⟨{b}|{k}⟩")?;
            }
        }
        write!(f, "}}")
    }
}

impl Serialize for BraKetMultiset {
    /// Serialized as a list of `[bra, ket, count]` triples in sorted order.
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.counts.iter().map(|(&(b, k), &c)| (b, k, c)))
    }
}

/// The cycle `⟨g0|g1⟩, ⟨g1|g2⟩, …, ⟨gm|g0⟩` over the sorted colors of `set`.
/// A singleton `{i}` gives the self-loop `⟨i|i⟩`.
pub fn circle_braket_set(set: &BTreeSet<Color>) -> Result<BraKetMultiset, OracleError> {
    let first = *set.first().ok_or(OracleError::Empty)?;
    let mut m = BraKetMultiset::new();
    let mut it = set.iter().copied().peekable();
    while let Some(c) = it.next() {
        m.insert(c, it.peek().copied().unwrap_or(first));
    }
    Ok(m)
}

/// The bra-ket multiset every stable configuration must have: the union of the
/// circle sets of all greedy layers.
pub fn predicted_stable_multiset(colors: &[Color]) -> Result<BraKetMultiset, OracleError> {
    let partition = greedy_partition(colors)?;
    let mut m = BraKetMultiset::new();
    for set in partition.sets() {
        m.extend(&circle_braket_set(set)?);
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Majority {
    /// Smallest color among those with maximal support.
    pub winner: Color,
    /// No other color has the same support.
    pub unique: bool,
}

/// Plurality by direct counting.
pub fn brute_majority(colors: &[Color]) -> Result<Majority, OracleError> {
    let counts = color_counts(colors);
    let best = counts.values().copied().max().ok_or(OracleError::Empty)?;
    let mut top = counts.iter().filter(|&(_, &c)| c == best).map(|(&k, _)| k);
    let winner = top.next().expect("max exists");
    Ok(Majority {
        winner,
        unique: top.next().is_none(),
    })
}

/// Plurality read off the greedy layers: the deepest layer is a singleton
/// `{μ}` and no layer is a singleton of any other color. Returns `None` when
/// the criterion fails, which happens exactly for ties.
pub fn majority_from_partition(partition: &GreedyPartition) -> Option<Color> {
    let last = partition.last();
    if last.len() != 1 {
        return None;
    }
    let mu = *last.first().expect("len is 1");
    let other_singleton = partition
        .sets()
        .iter()
        .any(|s| s.len() == 1 && !s.contains(&mu));
    (!other_singleton).then_some(mu)
}

/// `a < b` in lexicographic order, for weight vectors sorted ascending. This
/// is the ordinal potential `ω^(n-1)·w1 + … + wn` compared without
/// materializing it.
pub fn potential_less(a: &[Weight], b: &[Weight]) -> Result<bool, OracleError> {
    if a.len() != b.len() {
        return Err(OracleError::LengthMismatch(a.len(), b.len()));
    }
    Ok(a < b)
}

/// Residues of the modulo range `[x, y]_p` (closed) or `(x, y)_p` (open),
/// walking forward from `x` by `(y - x) mod p` steps.
///
/// `(x, x)_p` is the whole circle except `x mod p`.
pub fn mod_range(x: u64, y: u64, p: u64, closed: bool) -> Result<BTreeSet<u64>, OracleError> {
    if p == 0 {
        return Err(OracleError::ZeroModulus);
    }
    let span = (y % p + p - x % p) % p;
    let offsets = if closed {
        0..=span
    } else if span == 0 {
        1..=p - 1
    } else {
        1..=span - 1
    };
    Ok(offsets.map(|t| (x % p + t) % p).collect())
}
