//! Interaction schedules.
//!
//! A schedule is an infinite sequence of unordered agent pairs. Every
//! scheduler here is random access: `next_pair(step)` depends only on the
//! scheduler's kind, `n` and `step`.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchedulerError {
    #[error("a schedule needs at least two agents, got {0}")]
    TooFewAgents(usize),
    #[error("a pair needs two distinct agents, got ({0}, {0})")]
    DegeneratePair(usize),
    #[error("pair {pair} is out of range for {n} agents")]
    PairOutOfRange { pair: AgentPair, n: usize },
    #[error("the starvation adversary needs at least three agents so that some pair remains")]
    AdversaryTooSmall,
}

/// Two distinct agent indices, stored with `first < second`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AgentPair {
    first: usize,
    second: usize,
}

impl AgentPair {
    pub fn new(a: usize, b: usize) -> Result<Self, SchedulerError> {
        match a.cmp(&b) {
            std::cmp::Ordering::Less => Ok(AgentPair {
                first: a,
                second: b,
            }),
            std::cmp::Ordering::Greater => Ok(AgentPair {
                first: b,
                second: a,
            }),
            std::cmp::Ordering::Equal => Err(SchedulerError::DegeneratePair(a)),
        }
    }

    pub fn first(&self) -> usize {
        self.first
    }

    pub fn second(&self) -> usize {
        self.second
    }

    pub fn fits(&self, n: usize) -> bool {
        self.second < n
    }
}

impl fmt::Display for AgentPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.first, self.second)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SchedulerKind {
    /// Cycles through all pairs in lexicographic order.
    RoundRobin,
    /// Independent uniform pair per step. Weakly fair with probability 1.
    UniformRandom { seed: u64 },
    /// Round-robin over every pair except `excluded` until `release_step`,
    /// then plain round-robin. Not weakly fair on any prefix before release.
    StarvationAdversary {
        excluded: AgentPair,
        release_step: u64,
    },
}

impl SchedulerKind {
    pub fn name(&self) -> &'static str {
        match self {
            SchedulerKind::RoundRobin => "roundrobin",
            SchedulerKind::UniformRandom { .. } => "random",
            SchedulerKind::StarvationAdversary { .. } => "adversary",
        }
    }

    /// Whether every pair is guaranteed to occur in every window of one cycle.
    pub fn is_round_robin(&self) -> bool {
        matches!(self, SchedulerKind::RoundRobin)
    }
}

/// A schedule for a fixed population size.
#[derive(Debug, Clone)]
pub struct Scheduler {
    kind: SchedulerKind,
    n: usize,
    pairs: u64,
    /// `row_start[i]` is the rank of pair `(i, i+1)`.
    row_start: Vec<u64>,
}

/// Number of unordered pairs among `n` agents.
pub fn pair_count(n: usize) -> u64 {
    let n = n as u64;
    n * n.saturating_sub(1) / 2
}

impl Scheduler {
    pub fn new(kind: SchedulerKind, n: usize) -> Result<Self, SchedulerError> {
        if n < 2 {
            return Err(SchedulerError::TooFewAgents(n));
        }
        if let SchedulerKind::StarvationAdversary { excluded, .. } = kind {
            if !excluded.fits(n) {
                return Err(SchedulerError::PairOutOfRange { pair: excluded, n });
            }
            if n < 3 {
                return Err(SchedulerError::AdversaryTooSmall);
            }
        }
        let mut row_start = Vec::with_capacity(n - 1);
        let mut acc = 0u64;
        for i in 0..n - 1 {
            row_start.push(acc);
            acc += (n - 1 - i) as u64;
        }
        Ok(Scheduler {
            kind,
            n,
            pairs: acc,
            row_start,
        })
    }

    pub fn kind(&self) -> &SchedulerKind {
        &self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Length of one round-robin cycle, `n(n-1)/2`.
    pub fn cycle_len(&self) -> u64 {
        self.pairs
    }

    /// Lexicographic rank of a pair.
    pub fn rank(&self, pair: AgentPair) -> u64 {
        self.row_start[pair.first] + (pair.second - pair.first - 1) as u64
    }

    /// Inverse of [`Scheduler::rank`].
    pub fn unrank(&self, rank: u64) -> AgentPair {
        debug_assert!(rank < self.pairs);
        let first = self.row_start.partition_point(|&s| s <= rank) - 1;
        let second = first + 1 + (rank - self.row_start[first]) as usize;
        AgentPair { first, second }
    }

    pub fn next_pair(&self, step: u64) -> AgentPair {
        match self.kind {
            SchedulerKind::RoundRobin => self.unrank(step % self.pairs),
            SchedulerKind::UniformRandom { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(step);
                self.unrank(rng.random_range(0..self.pairs))
            }
            SchedulerKind::StarvationAdversary {
                excluded,
                release_step,
            } => {
                if step >= release_step {
                    self.unrank((step - release_step) % self.pairs)
                } else {
                    // Skip the excluded rank in a cycle of length pairs - 1.
                    let r = step % (self.pairs - 1);
                    let hole = self.rank(excluded);
                    self.unrank(if r >= hole { r + 1 } else { r })
                }
            }
        }
    }

    pub fn pairs(&self, start: u64) -> impl Iterator<Item = AgentPair> + '_ {
        (start..).map(move |s| self.next_pair(s))
    }
}

/// Counts how often each of the `n(n-1)/2` pairs occurs in a schedule prefix.
/// Pairs that never occur are reported with count 0; pairs outside `n` are
/// ignored.
pub fn fairness_audit(prefix: &[AgentPair], n: usize) -> BTreeMap<AgentPair, u64> {
    let mut counts = BTreeMap::new();
    for a in 0..n {
        for b in a + 1..n {
            counts.insert(
                AgentPair {
                    first: a,
                    second: b,
                },
                0,
            );
        }
    }
    for p in prefix {
        if let Some(c) = counts.get_mut(p) {
            *c += 1;
        }
    }
    counts
}
