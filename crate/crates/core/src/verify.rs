//! Verification batteries: run instances to quiescence under round-robin with
//! full runtime assertions, then compare the outcome against the oracles.
//!
//! Per instance the checks are
//! - bra-ket balance after every interaction,
//! - strict potential decrease at every ket exchange,
//! - final bra-ket multiset equal to the predicted stable multiset,
//! - all outputs equal to the plurality color when it is unique.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::engine::{
    self, Configuration, EngineError, RunOptions, StopPolicy, TraceMode, ViolationKind,
};
use crate::experiment::{tied_colors, weighted_colors};
use crate::oracle;
use crate::protocol::Color;
use crate::scheduler::SchedulerKind;

/// Counterexamples kept verbatim in a report; the rest are only counted.
pub const MAX_REPORTED: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerifyError {
    #[error("n-max and k-max must be at least 1")]
    EmptyRange,
    #[error("{k}^{n} assignments do not fit in 64 bits")]
    TooLarge { n: usize, k: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Converged,
    BraketInvariant,
    PotentialDecrease,
    StableMultiset,
    MajorityOutput,
    /// Anything the engine rejected that is not one of the above.
    Engine,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Check::Converged => "converged",
            Check::BraketInvariant => "braket_invariant",
            Check::PotentialDecrease => "potential_decrease",
            Check::StableMultiset => "stable_multiset",
            Check::MajorityOutput => "majority_output",
            Check::Engine => "engine",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Counterexample {
    pub n: usize,
    pub k: u32,
    pub colors: Vec<Color>,
    pub check: Check,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct InstanceOutcome {
    pub unique: bool,
    pub interactions: u64,
    pub ket_exchanges: u64,
}

/// Runs one instance under round-robin and applies every check.
pub fn check_instance(
    colors: &[Color],
    k: u32,
    cap: Option<u64>,
) -> Result<InstanceOutcome, Counterexample> {
    let fail = |check, detail: String| Counterexample {
        n: colors.len(),
        k,
        colors: colors.to_vec(),
        check,
        detail,
    };
    let config = Configuration::new(colors, k).map_err(|e| fail(Check::Engine, e.to_string()))?;
    let opts = RunOptions {
        stop: StopPolicy::UntilQuiescent { cap },
        trace: TraceMode::Off,
        ..RunOptions::default()
    };
    let (config, metrics) =
        match engine::run_observed(config, &SchedulerKind::RoundRobin, &opts, |_| {}) {
            Ok(r) => r,
            Err(EngineError::InvariantViolation(v)) => {
                let check = match v.kind {
                    ViolationKind::BraketImbalance { .. } => Check::BraketInvariant,
                    _ => Check::PotentialDecrease,
                };
                return Err(fail(check, v.to_string()));
            }
            Err(e) => return Err(fail(Check::Engine, e.to_string())),
        };
    if !metrics.converged {
        return Err(fail(
            Check::Converged,
            format!(
                "not quiescent after {} interactions",
                metrics.total_interactions
            ),
        ));
    }

    let predicted = oracle::predicted_stable_multiset(colors).expect("non-empty");
    let actual = config.braket_multiset();
    if actual != predicted {
        return Err(fail(
            Check::StableMultiset,
            format!("expected {predicted}, got {actual}"),
        ));
    }

    let majority = oracle::brute_majority(colors).expect("non-empty");
    if majority.unique && config.agents().iter().any(|a| a.out != majority.winner) {
        return Err(fail(
            Check::MajorityOutput,
            format!(
                "expected all outputs {}, got {:?}",
                majority.winner,
                config.outputs()
            ),
        ));
    }

    Ok(InstanceOutcome {
        unique: majority.unique,
        interactions: metrics.total_interactions,
        ket_exchanges: metrics.ket_exchanges,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerifyReport {
    pub mode: String,
    pub n_max: usize,
    pub k_max: u32,
    pub instances: u64,
    pub unique_majority: u64,
    pub ties: u64,
    pub total_interactions: u64,
    pub total_ket_exchanges: u64,
    pub failures: u64,
    /// Sorted; at most [`MAX_REPORTED`] entries.
    pub counterexamples: Vec<Counterexample>,
}

impl VerifyReport {
    fn new(mode: &str, n_max: usize, k_max: u32) -> Self {
        VerifyReport {
            mode: mode.to_string(),
            n_max,
            k_max,
            instances: 0,
            unique_majority: 0,
            ties: 0,
            total_interactions: 0,
            total_ket_exchanges: 0,
            failures: 0,
            counterexamples: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    fn record(&mut self, r: Result<InstanceOutcome, Counterexample>) {
        self.instances += 1;
        match r {
            Ok(o) => {
                if o.unique {
                    self.unique_majority += 1;
                } else {
                    self.ties += 1;
                }
                self.total_interactions += o.interactions;
                self.total_ket_exchanges += o.ket_exchanges;
            }
            Err(c) => {
                self.failures += 1;
                self.counterexamples.push(c);
            }
        }
    }

    fn merge(mut self, other: VerifyReport) -> Self {
        self.instances += other.instances;
        self.unique_majority += other.unique_majority;
        self.ties += other.ties;
        self.total_interactions += other.total_interactions;
        self.total_ket_exchanges += other.total_ket_exchanges;
        self.failures += other.failures;
        self.counterexamples.extend(other.counterexamples);
        self.counterexamples.sort();
        self.counterexamples.truncate(MAX_REPORTED);
        self
    }
}

/// Decodes `index` as `n` base-`k` digits, most significant first.
fn assignment(mut index: u64, n: usize, k: u32) -> Vec<Color> {
    let mut v = vec![Color(0); n];
    for slot in v.iter_mut().rev() {
        *slot = Color((index % u64::from(k)) as u32);
        index /= u64::from(k);
    }
    v
}

/// Every ordered color assignment for every `n <= n_max`, `k <= k_max`.
pub fn verify_exhaustive(
    n_max: usize,
    k_max: u32,
    cap: Option<u64>,
) -> Result<VerifyReport, VerifyError> {
    if n_max == 0 || k_max == 0 {
        return Err(VerifyError::EmptyRange);
    }
    let mut blocks = Vec::new();
    for n in 1..=n_max {
        for k in 1..=k_max {
            let count = u64::from(k)
                .checked_pow(n as u32)
                .ok_or(VerifyError::TooLarge { n, k })?;
            blocks.push((n, k, count));
        }
    }
    let report = blocks
        .into_par_iter()
        .map(|(n, k, count)| {
            (0..count)
                .into_par_iter()
                .fold(
                    || VerifyReport::new("exhaustive", n_max, k_max),
                    |mut acc, i| {
                        acc.record(check_instance(&assignment(i, n, k), k, cap));
                        acc
                    },
                )
                .reduce(
                    || VerifyReport::new("exhaustive", n_max, k_max),
                    VerifyReport::merge,
                )
        })
        .reduce(
            || VerifyReport::new("exhaustive", n_max, k_max),
            VerifyReport::merge,
        );
    Ok(report)
}

/// Random instance `index` of a randomized battery: odd indices are ties
/// whenever the drawn `(n, k)` admits one.
pub fn random_instance(seed: u64, index: u64, n_max: usize, k_max: u32) -> (Vec<Color>, u32) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let n = rng.random_range(1..=n_max);
    let k = rng.random_range(1..=k_max);
    if index % 2 == 1 {
        if let Some(colors) = tied_colors(n, k, &mut rng) {
            return (colors, k);
        }
    }
    let weights: Vec<f64> = (0..k)
        .map(|_| f64::from(rng.random_range(1u32..=4)))
        .collect();
    let colors = weighted_colors(n, &weights, &mut rng).expect("n >= 1, positive weights");
    (colors, k)
}

pub fn verify_randomized(
    n_max: usize,
    k_max: u32,
    trials: u64,
    seed: u64,
    cap: Option<u64>,
) -> Result<VerifyReport, VerifyError> {
    if n_max == 0 || k_max == 0 {
        return Err(VerifyError::EmptyRange);
    }
    let report = (0..trials)
        .into_par_iter()
        .fold(
            || VerifyReport::new("randomized", n_max, k_max),
            |mut acc, t| {
                let (colors, k) = random_instance(seed, t, n_max, k_max);
                acc.record(check_instance(&colors, k, cap));
                acc
            },
        )
        .reduce(
            || VerifyReport::new("randomized", n_max, k_max),
            VerifyReport::merge,
        );
    Ok(report)
}
