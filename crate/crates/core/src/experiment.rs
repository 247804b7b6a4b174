//! Input generators and `(n, k)` parameter sweeps.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::engine::{
    self, AssertionLevel, Configuration, EngineError, RunOptions, StopPolicy, TraceMode,
};
use crate::protocol::Color;
use crate::scheduler::SchedulerKind;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error("population size must be at least 1")]
    EmptyPopulation,
    #[error("need at least one color weight")]
    NoWeights,
    #[error("invalid color weights: {0}")]
    BadWeights(String),
    #[error("k must be at least 1")]
    NoColors,
    #[error("margin {margin} is impossible for n = {n}, k = {k}")]
    InfeasibleMargin { n: usize, k: u32, margin: usize },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Each agent draws its color independently with probability proportional to
/// `weights[color]`.
pub fn weighted_colors<R: Rng + ?Sized>(
    n: usize,
    weights: &[f64],
    rng: &mut R,
) -> Result<Vec<Color>, ExperimentError> {
    if n == 0 {
        return Err(ExperimentError::EmptyPopulation);
    }
    if weights.is_empty() {
        return Err(ExperimentError::NoWeights);
    }
    let dist =
        WeightedIndex::new(weights).map_err(|e| ExperimentError::BadWeights(e.to_string()))?;
    Ok((0..n).map(|_| Color(dist.sample(rng) as u32)).collect())
}

/// Spreads `total` units over `slots` bins holding at most `cap` each, one
/// unit at a time into a uniformly chosen non-full bin. Caller guarantees
/// `slots * cap >= total`.
fn fill_capped<R: Rng + ?Sized>(total: usize, slots: usize, cap: usize, rng: &mut R) -> Vec<usize> {
    debug_assert!(slots * cap >= total);
    let mut bins = vec![0usize; slots];
    let mut open: Vec<usize> = (0..slots).filter(|_| cap > 0).collect();
    for _ in 0..total {
        let at = rng.random_range(0..open.len());
        let b = open[at];
        bins[b] += 1;
        if bins[b] == cap {
            open.swap_remove(at);
        }
    }
    bins
}

fn colors_from_counts<R: Rng + ?Sized>(counts: &BTreeMap<u32, usize>, rng: &mut R) -> Vec<Color> {
    let mut v: Vec<Color> = counts
        .iter()
        .flat_map(|(&c, &m)| std::iter::repeat_n(Color(c), m))
        .collect();
    v.shuffle(rng);
    v
}

/// A random input whose plurality color beats every other color by at least
/// `margin` agents. The winner and agent order are random.
pub fn planted_majority<R: Rng + ?Sized>(
    n: usize,
    k: u32,
    margin: usize,
    rng: &mut R,
) -> Result<Vec<Color>, ExperimentError> {
    if n == 0 {
        return Err(ExperimentError::EmptyPopulation);
    }
    if k == 0 {
        return Err(ExperimentError::NoColors);
    }
    let infeasible = ExperimentError::InfeasibleMargin { n, k, margin };
    let others = (k - 1) as usize;
    // smallest winner count w with others * (w - margin) >= n - w
    let w = if others == 0 {
        n
    } else {
        (n + others * margin).div_ceil(others + 1).max(margin)
    };
    if w > n || (others == 0 && margin > n) {
        return Err(infeasible);
    }
    let winner = rng.random_range(0..k);
    let rest = fill_capped(n - w, others, w.saturating_sub(margin), rng);
    let mut counts = BTreeMap::from([(winner, w)]);
    let other_colors = (0..k).filter(|&c| c != winner);
    for (c, m) in other_colors.zip(rest) {
        counts.insert(c, m);
    }
    Ok(colors_from_counts(&counts, rng))
}

/// A random input where at least two colors share the largest support, or
/// `None` when `n` and `k` admit no tie.
pub fn tied_colors<R: Rng + ?Sized>(n: usize, k: u32, rng: &mut R) -> Option<Vec<Color>> {
    let k = k as usize;
    // (t tied colors, top count c) with the remainder fitting below c
    let mut shapes = Vec::new();
    for t in 2..=k.min(n) {
        for c in 1..=n / t {
            let rest = n - t * c;
            if (k - t) * (c - 1) >= rest {
                shapes.push((t, c));
            }
        }
    }
    let &(t, c) = shapes.choose(rng)?;
    let mut palette: Vec<u32> = (0..k as u32).collect();
    palette.shuffle(rng);
    let rest = fill_capped(n - t * c, k - t, c - 1, rng);
    let mut counts = BTreeMap::new();
    for &color in &palette[..t] {
        counts.insert(color, c);
    }
    for (&color, m) in palette[t..].iter().zip(rest) {
        counts.insert(color, m);
    }
    Some(colors_from_counts(&counts, rng))
}

/// Maps arbitrary labels onto dense colors `0..d` preserving their order.
pub fn densify(labels: &[u64]) -> (Vec<Color>, BTreeMap<u64, Color>) {
    let mut distinct: Vec<u64> = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let map: BTreeMap<u64, Color> = distinct
        .into_iter()
        .enumerate()
        .map(|(i, l)| (l, Color(i as u32)))
        .collect();
    (labels.iter().map(|l| map[l]).collect(), map)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SweepSpec {
    pub ns: Vec<usize>,
    pub ks: Vec<u32>,
    pub trials: usize,
    pub seed: u64,
    /// Use a seeded uniform-random schedule per trial instead of round-robin.
    pub random_schedule: bool,
    pub cap: Option<u64>,
    pub assertions: AssertionLevel,
}

/// Aggregates over the trials of one `(n, k)` cell. Quiescence statistics
/// cover converged trials only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub k: u32,
    pub trials: usize,
    pub converged: usize,
    pub mean_quiescence_step: f64,
    pub max_quiescence_step: u64,
    pub mean_interactions: f64,
    pub max_interactions: u64,
    pub mean_ket_exchanges: f64,
    pub max_ket_exchanges: u64,
}

impl SweepRow {
    pub const HEADER: [&'static str; 10] = [
        "n",
        "k",
        "trials",
        "converged",
        "mean_quiescence_step",
        "max_quiescence_step",
        "mean_interactions",
        "max_interactions",
        "mean_ket_exchanges",
        "max_ket_exchanges",
    ];
}

fn cell_rng(seed: u64, n: usize, k: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((n as u64) << 32) | u64::from(k));
    rng
}

fn sweep_cell(spec: &SweepSpec, n: usize, k: u32) -> Result<SweepRow, ExperimentError> {
    let mut rng = cell_rng(spec.seed, n, k);
    let uniform = vec![1.0; k as usize];
    let opts = RunOptions {
        stop: StopPolicy::UntilQuiescent { cap: spec.cap },
        assertions: spec.assertions,
        trace: TraceMode::Off,
        check_every: None,
    };
    let mut row = SweepRow {
        n,
        k,
        trials: spec.trials,
        converged: 0,
        mean_quiescence_step: 0.0,
        max_quiescence_step: 0,
        mean_interactions: 0.0,
        max_interactions: 0,
        mean_ket_exchanges: 0.0,
        max_ket_exchanges: 0,
    };
    let (mut sum_q, mut sum_i, mut sum_x) = (0u128, 0u128, 0u128);
    for _ in 0..spec.trials {
        let colors = weighted_colors(n, &uniform, &mut rng)?;
        let kind = if spec.random_schedule {
            SchedulerKind::UniformRandom { seed: rng.random() }
        } else {
            SchedulerKind::RoundRobin
        };
        let config = Configuration::new(&colors, k)?;
        let (_, m) = engine::run_observed(config, &kind, &opts, |_| {})?;
        if let Some(q) = m.quiescence_step {
            row.converged += 1;
            sum_q += u128::from(q);
            row.max_quiescence_step = row.max_quiescence_step.max(q);
        }
        sum_i += u128::from(m.total_interactions);
        sum_x += u128::from(m.ket_exchanges);
        row.max_interactions = row.max_interactions.max(m.total_interactions);
        row.max_ket_exchanges = row.max_ket_exchanges.max(m.ket_exchanges);
    }
    let mean = |sum: u128, count: usize| {
        if count == 0 {
            0.0
        } else {
            sum as f64 / count as f64
        }
    };
    row.mean_quiescence_step = mean(sum_q, row.converged);
    row.mean_interactions = mean(sum_i, spec.trials);
    row.mean_ket_exchanges = mean(sum_x, spec.trials);
    Ok(row)
}

/// Runs every `(n, k)` cell of the grid. Cells are independent and run in
/// parallel; rows come back in grid order (`n` major, `k` minor) and do not
/// depend on the thread count.
pub fn sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>, ExperimentError> {
    if spec.ns.contains(&0) {
        return Err(ExperimentError::EmptyPopulation);
    }
    if spec.ks.contains(&0) {
        return Err(ExperimentError::NoColors);
    }
    let cells: Vec<(usize, u32)> = spec
        .ns
        .iter()
        .flat_map(|&n| spec.ks.iter().map(move |&k| (n, k)))
        .collect();
    cells
        .into_par_iter()
        .map(|(n, k)| sweep_cell(spec, n, k))
        .collect()
}
