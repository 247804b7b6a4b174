//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any criterion fails.
//!
//! Expected values come from reference computations written here, separately
//! from the library: a literal greedy drain of the input multiset, the circle
//! bra-ket construction on top of it, plurality by counting, and trace replay
//! for the step invariants. All checks are exact.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode, Output};
use std::time::Instant;

use braket_core::engine::{self, explore};
use braket_core::verify::random_instance;
use braket_core::{
    oracle, AgentPair, AgentState, AssertionLevel, Color, Configuration, Event, RunOptions,
    SchedulerKind, StopPolicy, TraceMode,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BIN: &str = env!("CARGO_BIN_EXE_braket");

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

// ---------------------------------------------------------------------------
// reference computations

/// Literal greedy construction: repeatedly sweep the remaining inputs in
/// order, taking each one whose color is not yet in the current layer.
fn greedy_drain(colors: &[u32]) -> Vec<BTreeSet<u32>> {
    let mut remaining: Vec<u32> = colors.to_vec();
    let mut layers = Vec::new();
    while !remaining.is_empty() {
        let mut layer = BTreeSet::new();
        let mut rest = Vec::new();
        for c in remaining {
            if !layer.insert(c) {
                rest.push(c);
            }
        }
        layers.push(layer);
        remaining = rest;
    }
    layers
}

/// Predicted stable bra-kets as sorted `(bra, ket)` pairs.
fn reference_prediction(colors: &[u32]) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    for layer in greedy_drain(colors) {
        let sorted: Vec<u32> = layer.into_iter().collect();
        for (i, &c) in sorted.iter().enumerate() {
            out.push((c, sorted[(i + 1) % sorted.len()]));
        }
    }
    out.sort_unstable();
    out
}

/// `(winner, unique)` by counting; winner is the smallest top color.
fn reference_majority(colors: &[u32]) -> (u32, bool) {
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for &c in colors {
        *counts.entry(c).or_default() += 1;
    }
    let best = *counts.values().max().unwrap();
    let top: Vec<u32> = counts
        .iter()
        .filter(|(_, &v)| v == best)
        .map(|(&c, _)| c)
        .collect();
    (top[0], top.len() == 1)
}

fn reference_weight(k: u32, bra: u32, ket: u32) -> u32 {
    if bra == ket {
        k
    } else {
        (ket as i64 - bra as i64).rem_euclid(k as i64) as u32
    }
}

fn balanced(agents: &[AgentState]) -> bool {
    let mut bras: Vec<u32> = agents.iter().map(|a| a.bra.0).collect();
    let mut kets: Vec<u32> = agents.iter().map(|a| a.ket.0).collect();
    bras.sort_unstable();
    kets.sort_unstable();
    bras == kets
}

fn sorted_weights(k: u32, agents: &[AgentState]) -> Vec<u32> {
    let mut w: Vec<u32> = agents
        .iter()
        .map(|a| reference_weight(k, a.bra.0, a.ket.0))
        .collect();
    w.sort_unstable();
    w
}

/// Replays a trace from the initial agents, checking (a) balance after every
/// event and, when `potential` is set, (b) strict lexicographic decrease of
/// the sorted weights at every exchange and no change otherwise. Events that
/// are absent from a thinned trace changed nothing, so skipping them is exact.
fn replay(
    k: u32,
    start: &[AgentState],
    trace: &[Event],
    potential: bool,
) -> Result<Vec<AgentState>, String> {
    let mut agents = start.to_vec();
    for e in trace {
        let (i, j) = (e.pair.first(), e.pair.second());
        ensure!(
            [agents[i], agents[j]] == e.pre,
            "trace does not chain at step {}",
            e.step
        );
        let before = sorted_weights(k, &agents);
        agents[i] = e.post[0];
        agents[j] = e.post[1];
        ensure!(
            balanced(&agents),
            "(a) bra-ket balance broken at step {}",
            e.step
        );
        if potential {
            let after = sorted_weights(k, &agents);
            if e.exchanged {
                ensure!(
                    after < before,
                    "(b) weights {before:?} -> {after:?} at step {}",
                    e.step
                );
            } else {
                ensure!(
                    after == before,
                    "(b) weights moved without exchange at step {}",
                    e.step
                );
            }
        }
    }
    Ok(agents)
}

/// Round-robin to quiescence with full assertions, then checks (a)-(d).
/// Returns whether the majority was unique.
fn check_instance(colors: &[u32], k: u32, trace: TraceMode) -> Result<bool, String> {
    let cfg = Configuration::from_values(colors, k).map_err(|e| e.to_string())?;
    let start = cfg.agents().to_vec();
    let opts = RunOptions {
        stop: StopPolicy::UntilQuiescent { cap: None },
        assertions: AssertionLevel::Full,
        trace,
        check_every: None,
    };
    let r = engine::run(cfg, &SchedulerKind::RoundRobin, &opts)
        .map_err(|e| format!("{colors:?} k={k}: {e}"))?;
    ensure!(
        r.metrics.converged,
        "{colors:?} k={k}: not quiescent within the cap"
    );
    let last = replay(k, &start, &r.trace, true).map_err(|e| format!("{colors:?} k={k}: {e}"))?;
    ensure!(
        last == r.config.agents(),
        "{colors:?} k={k}: replay diverged from engine"
    );

    let mut got: Vec<(u32, u32)> = r
        .config
        .agents()
        .iter()
        .map(|a| (a.bra.0, a.ket.0))
        .collect();
    got.sort_unstable();
    let want = reference_prediction(colors);
    ensure!(
        got == want,
        "(c) {colors:?} k={k}: stable bra-kets {got:?}, predicted {want:?}"
    );
    let lib: Vec<Color> = colors.iter().copied().map(Color).collect();
    ensure!(
        oracle::predicted_stable_multiset(&lib).unwrap() == r.config.braket_multiset(),
        "(c) {colors:?} k={k}: library oracle disagrees"
    );

    let (mu, unique) = reference_majority(colors);
    if unique {
        ensure!(
            r.config.agents().iter().all(|a| a.out.0 == mu),
            "(d) {colors:?} k={k}: outputs {:?}, expected all {mu}",
            r.config.outputs()
        );
    }
    Ok(unique)
}

fn run_cli(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn braket")
}

fn report_failures(out: &Output) -> Result<serde_json::Value, String> {
    ensure!(
        out.status.code() == Some(0),
        "braket exited with {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())
}

// ---------------------------------------------------------------------------
// criteria

fn ac1_exhaustive() -> Outcome {
    let (mut instances, mut unique, mut ties) = (0u64, 0u64, 0u64);
    for n in 1..=5usize {
        for k in 1..=4u32 {
            for idx in 0..(k as u64).pow(n as u32) {
                let mut x = idx;
                let colors: Vec<u32> = (0..n)
                    .map(|_| {
                        let c = (x % k as u64) as u32;
                        x /= k as u64;
                        c
                    })
                    .collect();
                if check_instance(&colors, k, TraceMode::Full)? {
                    unique += 1;
                } else {
                    ties += 1;
                }
                instances += 1;
            }
        }
    }
    ensure!(
        instances == 1794,
        "expected 1794 assignments, ran {instances}"
    );
    let report = report_failures(&run_cli(&["verify", "--n-max", "5", "--k-max", "4"], &[]))?;
    ensure!(
        report["failures"] == 0,
        "cli verify reported failures: {report}"
    );
    ensure!(
        report["instances"] == instances,
        "cli verify ran {} instances",
        report["instances"]
    );
    Ok(format!(
        "{instances} assignments ({unique} unique, {ties} ties), cli verify agrees"
    ))
}

fn ac2_randomized() -> Outcome {
    let (mut unique, mut ties, mut max_n) = (0u64, 0u64, 0usize);
    let seed = 2024;
    for t in 0..1000u64 {
        let (colors, k) = random_instance(seed, t, 50, 8);
        ensure!(colors.len() <= 50 && k <= 8, "instance {t} out of range");
        max_n = max_n.max(colors.len());
        let values: Vec<u32> = colors.iter().map(|c| c.0).collect();
        if check_instance(&values, k, TraceMode::Changes)? {
            unique += 1;
        } else {
            ties += 1;
        }
    }
    ensure!(
        unique > 0 && ties > 0,
        "instances not mixed: {unique} unique, {ties} ties"
    );
    let report = report_failures(&run_cli(
        &[
            "verify",
            "--mode",
            "randomized",
            "--n-max",
            "50",
            "--k-max",
            "8",
            "--trials",
            "1000",
            "--seed",
            "2024",
        ],
        &[],
    ))?;
    ensure!(
        report["failures"] == 0,
        "cli verify reported failures: {report}"
    );
    Ok(format!(
        "1000 instances ({unique} unique, {ties} ties, n up to {max_n}), cli verify agrees"
    ))
}

fn ac3_state_complexity() -> Outcome {
    let mut configs = 0usize;
    let mut worst = (0usize, 0u64);
    for k in 1..=4u32 {
        let mut universe = BTreeSet::new();
        for b in 0..k {
            for j in 0..k {
                for o in 0..k {
                    universe.insert(AgentState::new(Color(b), Color(j), Color(o)));
                }
            }
        }
        ensure!(
            universe.len() as u64 == u64::from(k).pow(3),
            "k={k}: enumeration has {} states",
            universe.len()
        );
        for n in 1..=4usize {
            for idx in 0..(k as u64).pow(n as u32) {
                let mut x = idx;
                let colors: Vec<u32> = (0..n)
                    .map(|_| {
                        let c = (x % k as u64) as u32;
                        x /= k as u64;
                        c
                    })
                    .collect();
                let start = Configuration::from_values(&colors, k).unwrap();
                let ex = explore(&start, 10_000_000);
                ensure!(ex.complete, "{colors:?} k={k}: exploration truncated");
                configs += ex.configurations.len();
                let seen = ex.states();
                if let Some(bad) = seen.iter().find(|s| !universe.contains(s)) {
                    return Err(format!(
                        "{colors:?} k={k}: reached {bad} outside the k^3 states"
                    ));
                }
                if seen.len() > worst.0 {
                    worst = (seen.len(), u64::from(k).pow(3));
                }
            }
        }
    }
    Ok(format!(
        "{configs} reachable configurations, at most {} distinct states seen (k^3 = {})",
        worst.0, worst.1
    ))
}

fn ac4_unfair_safety() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut non_converged = 0;
    for run in 0..100 {
        let n = rng.random_range(3..=30usize);
        let k = rng.random_range(1..=6u32);
        let colors: Vec<u32> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let a = rng.random_range(0..n);
        let b = (a + rng.random_range(1..n)) % n;
        let kind = SchedulerKind::StarvationAdversary {
            excluded: AgentPair::new(a, b).unwrap(),
            release_step: if run % 2 == 0 {
                u64::MAX
            } else {
                rng.random_range(0..5_000)
            },
        };
        let cfg = Configuration::from_values(&colors, k).unwrap();
        let start = cfg.agents().to_vec();
        let opts = RunOptions {
            stop: StopPolicy::UntilQuiescent {
                cap: Some(rng.random_range(10..20_000)),
            },
            assertions: AssertionLevel::Safety,
            trace: TraceMode::Changes,
            check_every: None,
        };
        let r = engine::run(cfg, &kind, &opts).map_err(|e| format!("run {run}: {e}"))?;
        replay(k, &start, &r.trace, false).map_err(|e| format!("run {run}: {e}"))?;
        if !r.metrics.converged {
            non_converged += 1;
        }
    }
    Ok(format!(
        "100 adversarial runs kept bra-ket balance ({non_converged} stopped at the cap)"
    ))
}

fn ac5_oracle_consistency() -> Outcome {
    let mut checked = 0u64;
    for k in 1..=5u32 {
        for n in 1..=8usize {
            for idx in 0..(k as u64).pow(n as u32) {
                let mut x = idx;
                let colors: Vec<u32> = (0..n)
                    .map(|_| {
                        let c = (x % k as u64) as u32;
                        x /= k as u64;
                        c
                    })
                    .collect();
                let lib: Vec<Color> = colors.iter().copied().map(Color).collect();
                let drained = greedy_drain(&colors);
                let closed = oracle::greedy_partition(&lib).unwrap();
                let closed_sets: Vec<BTreeSet<u32>> = closed
                    .sets()
                    .iter()
                    .map(|s| s.iter().map(|c| c.0).collect())
                    .collect();
                ensure!(
                    drained == closed_sets,
                    "{colors:?}: drain {drained:?} vs closed form {closed_sets:?}"
                );

                let (mu, unique) = reference_majority(&colors);
                let lemma = oracle::majority_from_partition(&closed);
                ensure!(
                    lemma.is_some() == unique && (!unique || lemma == Some(Color(mu))),
                    "{colors:?}: counting says ({mu}, {unique}), layer criterion says {lemma:?}"
                );
                let brute = oracle::brute_majority(&lib).unwrap();
                ensure!(
                    brute.unique == unique && brute.winner.0 == mu,
                    "{colors:?}: brute_majority disagrees"
                );
                checked += 1;
            }
        }
    }
    Ok(format!(
        "{checked} ordered inputs: greedy drain = closed form, layer criterion = counting"
    ))
}

fn ac6_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |name: &str| dir.path().join(name);
    let s = |path: &Path| path.to_str().unwrap().to_string();
    let read = |path: &Path| std::fs::read(path).map_err(|e| e.to_string());

    let mut checked = Vec::new();
    for (tag, extra) in [
        (
            "random",
            vec![
                "--scheduler",
                "random",
                "--seed",
                "99",
                "--random-colors",
                "weights:3,2,2,1",
                "--n",
                "40",
            ],
        ),
        (
            "planted",
            vec![
                "--random-colors",
                "planted:2",
                "--n",
                "25",
                "--k",
                "5",
                "--seed",
                "4",
                "--format",
                "csv",
            ],
        ),
        (
            "adversary",
            vec![
                "--colors",
                "0,1,1,2,2,2,1",
                "--scheduler",
                "adversary",
                "--exclude",
                "2,5",
                "--release",
                "30",
            ],
        ),
    ] {
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let metrics = p(&format!("{tag}-{rep}.json"));
            let trace = p(&format!("{tag}-{rep}.trace"));
            let mut args = vec![
                "run".to_string(),
                "--out".into(),
                s(&metrics),
                "--trace".into(),
                s(&trace),
                "--full-trace".into(),
            ];
            args.extend(extra.iter().map(|a| a.to_string()));
            let argv: Vec<&str> = args.iter().map(String::as_str).collect();
            let out = run_cli(&argv, &[]);
            ensure!(
                out.status.code() == Some(0),
                "run {tag} exited {:?}: {}",
                out.status.code(),
                String::from_utf8_lossy(&out.stderr)
            );
            outputs.push((read(&metrics)?, read(&trace)?));
        }
        ensure!(
            outputs[0] == outputs[1],
            "run {tag}: outputs differ between identical invocations"
        );
        ensure!(!outputs[0].1.is_empty(), "run {tag}: empty trace");
        checked.push(tag);
    }

    let mut sweeps = Vec::new();
    for (rep, threads) in ["1", "4", "4"].iter().enumerate() {
        let out_path = p(&format!("sweep-{rep}.csv"));
        let out = run_cli(
            &[
                "sweep",
                "--n",
                "10,25",
                "--k",
                "1,2,5",
                "--trials",
                "5",
                "--seed",
                "8",
                "--scheduler",
                "random",
                "--out",
                &s(&out_path),
            ],
            &[("RAYON_NUM_THREADS", threads)],
        );
        ensure!(
            out.status.code() == Some(0),
            "sweep exited {:?}",
            out.status.code()
        );
        sweeps.push(read(&out_path)?);
    }
    ensure!(
        sweeps.windows(2).all(|w| w[0] == w[1]),
        "sweep outputs differ across repeats/thread counts"
    );
    checked.push("sweep");
    Ok(format!("byte-identical repeats for {}", checked.join(", ")))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 6] = [
        ("AC1 exhaustive verification n<=5 k<=4", ac1_exhaustive),
        (
            "AC2 randomized verification 1000 instances n<=50 k<=8",
            ac2_randomized,
        ),
        ("AC3 state complexity n<=4 k<=4", ac3_state_complexity),
        ("AC4 safety under starvation adversary", ac4_unfair_safety),
        (
            "AC5 oracle self-consistency n<=8 k<=5",
            ac5_oracle_consistency,
        ),
        ("AC6 determinism of run and sweep", ac6_determinism),
    ];
    let mut failed = 0;
    println!("running {} acceptance criteria", criteria.len());
    for (name, f) in criteria {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("[PASS] {name}: {detail} ({secs:.1}s)"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {name}: {detail} ({secs:.1}s)");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
