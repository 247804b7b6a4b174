//! Simulation engine: configurations, single steps, quiescence detection and
//! scheduled runs with optional runtime invariant checks.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::oracle::{self, BraKetMultiset};
use crate::protocol::{AgentState, Color, Protocol, ProtocolError, Weight};
use crate::scheduler::{pair_count, AgentPair, Scheduler, SchedulerError, SchedulerKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("population is empty")]
    EmptyPopulation,
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
    #[error("pair {pair} is out of range for {n} agents")]
    PairOutOfRange { pair: AgentPair, n: usize },
    #[error("invariant violated: {0}")]
    InvariantViolation(Box<Violation>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ViolationKind {
    /// Some color has a different number of bras and kets.
    BraketImbalance {
        color: Color,
        bras: usize,
        kets: usize,
    },
    /// A ket exchange did not lower the sorted weight vector.
    PotentialNotDecreased {
        before: Vec<Weight>,
        after: Vec<Weight>,
    },
    /// Weights moved although no ket exchange happened.
    WeightsChangedWithoutExchange,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub step: u64,
    pub pair: AgentPair,
    pub pre: [AgentState; 2],
    pub post: [AgentState; 2],
    #[serde(flatten)]
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "step {} pair {}: {} {} -> {} {}: ",
            self.step, self.pair, self.pre[0], self.pre[1], self.post[0], self.post[1]
        )?;
        match &self.kind {
            ViolationKind::BraketImbalance { color, bras, kets } => {
                write!(f, "color {color} has {bras} bras but {kets} kets")
            }
            ViolationKind::PotentialNotDecreased { before, after } => {
                write!(f, "weights {before:?} -> {after:?} did not decrease")
            }
            ViolationKind::WeightsChangedWithoutExchange => {
                write!(f, "weights changed without a ket exchange")
            }
        }
    }
}

/// One applied interaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Event {
    pub step: u64,
    pub pair: AgentPair,
    pub pre: [AgentState; 2],
    pub post: [AgentState; 2],
    pub exchanged: bool,
    pub out_changed: bool,
}

impl Event {
    pub fn changed(&self) -> bool {
        self.exchanged || self.out_changed
    }
}

/// The population: agent `i` is `agents[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Configuration {
    protocol: Protocol,
    agents: Vec<AgentState>,
    step: u64,
}

impl Configuration {
    /// Initial configuration: agent `i` starts as `⟨c|c⟩` with `out = c`.
    pub fn new(colors: &[Color], k: u32) -> Result<Self, EngineError> {
        let protocol = Protocol::new(k)?;
        if colors.is_empty() {
            return Err(EngineError::EmptyPopulation);
        }
        let agents = colors
            .iter()
            .map(|&c| protocol.init_agent(c))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Configuration {
            protocol,
            agents,
            step: 0,
        })
    }

    pub fn from_values(colors: &[u32], k: u32) -> Result<Self, EngineError> {
        let colors: Vec<Color> = colors.iter().copied().map(Color).collect();
        Self::new(&colors, k)
    }

    /// Arbitrary agent states. Does not require the bra-ket invariant to hold.
    pub fn from_agents(k: u32, agents: Vec<AgentState>) -> Result<Self, EngineError> {
        let protocol = Protocol::new(k)?;
        if agents.is_empty() {
            return Err(EngineError::EmptyPopulation);
        }
        for a in &agents {
            protocol.check_state(a)?;
        }
        Ok(Configuration {
            protocol,
            agents,
            step: 0,
        })
    }

    pub fn protocol(&self) -> &Protocol {
        &self.protocol
    }

    pub fn k(&self) -> u32 {
        self.protocol.k()
    }

    pub fn n(&self) -> usize {
        self.agents.len()
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    /// Interactions applied so far.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Input colors, which are the (never modified) bras.
    pub fn inputs(&self) -> Vec<Color> {
        self.agents.iter().map(|a| a.bra).collect()
    }

    pub fn outputs(&self) -> BTreeMap<Color, usize> {
        let mut m = BTreeMap::new();
        for a in &self.agents {
            *m.entry(a.out).or_insert(0) += 1;
        }
        m
    }

    pub fn braket_multiset(&self) -> BraKetMultiset {
        self.agents.iter().map(AgentState::braket).collect()
    }

    /// First color whose bra and ket counts differ, if any.
    pub fn braket_imbalance(&self) -> Option<(Color, usize, usize)> {
        let k = self.k() as usize;
        let mut bras = vec![0usize; k];
        let mut kets = vec![0usize; k];
        for a in &self.agents {
            bras[a.bra.0 as usize] += 1;
            kets[a.ket.0 as usize] += 1;
        }
        (0..k)
            .find(|&c| bras[c] != kets[c])
            .map(|c| (Color(c as u32), bras[c], kets[c]))
    }

    /// Agent weights sorted ascending.
    pub fn sorted_weights(&self) -> Vec<Weight> {
        let mut w: Vec<Weight> = self
            .agents
            .iter()
            .map(|a| self.protocol.state_weight(a))
            .collect();
        w.sort_unstable();
        w
    }

    /// Applies one interaction to the agents of `pair`.
    pub fn step(&mut self, pair: AgentPair) -> Result<Event, EngineError> {
        if !pair.fits(self.n()) {
            return Err(EngineError::PairOutOfRange { pair, n: self.n() });
        }
        let (i, j) = (pair.first(), pair.second());
        let pre = [self.agents[i], self.agents[j]];
        let r = self.protocol.interact_unchecked(pre[0], pre[1]);
        self.agents[i] = r.a;
        self.agents[j] = r.b;
        let event = Event {
            step: self.step,
            pair,
            pre,
            post: [r.a, r.b],
            exchanged: r.exchanged,
            out_changed: r.out_changed,
        };
        self.step += 1;
        Ok(event)
    }

    /// Distinct states present, with multiplicity.
    pub fn state_counts(&self) -> BTreeMap<AgentState, usize> {
        let mut m = BTreeMap::new();
        for &a in &self.agents {
            *m.entry(a).or_insert(0) += 1;
        }
        m
    }

    /// No pair of agents present would change anything if they met.
    ///
    /// Checked over pairs of distinct states (and same-state pairs when a
    /// state occurs at least twice), not over all agent pairs.
    pub fn is_quiescent(&self) -> bool {
        let counts: Vec<(AgentState, usize)> = self.state_counts().into_iter().collect();
        for (x, &(a, ca)) in counts.iter().enumerate() {
            if ca >= 2 && self.protocol.interact_unchecked(a, a).changed() {
                return false;
            }
            for &(b, _) in &counts[x + 1..] {
                if self.protocol.interact_unchecked(a, b).changed() {
                    return false;
                }
            }
        }
        true
    }

    /// Agent multiset as a sorted vector, forgetting agent identities.
    pub fn canonical(&self) -> Vec<AgentState> {
        let mut v = self.agents.clone();
        v.sort_unstable();
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopPolicy {
    /// Stop once quiescent; give up after `cap` interactions (`None` picks
    /// [`StopPolicy::default_cap`]).
    UntilQuiescent { cap: Option<u64> },
    /// Apply exactly this many interactions.
    FixedSteps(u64),
}

impl StopPolicy {
    /// 50·n² round-robin cycles.
    pub fn default_cap(n: usize) -> u64 {
        let n2 = (n as u64).saturating_mul(n as u64);
        50u64.saturating_mul(n2).saturating_mul(pair_count(n))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AssertionLevel {
    Off,
    /// Bra-ket balance after every step.
    Safety,
    /// Safety plus potential decrease at every exchange.
    #[default]
    Full,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceMode {
    Off,
    /// Only steps that changed some state.
    #[default]
    Changes,
    Full,
}

impl TraceMode {
    fn records(&self, e: &Event) -> bool {
        match self {
            TraceMode::Off => false,
            TraceMode::Changes => e.changed(),
            TraceMode::Full => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub stop: StopPolicy,
    pub assertions: AssertionLevel,
    pub trace: TraceMode,
    /// Quiescence check period in steps; defaults to one scheduler cycle.
    pub check_every: Option<u64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            stop: StopPolicy::UntilQuiescent { cap: None },
            assertions: AssertionLevel::Full,
            trace: TraceMode::Changes,
            check_every: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunMetrics {
    pub total_interactions: u64,
    pub ket_exchanges: u64,
    pub out_updates: u64,
    /// Interactions after which the configuration no longer changed, when the
    /// run ended quiescent.
    pub quiescence_step: Option<u64>,
    pub converged: bool,
    /// The input has no unique plurality color.
    pub tie: bool,
    pub winner: Option<Color>,
    pub final_outputs: BTreeMap<Color, usize>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub config: Configuration,
    pub trace: Vec<Event>,
    pub metrics: RunMetrics,
}

/// Runs `config` under `scheduler` and collects the trace in memory.
pub fn run(
    config: Configuration,
    scheduler: &SchedulerKind,
    options: &RunOptions,
) -> Result<RunReport, EngineError> {
    let mut trace = Vec::new();
    let (config, metrics) = run_observed(config, scheduler, options, |e| trace.push(*e))?;
    Ok(RunReport {
        config,
        trace,
        metrics,
    })
}

/// Like [`run`], but hands every traced event to `observe` instead of
/// buffering it.
pub fn run_observed<F: FnMut(&Event)>(
    mut config: Configuration,
    scheduler: &SchedulerKind,
    options: &RunOptions,
    mut observe: F,
) -> Result<(Configuration, RunMetrics), EngineError> {
    let n = config.n();
    let (limit, stop_when_quiet) = match options.stop {
        StopPolicy::UntilQuiescent { cap } => {
            (cap.unwrap_or_else(|| StopPolicy::default_cap(n)), true)
        }
        StopPolicy::FixedSteps(t) => (t, false),
    };

    let mut performed = 0u64;
    let mut ket_exchanges = 0u64;
    let mut out_updates = 0u64;
    let mut last_change = 0u64;
    // None: changed since the last check; Some(q): result of the last check.
    let mut quiet: Option<bool> = None;

    let schedule = if n >= 2 && limit > 0 {
        Some(Scheduler::new(*scheduler, n)?)
    } else {
        None
    };

    if stop_when_quiet {
        quiet = Some(config.is_quiescent());
    }

    if let Some(schedule) = &schedule {
        let period = options
            .check_every
            .unwrap_or_else(|| schedule.cycle_len())
            .max(1);
        while performed < limit && !(stop_when_quiet && quiet == Some(true)) {
            let pair = schedule.next_pair(config.step_count());
            let event = config.step(pair)?;
            performed += 1;

            if options.assertions >= AssertionLevel::Safety {
                check_event(&config, &event, options.assertions)?;
            }
            if event.exchanged {
                ket_exchanges += 1;
            }
            if event.out_changed {
                out_updates += 1;
            }
            if event.changed() {
                last_change = performed;
                quiet = None;
            }
            if options.trace.records(&event) {
                observe(&event);
            }
            if stop_when_quiet && performed.is_multiple_of(period) && quiet.is_none() {
                quiet = Some(config.is_quiescent());
            }
        }
    }

    let converged = match quiet {
        Some(q) => q,
        None => config.is_quiescent(),
    };
    let majority = oracle::brute_majority(&config.inputs()).expect("population is non-empty");
    let metrics = RunMetrics {
        total_interactions: performed,
        ket_exchanges,
        out_updates,
        quiescence_step: converged.then_some(last_change),
        converged,
        tie: !majority.unique,
        winner: majority.unique.then_some(majority.winner),
        final_outputs: config.outputs(),
    };
    Ok((config, metrics))
}

/// Invariant checks for one applied event. A step without exchange cannot
/// move kets or weights, so only exchanges pay for a full recount.
fn check_event(
    config: &Configuration,
    e: &Event,
    level: AssertionLevel,
) -> Result<(), EngineError> {
    let violation = |kind| {
        Err(EngineError::InvariantViolation(Box::new(Violation {
            step: e.step,
            pair: e.pair,
            pre: e.pre,
            post: e.post,
            kind,
        })))
    };
    let p = config.protocol();

    if e.exchanged {
        if let Some((color, bras, kets)) = config.braket_imbalance() {
            return violation(ViolationKind::BraketImbalance { color, bras, kets });
        }
    } else if e.pre[0].braket() != e.post[0].braket() || e.pre[1].braket() != e.post[1].braket() {
        // bra-kets moved without an exchange: recount to report the damage
        if let Some((color, bras, kets)) = config.braket_imbalance() {
            return violation(ViolationKind::BraketImbalance { color, bras, kets });
        }
        if level >= AssertionLevel::Full {
            return violation(ViolationKind::WeightsChangedWithoutExchange);
        }
    }

    if level >= AssertionLevel::Full {
        if e.exchanged {
            let after = config.sorted_weights();
            let mut before = after.clone();
            for (post, pre) in e.post.iter().zip(&e.pre) {
                let w = p.state_weight(post);
                let idx = before.iter().position(|&x| x == w).expect("weight present");
                before[idx] = p.state_weight(pre);
            }
            before.sort_unstable();
            if !oracle::potential_less(&after, &before).expect("same length") {
                return violation(ViolationKind::PotentialNotDecreased { before, after });
            }
        } else {
            let same = e
                .pre
                .iter()
                .zip(&e.post)
                .all(|(a, b)| p.state_weight(a) == p.state_weight(b));
            if !same {
                return violation(ViolationKind::WeightsChangedWithoutExchange);
            }
        }
    }
    Ok(())
}

/// Configurations reachable from a start configuration under every possible
/// schedule, with agents treated as anonymous (configurations are sorted
/// state vectors).
#[derive(Debug, Clone)]
pub struct Exploration {
    pub configurations: BTreeSet<Vec<AgentState>>,
    /// False if the search stopped at the size limit.
    pub complete: bool,
}

impl Exploration {
    pub fn states(&self) -> BTreeSet<AgentState> {
        self.configurations.iter().flatten().copied().collect()
    }
}

/// Breadth-first search over the interaction graph, visiting at most `limit`
/// configurations.
pub fn explore(start: &Configuration, limit: usize) -> Exploration {
    let p = *start.protocol();
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::new();
    let root = start.canonical();
    seen.insert(root.clone());
    queue.push_back(root);
    let mut complete = true;

    while let Some(cfg) = queue.pop_front() {
        for i in 0..cfg.len() {
            for j in i + 1..cfg.len() {
                // sorted vector: identical neighbours give identical successors
                if j > i + 1 && cfg[j] == cfg[j - 1] {
                    continue;
                }
                if i > 0 && cfg[i] == cfg[i - 1] {
                    continue;
                }
                let r = p.interact_unchecked(cfg[i], cfg[j]);
                if !r.changed() {
                    continue;
                }
                let mut next = cfg.clone();
                next[i] = r.a;
                next[j] = r.b;
                next.sort_unstable();
                if !seen.contains(&next) {
                    if seen.len() >= limit {
                        complete = false;
                        continue;
                    }
                    seen.insert(next.clone());
                    queue.push_back(next);
                }
            }
        }
    }
    Exploration {
        configurations: seen,
        complete,
    }
}
