//! A `k^3`-state population protocol for plurality consensus.
//!
//! Agents hold a bra-ket `⟨bra|ket⟩` plus an output color. Pairs of agents
//! swap kets whenever that strictly lowers the smaller of their two circle
//! weights, and any self-loop `⟨i|i⟩` broadcasts `i` as the output. Under a
//! weakly fair scheduler the bra-kets settle into a predictable multiset and,
//! when the plurality color is unique, every agent ends up outputting it.
//!
//! Modules:
//! - [`protocol`]: states, weights and the transition.
//! - [`scheduler`]: round-robin, seeded random and starvation schedules.
//! - [`engine`]: configurations, runs, quiescence and runtime invariants.
//! - [`oracle`]: independent predictions used to check engine outcomes.
//! - [`verify`]: exhaustive and randomized verification batteries.
//! - [`experiment`]: input generators and parameter sweeps.

pub mod engine;
pub mod experiment;
pub mod oracle;
pub mod protocol;
pub mod scheduler;
pub mod verify;

pub use engine::{
    run, run_observed, AssertionLevel, Configuration, EngineError, Event, RunMetrics, RunOptions,
    RunReport, StopPolicy, TraceMode, Violation, ViolationKind,
};
pub use oracle::{BraKetMultiset, GreedyPartition, Majority};
pub use protocol::{AgentState, Color, Interaction, Protocol, ProtocolError, Weight};
pub use scheduler::{AgentPair, Scheduler, SchedulerError, SchedulerKind};
