//! Structured output: metrics documents, trace streams and sweep tables.
//!
//! Trace events, one per line in `json-lines` format:
//!
//! ```text
//! {"step":0,"pair":[0,1],"pre":[{"bra":0,"ket":0,"out":0},{"bra":1,"ket":1,"out":1}],
//!  "post":[…],"exchanged":true,"out_changed":false}
//! ```
//!
//! The `csv` trace format flattens the same fields into
//! `step,first,second,pre_a_bra,…,post_b_out,exchanged,out_changed`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use braket_core::experiment::SweepRow;
use braket_core::{AgentState, Event, RunMetrics};
use clap::ValueEnum;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    JsonLines,
    Csv,
}

pub fn open_sink(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// The document written by `braket run`.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsDocument {
    pub n: usize,
    pub k: u32,
    pub scheduler: &'static str,
    pub seed: u64,
    pub total_interactions: u64,
    pub ket_exchanges: u64,
    pub out_updates: u64,
    pub quiescence_step: Option<u64>,
    pub converged: bool,
    pub tie: bool,
    pub winner: Option<u32>,
    pub final_outputs_histogram: BTreeMap<u32, usize>,
}

impl MetricsDocument {
    pub fn new(n: usize, k: u32, scheduler: &'static str, seed: u64, m: &RunMetrics) -> Self {
        MetricsDocument {
            n,
            k,
            scheduler,
            seed,
            total_interactions: m.total_interactions,
            ket_exchanges: m.ket_exchanges,
            out_updates: m.out_updates,
            quiescence_step: m.quiescence_step,
            converged: m.converged,
            tie: m.tie,
            winner: m.winner.map(|c| c.0),
            final_outputs_histogram: m.final_outputs.iter().map(|(c, &v)| (c.0, v)).collect(),
        }
    }
}

pub fn write_json_document<T: Serialize>(out: &mut dyn Write, doc: &T) -> anyhow::Result<()> {
    serde_json::to_writer_pretty(&mut *out, doc)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct StateRecord {
    bra: u32,
    ket: u32,
    out: u32,
}

impl From<&AgentState> for StateRecord {
    fn from(s: &AgentState) -> Self {
        StateRecord {
            bra: s.bra.0,
            ket: s.ket.0,
            out: s.out.0,
        }
    }
}

#[derive(Serialize)]
struct EventRecord {
    step: u64,
    pair: [usize; 2],
    pre: [StateRecord; 2],
    post: [StateRecord; 2],
    exchanged: bool,
    out_changed: bool,
}

const CSV_TRACE_HEADER: &str = "step,first,second,\
pre_a_bra,pre_a_ket,pre_a_out,pre_b_bra,pre_b_ket,pre_b_out,\
post_a_bra,post_a_ket,post_a_out,post_b_bra,post_b_ket,post_b_out,\
exchanged,out_changed";

/// Streams trace events as they are produced.
pub struct TraceWriter {
    out: Box<dyn Write>,
    format: Format,
}

impl TraceWriter {
    pub fn new(mut out: Box<dyn Write>, format: Format) -> io::Result<Self> {
        if format == Format::Csv {
            writeln!(out, "{CSV_TRACE_HEADER}")?;
        }
        Ok(TraceWriter { out, format })
    }

    pub fn write(&mut self, e: &Event) -> anyhow::Result<()> {
        match self.format {
            Format::JsonLines => {
                let rec = EventRecord {
                    step: e.step,
                    pair: [e.pair.first(), e.pair.second()],
                    pre: [(&e.pre[0]).into(), (&e.pre[1]).into()],
                    post: [(&e.post[0]).into(), (&e.post[1]).into()],
                    exchanged: e.exchanged,
                    out_changed: e.out_changed,
                };
                serde_json::to_writer(&mut self.out, &rec)?;
                writeln!(self.out)?;
            }
            Format::Csv => {
                write!(
                    self.out,
                    "{},{},{}",
                    e.step,
                    e.pair.first(),
                    e.pair.second()
                )?;
                for s in e.pre.iter().chain(&e.post) {
                    write!(self.out, ",{},{},{}", s.bra, s.ket, s.out)?;
                }
                writeln!(self.out, ",{},{}", e.exchanged, e.out_changed)?;
            }
        }
        Ok(())
    }

    pub fn finish(mut self) -> io::Result<()> {
        self.out.flush()
    }
}

pub fn write_sweep(out: &mut dyn Write, rows: &[SweepRow], format: Format) -> anyhow::Result<()> {
    match format {
        Format::Csv => {
            writeln!(out, "{}", SweepRow::HEADER.join(","))?;
            for r in rows {
                writeln!(
                    out,
                    "{},{},{},{},{:.3},{},{:.3},{},{:.3},{}",
                    r.n,
                    r.k,
                    r.trials,
                    r.converged,
                    r.mean_quiescence_step,
                    r.max_quiescence_step,
                    r.mean_interactions,
                    r.max_interactions,
                    r.mean_ket_exchanges,
                    r.max_ket_exchanges
                )?;
            }
        }
        Format::JsonLines => {
            for r in rows {
                serde_json::to_writer(&mut *out, r)?;
                writeln!(out)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}
