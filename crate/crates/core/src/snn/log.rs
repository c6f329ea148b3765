//! Line-delimited spike log.
//!
//! ```text
//! # clp spike log v1
//! <epoch> <t> <population> <neuron> <payload>
//! trace <epoch> x <comma-separated pre-synaptic traces>
//! trace <epoch> y <comma-separated post-synaptic traces>
//! ```
//!
//! Fields are separated by single spaces. Populations are `input`,
//! `prototype`, `novelty`, `modulator` and `supervisor`. Trace snapshots
//! are taken right after injection.

use std::io::Write;

use super::{Population, SpikeEvent, TraceBank};
use crate::error::{Error, Result};

pub const LOG_HEADER: &str = "# clp spike log v1";

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LogRecord {
    Spike { epoch: u64, event: SpikeEvent },
    PreTrace { epoch: u64, values: Vec<i64> },
    PostTrace { epoch: u64, values: Vec<i64> },
}

pub struct EventLogWriter<W: Write> {
    out: W,
}

impl<W: Write> EventLogWriter<W> {
    pub fn new(mut out: W) -> Result<Self> {
        writeln!(out, "{LOG_HEADER}")?;
        Ok(Self { out })
    }

    pub fn write_epoch(&mut self, epoch: u64, events: &[SpikeEvent], traces: Option<&TraceBank>) -> Result<()> {
        if let Some(tr) = traces {
            writeln!(self.out, "trace {epoch} x {}", join(tr.x.iter()))?;
            writeln!(self.out, "trace {epoch} y {}", join(tr.y.iter()))?;
        }
        for e in events {
            writeln!(self.out, "{epoch} {} {} {} {}", e.time, e.population.as_str(), e.neuron, e.payload)?;
        }
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

fn join<T: ToString>(values: impl Iterator<Item = T>) -> String {
    values.map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

pub fn parse_event_log(text: &str) -> Result<Vec<LogRecord>> {
    let bad = |n: usize, what: &str| Error::Format(format!("spike log line {}: {what}", n + 1));
    let mut records = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(' ').collect();
        if fields[0] == "trace" {
            if fields.len() != 4 {
                return Err(bad(n, "trace line needs 4 fields"));
            }
            let epoch = fields[1].parse().map_err(|_| bad(n, "epoch"))?;
            let values = if fields[3].is_empty() {
                Vec::new()
            } else {
                fields[3]
                    .split(',')
                    .map(|v| v.parse::<i64>().map_err(|_| bad(n, "trace value")))
                    .collect::<Result<Vec<_>>>()?
            };
            records.push(match fields[2] {
                "x" => LogRecord::PreTrace { epoch, values },
                "y" => LogRecord::PostTrace { epoch, values },
                _ => return Err(bad(n, "trace kind")),
            });
            continue;
        }
        if fields.len() != 5 {
            return Err(bad(n, "spike line needs 5 fields"));
        }
        let event = SpikeEvent {
            time: fields[1].parse().map_err(|_| bad(n, "time"))?,
            population: Population::parse(fields[2]).ok_or_else(|| bad(n, "population"))?,
            neuron: fields[3].parse().map_err(|_| bad(n, "neuron"))?,
            payload: fields[4].parse().map_err(|_| bad(n, "payload"))?,
        };
        records.push(LogRecord::Spike { epoch: fields[0].parse().map_err(|_| bad(n, "epoch"))?, event });
    }
    Ok(records)
}
