//! Event-history CSV: `id,time,from,to`, one row per jump and a final
//! `CENS` row per subject at its censoring time.

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};

use serde::Serialize;
use thiserror::Error;

use super::fmt_time;
use crate::intensity::StateId;
use crate::sim::{Jump, Trajectory};

pub const CENSORED: &str = "CENS";
pub const EVENTS_HEADER: [&str; 4] = ["id", "time", "from", "to"];
/// At most this many row diagnostics are collected before ingestion stops.
pub const MAX_DIAGNOSTICS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub line: u64,
    pub id: Option<u64>,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.id {
            Some(id) => write!(f, "line {}: id {}: {}", self.line, id, self.message),
            None => write!(f, "line {}: {}", self.line, self.message),
        }
    }
}

#[derive(Debug, Error)]
pub enum EventsError {
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("{} problem(s) in event file; first: {}", .0.len(), .0[0])]
    Invalid(Vec<Diagnostic>),
}

/// Writes `cohort` with state labels from `labels`.
pub fn write_events<W: Write>(cohort: &[Trajectory], labels: &[String], out: W) -> Result<(), EventsError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(EVENTS_HEADER)?;
    for tr in cohort {
        let id = tr.subject_id.to_string();
        for j in &tr.jumps {
            w.write_record([id.as_str(), &fmt_time(j.time), &labels[j.from.index()], &labels[j.to.index()]])?;
        }
        w.write_record([id.as_str(), &fmt_time(tr.censor_time), &labels[tr.final_state().index()], CENSORED])?;
    }
    w.flush()?;
    Ok(())
}

/// Trajectories read from an event file with their interned state labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EventHistory {
    pub states: Vec<String>,
    pub trajectories: Vec<Trajectory>,
}

struct Open {
    traj: Trajectory,
    state: StateId,
}

enum Phase {
    Open(Open),
    Closed,
    Broken,
}

struct Interner {
    labels: Vec<String>,
    index: HashMap<String, usize>,
    fixed: bool,
}

impl Interner {
    fn new(states: Option<&[String]>) -> Self {
        let mut me = Interner { labels: Vec::new(), index: HashMap::new(), fixed: false };
        for s in states.unwrap_or_default() {
            me.get(s);
        }
        me.fixed = states.is_some();
        me
    }

    fn get(&mut self, label: &str) -> Option<StateId> {
        if let Some(&i) = self.index.get(label) {
            return Some(StateId(i));
        }
        if self.fixed || label == CENSORED {
            return None;
        }
        self.index.insert(label.to_string(), self.labels.len());
        self.labels.push(label.to_string());
        Some(StateId(self.labels.len() - 1))
    }
}

/// Reads an event file. With `states` given, labels are mapped onto that
/// list and unknown labels are errors; otherwise labels are interned in
/// order of first appearance. Every problem is reported with its line.
pub fn ingest_events<R: Read>(input: R, states: Option<&[String]>) -> Result<EventHistory, EventsError> {
    let mut interner = Interner::new(states);
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let header = reader.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != EVENTS_HEADER {
        return Err(EventsError::Invalid(vec![Diagnostic {
            line: 1,
            id: None,
            message: format!("header must be {}", EVENTS_HEADER.join(",")),
        }]));
    }
    let mut diags: Vec<Diagnostic> = Vec::new();
    let mut done: Vec<Trajectory> = Vec::new();
    let mut seen: HashSet<u64> = HashSet::new();
    let mut current: Option<(u64, Phase)> = None;
    let mut record = csv::StringRecord::new();

    while reader.read_record(&mut record)? && diags.len() < MAX_DIAGNOSTICS {
        let line = record.position().map_or(0, |p| p.line());
        let mut report = |id: Option<u64>, message: String| diags.push(Diagnostic { line, id, message });
        if record.len() != 4 {
            report(None, format!("expected 4 fields, found {}", record.len()));
            continue;
        }
        let Ok(id) = record[0].parse::<u64>() else {
            report(None, format!("bad id {:?}", &record[0]));
            continue;
        };
        let time = match record[1].parse::<f64>() {
            Ok(t) if t.is_finite() && t >= 0.0 => t,
            _ => {
                report(Some(id), format!("bad time {:?}", &record[1]));
                continue;
            }
        };
        let from = interner.get(&record[2]);
        let to_label = &record[3];

        if current.as_ref().map(|c| c.0) != Some(id) {
            if let Some((prev, phase)) = current.take() {
                if matches!(phase, Phase::Open(_)) {
                    report(Some(prev), "subject has no CENS row".into());
                }
                if id < prev {
                    report(Some(id), format!("ids are not sorted: {id} after {prev}"));
                }
            }
            if !seen.insert(id) {
                report(Some(id), "rows for this id are not contiguous".into());
            }
            let phase = match from {
                Some(s) => Phase::Open(Open { traj: Trajectory::new(id, s, 0.0), state: s }),
                None => {
                    report(Some(id), format!("unknown state {:?}", &record[2]));
                    Phase::Broken
                }
            };
            current = Some((id, phase));
        }
        let (_, phase) = current.as_mut().expect("set above");
        let problem = match phase {
            Phase::Broken => None,
            Phase::Closed => Some(if to_label == CENSORED { "duplicate CENS row".to_string() } else { "row after the CENS row".to_string() }),
            Phase::Open(o) => match from {
                None => Some(format!("unknown state {:?}", &record[2])),
                Some(f) if f != o.state => Some(format!(
                    "from = {:?} but the subject is in {:?}",
                    &record[2],
                    interner.labels[o.state.index()]
                )),
                Some(f) => {
                    let last = o.traj.jumps.last().map(|j| j.time);
                    if last.is_some_and(|l| time <= l) {
                        Some(format!("time {time} is not after the previous jump"))
                    } else if to_label == CENSORED {
                        o.traj.censor_time = time;
                        let Phase::Open(o) = std::mem::replace(phase, Phase::Closed) else { unreachable!() };
                        done.push(o.traj);
                        None
                    } else {
                        match interner.get(to_label) {
                            None => Some(format!("unknown state {to_label:?}")),
                            Some(t) if t == f => Some("self-transition".to_string()),
                            Some(t) => {
                                o.traj.jumps.push(Jump { time, from: f, to: t });
                                o.state = t;
                                None
                            }
                        }
                    }
                }
            },
        };
        if let Some(message) = problem {
            report(Some(id), message);
            *phase = Phase::Broken;
        }
    }
    if let Some((id, Phase::Open(_))) = current {
        diags.push(Diagnostic { line: reader.position().line(), id: Some(id), message: "subject has no CENS row".into() });
    }
    if !diags.is_empty() {
        return Err(EventsError::Invalid(diags));
    }
    Ok(EventHistory { states: interner.labels, trajectories: done })
}
