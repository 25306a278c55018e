//! Event log records and deterministic replay.

use serde::{Deserialize, Serialize};

use super::{EventKind, Executive, StateChange};
use crate::registry::ComponentId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorInfo {
    pub code: String,
    pub message: String,
}

/// Outcome of one dispatched event; one JSON line in the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub event: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assigned: Option<ComponentId>,
    pub changes: Vec<StateChange>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorInfo>,
}

impl EventRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("event records serialize")
    }
}

/// Parses a JSON-lines event log, skipping blank lines.
pub fn read_log(text: &str) -> Result<Vec<EventRecord>, (usize, serde_json::Error)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| (n + 1, e)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mismatch {
    /// 1-based line in the original log.
    pub line: usize,
    pub expected: String,
    pub actual: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ReplayReport {
    pub events: usize,
    pub mismatches: Vec<Mismatch>,
}

impl ReplayReport {
    pub fn is_identical(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Re-dispatches every logged event on `exec` (which should be fresh and
/// configured like the original) and compares each new record with the
/// original line byte for byte.
pub fn replay(exec: &mut Executive, log: &str) -> Result<ReplayReport, (usize, serde_json::Error)> {
    let mut report = ReplayReport::default();
    for (n, line) in log.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let original: EventRecord = serde_json::from_str(line).map_err(|e| (n + 1, e))?;
        let actual = exec.dispatch(original.event).to_line();
        report.events += 1;
        if actual != line {
            report.mismatches.push(Mismatch {
                line: n + 1,
                expected: line.to_string(),
                actual,
            });
        }
    }
    Ok(report)
}
