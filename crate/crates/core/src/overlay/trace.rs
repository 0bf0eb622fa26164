//! Per-hop observation records and the privacy checker run over them.
//!
//! A trace is JSON Lines: one [`TraceRecord`] per line. `Hop` records list
//! exactly what one PM saw while handling one message; `Request` records
//! are simulator bookkeeping that tie hops to a request.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::routing::LocationRequest;
use super::topology::PmLevel;
use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HopRecord {
    pub request: u64,
    pub time: u64,
    pub node: String,
    pub level: PmLevel,
    pub direction: Direction,
    /// Whether this node opened the innermost layer.
    pub terminal: bool,
    /// Everything the node learned, by name.
    pub observed: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub request: u64,
    pub requester: String,
    pub tower: String,
    pub path: Vec<String>,
    /// `fused`, `no_information` or `route_error`.
    pub outcome: String,
    pub iterations: Option<usize>,
    pub messages: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceRecord {
    Hop(HopRecord),
    Request(RequestRecord),
}

/// Observation keys a non-terminal hop may carry.
pub const OPAQUE_KEYS: [&str; 10] = [
    "from",
    "to",
    "circuit_in",
    "circuit_out",
    "next_hop",
    "envelope_bytes",
    "envelope_sha256",
    "body_bytes",
    "body_sha256",
    "error",
];

pub fn write_trace<W: Write>(records: &[TraceRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trace<R: BufRead>(input: R) -> Result<Vec<TraceRecord>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| invalid(format!("trace line {}: {e}", i + 1)))?,
        );
    }
    Ok(out)
}

/// Result of [`verify_trace`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PrivacyReport {
    pub requests: usize,
    pub hops: usize,
    pub violations: Vec<String>,
}

impl PrivacyReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the information-flow properties of a trace:
///
/// - only the terminal cell-tower PM sees request features or the result;
/// - other hops carry only opaque keys, with no BSSID or returned label in any value;
/// - the requester identity appears only at country-level PMs.
pub fn verify_trace(records: &[TraceRecord]) -> PrivacyReport {
    let mut report = PrivacyReport::default();
    let mut requesters: BTreeMap<u64, String> = BTreeMap::new();
    let mut secrets: BTreeMap<u64, BTreeSet<String>> = BTreeMap::new();
    for r in records {
        match r {
            TraceRecord::Request(q) => {
                report.requests += 1;
                requesters.insert(q.request, q.requester.clone());
            }
            TraceRecord::Hop(h) if h.terminal => {
                let s = secrets.entry(h.request).or_default();
                if h.level != PmLevel::CellTower {
                    report
                        .violations
                        .push(format!("request {}: terminal hop at {} level", h.request, h.level));
                }
                if let Some(req) = h.observed.get("request") {
                    match serde_json::from_str::<LocationRequest>(req) {
                        Ok(req) => {
                            s.extend(req.aps.iter().map(|a| a.bssid.clone()));
                        }
                        Err(e) => report
                            .violations
                            .push(format!("request {}: unreadable terminal request: {e}", h.request)),
                    }
                }
                if let Some(reply) = h.observed.get("reply") {
                    if let Ok(v) = serde_json::from_str::<serde_json::Value>(reply) {
                        collect_labels(&v, s);
                    }
                }
            }
            TraceRecord::Hop(_) => {}
        }
    }
    for r in records {
        let TraceRecord::Hop(h) = r else { continue };
        report.hops += 1;
        if let Some(who) = requesters.get(&h.request) {
            let leaks = h.observed.values().any(|v| v.contains(who.as_str()));
            if leaks && h.level != PmLevel::Country {
                report.violations.push(format!(
                    "request {}: requester identity visible at {} ({})",
                    h.request, h.node, h.level
                ));
            }
        }
        if h.terminal {
            continue;
        }
        for key in h.observed.keys() {
            if !OPAQUE_KEYS.contains(&key.as_str()) {
                report
                    .violations
                    .push(format!("request {}: {} observed {key:?}", h.request, h.node));
            }
        }
        if let Some(s) = secrets.get(&h.request) {
            for v in h.observed.values() {
                if let Some(hit) = s.iter().find(|x| x.len() >= 3 && v.contains(x.as_str())) {
                    report
                        .violations
                        .push(format!("request {}: {} observed {hit:?}", h.request, h.node));
                }
            }
        }
    }
    report
}

fn collect_labels(v: &serde_json::Value, out: &mut BTreeSet<String>) {
    match v {
        serde_json::Value::Object(m) => {
            if let (Some(b), Some(r)) = (m.get("building"), m.get("room")) {
                if let (Some(b), Some(r)) = (b.as_str(), r.as_str()) {
                    out.insert(format!("{b}/{r}"));
                }
            }
            m.values().for_each(|x| collect_labels(x, out));
        }
        serde_json::Value::Array(a) => a.iter().for_each(|x| collect_labels(x, out)),
        _ => {}
    }
}
