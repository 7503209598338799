//! Text and JSON renderings of a [`SearchReport`].

use std::fmt::Write as _;
use std::str::FromStr;

use serde_json::{json, Value as Json};

use crate::explorer::SearchReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Text,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(Format::Text),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown output format `{other}` (expected text or json)")),
        }
    }
}

/// The fixed JSON object for a run. `violation` is `null` when none was found.
pub fn report_json(report: &SearchReport) -> Json {
    let violation = match &report.violation {
        None => Json::Null,
        Some(v) => json!({
            "kind": v.kind.name(),
            "message": v.message,
            "trace": v.trace,
        }),
    };
    json!({
        "states": report.states,
        "transitions": report.transitions,
        "max_depth": report.max_depth,
        "time_ms": report.time.as_millis() as u64,
        "peak_state_bytes": report.peak_state_bytes,
        "interned_versions": report.interned_versions,
        "violation": violation,
    })
}

pub fn render_report(report: &SearchReport, format: Format) -> String {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&report_json(report)).expect("report serializes");
            s.push('\n');
            s
        }
        Format::Text => render_text(report),
    }
}

fn render_text(report: &SearchReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "states: {}", report.states);
    let _ = writeln!(out, "transitions: {}", report.transitions);
    let _ = writeln!(out, "max_depth: {}", report.max_depth);
    let _ = writeln!(out, "time_ms: {}", report.time.as_millis());
    let _ = writeln!(out, "peak_state_bytes: {}", report.peak_state_bytes);
    let _ = writeln!(out, "interned_versions: {}", report.interned_versions);
    match &report.violation {
        None => {
            let _ = writeln!(out, "violation: none");
        }
        Some(v) => {
            let _ = writeln!(out, "violation: {}", v.kind.name());
            let _ = writeln!(out, "message: {}", v.message);
            let _ = writeln!(out, "trace:");
            for e in &v.trace.entries {
                let lib = if e.library { " [library]" } else { "" };
                if e.location.is_empty() {
                    let _ = writeln!(out, "  #{} t{} {}{}", e.step, e.tid, e.function, lib);
                } else {
                    let _ = writeln!(out, "  #{} t{} {} at {}{}", e.step, e.tid, e.function, e.location, lib);
                }
            }
        }
    }
    out
}
