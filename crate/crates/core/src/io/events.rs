//! Event streams as JSON lines:
//! `{"t": 0.25, "bond": "bond1", "kind": "client_buy", "Y": 101.3}`.
//!
//! Client trades and inter-dealer prints carry `Y`, traded-away quotes carry
//! `Z`, and inter-dealer prints also carry `alpha`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::IoError;
use crate::model::{validate_stream, BondUniverse, EventKind, ObservationEvent};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    t: f64,
    bond: String,
    kind: String,
    #[serde(rename = "Y", default, skip_serializing_if = "Option::is_none")]
    y: Option<f64>,
    #[serde(rename = "Z", default, skip_serializing_if = "Option::is_none")]
    z: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
}

fn to_record(ev: &ObservationEvent, universe: &BondUniverse) -> Record {
    let (y, z, alpha) = match ev.kind {
        EventKind::ClientBuy { traded } | EventKind::ClientSell { traded } => (Some(traded), None, None),
        EventKind::TradedAwayBuy { quote } | EventKind::TradedAwaySell { quote } => (None, Some(quote), None),
        EventKind::InterDealer { traded, alpha } => (Some(traded), None, Some(alpha)),
    };
    Record {
        t: ev.time,
        bond: universe.labels()[ev.bond].clone(),
        kind: ev.kind.tag().to_string(),
        y,
        z,
        alpha,
    }
}

fn from_record(r: Record, universe: &BondUniverse) -> Result<ObservationEvent, String> {
    let bond = universe
        .index_of(&r.bond)
        .ok_or_else(|| format!("unknown bond `{}`", r.bond))?;
    let need_y = |name: &str| r.y.ok_or_else(|| format!("`{name}` events need a `Y` field"));
    let need_z = |name: &str| r.z.ok_or_else(|| format!("`{name}` events need a `Z` field"));
    let reject = |field: &str, present: bool| {
        if present {
            Err(format!("`{}` events do not take a `{field}` field", r.kind))
        } else {
            Ok(())
        }
    };
    let kind = match r.kind.as_str() {
        "client_buy" | "client_sell" => {
            reject("Z", r.z.is_some())?;
            reject("alpha", r.alpha.is_some())?;
            let traded = need_y(&r.kind)?;
            if r.kind == "client_buy" {
                EventKind::ClientBuy { traded }
            } else {
                EventKind::ClientSell { traded }
            }
        }
        "away_buy" | "away_sell" => {
            reject("Y", r.y.is_some())?;
            reject("alpha", r.alpha.is_some())?;
            let quote = need_z(&r.kind)?;
            if r.kind == "away_buy" {
                EventKind::TradedAwayBuy { quote }
            } else {
                EventKind::TradedAwaySell { quote }
            }
        }
        "d2d" => {
            reject("Z", r.z.is_some())?;
            let traded = need_y("d2d")?;
            let alpha = r.alpha.ok_or("`d2d` events need an `alpha` field")?;
            EventKind::InterDealer { traded, alpha }
        }
        other => {
            return Err(format!(
                "unknown kind `{other}` (expected client_buy, client_sell, away_buy, away_sell or d2d)"
            ))
        }
    };
    let ev = ObservationEvent::new(r.t, bond, kind);
    ev.validate(universe.len()).map_err(|e| e.to_string())?;
    Ok(ev)
}

/// One JSON object per line, in stream order.
pub fn write_events(events: &[ObservationEvent], universe: &BondUniverse) -> String {
    let mut out = String::new();
    for ev in events {
        out.push_str(&serde_json::to_string(&to_record(ev, universe)).expect("plain record"));
        out.push('\n');
    }
    out
}

/// Parses and validates a stream. Blank lines are skipped; errors carry the
/// 1-based line number.
pub fn parse_events(text: &str, universe: &BondUniverse, path: &Path) -> Result<Vec<ObservationEvent>, IoError> {
    let mut events = Vec::new();
    let mut lines = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(line).map_err(|e| IoError::line(path, n + 1, e.to_string()))?;
        let ev = from_record(record, universe).map_err(|m| IoError::line(path, n + 1, m))?;
        events.push(ev);
        lines.push(n + 1);
    }
    validate_stream(&events, universe.len()).map_err(|(k, e)| IoError::line(path, lines[k], e.to_string()))?;
    Ok(events)
}

pub fn read_events(path: &Path, universe: &BondUniverse) -> Result<Vec<ObservationEvent>, IoError> {
    parse_events(&super::read_to_string(path)?, universe, path)
}
