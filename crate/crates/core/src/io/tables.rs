//! CSV tables: posterior summaries, envelopes, diagnostics, trajectories,
//! simulated truth and composite series.
//!
//! Reports use six significant digits. Data files (truth, composites) keep
//! full round-trip precision.

use std::path::Path;

use super::config::Units;
use super::{fmt_sig, IoError};
use crate::estimate::{CompositeSample, CompositeSeries};
use crate::filter::{FilterDiagnostics, Marginal, PosteriorSummary, TrajectorySample};
use crate::model::BondUniverse;
use crate::sim::MarketTruth;

const SIG: usize = 6;

fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 fields")
}

fn g(v: f64) -> String {
    fmt_sig(v, SIG)
}

/// Column tag for a probability level: `0.01 -> q01`, `0.5 -> q50`, `0.025 -> q2.5`.
pub fn level_label(p: f64) -> String {
    let pct = fmt_sig(p * 100.0, 10);
    if pct.len() == 1 {
        format!("q0{pct}")
    } else {
        format!("q{pct}")
    }
}

fn parse_level_label(s: &str) -> Option<f64> {
    let pct: f64 = s.strip_prefix('q')?.parse().ok()?;
    Some(pct / 100.0)
}

fn marginal_columns(var: &str, levels: &[f64], units: Units) -> Vec<String> {
    let u = units.suffix();
    let mut cols = vec![format!("{var}_mean_{u}"), format!("{var}_std_{u}")];
    cols.extend(levels.iter().map(|&p| format!("{var}_{}_{u}", level_label(p))));
    cols
}

fn marginal_cells(m: &Marginal, units: Units) -> Vec<String> {
    let mut cells = vec![g(units.from_bp(m.mean)), g(units.from_bp(m.std))];
    cells.extend(m.quantiles.iter().map(|&q| g(units.from_bp(q))));
    cells
}

/// One row per (report time, bond).
pub fn write_summary(rows: &[PosteriorSummary], universe: &BondUniverse, levels: &[f64], units: Units) -> String {
    let mut w = writer();
    let mut header = vec!["time".to_string(), "bond".to_string()];
    header.extend(marginal_columns("y", levels, units));
    header.extend(marginal_columns("psi", levels, units));
    w.write_record(&header).expect("in-memory write");
    for s in rows {
        for (b, bond) in s.bonds.iter().enumerate() {
            let mut rec = vec![g(s.time), universe.labels()[b].clone()];
            rec.extend(marginal_cells(&bond.y, units));
            rec.extend(marginal_cells(&bond.psi, units));
            w.write_record(&rec).expect("in-memory write");
        }
    }
    finish(w)
}

/// A parsed summary table, values in basis points.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTable {
    pub units: Units,
    pub levels: Vec<f64>,
    pub rows: Vec<SummaryRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub time: f64,
    pub bond: String,
    pub y: Marginal,
    pub psi: Marginal,
}

pub fn parse_summary(text: &str, path: &Path) -> Result<SummaryTable, IoError> {
    let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| IoError::parse(path, e.to_string()))?.clone();
    let bad_header = || IoError::line(path, 1, "not a summary table header");
    if header.len() < 6 || &header[0] != "time" || &header[1] != "bond" {
        return Err(bad_header());
    }
    let units = header[2]
        .rsplit_once('_')
        .and_then(|(_, u)| Units::from_suffix(u))
        .ok_or_else(bad_header)?;
    let per_var = (header.len() - 2) / 2;
    if per_var < 2 || header.len() != 2 + 2 * per_var {
        return Err(bad_header());
    }
    let mut levels = Vec::new();
    for c in &header.iter().collect::<Vec<_>>()[4..2 + per_var] {
        let tag = c
            .strip_prefix("y_")
            .and_then(|c| c.strip_suffix(&format!("_{}", units.suffix())))
            .ok_or_else(bad_header)?;
        levels.push(parse_level_label(tag).ok_or_else(bad_header)?);
    }
    let expected = {
        let mut h = vec!["time".to_string(), "bond".to_string()];
        h.extend(marginal_columns("y", &levels, units));
        h.extend(marginal_columns("psi", &levels, units));
        h
    };
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(bad_header());
    }
    let mut rows = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let line = n + 2;
        let rec = rec.map_err(|e| IoError::line(path, line, e.to_string()))?;
        let num = |k: usize| -> Result<f64, IoError> {
            rec[k]
                .parse::<f64>()
                .map_err(|_| IoError::line(path, line, format!("column `{}`: not a number", &header[k])))
        };
        let marginal = |start: usize| -> Result<Marginal, IoError> {
            Ok(Marginal {
                mean: units.to_bp(num(start)?),
                std: units.to_bp(num(start + 1)?),
                quantiles: (0..levels.len())
                    .map(|j| num(start + 2 + j).map(|v| units.to_bp(v)))
                    .collect::<Result<_, _>>()?,
            })
        };
        rows.push(SummaryRow {
            time: num(0)?,
            bond: rec[1].to_string(),
            y: marginal(2)?,
            psi: marginal(2 + per_var)?,
        });
    }
    Ok(SummaryTable { units, levels, rows })
}

/// Nested quantile bands around the median, for plotting.
pub const ENVELOPE_BANDS: [(f64, f64); 4] = [(0.25, 0.75), (0.10, 0.90), (0.05, 0.95), (0.01, 0.99)];

/// Envelope table: one row per (time, bond, variable) with the median and the
/// 25-75, 10-90, 5-95 and 1-99 bands.
pub fn write_envelope(table: &SummaryTable, units: Units, path: &Path) -> Result<String, IoError> {
    let find = |p: f64| table.levels.iter().position(|&l| (l - p).abs() < 1e-12);
    let mut idx = vec![find(0.5).ok_or_else(|| missing_level(path, table.units, 0.5))?];
    for (lo, hi) in ENVELOPE_BANDS {
        idx.push(find(lo).ok_or_else(|| missing_level(path, table.units, lo))?);
        idx.push(find(hi).ok_or_else(|| missing_level(path, table.units, hi))?);
    }
    let mut w = writer();
    let u = units.suffix();
    let mut header = vec!["time".to_string(), "bond".into(), "variable".into(), format!("median_{u}")];
    for (lo, hi) in ENVELOPE_BANDS {
        header.push(format!("{}_{u}", level_label(lo)));
        header.push(format!("{}_{u}", level_label(hi)));
    }
    w.write_record(&header).expect("in-memory write");
    for row in &table.rows {
        for (var, m) in [("y", &row.y), ("psi", &row.psi)] {
            let mut rec = vec![g(row.time), row.bond.clone(), var.to_string()];
            rec.extend(idx.iter().map(|&k| g(units.from_bp(m.quantiles[k]))));
            w.write_record(&rec).expect("in-memory write");
        }
    }
    Ok(finish(w))
}

fn missing_level(path: &Path, units: Units, p: f64) -> IoError {
    IoError::parse(path, format!("missing column `y_{}_{}`", level_label(p), units.suffix()))
}

pub fn write_diagnostics(diags: &[FilterDiagnostics], universe: &BondUniverse) -> String {
    let mut w = writer();
    w.write_record([
        "time",
        "bond",
        "ess",
        "min_log_weight",
        "max_log_weight",
        "zero_weights",
        "resampling_entropy",
    ])
    .expect("in-memory write");
    for d in diags {
        w.write_record([
            g(d.time),
            universe.labels()[d.bond].clone(),
            g(d.ess),
            g(d.min_log_weight),
            g(d.max_log_weight),
            d.zero_weights.to_string(),
            g(d.resampling_entropy),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

/// The first `n_paths` ancestral paths, one row per (path, time, bond).
pub fn write_trajectories(sample: &TrajectorySample, universe: &BondUniverse, n_paths: usize, units: Units) -> String {
    let mut w = writer();
    let u = units.suffix();
    w.write_record(["path".to_string(), "time".into(), "bond".into(), format!("y_{u}"), format!("psi_{u}")])
        .expect("in-memory write");
    let d = sample.d;
    for (k, path) in sample.paths.iter().take(n_paths).enumerate() {
        for (n, &t) in sample.times.iter().enumerate() {
            for b in 0..d {
                w.write_record([
                    k.to_string(),
                    g(t),
                    universe.labels()[b].clone(),
                    g(units.from_bp(path.y_at(n, d)[b])),
                    g(units.from_bp(path.psi_at(n, d)[b])),
                ])
                .expect("in-memory write");
            }
        }
    }
    finish(w)
}

/// Simulated path, one row per (point, bond), bp.
pub fn write_truth(truth: &MarketTruth, universe: &BondUniverse) -> String {
    let mut w = writer();
    w.write_record(["time", "bond", "y", "x", "psi"]).expect("in-memory write");
    for (n, &t) in truth.times.iter().enumerate() {
        let psi = truth.psi_at(n);
        for b in 0..truth.d {
            w.write_record([
                t.to_string(),
                universe.labels()[b].clone(),
                truth.y_at(n)[b].to_string(),
                truth.x_at(n)[b].to_string(),
                psi[b].to_string(),
            ])
            .expect("in-memory write");
        }
    }
    finish(w)
}

/// Composite quotes as `time,bond,mid,spread`; an empty spread cell means no spread.
pub fn write_composite(series: &CompositeSeries, universe: &BondUniverse) -> String {
    let mut rows: Vec<(f64, usize, &CompositeSample)> = series
        .bonds
        .iter()
        .enumerate()
        .flat_map(|(b, s)| s.iter().map(move |x| (x.time, b, x)))
        .collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut w = writer();
    w.write_record(["time", "bond", "mid", "spread"]).expect("in-memory write");
    for (t, b, s) in rows {
        w.write_record([
            t.to_string(),
            universe.labels()[b].clone(),
            s.mid.to_string(),
            s.spread.map(|v| v.to_string()).unwrap_or_default(),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

/// Composite table with bonds in order of first appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeTable {
    pub universe: BondUniverse,
    pub series: CompositeSeries,
    /// Whether the file has a `spread` column at all.
    pub has_spread_column: bool,
}

pub fn parse_composite(text: &str, path: &Path) -> Result<CompositeTable, IoError> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| IoError::parse(path, e.to_string()))?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let need = |name: &str| col(name).ok_or_else(|| IoError::line(path, 1, format!("missing column `{name}`")));
    let (ct, cb, cm) = (need("time")?, need("bond")?, need("mid")?);
    let cs = col("spread");
    if let Some(extra) = header.iter().find(|h| !["time", "bond", "mid", "spread"].contains(h)) {
        return Err(IoError::line(path, 1, format!("unknown column `{extra}`")));
    }
    let mut labels: Vec<String> = Vec::new();
    let mut bonds: Vec<Vec<CompositeSample>> = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let line = n + 2;
        let rec = rec.map_err(|e| IoError::line(path, line, e.to_string()))?;
        let num = |k: usize, name: &str| -> Result<f64, IoError> {
            let v: f64 = rec[k]
                .parse()
                .map_err(|_| IoError::line(path, line, format!("column `{name}`: not a number")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(IoError::line(path, line, format!("column `{name}`: not finite")))
            }
        };
        let time = num(ct, "time")?;
        let mid = num(cm, "mid")?;
        let spread = match cs {
            Some(k) if !rec[k].is_empty() => {
                let v = num(k, "spread")?;
                if !(v > 0.0) {
                    return Err(IoError::line(path, line, "column `spread`: must be positive"));
                }
                Some(v)
            }
            _ => None,
        };
        let label = &rec[cb];
        let b = match labels.iter().position(|l| l == label) {
            Some(b) => b,
            None => {
                labels.push(label.to_string());
                bonds.push(Vec::new());
                labels.len() - 1
            }
        };
        if let Some(prev) = bonds[b].last() {
            if !(time > prev.time) {
                return Err(IoError::line(path, line, format!("bond `{label}`: times must be strictly increasing")));
            }
        }
        bonds[b].push(CompositeSample { time, mid, spread });
    }
    let universe = BondUniverse::new(labels).map_err(|e| IoError::parse(path, e.to_string()))?;
    Ok(CompositeTable {
        universe,
        series: CompositeSeries { bonds },
        has_spread_column: cs.is_some(),
    })
}
