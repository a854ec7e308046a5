//! Report tables: one row per model, one column group per mode.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::metrics::{aggregate, compute_metrics_row, MetricsRow};
use crate::records::RunRecord;

/// Column heads within each mode group.
pub const COLUMNS: [&str; 5] = ["Su", "Pr", "P@1, P@5", "Tk/Su", "FC/Su"];

/// Rendered in place of an undefined ratio.
pub const UNDEFINED: &str = "--";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Markdown,
    Csv,
}

#[derive(Debug, Error)]
#[error("table row violates a metric identity: {0}")]
pub struct TableError(pub String);

/// Aggregate metrics for one model; `cells[i]` belongs to the i-th mode.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub model: String,
    pub cells: Vec<Option<MetricsRow>>,
}

/// Per-query cell metrics keyed by (model, mode, query).
pub fn cell_metrics(records: &[RunRecord]) -> BTreeMap<(String, String, String), MetricsRow> {
    let mut groups: BTreeMap<(String, String, String), Vec<RunRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.model.clone(), r.mode.clone(), r.query.clone()))
            .or_default()
            .push(r.clone());
    }
    groups
        .into_iter()
        .map(|(k, rs)| (k, compute_metrics_row(&rs)))
        .collect()
}

/// Averages each (model, mode) over its queries. Models and modes keep the
/// given order; models absent from `models` are appended in name order.
pub fn table_rows(records: &[RunRecord], models: &[String], modes: &[String]) -> Vec<TableRow> {
    let cells = cell_metrics(records);
    let mut order: Vec<String> = models.to_vec();
    for (m, _, _) in cells.keys() {
        if !order.contains(m) {
            order.push(m.clone());
        }
    }
    order
        .into_iter()
        .filter(|m| cells.keys().any(|(cm, _, _)| cm == m))
        .map(|model| {
            let cells = modes
                .iter()
                .map(|mode| {
                    let rows: Vec<MetricsRow> = cells
                        .iter()
                        .filter(|((m, md, _), _)| *m == model && md == mode)
                        .map(|(_, r)| r.clone())
                        .collect();
                    (!rows.is_empty()).then(|| aggregate(&rows))
                })
                .collect();
            TableRow { model, cells }
        })
        .collect()
}

pub fn fmt_rate(v: f64) -> String {
    format!("{v:.2}")
}

pub fn fmt_tokens(v: Option<f64>) -> String {
    match v {
        Some(t) if t >= 1000.0 => format!("{:.1}k", t / 1000.0),
        Some(t) => format!("{}", t.round() as i64),
        None => UNDEFINED.into(),
    }
}

pub fn fmt_calls(v: Option<f64>) -> String {
    v.map_or_else(|| UNDEFINED.into(), |c| (c.round() as i64).to_string())
}

/// The five cell strings of one mode group.
pub fn cell_strings(row: Option<&MetricsRow>) -> [String; 5] {
    match row {
        Some(r) => [
            fmt_rate(r.su),
            fmt_rate(r.pr),
            format!("{}, {}", fmt_rate(r.p_at_1), fmt_rate(r.p_at_5)),
            fmt_tokens(r.tk_per_su),
            fmt_calls(r.fc_per_su),
        ],
        None => std::array::from_fn(|_| String::new()),
    }
}

/// Checks P@1 = Su, Pr <= Su and P@5 >= P@1 on one row.
pub fn check_identities(row: &MetricsRow) -> Result<(), TableError> {
    const EPS: f64 = 1e-12;
    if (row.p_at_1 - row.su).abs() > EPS {
        return Err(TableError(format!("P@1 {} != Su {}", row.p_at_1, row.su)));
    }
    if row.pr > row.su + EPS {
        return Err(TableError(format!("Pr {} > Su {}", row.pr, row.su)));
    }
    if row.p_at_5 + EPS < row.p_at_1 {
        return Err(TableError(format!("P@5 {} < P@1 {}", row.p_at_5, row.p_at_1)));
    }
    for v in [row.su, row.pr, row.p_at_1, row.p_at_5] {
        if !(0.0..=1.0).contains(&v) {
            return Err(TableError(format!("rate {v} outside [0, 1]")));
        }
    }
    Ok(())
}

fn header(first: &str, modes: &[String]) -> Vec<String> {
    let mut h = vec![first.to_string()];
    for mode in modes {
        h.extend(COLUMNS.iter().map(|c| format!("{mode} {c}")));
    }
    h
}

fn render(head: Vec<String>, body: Vec<Vec<String>>, format: Format) -> String {
    match format {
        Format::Markdown => {
            let line = |cells: &[String]| format!("| {} |\n", cells.join(" | "));
            let mut out = line(&head);
            out += &format!("|{}\n", "---|".repeat(head.len()));
            for row in &body {
                out += &line(row);
            }
            out
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&head).expect("in-memory write");
            for row in &body {
                w.write_record(row).expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
        }
    }
}

/// Renders the per-model table. Every defined cell is checked against the
/// metric identities first.
pub fn emit_table(rows: &[TableRow], modes: &[String], format: Format) -> Result<String, TableError> {
    let mut body = Vec::with_capacity(rows.len());
    for row in rows {
        let mut cells = vec![row.model.clone()];
        for i in 0..modes.len() {
            let m = row.cells.get(i).and_then(Option::as_ref);
            if let Some(m) = m {
                check_identities(m)?;
            }
            cells.extend(cell_strings(m));
        }
        body.push(cells);
    }
    Ok(render(header("Model", modes), body, format))
}

/// Renders one row per (query, model), with the same column groups.
pub fn emit_per_query(records: &[RunRecord], modes: &[String], format: Format) -> Result<String, TableError> {
    let cells = cell_metrics(records);
    let mut keys: Vec<(String, String)> = cells.keys().map(|(m, _, q)| (q.clone(), m.clone())).collect();
    keys.sort_by(|a, b| natural(&a.0).cmp(&natural(&b.0)).then_with(|| a.cmp(b)));
    keys.dedup();
    let mut body = Vec::with_capacity(keys.len());
    for (query, model) in keys {
        let mut row = vec![query.clone(), model.clone()];
        for mode in modes {
            let m = cells.get(&(model.clone(), mode.clone(), query.clone()));
            if let Some(m) = m {
                check_identities(m)?;
            }
            row.extend(cell_strings(m));
        }
        body.push(row);
    }
    let mut head = header("Query", modes);
    head.insert(1, "Model".into());
    Ok(render(head, body, format))
}

/// Sort key that orders `q2` before `q10`.
fn natural(id: &str) -> (String, u64, String) {
    let split = id.find(|c: char| c.is_ascii_digit()).unwrap_or(id.len());
    let (prefix, rest) = id.split_at(split);
    let digits: String = rest.chars().take_while(char::is_ascii_digit).collect();
    let tail = rest[digits.len()..].to_string();
    (prefix.to_string(), digits.parse().unwrap_or(0), tail)
}
