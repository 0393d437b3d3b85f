//! Report emission: canonical JSON plus a fixed-column CSV summary.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::experiment::{AttackOutcome, CellReport, EvalReport};

pub const CSV_HEADER: &str =
    "cell_id,r_multiplier,scheme,K,oracle,targeted,epsilon,clean_acc,adv_acc,success_rate,stderr,seconds";

/// Canonical JSON: object keys sorted, two-space indent, trailing newline.
/// The hop through `Value` is what sorts the keys; serializing the struct
/// directly would keep declaration order.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let value = serde_json::to_value(value)?;
    let mut text = serde_json::to_string_pretty(&value)?;
    text.push('\n');
    Ok(text)
}

fn field(value: String) -> String {
    debug_assert!(
        !value.contains([',', '"', '\n']),
        "csv fields are plain tokens"
    );
    value
}

fn opt<T: std::fmt::Display>(value: Option<T>) -> String {
    value.map_or_else(String::new, |v| field(v.to_string()))
}

/// The single CSV row for one cell. Attacked cells show the untargeted
/// direction (the targeted one lives in the JSON report); failed cells leave
/// every measurement blank.
fn csv_row(cell: &CellReport) -> String {
    let shown: Option<&AttackOutcome> =
        cell.untargeted.as_ref().or(cell.targeted.as_ref());
    let failed = cell.error.is_some();
    let cols = [
        field(cell.id.clone()),
        opt(cell.r_multiplier),
        opt(cell.scheme.map(|s| s.as_str())),
        opt(cell.passes),
        field(cell.oracle.clone()),
        opt(shown.map(|o| o.targeted)),
        opt(cell.epsilon),
        opt((!failed).then_some(cell.accuracy_averaged.rate)),
        opt(shown.map(|o| o.adv_accuracy.rate)),
        opt(shown.map(|o| o.success.rate)),
        opt(shown.map(|o| o.success.stderr)),
        field(cell.seconds.to_string()),
    ];
    cols.join(",")
}

pub fn report_to_csv(report: &EvalReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for cell in &report.cells {
        out.push_str(&csv_row(cell));
        out.push('\n');
    }
    out
}

pub fn write_report_json(report: &EvalReport, path: &Path) -> Result<()> {
    fs::write(path, canonical_json(report)?).map_err(|e| Error::file(path, e))
}

pub fn write_report_csv(report: &EvalReport, path: &Path) -> Result<()> {
    fs::write(path, report_to_csv(report)).map_err(|e| Error::file(path, e))
}

pub fn load_report(path: &Path) -> Result<EvalReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Write `{stem}.json` and `{stem}.csv` under `dir`, returning both paths.
pub fn emit_report(report: &EvalReport, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    let json_path = dir.join(format!("{stem}.json"));
    let csv_path = dir.join(format!("{stem}.csv"));
    write_report_json(report, &json_path)?;
    write_report_csv(report, &csv_path)?;
    Ok((json_path, csv_path))
}
