//! Deterministic text output: the per-round metrics CSV, the run summary,
//! the sweep join, and the verification report.
//!
//! Everything here is plain string assembly so that identical runs produce
//! byte-identical files. Floats are rendered in scientific notation with 17
//! significant digits, which round-trips every f64 exactly; absent values
//! become empty CSV fields rather than "NaN" so spreadsheet tools parse the
//! columns as numbers.

use std::path::Path;

use serde::Serialize;

use fedra_core::config::ExperimentConfig;
use fedra_core::engine::{PopulationConfig, RoundRecord};
use fedra_core::verify::VerifyReport;

/// Fixed metrics schema; tests and downstream tooling match on it verbatim.
pub const METRICS_HEADER: &str =
    "round,true_m,estimated_m,selected_count,filtered_malicious,filtered_benign,train_loss,eval_accuracy,warnings";

/// Identifies the producing build in summaries and reports. Stable for a
/// given source tree, so determinism comparisons may include it.
pub fn build_id() -> String {
    format!("fedra-sim-v{}", env!("CARGO_PKG_VERSION"))
}

/// Scientific notation with 17 significant digits, enough to round-trip any
/// f64 bit pattern.
pub fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}

fn optional_real(x: f64) -> String {
    if x.is_finite() {
        format_real(x)
    } else {
        String::new()
    }
}

/// Minimal CSV quoting: only applied when a field would break the row.
fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn metrics_row(r: &RoundRecord) -> String {
    let estimated = r
        .estimated_m
        .map(|m| m.to_string())
        .unwrap_or_default();
    let eval = r.eval_accuracy.map(optional_real).unwrap_or_default();
    format!(
        "{},{},{},{},{},{},{},{},{}",
        r.round,
        r.true_m,
        estimated,
        r.selected_count,
        r.filtered_malicious,
        r.filtered_benign,
        optional_real(r.train_loss),
        eval,
        csv_field(&r.warnings.join(";")),
    )
}

/// Renders the full metrics file: header plus one row per round.
pub fn metrics_csv(records: &[RoundRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&metrics_row(r));
        out.push('\n');
    }
    out
}

/// Everything needed to reproduce and interpret one run: the resolved
/// config (seed included), the effective population after any data-driven
/// truncation, the build, and the final round.
#[derive(Debug, Serialize)]
pub struct RunSummary<'a> {
    pub build: String,
    pub seed: u64,
    pub config: &'a ExperimentConfig,
    pub effective_population: PopulationConfig,
    pub final_round: Option<&'a RoundRecord>,
    pub wall_clock_seconds: f64,
}

pub fn summary_json(summary: &RunSummary) -> String {
    let mut text = serde_json::to_string_pretty(summary).expect("summary serializes");
    text.push('\n');
    text
}

/// One line of the sweep join: the varied parameter, its value, the shared
/// seed, and the run's final-round metrics.
pub struct SweepRow<'a> {
    pub param: &'a str,
    pub value: &'a str,
    pub seed: u64,
    pub final_round: Option<&'a RoundRecord>,
}

/// Renders sweep.csv: the metrics schema prefixed by param, value, seed.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::new();
    out.push_str("param,value,seed,");
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for row in rows {
        let metrics = row
            .final_round
            .map(metrics_row)
            .unwrap_or_else(|| ",".repeat(METRICS_HEADER.matches(',').count()));
        out.push_str(&format!(
            "{},{},{},{}\n",
            csv_field(row.param),
            csv_field(row.value),
            row.seed,
            metrics
        ));
    }
    out
}

/// Prints the verification outcome as an aligned pass/fail table.
pub fn verify_table(report: &VerifyReport) -> String {
    let name_width = report
        .checks
        .iter()
        .map(|c| c.name.len())
        .max()
        .unwrap_or(4)
        .max("check".len());
    let mut out = String::new();
    out.push_str(&format!(
        "{:<name_width$}  {:>24}  {:>24}  status\n",
        "check", "measured", "bound"
    ));
    for c in &report.checks {
        out.push_str(&format!(
            "{:<name_width$}  {:>24}  {:>24}  {}\n",
            c.name,
            format_real(c.measured),
            format_real(c.bound),
            if c.passed { "pass" } else { "FAIL" }
        ));
    }
    out
}

pub fn verify_report_json(report: &VerifyReport) -> String {
    let mut text = serde_json::to_string_pretty(report).expect("report serializes");
    text.push('\n');
    text
}

/// Writes a text file, mapping failures to a readable message.
pub fn write_text(path: &Path, text: &str) -> Result<(), String> {
    std::fs::write(path, text).map_err(|e| format!("writing {}: {e}", path.display()))
}
