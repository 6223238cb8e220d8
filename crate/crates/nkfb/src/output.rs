//! Data emission: CSV and JSON curve files plus a JSON run manifest.
//!
//! Curve files are byte-identical across reruns of the same configuration
//! and seed. The manifest intentionally is not: its `elapsed_s` field
//! records wall time and is excluded from the reproducibility claim.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::config::OutputFormat;
use crate::ensemble::EnsembleResult;
use crate::error::{Error, Result};
use crate::operators::BlochVector;
use crate::oracles::OracleCurve;

/// Exact column header of every curve CSV.
pub const CSV_HEADER: &str = "t,Sx,Sy,Sz,Sx_sem,Sy_sem,Sz_sem";

/// The build identifier stamped into manifests.
pub const BUILD_ID: &str = env!("NKFB_BUILD_ID");

fn csv_row(t: f64, mean: &BlochVector, sem: &BlochVector) -> String {
    // 9 significant digits: one leading digit plus eight decimals.
    format!(
        "{t:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e}",
        mean.sx, mean.sy, mean.sz, sem.sx, sem.sy, sem.sz
    )
}

/// Renders an ensemble as CSV text (LF line endings, trailing newline).
pub fn ensemble_csv(result: &EnsembleResult) -> String {
    let mut out = String::with_capacity(64 * (result.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for ((t, mean), sem) in result
        .times
        .iter()
        .zip(&result.mean_bloch)
        .zip(&result.sem_bloch)
    {
        out.push_str(&csv_row(*t, mean, sem));
        out.push('\n');
    }
    out
}

/// Renders a reference curve as CSV text; exact curves carry zero SEM.
pub fn oracle_csv(curve: &OracleCurve) -> String {
    let zero = BlochVector::new(0.0, 0.0, 0.0);
    let mut out = String::with_capacity(64 * (curve.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (t, b) in curve.times().iter().zip(curve.bloch()) {
        out.push_str(&csv_row(*t, b, &zero));
        out.push('\n');
    }
    out
}

fn bloch_rows(v: &[BlochVector]) -> Vec<[f64; 3]> {
    v.iter().map(|b| [b.sx, b.sy, b.sz]).collect()
}

/// Renders an ensemble as a JSON document mirroring the CSV fields.
pub fn ensemble_json(result: &EnsembleResult) -> String {
    let doc = json!({
        "times": result.times,
        "mean_bloch": bloch_rows(&result.mean_bloch),
        "sem_bloch": bloch_rows(&result.sem_bloch),
        "n_traj": result.n_traj,
        "config_digest": result.config_digest,
    });
    to_json_text(&doc)
}

/// Renders a reference curve as a JSON document (zero SEM columns).
pub fn oracle_json(curve: &OracleCurve) -> String {
    let doc = json!({
        "label": curve.label(),
        "times": curve.times(),
        "mean_bloch": bloch_rows(curve.bloch()),
        "sem_bloch": vec![[0.0; 3]; curve.len()],
    });
    to_json_text(&doc)
}

fn to_json_text(doc: &serde_json::Value) -> String {
    let mut text = serde_json::to_string_pretty(doc).expect("JSON of plain data");
    text.push('\n');
    text
}

/// Renders a named-column scalar table (sweep output) as CSV text, with
/// the same 9-significant-digit fields as the curve files.
pub fn table_csv(columns: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = String::with_capacity(16 * columns.len() * (rows.len() + 1));
    out.push_str(&columns.join(","));
    out.push('\n');
    for row in rows {
        assert_eq!(row.len(), columns.len(), "table row width");
        let fields: Vec<String> = row.iter().map(|v| format!("{v:.8e}")).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Renders a named-column scalar table as a JSON document mirroring the
/// CSV fields.
pub fn table_json(columns: &[&str], rows: &[Vec<f64>]) -> String {
    for row in rows {
        assert_eq!(row.len(), columns.len(), "table row width");
    }
    to_json_text(&json!({ "columns": columns, "rows": rows }))
}

/// One row of a parsed curve file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub t: f64,
    pub mean: BlochVector,
    pub sem: BlochVector,
}

/// Parses curve CSV text back into rows (the round-trip counterpart of
/// [`ensemble_csv`] / [`oracle_csv`]).
pub fn parse_curve_csv(text: &str) -> Result<Vec<CurveRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => {
            return Err(Error::Serialize(format!(
                "expected header {CSV_HEADER:?}, got {other:?}"
            )))
        }
    }
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<f64> = line
            .split(',')
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|e| Error::Serialize(format!("row {}: {e}: {f:?}", k + 1)))
            })
            .collect::<Result<_>>()?;
        if fields.len() != 7 {
            return Err(Error::Serialize(format!(
                "row {}: expected 7 fields, got {}",
                k + 1,
                fields.len()
            )));
        }
        rows.push(CurveRow {
            t: fields[0],
            mean: BlochVector::new(fields[1], fields[2], fields[3]),
            sem: BlochVector::new(fields[4], fields[5], fields[6]),
        });
    }
    Ok(rows)
}

/// Writes a curve file `<dir>/<stem>.<ext>` in the chosen format and
/// returns its path.
pub fn emit_ensemble(
    dir: &Path,
    stem: &str,
    result: &EnsembleResult,
    format: OutputFormat,
) -> Result<PathBuf> {
    let text = match format {
        OutputFormat::Csv => ensemble_csv(result),
        OutputFormat::Json => ensemble_json(result),
    };
    write_text(dir, stem, format, &text)
}

/// Writes a reference curve file next to its ensemble.
pub fn emit_oracle(
    dir: &Path,
    stem: &str,
    curve: &OracleCurve,
    format: OutputFormat,
) -> Result<PathBuf> {
    let text = match format {
        OutputFormat::Csv => oracle_csv(curve),
        OutputFormat::Json => oracle_json(curve),
    };
    write_text(dir, stem, format, &text)
}

/// Writes a sweep table `<dir>/<stem>.<ext>` in the chosen format and
/// returns its path.
pub fn emit_table(
    dir: &Path,
    stem: &str,
    columns: &[&str],
    rows: &[Vec<f64>],
    format: OutputFormat,
) -> Result<PathBuf> {
    let text = match format {
        OutputFormat::Csv => table_csv(columns, rows),
        OutputFormat::Json => table_json(columns, rows),
    };
    write_text(dir, stem, format, &text)
}

fn write_text(dir: &Path, stem: &str, format: OutputFormat, text: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("{stem}.{}", format.as_str()));
    let mut file = fs::File::create(&path)?;
    file.write_all(text.as_bytes())?;
    Ok(path)
}

/// Run metadata written next to every preset's data files.
#[derive(Debug, Clone)]
pub struct Manifest {
    /// Preset or experiment name.
    pub name: String,
    /// Every physical parameter needed to re-derive T_Ω, T_γ and κ.
    pub params: serde_json::Value,
    pub master_seed: u64,
    pub n_traj: u64,
    pub workers: usize,
    /// Wall time of the run; excluded from byte-reproducibility.
    pub elapsed_s: f64,
}

impl Manifest {
    pub fn to_json(&self) -> String {
        let doc = json!({
            "preset": self.name,
            "params": self.params,
            "seed": self.master_seed,
            "n_traj": self.n_traj,
            "workers": self.workers,
            "build_id": BUILD_ID,
            "elapsed_s": self.elapsed_s,
        });
        to_json_text(&doc)
    }

    /// Writes `<dir>/manifest.json` and returns its path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join("manifest.json");
        fs::write(&path, self.to_json())?;
        Ok(path)
    }
}
