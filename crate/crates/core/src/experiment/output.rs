use std::fs;
use std::path::Path;

use super::{ExperimentReport, WSource};
use crate::error::{Error, Result};
use crate::spectral::PriorKind;

pub const CSV_HEADER: [&str; 5] = ["missing", "w_source", "prior", "rho", "psnr_db"];

/// One data line of the sweep CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvRow {
    pub missing: f64,
    pub w_source: WSource,
    pub prior: PriorKind,
    pub rho: f64,
    /// Empty in the file when the solve failed.
    pub psnr_db: Option<f64>,
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config {
            line: None,
            message: format!("csv: {other:?}"),
        },
    }
}

/// Metadata as `# key=value` lines, then the header and one row per sweep
/// point. Fields are quoted only when needed.
pub fn render_csv(report: &ExperimentReport) -> Result<String> {
    let mut out = String::new();
    for (k, v) in &report.metadata {
        out.push_str(&format!("# {k}={v}\n"));
    }
    for w in &report.warnings {
        out.push_str(&format!("# warning={w}\n"));
    }
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(CSV_HEADER).map_err(csv_err)?;
    for row in &report.rows {
        for p in &row.sweep {
            wtr.write_record([
                row.missing.to_string(),
                row.w_source.to_string(),
                row.prior.to_string(),
                p.rho.to_string(),
                p.psnr_db.map(|v| v.to_string()).unwrap_or_default(),
            ])
            .map_err(csv_err)?;
        }
    }
    let body = wtr.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    out.push_str(&String::from_utf8(body).expect("csv output is utf-8"));
    Ok(out)
}

pub fn emit_csv(report: &ExperimentReport, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, render_csv(report)?)?;
    Ok(())
}

/// Reads the data rows back, skipping `#` comment lines.
pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Config {
            line: None,
            message: format!("unexpected csv header {:?}", header.iter().collect::<Vec<_>>()),
        });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line() as usize);
        let bad = |what: &str| Error::Config {
            line,
            message: format!("bad {what} field"),
        };
        let num = |i: usize, what: &str| rec[i].parse::<f64>().map_err(|_| bad(what));
        rows.push(CsvRow {
            missing: num(0, "missing")?,
            w_source: WSource::parse(&rec[1]).ok_or_else(|| bad("w_source"))?,
            prior: PriorKind::parse(&rec[2]).ok_or_else(|| bad("prior"))?,
            rho: num(3, "rho")?,
            psnr_db: if rec[4].is_empty() { None } else { Some(num(4, "psnr_db")?) },
        });
    }
    Ok(rows)
}
