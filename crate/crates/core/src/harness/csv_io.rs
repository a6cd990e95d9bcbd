//! Matrix and trace CSV files.
//!
//! Matrix files are headerless rows of comma-separated decimal floats. Values
//! are written with 17 significant digits so a load after a write returns the
//! same bits. Trace files carry one header line,
//! `iter,loss,wall_ms,shuffle_fired`, followed by one row per record.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::optim::OptimizerTrace;

pub const TRACE_HEADER: &str = "iter,loss,wall_ms,shuffle_fired";

pub fn parse_matrix_csv(text: &str) -> Result<DenseMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let lines: Vec<&str> = text.lines().collect();
    // trailing blank lines are tolerated, interior ones are not
    let end = lines.iter().rposition(|l| !l.trim().is_empty()).map_or(0, |p| p + 1);
    for (idx, line) in lines[..end].iter().enumerate() {
        let line_no = idx + 1;
        let mut row = Vec::new();
        for (col, tok) in line.split(',').enumerate() {
            let tok = tok.trim();
            let v: f64 = tok.parse().map_err(|_| Error::Parse {
                line: line_no,
                column: Some(col + 1),
                msg: format!("'{tok}' is not a number"),
            })?;
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Parse {
                    line: line_no,
                    column: None,
                    msg: format!("row has {} fields, expected {}", row.len(), first.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Input("matrix file is empty".into()));
    }
    DenseMatrix::from_rows(&rows)
}

pub fn load_matrix_csv(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
    parse_matrix_csv(&text)
}

pub fn render_matrix_csv(m: &DenseMatrix) -> String {
    let mut out = String::new();
    for r in 0..m.rows() {
        for (c, v) in m.row(r).iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            write!(out, "{v:.16e}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn write_matrix_csv(path: impl AsRef<Path>, m: &DenseMatrix) -> Result<()> {
    write_atomic(path.as_ref(), render_matrix_csv(m).as_bytes())
}

/// Renders a trace. With `with_timing == false` the wall time column is 0.
pub fn render_trace_csv(trace: &OptimizerTrace, with_timing: bool) -> String {
    let mut out = String::with_capacity(48 * trace.records.len());
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in &trace.records {
        let ms = if with_timing { r.wall_ms } else { 0.0 };
        writeln!(out, "{},{:.16e},{:.6},{}", r.iteration, r.loss, ms, u8::from(r.shuffle_fired)).unwrap();
    }
    out
}

pub fn write_trace_csv(path: impl AsRef<Path>, trace: &OptimizerTrace, with_timing: bool) -> Result<()> {
    write_atomic(path.as_ref(), render_trace_csv(trace, with_timing).as_bytes())
}

/// Parsed trace row: `(iter, loss, wall_ms, shuffle_fired)`.
pub type TraceRow = (usize, f64, f64, bool);

pub fn parse_trace_csv(text: &str) -> Result<Vec<TraceRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == TRACE_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                column: None,
                msg: format!("expected header '{TRACE_HEADER}'"),
            })
        }
    }
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let f: Vec<&str> = line.split(',').collect();
        let err = |column: usize, msg: &str| Error::Parse {
            line: line_no,
            column: Some(column),
            msg: msg.to_string(),
        };
        if f.len() != 4 {
            return Err(Error::Parse {
                line: line_no,
                column: None,
                msg: format!("expected 4 fields, got {}", f.len()),
            });
        }
        let iter = f[0].parse().map_err(|_| err(1, "bad iteration"))?;
        let loss = f[1].parse().map_err(|_| err(2, "bad loss"))?;
        let ms = f[2].parse().map_err(|_| err(3, "bad wall time"))?;
        let fired = match f[3] {
            "0" => false,
            "1" => true,
            _ => return Err(err(4, "shuffle_fired must be 0 or 1")),
        };
        rows.push((iter, loss, ms, fired));
    }
    Ok(rows)
}

/// Write to a sibling temporary file, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let name = path
        .file_name()
        .ok_or_else(|| Error::Input(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
