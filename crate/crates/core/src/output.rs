//! CSV serialization of ensemble summaries.
//!
//! Columns: `k, mean_R, mean_T, mean_Y_1..mean_Y_n, cum_ratio, window_ratio,
//! power_ratio, mean_J, mean_normQ`. Undefined cells are left empty. Numbers
//! use 17 significant digits in scientific notation, which round-trips every
//! `f64` exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::EnsembleSummary;

pub fn header(n: usize) -> Vec<String> {
    let mut h = vec!["k".to_string(), "mean_R".into(), "mean_T".into()];
    h.extend((1..=n).map(|i| format!("mean_Y_{i}")));
    h.extend(
        ["cum_ratio", "window_ratio", "power_ratio", "mean_J", "mean_normQ"]
            .iter()
            .map(|s| s.to_string()),
    );
    h
}

fn number(x: f64) -> String {
    format!("{x:.16e}")
}

fn cell(x: Option<f64>) -> String {
    x.map(number).unwrap_or_default()
}

pub fn write_csv(summary: &EnsembleSummary, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "{}", header(summary.mean_y.len()).join(","))?;
    for i in 0..summary.len() {
        let mut row = vec![(i + 1).to_string(), number(summary.mean_r[i]), number(summary.mean_t[i])];
        row.extend(summary.mean_y.iter().map(|y| number(y[i])));
        row.push(number(summary.cum_ratio[i]));
        row.push(cell(summary.window_ratio[i]));
        row.push(cell(summary.power_ratio.as_ref().map(|p| p[i])));
        row.push(cell(summary.mean_j.as_ref().map(|p| p[i])));
        row.push(cell(summary.mean_norm_q.as_ref().map(|p| p[i])));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn emit_csv(summary: &EnsembleSummary, path: &Path) -> Result<()> {
    if summary.is_empty() {
        return Err(Error::InvalidParams("refusing to write an empty summary".into()));
    }
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    write_csv(summary, &mut w).map_err(io)?;
    w.flush().map_err(io)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    /// Cells by row; `None` for empty cells.
    pub rows: Vec<Vec<Option<f64>>>,
}

impl CsvTable {
    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

pub fn read_csv(path: &Path) -> Result<CsvTable> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut lines = BufReader::new(File::open(path).map_err(io)?).lines();
    let header: Vec<String> = match lines.next() {
        Some(l) => l.map_err(io)?.split(',').map(str::to_string).collect(),
        None => return Err(Error::Config(format!("{}: empty CSV", path.display()))),
    };
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line.map_err(io)?;
        let cells = line
            .split(',')
            .map(|c| {
                if c.is_empty() {
                    Ok(None)
                } else {
                    c.parse::<f64>().map(Some).map_err(|e| {
                        Error::Config(format!("{} line {}: {e}", path.display(), n + 2))
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        if cells.len() != header.len() {
            return Err(Error::Config(format!(
                "{} line {}: {} cells for {} columns",
                path.display(),
                n + 2,
                cells.len(),
                header.len()
            )));
        }
        rows.push(cells);
    }
    Ok(CsvTable { header, rows })
}
