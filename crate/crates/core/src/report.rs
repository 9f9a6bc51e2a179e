//! Results tables: methods as rows, window setting × split as columns.

use std::path::Path;

use crate::data::{csv_io, Split};
use crate::error::{Error, Result};
use crate::metrics::ResultRow;

pub const MISSING_CELL: &str = "—";

pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(csv_io)?;
    let mut rows = Vec::new();
    for r in reader.deserialize::<ResultRow>() {
        rows.push(r.map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?);
    }
    Ok(rows)
}

/// Appends rows, writing the header when the file is new.
pub fn append_results(path: impl AsRef<Path>, rows: &[ResultRow]) -> Result<()> {
    let path = path.as_ref();
    let fresh = !path.exists() || std::fs::metadata(path)?.len() == 0;
    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(fresh)
        .from_writer(file);
    for r in rows {
        w.serialize(r).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportTable {
    pub methods: Vec<String>,
    /// `(config, split)` in display order.
    pub columns: Vec<(String, Split)>,
    /// `cells[method][column]`; later rows for the same cell win.
    pub cells: Vec<Vec<Option<f64>>>,
}

impl ReportTable {
    /// Methods and settings keep first-seen order; splits are always listed
    /// train, valid, test within a setting.
    pub fn build(rows: &[ResultRow]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Data("no results to report".into()));
        }
        let mut methods: Vec<String> = Vec::new();
        let mut configs: Vec<String> = Vec::new();
        let mut parsed = Vec::with_capacity(rows.len());
        for r in rows {
            let split: Split = r.split.parse().map_err(|_| {
                Error::Data(format!(
                    "inconsistent split label `{}` for {}",
                    r.split, r.method
                ))
            })?;
            if !methods.contains(&r.method) {
                methods.push(r.method.clone());
            }
            if !configs.contains(&r.config) {
                configs.push(r.config.clone());
            }
            parsed.push((r, split));
        }
        let columns: Vec<(String, Split)> = configs
            .iter()
            .flat_map(|c| Split::ALL.iter().map(move |&s| (c.clone(), s)))
            .collect();
        let mut cells = vec![vec![None; columns.len()]; methods.len()];
        for (r, split) in parsed {
            let m = methods
                .iter()
                .position(|x| *x == r.method)
                .expect("collected");
            let c = columns
                .iter()
                .position(|(cfg, s)| *cfg == r.config && *s == split)
                .expect("collected");
            cells[m][c] = Some(r.rmse);
        }
        Ok(Self {
            methods,
            columns,
            cells,
        })
    }

    fn cell(&self, m: usize, c: usize) -> String {
        self.cells[m][c].map_or_else(|| MISSING_CELL.to_string(), |v| format!("{v:.4}"))
    }

    /// Fixed-width text rendering.
    pub fn to_text(&self) -> String {
        let mut header = vec!["method".to_string()];
        header.extend(self.columns.iter().map(|(c, s)| format!("{c} {s}")));
        let mut lines = vec![header];
        for (m, name) in self.methods.iter().enumerate() {
            let mut row = vec![name.clone()];
            row.extend((0..self.columns.len()).map(|c| self.cell(m, c)));
            lines.push(row);
        }
        let widths: Vec<usize> = (0..lines[0].len())
            .map(|k| {
                lines
                    .iter()
                    .map(|l| l[k].chars().count())
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        for l in &lines {
            let cells: Vec<String> = l
                .iter()
                .zip(&widths)
                .map(|(s, w)| format!("{s}{}", " ".repeat(w - s.chars().count())))
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref()).map_err(csv_io)?;
        let mut header = vec!["method".to_string()];
        header.extend(self.columns.iter().map(|(c, s)| format!("{c} {s}")));
        w.write_record(&header).map_err(csv_io)?;
        for (m, name) in self.methods.iter().enumerate() {
            let mut row = vec![name.clone()];
            row.extend((0..self.columns.len()).map(|c| self.cell(m, c)));
            w.write_record(&row).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}
