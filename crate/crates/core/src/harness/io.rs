//! CSV formats for datasets and power curves.
//!
//! Floats are written in Rust's shortest round-trip form, so a write/read
//! cycle is exact.

use std::fs::File;
use std::path::Path;

use csv::{ReaderBuilder, StringRecord, Writer};

use super::{PowerCurve, PowerRow};
use crate::error::{Error, Result};
use crate::matrix::RealMatrix;
use crate::pipeline::Dataset;

const RESULTS_HEADER: [&str; 10] =
    ["setting", "dim", "balance", "effect", "method", "rate", "ci_low", "ci_high", "n_applicable", "n_errors"];

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Parse { line, msg: format!("{kind:?}") },
    }
}

pub fn export_csv(curve: &PowerCurve, path: impl AsRef<Path>) -> Result<()> {
    let mut w = Writer::from_path(path).map_err(csv_err)?;
    w.write_record(RESULTS_HEADER).map_err(csv_err)?;
    for r in &curve.rows {
        w.write_record([
            r.setting.to_string(),
            r.dim.to_string(),
            r.balance.to_string(),
            r.effect.to_string(),
            r.method.to_string(),
            r.rate.to_string(),
            r.ci_low.to_string(),
            r.ci_high.to_string(),
            r.n_applicable.to_string(),
            r.n_errors.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Header plus records, each record tagged with its 1-based file line.
struct Table {
    header: Vec<String>,
    records: Vec<(usize, StringRecord)>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        let mut reader = ReaderBuilder::new().has_headers(true).from_reader(file);
        let header: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(str::to_owned).collect();
        if header.iter().all(|h| h.trim().is_empty()) {
            return Err(Error::Parse { line: 1, msg: "empty file".into() });
        }
        let mut records = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(csv_err)?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            records.push((line, rec));
        }
        Ok(Self { header, records })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.header.iter().position(|h| h == name).ok_or_else(|| Error::Parse { line: 1, msg: format!("missing column `{name}`") })
    }

    fn field<T: std::str::FromStr>(&self, line: usize, rec: &StringRecord, col: usize) -> Result<T> {
        let raw = rec.get(col).unwrap_or("");
        raw.trim().parse().map_err(|_| Error::Parse { line, msg: format!("cannot parse `{raw}` in column `{}`", self.header[col]) })
    }

    fn matrix(&self, cols: &[usize]) -> Result<RealMatrix> {
        let mut data = Vec::with_capacity(self.records.len() * cols.len());
        for (line, rec) in &self.records {
            for &c in cols {
                let v: f64 = self.field(*line, rec, c)?;
                if !v.is_finite() {
                    return Err(Error::Parse { line: *line, msg: format!("non-finite value in column `{}`", self.header[c]) });
                }
                data.push(v);
            }
        }
        RealMatrix::from_row_major(self.records.len(), cols.len(), &data)
    }
}

pub fn read_power_curve(path: impl AsRef<Path>) -> Result<PowerCurve> {
    let table = Table::read(path.as_ref())?;
    let cols: Vec<usize> = RESULTS_HEADER.iter().map(|h| table.column(h)).collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(table.records.len());
    for (line, rec) in &table.records {
        let line = *line;
        let f = |i: usize| -> Result<f64> { table.field(line, rec, cols[i]) };
        let u = |i: usize| -> Result<usize> { table.field(line, rec, cols[i]) };
        let text = |i: usize| rec.get(cols[i]).unwrap_or("");
        let bad = |msg: String| Error::Parse { line, msg };
        rows.push(PowerRow {
            setting: text(0).parse().map_err(|e: Error| bad(e.to_string()))?,
            dim: u(1)?,
            balance: f(2)?,
            effect: f(3)?,
            method: text(4).parse().map_err(|e: Error| bad(e.to_string()))?,
            rate: f(5)?,
            ci_low: f(6)?,
            ci_high: f(7)?,
            n_applicable: u(8)?,
            n_errors: u(9)?,
        });
    }
    Ok(PowerCurve { rows })
}

/// Writes `sample_id,group,x_1..x_r,y_1..y_D`.
pub fn export_dataset(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let (x, y) = (data.covariates(), data.outcomes());
    let mut w = Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec!["sample_id".to_owned(), "group".to_owned()];
    header.extend((1..=x.ncols()).map(|j| format!("x_{j}")));
    header.extend((1..=y.ncols()).map(|j| format!("y_{j}")));
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..data.n() {
        let mut rec = vec![(i + 1).to_string(), data.groups()[i].to_string()];
        rec.extend(x.row(i).iter().map(f64::to_string));
        rec.extend(y.row(i).iter().map(f64::to_string));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Column selection for [`load_dataset`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetColumns {
    pub outcomes: Vec<String>,
    pub group: String,
    pub covariates: Vec<String>,
}

/// Reads a dataset written by [`export_dataset`].
pub fn import_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let table = Table::read(path.as_ref())?;
    table.column("sample_id")?;
    let pick = |prefix: &str| -> Vec<String> { table.header.iter().filter(|h| h.starts_with(prefix)).cloned().collect() };
    let outcomes = pick("y_");
    if outcomes.is_empty() {
        return Err(Error::Parse { line: 1, msg: "missing column `y_1`".into() });
    }
    let cols = DatasetColumns { outcomes, group: "group".into(), covariates: pick("x_") };
    from_table(&table, &cols)
}

/// Reads a dataset from arbitrary named columns. Group labels must be
/// positive integers.
pub fn load_dataset(path: impl AsRef<Path>, columns: &DatasetColumns) -> Result<Dataset> {
    from_table(&Table::read(path.as_ref())?, columns)
}

fn from_table(table: &Table, columns: &DatasetColumns) -> Result<Dataset> {
    if table.records.is_empty() {
        return Err(Error::Parse { line: 2, msg: "no data rows".into() });
    }
    let idx = |names: &[String]| -> Result<Vec<usize>> { names.iter().map(|n| table.column(n)).collect() };
    let y = table.matrix(&idx(&columns.outcomes)?)?;
    let x = table.matrix(&idx(&columns.covariates)?)?;
    let g = table.column(&columns.group)?;
    let mut groups = Vec::with_capacity(table.records.len());
    for (line, rec) in &table.records {
        let label: usize = table.field(*line, rec, g)?;
        if label == 0 {
            return Err(Error::Parse { line: *line, msg: "group labels are 1-based".into() });
        }
        groups.push(label);
    }
    Dataset::new(y, groups, x)
}
