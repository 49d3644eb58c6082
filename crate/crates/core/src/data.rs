//! Raw time-series container and CSV ingestion.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A T×M panel of observations, rows ordered oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesData {
    values: DMatrix<f64>,
    names: Vec<String>,
}

impl TimeSeriesData {
    pub fn new(values: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        if values.nrows() == 0 {
            return Err(Error::Data("no data rows".into()));
        }
        if values.ncols() == 0 || names.len() != values.ncols() {
            return Err(Error::Data(format!(
                "{} column names for {} columns",
                names.len(),
                values.ncols()
            )));
        }
        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(Error::Data(format!("duplicate column name '{n}'")));
            }
        }
        for j in 0..values.ncols() {
            for i in 0..values.nrows() {
                if !values[(i, j)].is_finite() {
                    return Err(Error::Cell {
                        row: i + 1,
                        column: names[j].clone(),
                        message: "non-finite value".into(),
                    });
                }
            }
        }
        Ok(Self { values, names })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_obs(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_vars(&self) -> usize {
        self.values.ncols()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn column(&self, idx: usize) -> DVector<f64> {
        self.values.column(idx).into_owned()
    }

    /// Writes the panel as CSV with a header row, using round-trip float formatting.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Data(format!("csv write failed: {e}"));
        w.write_record(&self.names).map_err(io)?;
        for i in 0..self.values.nrows() {
            let row: Vec<String> = self.values.row(i).iter().map(|v| format!("{v:?}")).collect();
            w.write_record(&row).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Data(format!("csv write failed: {e}")))?;
        Ok(())
    }
}

/// Reads a headered CSV file of real numbers.
pub fn load_csv(path: impl AsRef<Path>) -> Result<TimeSeriesData> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file)
}

/// Parses headered CSV from any reader.
pub fn read_csv<R: std::io::Read>(input: R) -> Result<TimeSeriesData> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let names: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Data(format!("cannot read header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if names.is_empty() || names.iter().all(String::is_empty) {
        return Err(Error::Data("missing header row".into()));
    }
    let m = names.len();
    let mut flat = Vec::new();
    let mut rows = 0usize;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { expected_len, len, .. } => Error::Data(format!(
                "ragged row {}: expected {expected_len} fields, found {len}",
                i + 1
            )),
            _ => Error::Data(format!("row {}: {e}", i + 1)),
        })?;
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Cell {
                row: i + 1,
                column: names[j].clone(),
                message: format!("cannot parse '{cell}' as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Cell {
                    row: i + 1,
                    column: names[j].clone(),
                    message: format!("non-finite value '{cell}'"),
                });
            }
            flat.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Data("no data rows".into()));
    }
    TimeSeriesData::new(DMatrix::from_row_slice(rows, m, &flat), names)
}
