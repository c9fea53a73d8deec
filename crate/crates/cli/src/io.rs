//! CSV and text file helpers.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::CliError;

/// Decimal with 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))
}

/// Writes a header and rows of already formatted cells.
pub fn write_csv<S: AsRef<str>>(path: &Path, header: &[S], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), CliError> {
    let err = |e: csv::Error| CliError::Data(format!("cannot write {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(header.iter().map(|h| h.as_ref())).map_err(err)?;
    for row in rows {
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

/// A numeric table with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let c = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[c]).collect())
    }
}

/// Reads a numeric CSV. A first row that does not parse as numbers is taken
/// as the header; otherwise columns are named `y1..yp`. Cells are named
/// 1-based by data row and column in errors.
pub fn read_table(path: &Path) -> Result<Table, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut header = None;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let parsed: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Err(_) if i == 0 => header = Some(record.iter().map(String::from).collect::<Vec<_>>()),
            Err(_) => {
                let (c, cell) = record.iter().enumerate().find(|(_, v)| v.parse::<f64>().is_err()).unwrap();
                return Err(CliError::Data(format!(
                    "{}: cannot parse '{cell}' at row {}, column {}",
                    path.display(),
                    rows.len() + 1,
                    c + 1
                )));
            }
            Ok(v) => rows.push(v),
        }
    }
    let width = header.as_ref().map(Vec::len).or_else(|| rows.first().map(Vec::len)).unwrap_or(0);
    let header = header.unwrap_or_else(|| (1..=width).map(|c| format!("y{c}")).collect());
    Ok(Table { header, rows })
}

/// Reads an observation panel (`T` rows by `p` columns) into a `p x T` matrix.
pub fn read_panel(path: &Path) -> Result<DMatrix<f64>, CliError> {
    let table = read_table(path)?;
    if table.rows.is_empty() || table.header.is_empty() {
        return Err(CliError::Data(format!("{}: no observations", path.display())));
    }
    for (t, row) in table.rows.iter().enumerate() {
        if let Some(s) = row.iter().position(|v| !v.is_finite()) {
            return Err(CliError::Data(format!(
                "{}: non-finite value '{}' at row {}, column {}",
                path.display(),
                row[s],
                t + 1,
                s + 1
            )));
        }
    }
    let (t, p) = (table.rows.len(), table.header.len());
    Ok(DMatrix::from_fn(p, t, |s, i| table.rows[i][s]))
}
