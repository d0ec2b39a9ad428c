//! CSV input.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use hgp_core::{Dataset, Inputs};

use crate::error::{CliError, CliResult};

/// Column holding the targets: a 0-based index or a header name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TargetColumn {
    Index(usize),
    Name(String),
}

impl FromStr for TargetColumn {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Err("empty column".into());
        }
        Ok(match s.parse::<usize>() {
            Ok(i) => TargetColumn::Index(i),
            Err(_) => TargetColumn::Name(s.to_string()),
        })
    }
}

impl fmt::Display for TargetColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetColumn::Index(i) => write!(f, "{i}"),
            TargetColumn::Name(n) => f.write_str(n),
        }
    }
}

/// A numeric CSV file held row-major.
#[derive(Debug, Clone)]
pub struct Table {
    pub names: Option<Vec<String>>,
    pub values: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl Table {
    pub fn read(path: &Path, has_header: bool) -> CliResult<Table> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(has_header)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_path(path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let names = if has_header {
            let h = reader.headers().map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            Some(h.iter().map(str::to_string).collect::<Vec<_>>())
        } else {
            None
        };
        let mut cols = names.as_ref().map_or(0, Vec::len);
        let mut values = Vec::new();
        let mut rows = 0;
        for (r, record) in reader.records().enumerate() {
            let record = record.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            let row = r + 1;
            let line = record.position().map_or(0, |p| p.line());
            if rows == 0 && cols == 0 {
                cols = record.len();
            }
            if record.len() != cols {
                return Err(CliError::Data(format!(
                    "{}: row {row} (line {line}) has {} fields, expected {cols}",
                    path.display(),
                    record.len()
                )));
            }
            for (c, field) in record.iter().enumerate() {
                let v: f64 = field.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                    let col = match &names {
                        Some(n) => format!("column {c} ('{}')", n[c]),
                        None => format!("column {c}"),
                    };
                    CliError::Data(format!(
                        "{}: row {row} (line {line}), {col}: cannot parse '{field}' as a finite number",
                        path.display()
                    ))
                })?;
                values.push(v);
            }
            rows += 1;
        }
        Ok(Table { names, values, rows, cols })
    }

    pub fn resolve(&self, column: &TargetColumn) -> CliResult<usize> {
        match column {
            TargetColumn::Index(i) if *i < self.cols => Ok(*i),
            TargetColumn::Index(i) => Err(CliError::Data(format!("column {i} out of range for {} columns", self.cols))),
            TargetColumn::Name(n) => match &self.names {
                None => Err(CliError::Config(format!("column '{n}' named but the file has no header"))),
                Some(names) => {
                    names.iter().position(|h| h == n).ok_or_else(|| CliError::Data(format!("no column named '{n}'")))
                }
            },
        }
    }

    /// Splits off column `drop`; returns the remaining columns and the dropped one.
    pub fn split(&self, drop: Option<usize>) -> (Vec<f64>, usize, Vec<f64>) {
        let Some(t) = drop else {
            return (self.values.clone(), self.cols, Vec::new());
        };
        let mut x = Vec::with_capacity(self.rows * (self.cols - 1));
        let mut y = Vec::with_capacity(self.rows);
        for row in self.values.chunks(self.cols) {
            for (c, &v) in row.iter().enumerate() {
                if c == t {
                    y.push(v);
                } else {
                    x.push(v);
                }
            }
        }
        (x, self.cols - 1, y)
    }
}

/// Reads a training or test set. Without `target` the last column holds the targets.
pub fn ingest_csv(path: &Path, target: Option<&TargetColumn>, has_header: bool) -> CliResult<Dataset> {
    let table = Table::read(path, has_header)?;
    if table.cols < 2 {
        return Err(CliError::Data(format!(
            "{}: need at least one input column and a target column, found {} columns",
            path.display(),
            table.cols
        )));
    }
    let t = match target {
        Some(c) => table.resolve(c)?,
        None => table.cols - 1,
    };
    let (x, dim, y) = table.split(Some(t));
    if table.rows == 0 {
        return Ok(Dataset::empty(dim));
    }
    let inputs = Inputs::from_row_major(x, table.rows, dim)?;
    Ok(Dataset::new(inputs, y)?)
}

/// Reads prediction inputs, dropping the `target` column if one is named.
/// An empty file gives zero rows of dimension 0.
pub fn read_inputs(path: &Path, target: Option<&TargetColumn>, has_header: bool) -> CliResult<Inputs> {
    let table = Table::read(path, has_header)?;
    let t = target.map(|c| table.resolve(c)).transpose()?;
    let (x, dim, _) = table.split(t);
    if table.rows == 0 || dim == 0 {
        if table.rows > 0 {
            return Err(CliError::Data(format!("{}: no input columns", path.display())));
        }
        return Ok(Inputs::empty(dim));
    }
    Ok(Inputs::from_row_major(x, table.rows, dim)?)
}
