use crate::error::{HgpError, Result};

/// Row-major N×D input matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Inputs {
    values: Vec<f64>,
    rows: usize,
    dim: usize,
}

impl Inputs {
    pub fn from_row_major(values: Vec<f64>, rows: usize, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(HgpError::InvalidDataset("input dimension must be at least 1".into()));
        }
        if values.len() != rows * dim {
            return Err(HgpError::InvalidDataset(format!("{} values cannot form a {rows}x{dim} matrix", values.len())));
        }
        Ok(Self { values, rows, dim })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(HgpError::InvalidDataset("no rows given".into()));
        };
        let dim = first.as_ref().len();
        let mut values = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(HgpError::InvalidDataset(format!("row {i} has {} columns, expected {dim}", r.len())));
            }
            values.extend_from_slice(r);
        }
        Self::from_row_major(values, rows.len(), dim)
    }

    /// An empty matrix with `dim` columns.
    pub fn empty(dim: usize) -> Self {
        Self { values: Vec::new(), rows: 0, dim }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Row references for the given indices, in order.
    pub fn select(&self, indices: &[usize]) -> Vec<&[f64]> {
        indices.iter().map(|&i| self.row(i)).collect()
    }
}

/// Training corpus shared read-only by every expert.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Inputs,
    targets: Vec<f64>,
}

impl Dataset {
    pub fn new(inputs: Inputs, targets: Vec<f64>) -> Result<Self> {
        if inputs.rows() == 0 {
            return Err(HgpError::InvalidDataset("dataset must contain at least one row".into()));
        }
        if inputs.rows() != targets.len() {
            return Err(HgpError::InvalidDataset(format!(
                "{} input rows but {} targets",
                inputs.rows(),
                targets.len()
            )));
        }
        if inputs.as_slice().iter().chain(&targets).any(|v| !v.is_finite()) {
            return Err(HgpError::InvalidDataset("non-finite value".into()));
        }
        Ok(Self { inputs, targets })
    }

    /// No rows. Valid as a test set; every training operation rejects it.
    pub fn empty(dim: usize) -> Self {
        Self { inputs: Inputs::empty(dim), targets: Vec::new() }
    }

    pub fn inputs(&self) -> &Inputs {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.dim()
    }

    /// Copies the given rows into a new dataset.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let mut values = Vec::with_capacity(indices.len() * self.dim());
        let mut targets = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(HgpError::InvalidDataset(format!("index {i} out of range for {} rows", self.len())));
            }
            values.extend_from_slice(self.inputs.row(i));
            targets.push(self.targets[i]);
        }
        Dataset::new(Inputs::from_row_major(values, indices.len(), self.dim())?, targets)
    }
}
