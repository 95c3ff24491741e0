//! Row-major sample matrices and their CSV representation.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// `n` samples of dimension `d`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    dim: usize,
    values: Vec<f64>,
}

impl Dataset {
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dataset dimension must be positive"));
        }
        if values.len() % dim != 0 {
            return Err(Error::Parse(format!(
                "{} values do not form rows of dimension {dim}",
                values.len()
            )));
        }
        Ok(Self { dim, values })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptyDataset)?;
        let dim = first.as_ref().len();
        let mut values = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Self::new(dim, values)
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut values = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Dataset {
            dim: self.dim,
            values,
        }
    }

    /// Each row repeated `times` times in place.
    pub fn repeat_rows(&self, times: usize) -> Dataset {
        let mut values = Vec::with_capacity(self.values.len() * times);
        for row in self.rows() {
            for _ in 0..times {
                values.extend_from_slice(row);
            }
        }
        Dataset {
            dim: self.dim,
            values,
        }
    }

    /// Column means.
    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for row in self.rows() {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        let n = self.len().max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    /// Componentwise minimum and maximum over all rows.
    pub fn bounds(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        if self.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut lo = self.row(0).to_vec();
        let mut hi = lo.clone();
        for row in self.rows() {
            for ((l, h), x) in lo.iter_mut().zip(hi.iter_mut()).zip(row) {
                *l = l.min(*x);
                *h = h.max(*x);
            }
        }
        Ok((lo, hi))
    }

    /// Parses numeric CSV, one sample per row.
    pub fn read_csv<R: Read>(reader: R, has_header: bool) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(has_header)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut dim = None;
        let mut values = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            let row_dim = record.len();
            match dim {
                None => dim = Some(row_dim),
                Some(d) if d != row_dim => {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        found: row_dim,
                    })
                }
                _ => {}
            }
            for field in record.iter() {
                let v: f64 = field.parse().map_err(|e| {
                    Error::Parse(format!("row {}: cannot parse {field:?}: {e}", line + 1))
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse(format!("row {}: non-finite value", line + 1)));
                }
                values.push(v);
            }
        }
        let dim = dim.ok_or(Error::EmptyDataset)?;
        Self::new(dim, values)
    }

    pub fn load_csv(path: impl AsRef<Path>, has_header: bool) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?, has_header)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut writer = csv::WriterBuilder::new().from_writer(writer);
        for row in self.rows() {
            writer.write_record(row.iter().map(|v| format!("{v:e}")))?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}
