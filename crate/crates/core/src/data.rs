//! Tabular design datasets: one design per row, columns `x0..x{d-1}` and an
//! optional trailing `reward` column.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Standard deviations below this are treated as constant columns.
pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    values: Vec<f64>,
    pub rewards: Option<Vec<f64>>,
}

impl Dataset {
    pub fn new(dim: usize, values: Vec<f64>, rewards: Option<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Argument("dataset dimension must be positive".into()));
        }
        if !values.len().is_multiple_of(dim) {
            return Err(Error::Argument(format!("{} values do not form rows of width {dim}", values.len())));
        }
        if let Some(r) = &rewards {
            if r.len() != values.len() / dim {
                return Err(Error::Argument(format!("{} rewards for {} rows", r.len(), values.len() / dim)));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("dataset contains non-finite values".into()));
        }
        Ok(Self { dim, values, rewards })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Argument("ragged rows".into()));
        }
        Self::new(dim, rows.concat(), None)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Z-scores every column. Returns the normalized copy and the stats needed
    /// to invert it.
    pub fn normalize(&self) -> Result<(Dataset, ColumnStats)> {
        let stats = ColumnStats::fit(self)?;
        let mut values = self.values.clone();
        for row in values.chunks_exact_mut(self.dim) {
            stats.normalize_in_place(row);
        }
        Ok((Dataset { dim: self.dim, values, rewards: self.rewards.clone() }, stats))
    }
}

/// Per-column mean and population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ColumnStats {
    pub fn fit(data: &Dataset) -> Result<Self> {
        let n = data.len();
        if n < 2 {
            return Err(Error::Argument(format!("normalization needs at least 2 rows, got {n}")));
        }
        let d = data.dim();
        let mut mean = vec![0.0; d];
        for row in data.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for row in data.rows() {
            for j in 0..d {
                var[j] += (row[j] - mean[j]).powi(2);
            }
        }
        let std = var
            .iter()
            .enumerate()
            .map(|(j, v)| {
                let s = (v / n as f64).sqrt();
                if s < STD_FLOOR {
                    log::warn!("column x{j} is constant; std floored at {STD_FLOOR:e}");
                    STD_FLOOR
                } else {
                    s
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    /// Identity transform for `dim` columns.
    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize_in_place(&self, x: &mut [f64]) {
        for j in 0..x.len() {
            x[j] = (x[j] - self.mean[j]) / self.std[j];
        }
    }

    pub fn denormalize(&self, x: &[f64]) -> Vec<f64> {
        let mut out = x.to_vec();
        self.denormalize_in_place(&mut out);
        out
    }

    pub fn denormalize_in_place(&self, x: &mut [f64]) {
        for j in 0..x.len() {
            x[j] = x[j] * self.std[j] + self.mean[j];
        }
    }
}

fn parse_err(path: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, msg: msg.into() }
}

/// Reads a design CSV. The header must be `x0,...,x{d-1}` with an optional
/// final `reward` column.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(file);
    let header = reader.headers().map_err(|e| parse_err(path, 1, e.to_string()))?.clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let has_reward = names.last() == Some(&"reward");
    let dim = names.len() - usize::from(has_reward);
    if dim == 0 {
        return Err(parse_err(path, 1, "no design columns"));
    }
    for (j, name) in names[..dim].iter().enumerate() {
        if *name != format!("x{j}") {
            return Err(parse_err(path, 1, format!("expected column x{j}, found {name:?}")));
        }
    }
    let mut values = Vec::new();
    let mut rewards = has_reward.then(Vec::new);
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let record = record.map_err(|e| parse_err(path, line, e.to_string()))?;
        if record.len() != names.len() {
            return Err(parse_err(path, line, format!("expected {} fields, found {}", names.len(), record.len())));
        }
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(path, line, format!("non-numeric value {field:?} in column {}", names[j])))?;
            if !v.is_finite() {
                return Err(parse_err(path, line, format!("non-finite value in column {}", names[j])));
            }
            if j < dim {
                values.push(v);
            } else if let Some(r) = rewards.as_mut() {
                r.push(v);
            }
        }
    }
    Dataset::new(dim, values, rewards)
}

/// Formats with 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes designs (and optionally rewards) in the format `load_dataset` reads.
pub fn save_samples(path: &Path, dim: usize, designs: &[f64], rewards: Option<&[f64]>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_samples(&mut w, dim, designs, rewards).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_samples(w: &mut impl Write, dim: usize, designs: &[f64], rewards: Option<&[f64]>) -> std::io::Result<()> {
    let header: Vec<String> = (0..dim).map(|j| format!("x{j}")).collect();
    write!(w, "{}", header.join(","))?;
    if rewards.is_some() {
        write!(w, ",reward")?;
    }
    writeln!(w)?;
    for (i, row) in designs.chunks_exact(dim).enumerate() {
        let fields: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        write!(w, "{}", fields.join(","))?;
        if let Some(r) = rewards {
            write!(w, ",{}", fmt_f64(r[i]))?;
        }
        writeln!(w)?;
    }
    Ok(())
}
