//! Labeled datasets and importance weights.
//!
//! Features are stored row-major so that `row(i)` is a contiguous slice; the
//! geometry code converts to `nalgebra` matrices where it needs factorizations.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{LabError, Result};

/// Binary classification data with optional covariate-shift density ratios
/// `eta(x_i) = p_t(x_i) / p_s(x_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    d: usize,
    features: Vec<f64>,
    labels: Vec<f64>,
    density_ratios: Option<Vec<f64>>,
}

impl Dataset {
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<f64>, density_ratios: Option<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(LabError::structural("dataset needs at least one sample"));
        }
        let d = rows[0].len();
        if d == 0 {
            return Err(LabError::structural("dataset needs at least one feature"));
        }
        let mut features = Vec::with_capacity(n * d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(LabError::structural(format!(
                    "row {i} has {} features, expected {d}",
                    row.len()
                )));
            }
            features.extend_from_slice(row);
        }
        Self::from_flat(n, d, features, labels, density_ratios)
    }

    pub fn from_flat(
        n: usize,
        d: usize,
        features: Vec<f64>,
        labels: Vec<f64>,
        density_ratios: Option<Vec<f64>>,
    ) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(LabError::structural("dataset needs n >= 1 and d >= 1"));
        }
        if features.len() != n * d {
            return Err(LabError::structural(format!(
                "feature buffer has {} entries, expected {}",
                features.len(),
                n * d
            )));
        }
        if labels.len() != n {
            return Err(LabError::structural(format!("{} labels for {n} samples", labels.len())));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(LabError::Numeric(format!("non-finite feature in row {}", pos / d)));
        }
        if let Some(i) = labels.iter().position(|&y| y != 1.0 && y != -1.0) {
            return Err(LabError::domain(format!("label {} at sample {i} is not +1 or -1", labels[i])));
        }
        if let Some(eta) = &density_ratios {
            if eta.len() != n {
                return Err(LabError::structural(format!("{} density ratios for {n} samples", eta.len())));
            }
            if let Some(i) = eta.iter().position(|&e| !(e.is_finite() && e > 0.0)) {
                return Err(LabError::domain(format!("density ratio {} at sample {i} must be positive", eta[i])));
            }
        }
        Ok(Self { n, d, features, labels, density_ratios })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn density_ratios(&self) -> Option<&[f64]> {
        self.density_ratios.as_deref()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.d)
    }

    /// `y_i * x_i` for sample `i`.
    pub fn signed_row(&self, i: usize) -> Vec<f64> {
        let y = self.labels[i];
        self.row(i).iter().map(|v| y * v).collect()
    }

    pub fn max_feature_norm(&self) -> f64 {
        self.rows().map(norm).fold(0.0, f64::max)
    }

    /// Sub-dataset on the given indices, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let rows = indices.iter().map(|&i| self.row(i).to_vec()).collect();
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        let eta = self
            .density_ratios
            .as_ref()
            .map(|e| indices.iter().map(|&i| e[i]).collect());
        Dataset::new(rows, labels, eta)
    }

    pub fn with_density_ratios(mut self, eta: Vec<f64>) -> Result<Self> {
        if eta.len() != self.n {
            return Err(LabError::structural("density ratio length mismatch"));
        }
        if eta.iter().any(|&e| !(e.is_finite() && e > 0.0)) {
            return Err(LabError::domain("density ratios must be positive and finite"));
        }
        self.density_ratios = Some(eta);
        Ok(self)
    }

    /// Reads the CSV layout `x0,...,x{d-1},y[,eta]`.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let y_col = headers
            .iter()
            .position(|h| h == "y")
            .ok_or_else(|| LabError::structural("CSV header has no `y` column"))?;
        for (j, h) in headers.iter().take(y_col).enumerate() {
            if h != format!("x{j}") {
                return Err(LabError::structural(format!("expected column x{j}, found `{h}`")));
            }
        }
        let has_eta = match headers.len() - y_col - 1 {
            0 => false,
            1 if &headers[y_col + 1] == "eta" => true,
            _ => return Err(LabError::structural("unexpected columns after `y`")),
        };
        let d = y_col;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        let mut eta = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            let parse = |j: usize| -> Result<f64> {
                record[j]
                    .parse::<f64>()
                    .map_err(|e| LabError::structural(format!("row {line}, column {j}: {e}")))
            };
            for j in 0..d {
                features.push(parse(j)?);
            }
            labels.push(parse(y_col)?);
            if has_eta {
                eta.push(parse(y_col + 1)?);
            }
        }
        let n = labels.len();
        Dataset::from_flat(n, d, features, labels, has_eta.then_some(eta))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..self.d).map(|j| format!("x{j}")).collect();
        header.push("y".into());
        if self.density_ratios.is_some() {
            header.push("eta".into());
        }
        wtr.write_record(&header)?;
        for i in 0..self.n {
            let mut rec: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            rec.push(format!("{}", self.labels[i] as i64));
            if let Some(eta) = &self.density_ratios {
                rec.push(eta[i].to_string());
            }
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Per-sample importance weights confined to the box `[1/M, M]`.
///
/// Weights are kept raw. [`WeightVector::normalized`] gives the probability view
/// used by the weak-regularization margin argument.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    w: Vec<f64>,
    bound_m: f64,
}

impl WeightVector {
    pub fn new(w: Vec<f64>, bound_m: f64) -> Result<Self> {
        if !(bound_m.is_finite() && bound_m >= 1.0) {
            return Err(LabError::domain(format!("weight bound M = {bound_m} must be >= 1")));
        }
        if w.is_empty() {
            return Err(LabError::structural("empty weight vector"));
        }
        // relative slack so that clamp(1/x) round trips are accepted
        let lo = (1.0 / bound_m) * (1.0 - 1e-12);
        let hi = bound_m * (1.0 + 1e-12);
        if let Some(i) = w.iter().position(|&v| !(v.is_finite() && v >= lo && v <= hi)) {
            return Err(LabError::domain(format!(
                "weight w[{i}] = {} outside [1/{bound_m}, {bound_m}]",
                w[i]
            )));
        }
        Ok(Self { w, bound_m })
    }

    pub fn uniform(n: usize) -> Self {
        Self { w: vec![1.0; n], bound_m: 1.0 }
    }

    /// Smallest box `[1/M, M]` that contains every entry.
    pub fn with_tight_bound(w: Vec<f64>) -> Result<Self> {
        let m = w.iter().map(|&v| v.max(1.0 / v)).fold(1.0, f64::max);
        Self::new(w, m)
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn bound(&self) -> f64 {
        self.bound_m
    }

    pub fn normalized(&self) -> Vec<f64> {
        let total: f64 = self.w.iter().sum();
        self.w.iter().map(|v| v / total).collect()
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        let w: Vec<f64> = self.w.iter().map(|v| v * c).collect();
        Self::new(w, self.bound_m * c.max(1.0 / c))
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            w: indices.iter().map(|&i| self.w[i]).collect(),
            bound_m: self.bound_m,
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_labels_and_ratios() {
        assert!(Dataset::new(vec![vec![1.0]], vec![0.0], None).is_err());
        assert!(Dataset::new(vec![vec![1.0]], vec![1.0], Some(vec![0.0])).is_err());
        assert!(Dataset::new(vec![vec![f64::NAN]], vec![1.0], None).is_err());
        assert!(Dataset::new(vec![vec![1.0], vec![1.0, 2.0]], vec![1.0, -1.0], None).is_err());
        assert!(Dataset::new(vec![], vec![], None).is_err());
    }

    #[test]
    fn csv_round_trip_keeps_ratios() {
        let data = Dataset::new(
            vec![vec![0.1, -2.5], vec![1.0 / 3.0, 7.0]],
            vec![1.0, -1.0],
            Some(vec![0.5, 2.0]),
        )
        .unwrap();
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x0,x1,y,eta\n"));
        let back = Dataset::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn csv_without_eta() {
        let text = "x0,y\n1.5,1\n-2,-1\n";
        let data = Dataset::read_csv(text.as_bytes()).unwrap();
        assert_eq!(data.len(), 2);
        assert!(data.density_ratios().is_none());
        assert_eq!(data.row(1), &[-2.0]);
    }

    #[test]
    fn weight_box_is_enforced() {
        assert!(WeightVector::new(vec![0.5, 2.0], 2.0).is_ok());
        assert!(WeightVector::new(vec![0.4, 2.0], 2.0).is_err());
        assert!(WeightVector::new(vec![1.0], 0.5).is_err());
        let w = WeightVector::new(vec![2.0, 1.0, 1.0], 2.0).unwrap();
        assert_eq!(w.normalized(), vec![0.5, 0.25, 0.25]);
        // stored raw
        assert_eq!(w.as_slice(), &[2.0, 1.0, 1.0]);
    }
}
