//! Datasets: samples are rows, features are columns.

use crate::error::{Error, Result};
use crate::matrix::{ensure_finite, Mat};

/// Per-feature statistics recorded by [`zscore`]. A zero `std` marks a
/// constant column, which is centered but not scaled.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Centers every column and scales it to unit sample standard deviation
/// (n − 1 denominator). Constant columns, and all columns of a single-row
/// matrix, are left at zero.
pub fn zscore(x: &Mat) -> (Mat, Normalization) {
    let (rows, cols) = x.shape();
    let mut out = x.clone();
    let mut mean = Vec::with_capacity(cols);
    let mut std = Vec::with_capacity(cols);
    for j in 0..cols {
        let col = x.column(j);
        let mu = col.sum() / rows as f64;
        let ss: f64 = col.iter().map(|v| (v - mu) * (v - mu)).sum();
        let sd = if rows > 1 { (ss / (rows - 1) as f64).sqrt() } else { 0.0 };
        // A spread at round-off level relative to the mean counts as constant.
        let constant = sd <= 16.0 * f64::EPSILON * mu.abs();
        for i in 0..rows {
            out[(i, j)] = if constant { 0.0 } else { (x[(i, j)] - mu) / sd };
        }
        mean.push(mu);
        std.push(if constant { 0.0 } else { sd });
    }
    (out, Normalization { mean, std })
}

/// An unlabeled dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    x: Mat,
    normalization: Option<Normalization>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, x: Mat) -> Result<Self> {
        ensure_finite(&x)?;
        Ok(Self { name: name.into(), x, normalization: None })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn x(&self) -> &Mat {
        &self.x
    }

    pub fn samples(&self) -> usize {
        self.x.nrows()
    }

    pub fn features(&self) -> usize {
        self.x.ncols()
    }

    pub fn normalization(&self) -> Option<&Normalization> {
        self.normalization.as_ref()
    }

    /// Z-scores the features and records the statistics used.
    pub fn zscored(self) -> Self {
        let (x, norm) = zscore(&self.x);
        Self { name: self.name, x, normalization: Some(norm) }
    }
}

/// A dataset with class labels. Labels are dense class indices `0..L`;
/// `classes[c]` keeps the original name of class `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    x: Mat,
    labels: Vec<usize>,
    classes: Vec<String>,
}

impl LabeledDataset {
    pub fn new(x: Mat, labels: Vec<usize>, classes: Vec<String>) -> Result<Self> {
        ensure_finite(&x)?;
        if labels.len() != x.nrows() {
            return Err(Error::ShapeMismatch {
                context: "one label per sample",
                expected_rows: x.nrows(),
                expected_cols: 1,
                rows: labels.len(),
                cols: 1,
            });
        }
        if classes.len() < 2 {
            return Err(Error::InvalidConfig(format!("at least two classes are required, got {}", classes.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes.len()) {
            return Err(Error::InvalidConfig(format!("label index {bad} out of range for {} classes", classes.len())));
        }
        for (c, name) in classes.iter().enumerate() {
            if !labels.contains(&c) {
                return Err(Error::EmptyClass(name.clone()));
            }
        }
        Ok(Self { x, labels, classes })
    }

    /// Labels given as consecutive integers `0..L` named "1".."L".
    pub fn from_indices(x: Mat, labels: Vec<usize>) -> Result<Self> {
        let l = labels.iter().copied().max().map_or(0, |m| m + 1);
        let classes = (1..=l).map(|c| c.to_string()).collect();
        Self::new(x, labels, classes)
    }

    pub fn x(&self) -> &Mat {
        &self.x
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn samples(&self) -> usize {
        self.x.nrows()
    }

    pub fn features(&self) -> usize {
        self.x.ncols()
    }

    pub fn zscored(self) -> Self {
        let (x, _) = zscore(&self.x);
        Self { x, ..self }
    }

    /// Rows belonging to class `c`.
    pub fn class_rows(&self, c: usize) -> Mat {
        let idx: Vec<usize> = (0..self.labels.len()).filter(|&i| self.labels[i] == c).collect();
        self.x.select_rows(idx.iter())
    }
}
