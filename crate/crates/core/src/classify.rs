//! Small in-repo classifiers used to evaluate learned projections.

use crate::error::{Error, Result};
use crate::matrix::Mat;

/// Floor applied to every per-class feature variance.
pub const VARIANCE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    NearestCentroid,
    GaussianNb,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::NearestCentroid, Method::GaussianNb];

    pub fn name(self) -> &'static str {
        match self {
            Method::NearestCentroid => "nearest_centroid",
            Method::GaussianNb => "gaussian_nb",
        }
    }
}

fn class_moments(x: &Mat, labels: &[usize], classes: usize) -> Result<(Vec<usize>, Mat, Mat)> {
    if labels.len() != x.nrows() {
        return Err(Error::ShapeMismatch {
            context: "one label per sample",
            expected_rows: x.nrows(),
            expected_cols: 1,
            rows: labels.len(),
            cols: 1,
        });
    }
    let d = x.ncols();
    let mut counts = vec![0usize; classes];
    let mut means = Mat::zeros(classes, d);
    for (i, &c) in labels.iter().enumerate() {
        counts[c] += 1;
        let mut row = means.row_mut(c);
        row += x.row(i);
    }
    for (c, &cnt) in counts.iter().enumerate() {
        if cnt == 0 {
            return Err(Error::EmptyClass((c + 1).to_string()));
        }
        means.row_mut(c).unscale_mut(cnt as f64);
    }
    let mut vars = Mat::zeros(classes, d);
    for (i, &c) in labels.iter().enumerate() {
        for j in 0..d {
            let dv = x[(i, j)] - means[(c, j)];
            vars[(c, j)] += dv * dv;
        }
    }
    for (c, &cnt) in counts.iter().enumerate() {
        vars.row_mut(c).unscale_mut(cnt as f64);
    }
    Ok((counts, means, vars))
}

fn argmax(scores: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, s) in scores.enumerate() {
        if s > best.1 {
            best = (i, s);
        }
    }
    best.0
}

/// Predicts the class whose mean is closest in Euclidean distance.
#[derive(Debug, Clone, PartialEq)]
pub struct NearestCentroid {
    means: Mat,
}

impl NearestCentroid {
    pub fn fit(x: &Mat, labels: &[usize], classes: usize) -> Result<Self> {
        let (_, means, _) = class_moments(x, labels, classes)?;
        Ok(Self { means })
    }

    pub fn predict(&self, x: &Mat) -> Vec<usize> {
        x.row_iter().map(|row| argmax(self.means.row_iter().map(|m| -(row - m).norm_squared()))).collect()
    }
}

/// Gaussian naive Bayes with per-class, per-feature means and variances.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianNb {
    log_priors: Vec<f64>,
    means: Mat,
    vars: Mat,
}

impl GaussianNb {
    pub fn fit(x: &Mat, labels: &[usize], classes: usize) -> Result<Self> {
        let (counts, means, mut vars) = class_moments(x, labels, classes)?;
        vars.apply(|v| *v = v.max(VARIANCE_FLOOR));
        let total = labels.len() as f64;
        let log_priors = counts.iter().map(|&c| (c as f64 / total).ln()).collect();
        Ok(Self { log_priors, means, vars })
    }

    pub fn log_likelihoods(&self, sample: &[f64]) -> Vec<f64> {
        (0..self.log_priors.len())
            .map(|c| {
                let mut ll = self.log_priors[c];
                for (j, &v) in sample.iter().enumerate() {
                    let var = self.vars[(c, j)];
                    let dv = v - self.means[(c, j)];
                    ll -= 0.5 * ((2.0 * std::f64::consts::PI * var).ln() + dv * dv / var);
                }
                ll
            })
            .collect()
    }

    pub fn predict(&self, x: &Mat) -> Vec<usize> {
        x.row_iter()
            .map(|row| {
                let sample: Vec<f64> = row.iter().copied().collect();
                argmax(self.log_likelihoods(&sample).into_iter())
            })
            .collect()
    }
}

/// Fits `method` on (train, labels) and predicts `test`.
pub fn fit_predict(method: Method, train: &Mat, labels: &[usize], classes: usize, test: &Mat) -> Result<Vec<usize>> {
    if train.ncols() != test.ncols() {
        return Err(Error::ShapeMismatch {
            context: "train/test feature dimension",
            expected_rows: test.nrows(),
            expected_cols: train.ncols(),
            rows: test.nrows(),
            cols: test.ncols(),
        });
    }
    Ok(match method {
        Method::NearestCentroid => NearestCentroid::fit(train, labels, classes)?.predict(test),
        Method::GaussianNb => GaussianNb::fit(train, labels, classes)?.predict(test),
    })
}

/// Fraction of positions where `predicted` equals `truth`.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    assert_eq!(predicted.len(), truth.len(), "prediction/label length mismatch");
    if truth.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / truth.len() as f64
}
