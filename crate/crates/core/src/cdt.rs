//! Class-discriminative transfer (CDT) subspaces for domain adaptation.
//!
//! One partition of size `k_pc` per source class. The loss combines source
//! and target reconstruction with a term rewarding each labeled source
//! sample for lying in its own class partition rather than in the others:
//!
//! ```text
//! f(Q) = ‖Xs − Xs Q Qᵀ‖²_F + ‖Xt − Xt Q Qᵀ‖²_F
//!        − λ Σ_{x ∈ Xs} (‖x Q_y Q_yᵀ‖² − ‖x Q_ȳ Q_ȳᵀ‖²)
//! ```
//!
//! with samples as row vectors, Q_y the partition of x's class and Q_ȳ the
//! concatenation of every other class partition. Target labels are never
//! used for fitting.
//!
//! The gradient used by the optimizer is
//!
//! ```text
//! ∂/∂Q_c = −2 (Cs + Ct) Q_c − 2λ (S_c − Σ_{c' ≠ c} S_{c'}) Q_c
//! ```
//!
//! where Cs = XsᵀXs, Ct = XtᵀXt and S_c is the scatter XᵀX of the source
//! samples of class c. It differs from the derivative of the literal loss
//! only by terms that vanish after tangent projection; the test suite
//! checks it against central differences.

use crate::classify::{accuracy, fit_predict, Method};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::manifold::{PartitionSpec, PsPoint};
use crate::matrix::{ensure_finite, Mat};
use crate::mdpca::{random_starts, FitOptions};
use crate::optim::{best_report, minimize_each, LossProblem, OptimizeReport, OptimizerConfig};

pub const DEFAULT_LAMBDA: f64 = 2.0;

/// Largest partition size that fits: ⌊n / L⌋.
pub fn default_k_pc(n: usize, classes: usize) -> usize {
    n / classes.max(1)
}

pub fn cdt_spec(n: usize, classes: usize, k_pc: usize) -> Result<PartitionSpec> {
    if classes < 2 {
        return Err(Error::InvalidSpec(format!("at least two classes are required, got {classes}")));
    }
    if k_pc == 0 {
        return Err(Error::InvalidSpec("k_pc must be >= 1".into()));
    }
    PartitionSpec::new(n, vec![k_pc; classes])
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdtModel {
    point: PsPoint,
    classes: Vec<String>,
    lambda: f64,
}

impl CdtModel {
    /// Partition c holds class `classes[c]`.
    pub fn new(point: PsPoint, classes: Vec<String>, lambda: f64) -> Result<Self> {
        if point.spec().partition_count() != classes.len() {
            return Err(Error::InvalidConfig(format!(
                "spec has {} partitions but {} classes were given",
                point.spec().partition_count(),
                classes.len()
            )));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!("lambda must be >= 0, got {lambda}")));
        }
        Ok(Self { point, classes, lambda })
    }

    pub fn point(&self) -> &PsPoint {
        &self.point
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn class_basis(&self, c: usize) -> Mat {
        self.point.partition_cols(c)
    }
}

fn check_inputs(spec: &PartitionSpec, source: &LabeledDataset, target: &Mat) -> Result<()> {
    ensure_finite(target)?;
    if source.class_count() != spec.partition_count() {
        return Err(Error::InvalidConfig(format!(
            "source has {} classes but the model has {} partitions",
            source.class_count(),
            spec.partition_count()
        )));
    }
    for (what, cols, rows) in [
        ("source feature dimension", source.features(), source.samples()),
        ("target feature dimension", target.ncols(), target.nrows()),
    ] {
        if cols != spec.n() {
            return Err(Error::ShapeMismatch {
                context: what,
                expected_rows: rows,
                expected_cols: spec.n(),
                rows,
                cols,
            });
        }
    }
    Ok(())
}

/// Columns of every class partition except `c`.
fn others(y: &Mat, spec: &PartitionSpec, c: usize) -> Mat {
    let cols: Vec<usize> = (0..spec.partition_count()).filter(|&j| j != c).flat_map(|j| spec.range(j)).collect();
    y.select_columns(cols.iter())
}

fn block(y: &Mat, spec: &PartitionSpec, c: usize) -> Mat {
    let r = spec.range(c);
    y.columns(r.start, r.len()).into_owned()
}

/// The loss evaluated sample by sample, exactly as written.
pub fn cdt_loss(model: &CdtModel, source: &LabeledDataset, target: &Mat) -> Result<f64> {
    let spec = model.point.spec();
    check_inputs(spec, source, target)?;
    let y = model.point.representative();
    let proj = &y * y.transpose();
    let xs = source.x();
    let recon = (xs - xs * &proj).norm_squared() + (target - target * &proj).norm_squared();

    let own_proj: Vec<Mat> = (0..spec.partition_count())
        .map(|c| {
            let b = block(&y, spec, c);
            &b * b.transpose()
        })
        .collect();
    let other_proj: Vec<Mat> = (0..spec.partition_count())
        .map(|c| {
            let b = others(&y, spec, c);
            &b * b.transpose()
        })
        .collect();

    let mut disc = 0.0;
    for (i, &c) in source.labels().iter().enumerate() {
        let x = xs.row(i);
        disc += (x * &own_proj[c]).norm_squared() - (x * &other_proj[c]).norm_squared();
    }
    Ok(recon - model.lambda * disc)
}

pub fn cdt_grad(model: &CdtModel, source: &LabeledDataset, target: &Mat) -> Result<Mat> {
    let problem = CdtProblem::new(model.point.spec().clone(), source, target, model.lambda, Exec::Sequential)?;
    Ok(problem.euclidean_grad(&model.point.representative()))
}

/// CDT objective with cached second moments and per-class scatters.
#[derive(Debug, Clone)]
pub struct CdtProblem {
    spec: PartitionSpec,
    lambda: f64,
    moments: Mat,
    moments_trace: f64,
    scatters: Vec<Mat>,
    scatter_sum: Mat,
}

impl CdtProblem {
    pub fn new(spec: PartitionSpec, source: &LabeledDataset, target: &Mat, lambda: f64, exec: Exec) -> Result<Self> {
        check_inputs(&spec, source, target)?;
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!("lambda must be >= 0, got {lambda}")));
        }
        let xs = source.x();
        let moments = xs.transpose() * xs + target.transpose() * target;
        let moments_trace = moments.trace();
        let scatters = exec.map_range(source.class_count(), |c| {
            let xc = source.class_rows(c);
            xc.transpose() * xc
        });
        let n = spec.n();
        let scatter_sum = scatters.iter().fold(Mat::zeros(n, n), |acc, s| acc + s);
        Ok(Self { spec, lambda, moments, moments_trace, scatters, scatter_sum })
    }
}

/// Σ_x ‖x P Pᵀ‖² for rows x with scatter S, valid for any P: tr(PᵀSP · PᵀP).
fn projected_energy(s: &Mat, p: &Mat) -> f64 {
    let psp = p.transpose() * s * p;
    let ptp = p.transpose() * p;
    psp.component_mul(&ptp).sum()
}

impl LossProblem for CdtProblem {
    fn spec(&self) -> &PartitionSpec {
        &self.spec
    }

    fn loss(&self, y: &Mat) -> f64 {
        let recon = {
            let ycy = y.transpose() * &self.moments * y;
            let yty = y.transpose() * y;
            self.moments_trace - 2.0 * ycy.trace() + ycy.component_mul(&yty).sum()
        };
        let disc: f64 = self
            .scatters
            .iter()
            .enumerate()
            .map(|(c, s)| {
                projected_energy(s, &block(y, &self.spec, c)) - projected_energy(s, &others(y, &self.spec, c))
            })
            .sum();
        recon - self.lambda * disc
    }

    fn euclidean_grad(&self, y: &Mat) -> Mat {
        let mut g = &self.moments * y * -2.0;
        for (c, s) in self.scatters.iter().enumerate() {
            let r = self.spec.range(c);
            // S_c − Σ_{c' ≠ c} S_{c'} = 2 S_c − Σ S.
            let contrast = s * 2.0 - &self.scatter_sum;
            let extra = contrast * y.columns(r.start, r.len()) * (-2.0 * self.lambda);
            let mut cols = g.columns_mut(r.start, r.len());
            cols += extra;
        }
        g
    }
}

pub fn fit_cdt(
    source: &LabeledDataset,
    target: &Mat,
    k_pc: usize,
    lambda: f64,
    config: &OptimizerConfig,
    seed: u64,
) -> Result<(CdtModel, OptimizeReport)> {
    fit_cdt_with(source, target, k_pc, lambda, config, seed, &FitOptions::default())
}

pub fn fit_cdt_with(
    source: &LabeledDataset,
    target: &Mat,
    k_pc: usize,
    lambda: f64,
    config: &OptimizerConfig,
    seed: u64,
    options: &FitOptions,
) -> Result<(CdtModel, OptimizeReport)> {
    config.validate()?;
    let spec = cdt_spec(source.features(), source.class_count(), k_pc)?;
    let problem = CdtProblem::new(spec.clone(), source, target, lambda, options.exec)?;
    let starts = random_starts(&spec, seed, options.restarts);
    let reports = minimize_each(&problem, &starts, config, options.exec)?;
    let report = best_report(reports).expect("at least one start");
    let model = CdtModel::new(report.final_point.clone(), source.classes().to_vec(), lambda)?;
    Ok((model, report))
}

/// Coordinates of the rows of `x` in the learned k-dimensional basis.
pub fn project(model: &CdtModel, x: &Mat) -> Result<Mat> {
    if x.ncols() != model.point.spec().n() {
        return Err(Error::ShapeMismatch {
            context: "projection input",
            expected_rows: x.nrows(),
            expected_cols: model.point.spec().n(),
            rows: x.nrows(),
            cols: x.ncols(),
        });
    }
    Ok(x * model.point.representative())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub method: Method,
    /// Predicted class indices (into the source's class list).
    pub predictions: Vec<usize>,
    /// Present when target labels were supplied.
    pub accuracy: Option<f64>,
}

/// Trains `method` on the projected source and predicts the projected target.
pub fn classify(
    model: &CdtModel,
    method: Method,
    source: &LabeledDataset,
    target: &Mat,
    target_labels: Option<&[usize]>,
) -> Result<Classification> {
    let train = project(model, source.x())?;
    let test = project(model, target)?;
    run(method, &train, source, &test, target_labels)
}

/// Baseline: the same classifier on the raw features.
pub fn classify_raw(
    method: Method,
    source: &LabeledDataset,
    target: &Mat,
    target_labels: Option<&[usize]>,
) -> Result<Classification> {
    run(method, source.x(), source, target, target_labels)
}

pub fn classify_nearest_centroid(
    model: &CdtModel,
    source: &LabeledDataset,
    target: &Mat,
    target_labels: Option<&[usize]>,
) -> Result<Classification> {
    classify(model, Method::NearestCentroid, source, target, target_labels)
}

pub fn classify_gaussian_nb(
    model: &CdtModel,
    source: &LabeledDataset,
    target: &Mat,
    target_labels: Option<&[usize]>,
) -> Result<Classification> {
    classify(model, Method::GaussianNb, source, target, target_labels)
}

fn run(
    method: Method,
    train: &Mat,
    source: &LabeledDataset,
    test: &Mat,
    target_labels: Option<&[usize]>,
) -> Result<Classification> {
    let predictions = fit_predict(method, train, source.labels(), source.class_count(), test)?;
    let accuracy = match target_labels {
        Some(truth) if truth.len() != predictions.len() => {
            return Err(Error::ShapeMismatch {
                context: "one evaluation label per target sample",
                expected_rows: predictions.len(),
                expected_cols: 1,
                rows: truth.len(),
                cols: 1,
            })
        }
        Some(truth) => Some(accuracy(&predictions, truth)),
        None => None,
    };
    Ok(Classification { method, predictions, accuracy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{block_rotate, random_block_rotation};
    use crate::matrix::{gaussian_matrix, rng};

    fn instance(n: usize, l: usize, k_pc: usize, lambda: f64, seed: u64) -> (CdtModel, LabeledDataset, Mat) {
        let mut g = rng(seed);
        let labels: Vec<usize> = (0..5 * l).map(|i| i % l).collect();
        let source = LabeledDataset::from_indices(gaussian_matrix(5 * l, n, &mut g), labels).unwrap();
        let target = gaussian_matrix(7, n, &mut g);
        let point = PsPoint::random(cdt_spec(n, l, k_pc).unwrap(), seed + 1);
        let model = CdtModel::new(point, source.classes().to_vec(), lambda).unwrap();
        (model, source, target)
    }

    #[test]
    fn zero_data_zero_loss() {
        let source = LabeledDataset::from_indices(Mat::zeros(4, 5), vec![0, 1, 0, 1]).unwrap();
        let model =
            CdtModel::new(PsPoint::random(cdt_spec(5, 2, 2).unwrap(), 1), source.classes().to_vec(), 0.0).unwrap();
        assert_eq!(cdt_loss(&model, &source, &Mat::zeros(3, 5)).unwrap(), 0.0);
    }

    #[test]
    fn cached_loss_matches_direct_loss() {
        for lambda in [0.0, 0.5, 2.0] {
            let (model, source, target) = instance(7, 3, 2, lambda, 3);
            let direct = cdt_loss(&model, &source, &target).unwrap();
            let problem =
                CdtProblem::new(model.point().spec().clone(), &source, &target, lambda, Exec::Sequential).unwrap();
            let cached = problem.loss_at(model.point());
            assert!((direct - cached).abs() < 1e-10 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn sample_inside_own_partition() {
        let spec = cdt_spec(4, 2, 1).unwrap();
        let point = PsPoint::identity(spec);
        // One sample per class, each lying in its own partition's span.
        let x = crate::matrix::from_rows(&[[3.0, 0.0, 0.0, 0.0], [0.0, 2.0, 0.0, 0.0]]).unwrap();
        let source = LabeledDataset::from_indices(x, vec![0, 1]).unwrap();
        let target = Mat::zeros(1, 4);
        let lambda = 1.5;
        let model = CdtModel::new(point, source.classes().to_vec(), lambda).unwrap();
        // Reconstruction is exact, so the loss is the discriminative term alone.
        let loss = cdt_loss(&model, &source, &target).unwrap();
        assert!((loss - (-lambda * (9.0 + 4.0))).abs() < 1e-12);
    }

    #[test]
    fn lambda_zero_gradient_is_reconstruction_gradient() {
        let (model, source, target) = instance(6, 2, 2, 0.0, 5);
        let y = model.point().representative();
        let c = source.x().transpose() * source.x() + target.transpose() * &target;
        let expected = -2.0 * c * y;
        assert!((cdt_grad(&model, &source, &target).unwrap() - expected).norm() < 1e-10);
    }

    #[test]
    fn balanced_identical_scatter_cancels() {
        // Class 1 rows are sign flips of class 0 rows: identical scatters.
        let half = gaussian_matrix(6, 5, &mut rng(2));
        let mut x = Mat::zeros(12, 5);
        x.rows_mut(0, 6).copy_from(&half);
        x.rows_mut(6, 6).copy_from(&(-&half));
        let labels = (0..12).map(|i| usize::from(i >= 6)).collect();
        let source = LabeledDataset::from_indices(x, labels).unwrap();
        let target = gaussian_matrix(4, 5, &mut rng(3));
        let point = PsPoint::random(cdt_spec(5, 2, 2).unwrap(), 4);
        let with = CdtModel::new(point.clone(), source.classes().to_vec(), 2.0).unwrap();
        let without = CdtModel::new(point, source.classes().to_vec(), 0.0).unwrap();
        let a = cdt_grad(&with, &source, &target).unwrap();
        let b = cdt_grad(&without, &source, &target).unwrap();
        assert!((a - b).norm() < 1e-10);
    }

    #[test]
    fn loss_invariant_under_block_rotation() {
        let (model, source, target) = instance(8, 3, 2, 2.0, 7);
        let rot = random_block_rotation(model.point().spec(), &mut rng(8));
        let rotated = CdtModel::new(block_rotate(model.point(), &rot).unwrap(), model.classes().to_vec(), 2.0).unwrap();
        let a = cdt_loss(&model, &source, &target).unwrap();
        let b = cdt_loss(&rotated, &source, &target).unwrap();
        assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
    }

    #[test]
    fn input_validation() {
        let (model, source, target) = instance(6, 2, 2, 1.0, 1);
        assert!(cdt_loss(&model, &source, &target.columns(0, 5).into_owned()).is_err());
        let three = LabeledDataset::from_indices(Mat::zeros(3, 6), vec![0, 1, 2]).unwrap();
        assert!(cdt_loss(&model, &three, &target).is_err());
        assert!(CdtModel::new(model.point().clone(), model.classes().to_vec(), -1.0).is_err());
        assert!(cdt_spec(6, 2, 4).is_err());
        assert_eq!(default_k_pc(800, 10), 80);
    }

    #[test]
    fn memorization_without_shift() {
        let mut g = rng(4);
        let mut x = gaussian_matrix(40, 6, &mut g) * 0.2;
        let labels: Vec<usize> = (0..40).map(|i| i % 2).collect();
        for (i, &c) in labels.iter().enumerate() {
            x[(i, 3 * c)] += 4.0;
        }
        let source = LabeledDataset::from_indices(x.clone(), labels.clone()).unwrap();
        let config = OptimizerConfig { alpha: 1e-3, max_iters: 300, ..Default::default() };
        let (model, _) = fit_cdt(&source, &x, 2, DEFAULT_LAMBDA, &config, 1).unwrap();
        for m in Method::ALL {
            let c = classify(&model, m, &source, &x, Some(&labels)).unwrap();
            assert_eq!(c.accuracy, Some(1.0));
        }
        assert!(classify(&model, Method::GaussianNb, &source, &x, Some(&labels[..3])).is_err());
    }
}
