//! Self-check suite behind the `verify` command.
//!
//! Each check compares a production routine against an independent
//! reference from [`oracle`] or against a planted ground truth, and
//! reports the worst observed value next to its threshold.

use rand::Rng;

use crate::cdt::{classify, classify_raw, fit_cdt, CdtModel, CdtProblem};
use crate::classify::Method;
use crate::data::{Dataset, LabeledDataset};
use crate::error::Result;
use crate::exec::Exec;
use crate::manifold::{
    block_rotate, exp_map, lift_euclidean_gradient, project_tangent, random_block_rotation, retract_qr, PartitionSpec,
    PsPoint,
};
use crate::matrix::{gaussian_matrix, max_principal_angle, qr_positive, rng, Mat};
use crate::mdpca::{fit_mdpca, fit_mdpca_spec, mdpca_loss, FitOptions, MdpcaModel, MdpcaProblem};
use crate::optim::{finite_difference_grad_at, LossProblem, OptimizerConfig, Termination, DEFAULT_FD_STEP};
use crate::synth::{
    pca_instance, planted_collection, planted_transfer, PlantedCollectionConfig, PlantedTransferConfig,
};

/// Reference implementations that share no code with the production paths.
pub mod oracle {
    use crate::manifold::PsPoint;
    use crate::matrix::Mat;

    /// Tangent projection by least squares over an explicit basis.
    ///
    /// The tangent space at Q is spanned by Q(eᵢeⱼᵀ − eⱼeᵢᵀ) for every pair
    /// (i, j) whose indices fall in different blocks. The coefficients of
    /// `z` are found by solving the least-squares problem with an SVD.
    pub fn tangent_projection(p: &PsPoint, z: &Mat) -> Mat {
        let n = p.spec().n();
        let mut block_of = vec![0usize; n];
        for (b, r) in p.spec().block_ranges().into_iter().enumerate() {
            for i in r {
                block_of[i] = b;
            }
        }
        let pairs: Vec<(usize, usize)> =
            (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).filter(|&(i, j)| block_of[i] != block_of[j]).collect();
        if pairs.is_empty() {
            return Mat::zeros(n, n);
        }
        let q = p.q();
        let mut basis = Mat::zeros(n * n, pairs.len());
        for (col, &(i, j)) in pairs.iter().enumerate() {
            let mut e = Mat::zeros(n, n);
            e[(i, j)] = 1.0;
            e[(j, i)] = -1.0;
            let b = q * e;
            basis.column_mut(col).copy_from_slice(b.as_slice());
        }
        let rhs = nalgebra::DVector::from_column_slice(z.as_slice());
        let coeffs = basis.clone().svd(true, true).solve(&rhs, 1e-14).expect("u and v_t were requested");
        let fitted = basis * coeffs;
        Mat::from_column_slice(n, n, fitted.as_slice())
    }

    /// Modified Gram–Schmidt QR with a positive R diagonal.
    pub fn gram_schmidt_qr(m: &Mat) -> (Mat, Mat) {
        let (n, k) = m.shape();
        let mut q = m.clone();
        let mut r = Mat::zeros(k, k);
        for j in 0..k {
            for i in 0..j {
                let proj = q.column(i).dot(&q.column(j));
                r[(i, j)] = proj;
                let qi = q.column(i).into_owned();
                q.column_mut(j).axpy(-proj, &qi, 1.0);
            }
            let norm = q.column(j).norm();
            r[(j, j)] = norm;
            q.column_mut(j).unscale_mut(norm);
        }
        debug_assert_eq!(q.nrows(), n);
        (q, r)
    }

    /// Top-k eigenvectors of xᵀx from a symmetric eigendecomposition.
    pub fn eigen_pca(x: &Mat, k: usize) -> Mat {
        let c = x.transpose() * x;
        let eig = c.symmetric_eigen();
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        Mat::from_fn(x.ncols(), k, |i, j| eig.eigenvectors[(i, order[j])])
    }

    /// Σᵢ ‖Xᵢ − Xᵢ SᵢSᵢᵀ‖²_F / |Xᵢ| for an arbitrary (not necessarily
    /// orthonormal) representative `y`, evaluated directly on the samples.
    pub fn mdpca_loss_literal(y: &Mat, sizes: &[usize], data: &[Mat]) -> f64 {
        let offsets: Vec<usize> = sizes
            .iter()
            .scan(0, |acc, &k| {
                let start = *acc;
                *acc += k;
                Some(start)
            })
            .collect();
        let m = sizes.len();
        let shared: Vec<usize> = (offsets[m - 1]..offsets[m - 1] + sizes[m - 1]).collect();
        data.iter()
            .enumerate()
            .map(|(i, x)| {
                let mut cols: Vec<usize> =
                    if m > 1 { (offsets[i]..offsets[i] + sizes[i]).collect() } else { Vec::new() };
                cols.extend(&shared);
                let s = y.select_columns(cols.iter());
                (x - x * &s * s.transpose()).norm_squared() / x.nrows() as f64
            })
            .sum()
    }

    /// The class-discriminative transfer loss evaluated sample by sample
    /// for an arbitrary representative `y`.
    pub fn cdt_loss_literal(y: &Mat, k_pc: usize, source: &Mat, labels: &[usize], target: &Mat, lambda: f64) -> f64 {
        let proj = y * y.transpose();
        let recon = (source - source * &proj).norm_squared() + (target - target * &proj).norm_squared();
        let classes = y.ncols() / k_pc;
        let mut disc = 0.0;
        for (row, &c) in labels.iter().enumerate() {
            let x = source.row(row);
            let own = y.columns(c * k_pc, k_pc);
            let other_cols: Vec<usize> = (0..classes * k_pc).filter(|j| j / k_pc != c).collect();
            let other = y.select_columns(other_cols.iter());
            disc += (x * own * own.transpose()).norm_squared() - (x * &other * other.transpose()).norm_squared();
        }
        recon - lambda * disc
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Ambient dimensions used by the manifold checks.
    pub sizes: Vec<usize>,
    /// Random inputs per (spec, n) in the projection check.
    pub trials: usize,
    pub exec: Exec,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { seed: 0, sizes: vec![4, 5, 6], trials: 50, exec: Exec::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed value of the checked quantity.
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

impl CheckResult {
    fn at_most(name: &'static str, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Self { name, passed: value <= threshold, value, threshold, detail: detail.into() }
    }

    fn failed(name: &'static str, threshold: f64, err: impl std::fmt::Display) -> Self {
        Self { name, passed: false, value: f64::NAN, threshold, detail: format!("error: {err}") }
    }
}

type Check = fn(&VerifyConfig) -> CheckResult;

const CHECKS: [Check; 12] = [
    qr_oracle,
    projection_oracle,
    projection_idempotency,
    retraction_orthonormality,
    exp_retraction_order,
    mdpca_gradient,
    cdt_gradient,
    loss_invariance,
    pca_equivalence,
    planted_mdpca,
    planted_cdt,
    fit_termination,
];

/// Runs every check; checks are independent and may run in parallel.
pub fn run(config: &VerifyConfig) -> Vec<CheckResult> {
    config.exec.map(&CHECKS, |check| check(config))
}

pub fn all_passed(results: &[CheckResult]) -> bool {
    results.iter().all(|r| r.passed)
}

const PROJECTION_SPECS: [&[usize]; 4] = [&[3], &[1, 1, 1], &[2, 1], &[1, 2, 1]];

fn projection_cases(config: &VerifyConfig) -> Vec<(PartitionSpec, u64)> {
    let mut cases = Vec::new();
    for &n in &config.sizes {
        for sizes in PROJECTION_SPECS {
            if let Ok(spec) = PartitionSpec::new(n, sizes.to_vec()) {
                for t in 0..config.trials as u64 {
                    cases.push((spec.clone(), config.seed.wrapping_add(1000 * n as u64 + t)));
                }
            }
        }
    }
    cases
}

fn relative(a: &Mat, b: &Mat) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

fn qr_oracle(config: &VerifyConfig) -> CheckResult {
    let mut g = rng(config.seed);
    let mut worst = 0.0_f64;
    for &n in &config.sizes {
        for k in [1, n / 2, n] {
            let m = gaussian_matrix(n, k.max(1), &mut g);
            match qr_positive(&m) {
                Ok((q, r)) => {
                    let (q2, r2) = oracle::gram_schmidt_qr(&m);
                    worst = worst.max((q - q2).norm()).max((r - r2).norm());
                }
                Err(e) => return CheckResult::failed("qr_vs_gram_schmidt", 1e-10, e),
            }
        }
    }
    CheckResult::at_most("qr_vs_gram_schmidt", worst, 1e-10, "max Frobenius gap in Q and R")
}

fn projection_oracle(config: &VerifyConfig) -> CheckResult {
    let cases = projection_cases(config);
    let worst = cases
        .iter()
        .map(|(spec, seed)| {
            let p = PsPoint::random(spec.clone(), *seed);
            let z = gaussian_matrix(spec.n(), spec.n(), &mut rng(seed ^ 0x5eed));
            let fast = project_tangent(&p, &z).expect("shapes match");
            (fast.delta() - oracle::tangent_projection(&p, &z)).norm()
        })
        .fold(0.0, f64::max);
    CheckResult::at_most("projection_vs_tangent_basis", worst, 1e-8, format!("{} random inputs", cases.len()))
}

fn projection_idempotency(config: &VerifyConfig) -> CheckResult {
    let cases = projection_cases(config);
    let worst = cases
        .iter()
        .map(|(spec, seed)| {
            let p = PsPoint::random(spec.clone(), *seed);
            let z = gaussian_matrix(spec.n(), spec.n(), &mut rng(seed ^ 0x1de));
            let once = project_tangent(&p, &z).expect("shapes match");
            let twice = project_tangent(&p, once.delta()).expect("shapes match");
            (twice.delta() - once.delta()).norm()
        })
        .fold(0.0, f64::max);
    CheckResult::at_most("projection_idempotent", worst, 1e-10, format!("{} random inputs", cases.len()))
}

fn retraction_orthonormality(config: &VerifyConfig) -> CheckResult {
    let n = config.sizes.iter().copied().max().unwrap_or(6).max(3);
    let spec = PartitionSpec::new(n, vec![1, n - 2]).expect("valid spec");
    let mut p = PsPoint::random(spec, config.seed);
    let mut g = rng(config.seed.wrapping_add(1));
    let mut worst = 0.0_f64;
    for _ in 0..1000 {
        let z = gaussian_matrix(n, n, &mut g);
        let d = project_tangent(&p, &z).expect("shapes match");
        let alpha = g.random_range(0.01..0.5);
        p = match retract_qr(&p, &d, alpha) {
            Ok(next) => next,
            Err(e) => return CheckResult::failed("retraction_orthonormality", 1e-10, e),
        };
        worst = worst.max(p.orthonormality_defect());
    }
    CheckResult::at_most("retraction_orthonormality", worst, 1e-10, "1000 chained retractions")
}

/// Log-log slope of ‖exp_map − retract_qr‖ between α = 1e-2 and 1e-3.
pub fn exp_retraction_slope(p: &PsPoint, z: &Mat) -> Result<f64> {
    let d = project_tangent(p, z)?;
    let d = d.scaled(1.0 / d.norm());
    let gap = |alpha: f64| -> Result<f64> {
        let e = exp_map(p, &d, alpha)?;
        let r = retract_qr(p, &d.neg(), alpha)?;
        Ok((e.q() - r.q()).norm())
    };
    Ok((gap(1e-2)? / gap(1e-3)?).log10())
}

fn exp_retraction_order(config: &VerifyConfig) -> CheckResult {
    let mut worst = 0.0_f64;
    for (t, &n) in config.sizes.iter().enumerate() {
        let spec = PartitionSpec::new(n, vec![1, 1]).expect("n >= 2");
        let p = PsPoint::random(spec, config.seed.wrapping_add(t as u64));
        let z = gaussian_matrix(n, n, &mut rng(config.seed.wrapping_add(100 + t as u64)));
        match exp_retraction_slope(&p, &z) {
            Ok(slope) => worst = worst.max((slope - 2.0).abs()),
            Err(e) => return CheckResult::failed("exp_vs_retraction_order", 0.3, e),
        }
    }
    CheckResult::at_most("exp_vs_retraction_order", worst, 0.3, "|log-log slope - 2|")
}

/// Relative gap between the analytic and finite-difference gradients,
/// both after tangent projection.
fn projected_gap<P: LossProblem>(problem: &P, p: &PsPoint, literal: impl Fn(&Mat) -> f64 + Sync) -> f64 {
    let y = p.representative();
    let analytic = problem.euclidean_grad(&y);
    let numeric = fd(&y, &literal);
    let a = lift_euclidean_gradient(p, &analytic).expect("shape");
    let b = lift_euclidean_gradient(p, &numeric).expect("shape");
    relative(a.delta(), b.delta())
}

fn fd(y: &Mat, f: &(impl Fn(&Mat) -> f64 + Sync)) -> Mat {
    struct Wrap<'a, F>(&'a F, PartitionSpec);
    impl<F: Fn(&Mat) -> f64 + Sync> LossProblem for Wrap<'_, F> {
        fn spec(&self) -> &PartitionSpec {
            &self.1
        }
        fn loss(&self, y: &Mat) -> f64 {
            (self.0)(y)
        }
        fn euclidean_grad(&self, _: &Mat) -> Mat {
            unreachable!("only the loss is differentiated numerically")
        }
    }
    // The spec is never consulted by the finite-difference routine.
    let spec = PartitionSpec::new(y.nrows(), vec![y.ncols()]).expect("valid");
    finite_difference_grad_at(&Wrap(f, spec), y, DEFAULT_FD_STEP)
}

fn mdpca_gradient(config: &VerifyConfig) -> CheckResult {
    let mut worst = 0.0_f64;
    for t in 0..20u64 {
        let seed = config.seed.wrapping_add(t);
        let mut g = rng(seed);
        let d = 1 + (t as usize % 3);
        let n = 6 + (t as usize % 7);
        let spec = if d == 1 && t % 2 == 0 {
            PartitionSpec::new(n, vec![2]).expect("valid")
        } else {
            let mut sizes = vec![1; d];
            sizes.push(2);
            PartitionSpec::new(n, sizes).expect("valid")
        };
        let data: Vec<Dataset> = (0..d)
            .map(|i| Dataset::new(format!("d{i}"), gaussian_matrix(15 + 5 * i, n, &mut g)).expect("finite"))
            .collect();
        let raw: Vec<Mat> = data.iter().map(|ds| ds.x().clone()).collect();
        let problem = MdpcaProblem::new(spec.clone(), &data, Exec::Sequential).expect("consistent");
        let p = PsPoint::random(spec.clone(), seed.wrapping_add(7));
        worst = worst.max(projected_gap(&problem, &p, |y| oracle::mdpca_loss_literal(y, spec.sizes(), &raw)));
    }
    CheckResult::at_most("mdpca_gradient_vs_fd", worst, 1e-5, "20 instances, relative, tangent-projected")
}

fn cdt_gradient(config: &VerifyConfig) -> CheckResult {
    let mut worst = 0.0_f64;
    for t in 0..21u64 {
        let seed = config.seed.wrapping_add(t);
        let mut g = rng(seed);
        let classes = 2 + (t as usize % 2);
        let n = 7 + (t as usize % 6);
        let k_pc = 1 + (t as usize % 2);
        let lambda = [0.0, 0.5, 2.0][t as usize % 3];
        let labels: Vec<usize> = (0..24).map(|i| i % classes).collect();
        let xs = gaussian_matrix(24, n, &mut g);
        let xt = gaussian_matrix(18, n, &mut g);
        let source = LabeledDataset::from_indices(xs.clone(), labels.clone()).expect("every class present");
        let spec = PartitionSpec::new(n, vec![k_pc; classes]).expect("valid");
        let problem = CdtProblem::new(spec.clone(), &source, &xt, lambda, Exec::Sequential).expect("consistent");
        let p = PsPoint::random(spec, seed.wrapping_add(11));
        worst =
            worst.max(projected_gap(&problem, &p, |y| oracle::cdt_loss_literal(y, k_pc, &xs, &labels, &xt, lambda)));
    }
    CheckResult::at_most(
        "cdt_gradient_vs_fd",
        worst,
        1e-5,
        "21 instances, lambda in {0, 0.5, 2}, relative, tangent-projected",
    )
}

fn loss_invariance(config: &VerifyConfig) -> CheckResult {
    let mut worst = 0.0_f64;
    for t in 0..20u64 {
        let seed = config.seed.wrapping_add(t);
        let mut g = rng(seed);
        let n = 8;

        let data: Vec<Dataset> =
            (0..2).map(|i| Dataset::new(format!("d{i}"), gaussian_matrix(12, n, &mut g)).expect("finite")).collect();
        let spec = PartitionSpec::new(n, vec![2, 2, 1]).expect("valid");
        let p = PsPoint::random(spec.clone(), seed);
        let rotated = block_rotate(&p, &random_block_rotation(&spec, &mut g)).expect("valid rotation");
        let names = vec!["d0".to_string(), "d1".to_string()];
        let before = mdpca_loss(&MdpcaModel::new(p, names.clone()).expect("layout"), &data).expect("loss");
        let after = mdpca_loss(&MdpcaModel::new(rotated, names).expect("layout"), &data).expect("loss");
        worst = worst.max((before - after).abs());

        let labels: Vec<usize> = (0..12).map(|i| i % 2).collect();
        let source = LabeledDataset::from_indices(gaussian_matrix(12, n, &mut g), labels).expect("classes");
        let target = gaussian_matrix(10, n, &mut g);
        let spec = PartitionSpec::new(n, vec![2, 2]).expect("valid");
        let p = PsPoint::random(spec.clone(), seed.wrapping_add(50));
        let rotated = block_rotate(&p, &random_block_rotation(&spec, &mut g)).expect("valid rotation");
        let classes = source.classes().to_vec();
        let model = |q| CdtModel::new(q, classes.clone(), 2.0).expect("valid model");
        let before = crate::cdt::cdt_loss(&model(p), &source, &target).expect("loss");
        let after = crate::cdt::cdt_loss(&model(rotated), &source, &target).expect("loss");
        worst = worst.max((before - after).abs());
    }
    CheckResult::at_most("loss_block_rotation_invariance", worst, 1e-10, "20 MD-PCA and 20 CDT models")
}

fn pca_equivalence(config: &VerifyConfig) -> CheckResult {
    let mut worst = 0.0_f64;
    for t in 0..5u64 {
        let seed = config.seed.wrapping_add(t);
        let x = pca_instance(10, 3, 200, seed.wrapping_add(100));
        let data = vec![Dataset::new("x", x.clone()).expect("finite")];
        let spec = PartitionSpec::new(10, vec![3]).expect("valid");
        let options = FitOptions { restarts: 1, exec: Exec::Sequential };
        match fit_mdpca_spec(&data, spec, &OptimizerConfig::default(), seed, &options) {
            Ok((model, _)) => {
                let angle = max_principal_angle(&model.shared_basis(), &oracle::eigen_pca(&x, 3)).expect("orthonormal");
                worst = worst.max(angle);
            }
            Err(e) => return CheckResult::failed("pca_equivalence", 1e-6, e),
        }
    }
    CheckResult::at_most("pca_equivalence", worst, 1e-6, "5 seeds, max principal angle vs eigendecomposition")
}

fn planted_mdpca(config: &VerifyConfig) -> CheckResult {
    let mut hits = 0;
    let mut worst = 0.0_f64;
    for t in 0..5u64 {
        let seed = config.seed.wrapping_add(t);
        let c = planted_collection(&PlantedCollectionConfig::default(), seed.wrapping_add(200));
        let Ok((model, _)) = fit_mdpca(&c.datasets, 1, 1, &OptimizerConfig::default(), seed) else {
            continue;
        };
        let mut angle = max_principal_angle(&model.shared_basis(), &c.shared).expect("orthonormal");
        for (i, u) in c.unique.iter().enumerate() {
            let own = model.per_dataset_basis(i).expect("per-dataset layout");
            angle = angle.max(max_principal_angle(&own, u).expect("orthonormal"));
        }
        worst = worst.max(angle);
        hits += usize::from(angle < 0.1);
    }
    CheckResult {
        name: "planted_mdpca_recovery",
        passed: hits >= 4,
        value: worst,
        threshold: 0.1,
        detail: format!("{hits}/5 seeds below threshold"),
    }
}

/// Class-partition recovery and projected-vs-raw accuracy on one planted
/// transfer instance: (max angle, projected NB accuracy, raw NB accuracy).
pub fn planted_cdt_trial(seed: u64, config: &OptimizerConfig) -> Result<(f64, f64, f64)> {
    let t = planted_transfer(&PlantedTransferConfig::default(), seed.wrapping_add(300));
    let (model, _) = fit_cdt(&t.source, &t.target, 2, crate::cdt::DEFAULT_LAMBDA, config, seed)?;
    let mut angle = 0.0_f64;
    for (c, basis) in t.class_bases.iter().enumerate() {
        angle = angle.max(max_principal_angle(&model.class_basis(c), basis)?);
    }
    let labels = Some(t.target_labels.as_slice());
    let projected = classify(&model, Method::GaussianNb, &t.source, &t.target, labels)?.accuracy;
    let raw = classify_raw(Method::GaussianNb, &t.source, &t.target, labels)?.accuracy;
    Ok((angle, projected.unwrap_or(0.0), raw.unwrap_or(0.0)))
}

fn planted_cdt(config: &VerifyConfig) -> CheckResult {
    let mut hits = 0;
    let mut worst = 0.0_f64;
    for t in 0..5u64 {
        let Ok((angle, projected, raw)) = planted_cdt_trial(config.seed.wrapping_add(t), &OptimizerConfig::default())
        else {
            continue;
        };
        worst = worst.max(angle);
        hits += usize::from(angle < 0.15 && projected > raw);
    }
    CheckResult {
        name: "planted_cdt_recovery",
        passed: hits >= 4,
        value: worst,
        threshold: 0.15,
        detail: format!("{hits}/5 seeds recover classes and beat raw-feature NB"),
    }
}

fn fit_termination(config: &VerifyConfig) -> CheckResult {
    let c = planted_collection(&PlantedCollectionConfig::default(), config.seed.wrapping_add(200));
    match fit_mdpca(&c.datasets, 1, 1, &OptimizerConfig::default(), config.seed) {
        Ok((_, report)) => {
            let ok = report.termination == Termination::Converged && report.is_monotone();
            CheckResult {
                name: "fit_monotone_and_converged",
                passed: ok,
                value: report.iterations as f64,
                threshold: OptimizerConfig::default().max_iters as f64,
                detail: format!("{} after {} iterations", report.termination, report.iterations),
            }
        }
        Err(e) => CheckResult::failed("fit_monotone_and_converged", 0.0, e),
    }
}
