//! Multiple-dataset PCA.
//!
//! Given D datasets, learn D per-dataset partitions of size `k_pd` and one
//! shared partition of size `k_sh` (last). Dataset i is reconstructed
//! through Sᵢ = [Qᵢ | Q_sh] and the loss is
//!
//! ```text
//! f(Q) = Σᵢ ‖Xᵢ − Xᵢ Sᵢ Sᵢᵀ‖²_F / |Xᵢ|
//! ```
//!
//! where |Xᵢ| is the number of samples. The loss only touches the data
//! through the second moments Cᵢ = XᵢᵀXᵢ / |Xᵢ|, which [`MdpcaProblem`]
//! caches once per fit.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::manifold::{PartitionSpec, PsPoint};
use crate::matrix::{svd, Mat};
use crate::optim::{best_report, minimize_each, LossProblem, OptimizeReport, OptimizerConfig};

/// Spec with `d` partitions of size `k_pd` followed by a shared one of size `k_sh`.
pub fn mdpca_spec(n: usize, d: usize, k_pd: usize, k_sh: usize) -> Result<PartitionSpec> {
    if d == 0 {
        return Err(Error::InvalidSpec("at least one dataset is required".into()));
    }
    if k_pd == 0 || k_sh == 0 {
        return Err(Error::InvalidSpec(format!("k_pd and k_sh must both be >= 1 (got k_pd={k_pd}, k_sh={k_sh})")));
    }
    let mut sizes = vec![k_pd; d];
    sizes.push(k_sh);
    PartitionSpec::new(n, sizes)
}

/// A fitted (or candidate) MD-PCA point together with its dataset order.
///
/// The spec has one partition per dataset followed by the shared one. A
/// spec with a single partition is also accepted: every dataset then
/// reconstructs through the shared partition alone, which for one dataset
/// is plain PCA on the Grassmannian.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpcaModel {
    point: PsPoint,
    dataset_names: Vec<String>,
}

impl MdpcaModel {
    pub fn new(point: PsPoint, dataset_names: Vec<String>) -> Result<Self> {
        check_layout(point.spec(), dataset_names.len())?;
        Ok(Self { point, dataset_names })
    }

    /// Whether the spec carries per-dataset partitions.
    pub fn has_per_dataset(&self) -> bool {
        self.point.spec().partition_count() > 1
    }

    pub fn point(&self) -> &PsPoint {
        &self.point
    }

    pub fn dataset_names(&self) -> &[String] {
        &self.dataset_names
    }

    pub fn dataset_count(&self) -> usize {
        self.dataset_names.len()
    }

    pub fn shared_index(&self) -> usize {
        self.point.spec().partition_count() - 1
    }

    /// Basis of dataset `i`'s own partition.
    pub fn per_dataset_basis(&self, i: usize) -> Option<Mat> {
        self.has_per_dataset().then(|| self.point.partition_cols(i))
    }

    pub fn shared_basis(&self) -> Mat {
        self.point.partition_cols(self.shared_index())
    }

    /// Sᵢ = [Qᵢ | Q_sh].
    pub fn combined_basis(&self, i: usize) -> Mat {
        combined(&self.point.representative(), self.point.spec(), i)
    }

    fn check_data(&self, data: &[Dataset]) -> Result<()> {
        check_data(self.point.spec(), data)
    }
}

fn check_layout(spec: &PartitionSpec, d: usize) -> Result<()> {
    let m = spec.partition_count();
    if d == 0 || (m != 1 && m != d + 1) {
        return Err(Error::DatasetCountMismatch { expected: m.saturating_sub(1).max(1), found: d });
    }
    Ok(())
}

fn check_data(spec: &PartitionSpec, data: &[Dataset]) -> Result<()> {
    check_layout(spec, data.len())?;
    for ds in data {
        if ds.features() != spec.n() {
            return Err(Error::ShapeMismatch {
                context: "dataset feature dimension",
                expected_rows: ds.samples(),
                expected_cols: spec.n(),
                rows: ds.samples(),
                cols: ds.features(),
            });
        }
    }
    Ok(())
}

fn combined(y: &Mat, spec: &PartitionSpec, i: usize) -> Mat {
    let m = spec.partition_count();
    let shared = spec.range(m - 1);
    if m == 1 {
        return y.columns(shared.start, shared.len()).into_owned();
    }
    let own = spec.range(i);
    let mut s = Mat::zeros(y.nrows(), own.len() + shared.len());
    s.columns_mut(0, own.len()).copy_from(&y.columns(own.start, own.len()));
    s.columns_mut(own.len(), shared.len()).copy_from(&y.columns(shared.start, shared.len()));
    s
}

/// Σᵢ ‖Xᵢ − Xᵢ Sᵢ Sᵢᵀ‖²_F / |Xᵢ|, evaluated directly on the data.
pub fn mdpca_loss(model: &MdpcaModel, data: &[Dataset]) -> Result<f64> {
    model.check_data(data)?;
    Ok(data
        .iter()
        .enumerate()
        .map(|(i, ds)| {
            let s = model.combined_basis(i);
            let x = ds.x();
            (x - x * &s * s.transpose()).norm_squared() / ds.samples() as f64
        })
        .sum())
}

/// Analytic gradient with respect to the representative: −2 Cᵢ Qᵢ in the
/// columns of partition i and −2 (Σᵢ Cᵢ) Q_sh in the shared columns.
pub fn mdpca_grad(model: &MdpcaModel, data: &[Dataset]) -> Result<Mat> {
    let problem = MdpcaProblem::new(model.point.spec().clone(), data, Exec::Sequential)?;
    Ok(problem.euclidean_grad(&model.point.representative()))
}

/// MD-PCA objective with cached second moments.
#[derive(Debug, Clone)]
pub struct MdpcaProblem {
    spec: PartitionSpec,
    grams: Vec<Mat>,
    traces: Vec<f64>,
    pooled: Mat,
}

impl MdpcaProblem {
    pub fn new(spec: PartitionSpec, data: &[Dataset], exec: Exec) -> Result<Self> {
        check_data(&spec, data)?;
        let grams = exec.map(data, |ds| {
            let x = ds.x();
            x.transpose() * x / ds.samples() as f64
        });
        let traces = grams.iter().map(|c| c.trace()).collect();
        let n = spec.n();
        let pooled = grams.iter().fold(Mat::zeros(n, n), |acc, c| acc + c);
        Ok(Self { spec, grams, traces, pooled })
    }

    pub fn grams(&self) -> &[Mat] {
        &self.grams
    }
}

impl LossProblem for MdpcaProblem {
    fn spec(&self) -> &PartitionSpec {
        &self.spec
    }

    /// Uses ‖X(I − SSᵀ)‖² = tr C − 2 tr(SᵀCS) + tr(SᵀCS · SᵀS), which holds
    /// for any S, not only orthonormal ones.
    fn loss(&self, y: &Mat) -> f64 {
        self.grams
            .iter()
            .zip(&self.traces)
            .enumerate()
            .map(|(i, (c, tr))| {
                let s = combined(y, &self.spec, i);
                let scs = s.transpose() * c * &s;
                let sts = s.transpose() * &s;
                tr - 2.0 * scs.trace() + scs.component_mul(&sts).sum()
            })
            .sum()
    }

    fn euclidean_grad(&self, y: &Mat) -> Mat {
        let mut g = Mat::zeros(y.nrows(), y.ncols());
        let shared = self.spec.partition_count() - 1;
        if shared > 0 {
            for (i, c) in self.grams.iter().enumerate() {
                let r = self.spec.range(i);
                let block = c * y.columns(r.start, r.len()) * -2.0;
                g.columns_mut(r.start, r.len()).copy_from(&block);
            }
        }
        let r = self.spec.range(shared);
        let block = &self.pooled * y.columns(r.start, r.len()) * -2.0;
        g.columns_mut(r.start, r.len()).copy_from(&block);
        g
    }
}

/// Knobs beyond the optimizer configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Number of random starts; the lowest final loss wins.
    pub restarts: usize,
    pub exec: Exec,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { restarts: 1, exec: Exec::default() }
    }
}

/// Random starting points: restart r uses seed `seed + r`.
pub fn random_starts(spec: &PartitionSpec, seed: u64, restarts: usize) -> Vec<PsPoint> {
    (0..restarts.max(1) as u64).map(|r| PsPoint::random(spec.clone(), seed.wrapping_add(r))).collect()
}

pub fn fit_mdpca(
    data: &[Dataset],
    k_pd: usize,
    k_sh: usize,
    config: &OptimizerConfig,
    seed: u64,
) -> Result<(MdpcaModel, OptimizeReport)> {
    fit_mdpca_with(data, k_pd, k_sh, config, seed, &FitOptions::default())
}

pub fn fit_mdpca_with(
    data: &[Dataset],
    k_pd: usize,
    k_sh: usize,
    config: &OptimizerConfig,
    seed: u64,
    options: &FitOptions,
) -> Result<(MdpcaModel, OptimizeReport)> {
    let n = data.first().map(Dataset::features).ok_or(Error::DatasetCountMismatch { expected: 1, found: 0 })?;
    let spec = mdpca_spec(n, data.len(), k_pd, k_sh)?;
    fit_mdpca_spec(data, spec, config, seed, options)
}

/// Fits with an explicit spec, either D + 1 partitions or a single shared one.
pub fn fit_mdpca_spec(
    data: &[Dataset],
    spec: PartitionSpec,
    config: &OptimizerConfig,
    seed: u64,
    options: &FitOptions,
) -> Result<(MdpcaModel, OptimizeReport)> {
    config.validate()?;
    let problem = MdpcaProblem::new(spec.clone(), data, options.exec)?;
    let starts = random_starts(&spec, seed, options.restarts);
    let reports = minimize_each(&problem, &starts, config, options.exec)?;
    let report = best_report(reports).expect("at least one start");
    let names = data.iter().map(|d| d.name().to_string()).collect();
    let model = MdpcaModel::new(report.final_point.clone(), names)?;
    Ok((model, report))
}

/// Label used for the shared partition in variance tables.
pub const SHARED: &str = "shared";
/// Label used for the unexplained remainder in variance tables.
pub const RESIDUAL: &str = "residual";

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceRow {
    pub dataset: String,
    /// Owning dataset name, [`SHARED`], or [`RESIDUAL`].
    pub partition: String,
    pub fraction: f64,
}

/// Fraction ‖Xᵢ Qⱼ Qⱼᵀ‖²_F / ‖Xᵢ‖²_F for every dataset i and partition j,
/// followed by one residual row per dataset, ‖Xᵢ(I − QQᵀ)‖²_F / ‖Xᵢ‖²_F.
pub fn variance_explained(model: &MdpcaModel, data: &[Dataset]) -> Result<Vec<VarianceRow>> {
    model.check_data(data)?;
    let spec = model.point.spec();
    let y = model.point.representative();
    let mut rows = Vec::new();
    for ds in data {
        let x = ds.x();
        let total = x.norm_squared();
        if total == 0.0 {
            return Err(Error::ZeroDataset(ds.name().to_string()));
        }
        for j in 0..spec.partition_count() {
            let qj = model.point.partition_cols(j);
            let partition = if j == model.shared_index() { SHARED.to_string() } else { model.dataset_names[j].clone() };
            rows.push(VarianceRow {
                dataset: ds.name().to_string(),
                partition,
                fraction: (x * qj).norm_squared() / total,
            });
        }
        let residual = (x - x * &y * y.transpose()).norm_squared() / total;
        rows.push(VarianceRow { dataset: ds.name().to_string(), partition: RESIDUAL.to_string(), fraction: residual });
    }
    Ok(rows)
}

/// Top-k right singular vectors of `x`: the k-dimensional subspace that
/// best reconstructs a single dataset.
pub fn pca_baseline(x: &Mat, k: usize) -> Result<Mat> {
    let n = x.ncols();
    if k == 0 || k > n {
        return Err(Error::InvalidConfig(format!("pca needs 1 <= k <= {n}, got {k}")));
    }
    let padded;
    // Thin SVD of a short matrix yields only `rows` right singular vectors.
    let src = if x.nrows() < n {
        padded = {
            let mut p = Mat::zeros(n, n);
            p.rows_mut(0, x.nrows()).copy_from(x);
            p
        };
        &padded
    } else {
        x
    };
    Ok(svd(src).v_t.rows(0, k).transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{block_rotate, random_block_rotation};
    use crate::matrix::{gaussian_matrix, max_principal_angle, rng};

    fn datasets(n: usize, sizes: &[usize], seed: u64) -> Vec<Dataset> {
        let mut g = rng(seed);
        sizes
            .iter()
            .enumerate()
            .map(|(i, &s)| Dataset::new(format!("d{i}"), gaussian_matrix(s, n, &mut g)).unwrap())
            .collect()
    }

    fn model(n: usize, d: usize, k_pd: usize, k_sh: usize, seed: u64) -> MdpcaModel {
        let spec = mdpca_spec(n, d, k_pd, k_sh).unwrap();
        MdpcaModel::new(PsPoint::random(spec, seed), (0..d).map(|i| format!("d{i}")).collect()).unwrap()
    }

    #[test]
    fn spec_preconditions() {
        assert!(mdpca_spec(6, 1, 0, 3).is_err());
        assert!(mdpca_spec(6, 2, 1, 0).is_err());
        assert!(mdpca_spec(6, 3, 2, 1).is_err());
        assert_eq!(mdpca_spec(6, 2, 2, 1).unwrap().sizes(), &[2, 2, 1]);
    }

    #[test]
    fn zero_data_gives_zero_loss_and_gradient() {
        let m = model(5, 2, 1, 1, 1);
        let data: Vec<_> = (0..2).map(|i| Dataset::new(format!("d{i}"), Mat::zeros(4, 5)).unwrap()).collect();
        assert_eq!(mdpca_loss(&m, &data).unwrap(), 0.0);
        assert_eq!(mdpca_grad(&m, &data).unwrap().norm(), 0.0);
    }

    #[test]
    fn full_rank_single_dataset_reconstructs_exactly() {
        let m = model(4, 1, 1, 3, 2);
        let data = datasets(4, &[10], 3);
        assert!(mdpca_loss(&m, &data).unwrap() < 1e-12);
    }

    #[test]
    fn cached_loss_matches_direct_loss() {
        let m = model(7, 3, 1, 2, 4);
        let data = datasets(7, &[5, 9, 12], 5);
        let problem = MdpcaProblem::new(m.point().spec().clone(), &data, Exec::Sequential).unwrap();
        let direct = mdpca_loss(&m, &data).unwrap();
        let cached = problem.loss_at(m.point());
        assert!((direct - cached).abs() < 1e-10 * direct);
    }

    #[test]
    fn shape_and_count_errors() {
        let m = model(5, 2, 1, 1, 1);
        assert!(matches!(
            mdpca_loss(&m, &datasets(5, &[3], 1)),
            Err(Error::DatasetCountMismatch { expected: 2, found: 1 })
        ));
        assert!(matches!(mdpca_loss(&m, &datasets(4, &[3, 3], 1)), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn grassmannian_gradient_is_pca_gradient() {
        let spec = PartitionSpec::new(6, vec![2]).unwrap();
        let data = datasets(6, &[20], 7);
        // With D = 1 the only partition is the shared one.
        let p = PsPoint::random(spec.clone(), 3);
        let problem = MdpcaProblem::new(spec, &data, Exec::Sequential).unwrap();
        let y = p.representative();
        let x = data[0].x();
        let expected = -2.0 * x.transpose() * x * &y / 20.0;
        assert!((problem.euclidean_grad(&y) - expected).norm() < 1e-12);
    }

    #[test]
    fn loss_invariant_under_block_rotation() {
        let m = model(8, 2, 2, 1, 9);
        let data = datasets(8, &[15, 11], 2);
        let rot = random_block_rotation(m.point().spec(), &mut rng(4));
        let rotated = MdpcaModel::new(block_rotate(m.point(), &rot).unwrap(), m.dataset_names().to_vec()).unwrap();
        let a = mdpca_loss(&m, &data).unwrap();
        let b = mdpca_loss(&rotated, &data).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn variance_fractions_partition_the_energy() {
        let m = model(8, 2, 2, 1, 5);
        let data = datasets(8, &[15, 11], 6);
        let rows = variance_explained(&m, &data).unwrap();
        assert_eq!(rows.len(), 2 * 4);
        for ds in ["d0", "d1"] {
            let total: f64 = rows.iter().filter(|r| r.dataset == ds).map(|r| r.fraction).sum();
            assert!((total - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn variance_in_single_partition() {
        let m = model(6, 1, 1, 2, 3);
        let own = m.per_dataset_basis(0);
        let coeffs = gaussian_matrix(9, 1, &mut rng(1));
        let x = coeffs * own.unwrap().transpose();
        let rows = variance_explained(&m, &[Dataset::new("d0", x).unwrap()]).unwrap();
        assert!((rows[0].fraction - 1.0).abs() < 1e-12);
        assert!(rows[1].fraction.abs() < 1e-12);
        assert!(rows[2].fraction.abs() < 1e-12);
    }

    #[test]
    fn zero_dataset_is_rejected_by_variance_table() {
        let m = model(4, 1, 1, 1, 3);
        let data = vec![Dataset::new("z", Mat::zeros(3, 4)).unwrap()];
        assert!(matches!(variance_explained(&m, &data), Err(Error::ZeroDataset(_))));
    }

    #[test]
    fn pca_baseline_diagonal_case() {
        let mut x = gaussian_matrix(200, 4, &mut rng(3));
        for (j, s) in [0.5, 4.0, 1.0, 2.5].into_iter().enumerate() {
            x.column_mut(j).scale_mut(s);
        }
        let basis = pca_baseline(&x, 2).unwrap();
        let e = Mat::identity(4, 4);
        let expected = Mat::from_columns(&[e.column(1), e.column(3)]);
        assert!(max_principal_angle(&basis, &expected).unwrap() < 0.1);
        assert!(pca_baseline(&x, 5).is_err());
        // Fewer samples than features still yields k basis vectors.
        assert_eq!(pca_baseline(&x.rows(0, 2).into_owned(), 3).unwrap().shape(), (4, 3));
    }
}
