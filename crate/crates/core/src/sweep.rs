//! Partition-size sweeps for MD-PCA.
//!
//! With the total number of components fixed, each grid value `k_pd` gets
//! k_sh = k_total − D·k_pd. Every grid point is an independent fit, so the
//! grid runs through [`Exec`] and results come back in grid order.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::mdpca::{fit_mdpca_with, FitOptions, MdpcaModel};
use crate::optim::{OptimizeReport, OptimizerConfig};

/// How a partition relates to the dataset whose variance is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PartitionKind {
    Own,
    /// All other datasets' partitions together.
    Other,
    Shared,
    Residual,
}

impl PartitionKind {
    pub const ALL: [PartitionKind; 4] =
        [PartitionKind::Own, PartitionKind::Other, PartitionKind::Shared, PartitionKind::Residual];

    pub fn name(self) -> &'static str {
        match self {
            PartitionKind::Own => "own",
            PartitionKind::Other => "other",
            PartitionKind::Shared => "shared",
            PartitionKind::Residual => "residual",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub k_pd: usize,
    pub dataset: String,
    pub kind: PartitionKind,
    pub fraction: f64,
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub k_pd: usize,
    pub k_sh: usize,
    pub model: MdpcaModel,
    pub report: OptimizeReport,
    /// Four rows per dataset, in [`PartitionKind::ALL`] order.
    pub rows: Vec<SweepRow>,
}

impl SweepPoint {
    /// Variance of `dataset` explained by its own reconstruction basis
    /// [Qᵢ | Q_sh]: the own plus shared fractions.
    pub fn total_explained(&self, dataset: &str) -> Option<f64> {
        let pick = |kind| self.rows.iter().find(|r| r.dataset == dataset && r.kind == kind).map(|r| r.fraction);
        Some(pick(PartitionKind::Own)? + pick(PartitionKind::Shared)?)
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub points: Vec<SweepPoint>,
    /// Grid values dropped because they leave no room for the shared partition.
    pub skipped: Vec<usize>,
}

impl SweepOutcome {
    pub fn rows(&self) -> impl Iterator<Item = &SweepRow> {
        self.points.iter().flat_map(|p| p.rows.iter())
    }
}

/// Splits a grid into runnable (k_pd, k_sh) pairs and skipped values.
pub fn plan(datasets: usize, k_total: usize, grid: &[usize]) -> (Vec<(usize, usize)>, Vec<usize>) {
    let mut runs = Vec::new();
    let mut skipped = Vec::new();
    for &k_pd in grid {
        match k_total.checked_sub(datasets * k_pd) {
            Some(k_sh) if k_pd >= 1 && k_sh >= 1 => runs.push((k_pd, k_sh)),
            _ => skipped.push(k_pd),
        }
    }
    (runs, skipped)
}

/// Own / other / shared / residual fractions for every dataset.
pub fn partition_fractions(model: &MdpcaModel, data: &[Dataset], k_pd: usize) -> Result<Vec<SweepRow>> {
    let y = model.point().representative();
    let shared = model.shared_basis();
    let mut rows = Vec::with_capacity(4 * data.len());
    for (i, ds) in data.iter().enumerate() {
        let x = ds.x();
        let total = x.norm_squared();
        if total == 0.0 {
            return Err(Error::ZeroDataset(ds.name().to_string()));
        }
        let own = model.per_dataset_basis(i).map_or(0.0, |b| (x * b).norm_squared() / total);
        let other: f64 = (0..model.dataset_count())
            .filter(|&j| j != i)
            .filter_map(|j| model.per_dataset_basis(j))
            .map(|b| (x * b).norm_squared() / total)
            .sum();
        let shared_frac = (x * &shared).norm_squared() / total;
        let residual = (x - x * &y * y.transpose()).norm_squared() / total;
        for (kind, fraction) in PartitionKind::ALL.into_iter().zip([own, other, shared_frac, residual]) {
            rows.push(SweepRow { k_pd, dataset: ds.name().to_string(), kind, fraction });
        }
    }
    Ok(rows)
}

/// One fit per runnable grid value, all from the same seed.
pub fn run_sweep(
    data: &[Dataset],
    k_total: usize,
    grid: &[usize],
    config: &OptimizerConfig,
    seed: u64,
    exec: Exec,
) -> Result<SweepOutcome> {
    config.validate()?;
    let (runs, skipped) = plan(data.len(), k_total, grid);
    // Grid points already fan out; each fit stays sequential inside.
    let inner = FitOptions { restarts: 1, exec: Exec::Sequential };
    let points = exec
        .map(&runs, |&(k_pd, k_sh)| -> Result<SweepPoint> {
            let (model, report) = fit_mdpca_with(data, k_pd, k_sh, config, seed, &inner)?;
            let rows = partition_fractions(&model, data, k_pd)?;
            Ok(SweepPoint { k_pd, k_sh, model, report, rows })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepOutcome { points, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{planted_collection, PlantedCollectionConfig};

    #[test]
    fn plan_skips_values_without_shared_room() {
        let (runs, skipped) = plan(3, 10, &[0, 1, 2, 3, 4]);
        assert_eq!(runs, vec![(1, 7), (2, 4), (3, 1)]);
        assert_eq!(skipped, vec![0, 4]);
    }

    #[test]
    fn fractions_sum_to_one() {
        let cfg = PlantedCollectionConfig { n: 10, datasets: 3, shared_dim: 2, unique_dim: 1, ..Default::default() };
        let c = planted_collection(&cfg, 2);
        let config = OptimizerConfig { max_iters: 50, ..Default::default() };
        let out = run_sweep(&c.datasets, 6, &[1, 2, 5], &config, 0, Exec::Sequential).unwrap();
        assert_eq!(out.skipped, vec![2, 5]);
        let point = &out.points[0];
        assert_eq!(point.rows.len(), 12);
        for ds in &c.datasets {
            let sum: f64 = point.rows.iter().filter(|r| r.dataset == ds.name()).map(|r| r.fraction).sum();
            assert!((sum - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let cfg = PlantedCollectionConfig { n: 10, datasets: 2, shared_dim: 2, unique_dim: 2, ..Default::default() };
        let c = planted_collection(&cfg, 5);
        let config = OptimizerConfig { max_iters: 40, ..Default::default() };
        let a = run_sweep(&c.datasets, 6, &[1, 2], &config, 3, Exec::Sequential).unwrap();
        let b = run_sweep(&c.datasets, 6, &[1, 2], &config, 3, Exec::Parallel).unwrap();
        let rows_a: Vec<_> = a.rows().cloned().collect();
        let rows_b: Vec<_> = b.rows().cloned().collect();
        assert_eq!(rows_a, rows_b);
    }
}
