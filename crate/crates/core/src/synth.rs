//! Planted-model generators: synthetic data built from known subspaces,
//! used to check that fits recover what was put in.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::data::{Dataset, LabeledDataset};
use crate::matrix::{gaussian_matrix, random_orthogonal_from, rng, Mat};

/// Datasets sharing some directions and owning others.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedCollectionConfig {
    pub n: usize,
    pub datasets: usize,
    pub shared_dim: usize,
    pub unique_dim: usize,
    pub samples: usize,
    pub shared_std: f64,
    pub unique_std: f64,
    pub noise_std: f64,
    /// Coefficient scale of the j-th direction within a block is std·decayʲ;
    /// values below 1 keep the planted spectrum free of ties.
    pub decay: f64,
}

impl Default for PlantedCollectionConfig {
    /// The two-dataset instance: one shared and one unique direction each in R⁸.
    fn default() -> Self {
        Self {
            n: 8,
            datasets: 2,
            shared_dim: 1,
            unique_dim: 1,
            samples: 200,
            shared_std: 3.0,
            unique_std: 2.0,
            noise_std: 0.01,
            decay: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedCollection {
    pub datasets: Vec<Dataset>,
    /// n × shared_dim orthonormal basis.
    pub shared: Mat,
    /// One n × unique_dim basis per dataset, orthogonal to everything else.
    pub unique: Vec<Mat>,
    /// Per-dataset noise matrices, kept so residual energy can be computed.
    pub noise: Vec<Mat>,
}

/// Xᵢ = A Sᵀ + Bᵢ Uᵢᵀ + E with Gaussian coefficients A, Bᵢ and noise E.
pub fn planted_collection(cfg: &PlantedCollectionConfig, seed: u64) -> PlantedCollection {
    let needed = cfg.shared_dim + cfg.datasets * cfg.unique_dim;
    assert!(needed <= cfg.n, "planted directions exceed ambient dimension");
    let mut g = rng(seed);
    let basis = random_orthogonal_from(cfg.n, &mut g);
    let shared = basis.columns(0, cfg.shared_dim).into_owned();
    let unique: Vec<Mat> = (0..cfg.datasets)
        .map(|i| basis.columns(cfg.shared_dim + i * cfg.unique_dim, cfg.unique_dim).into_owned())
        .collect();

    let mut datasets = Vec::with_capacity(cfg.datasets);
    let mut noise = Vec::with_capacity(cfg.datasets);
    for (i, u) in unique.iter().enumerate() {
        let a =
            gaussian_matrix(cfg.samples, cfg.shared_dim, &mut g) * decaying(cfg.shared_dim, cfg.shared_std, cfg.decay);
        let b =
            gaussian_matrix(cfg.samples, cfg.unique_dim, &mut g) * decaying(cfg.unique_dim, cfg.unique_std, cfg.decay);
        let e = gaussian_matrix(cfg.samples, cfg.n, &mut g) * cfg.noise_std;
        let x = a * shared.transpose() + b * u.transpose() + &e;
        datasets.push(Dataset::new(format!("d{}", i + 1), x).expect("finite by construction"));
        noise.push(e);
    }
    PlantedCollection { datasets, shared, unique, noise }
}

fn decaying(dim: usize, std: f64, decay: f64) -> Mat {
    Mat::from_diagonal(&nalgebra::DVector::from_fn(dim, |j, _| std * decay.powi(j as i32)))
}

/// A covariance with a clear spectral gap after the top `k` directions.
pub fn pca_instance(n: usize, k: usize, samples: usize, seed: u64) -> Mat {
    let mut g = rng(seed);
    let basis = random_orthogonal_from(n, &mut g);
    let z = gaussian_matrix(samples, n, &mut g);
    let scales: Vec<f64> =
        (0..n).map(|j| if j < k { 4.0 - 0.5 * j as f64 } else { 0.5 / (1 + j - k) as f64 }).collect();
    z * Mat::from_diagonal(&nalgebra::DVector::from_vec(scales)) * basis.transpose()
}

/// Labeled source and shifted target domains whose classes live in
/// mutually orthogonal subspaces.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedTransferConfig {
    pub n: usize,
    pub classes: usize,
    pub class_dim: usize,
    pub source_samples: usize,
    pub target_samples: usize,
    /// Offset of each class mean along the first direction of its subspace.
    pub class_mean: f64,
    pub class_std: f64,
    /// Mean offset of the target domain along its nuisance direction.
    pub nuisance_shift: f64,
    pub nuisance_std: f64,
    pub noise_std: f64,
}

impl Default for PlantedTransferConfig {
    fn default() -> Self {
        Self {
            n: 10,
            classes: 2,
            class_dim: 2,
            source_samples: 400,
            target_samples: 100,
            class_mean: 3.0,
            class_std: 1.5,
            nuisance_shift: 1.0,
            nuisance_std: 3.0,
            noise_std: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedTransfer {
    pub source: LabeledDataset,
    pub target: Mat,
    pub target_labels: Vec<usize>,
    /// One n × class_dim basis per class.
    pub class_bases: Vec<Mat>,
    /// Target-only direction, orthogonal to every class subspace.
    pub nuisance: Mat,
}

pub fn planted_transfer(cfg: &PlantedTransferConfig, seed: u64) -> PlantedTransfer {
    let needed = cfg.classes * cfg.class_dim + 1;
    assert!(needed <= cfg.n, "planted directions exceed ambient dimension");
    let mut g = rng(seed);
    let basis = random_orthogonal_from(cfg.n, &mut g);
    let class_bases: Vec<Mat> =
        (0..cfg.classes).map(|c| basis.columns(c * cfg.class_dim, cfg.class_dim).into_owned()).collect();
    let nuisance = basis.columns(cfg.classes * cfg.class_dim, 1).into_owned();

    let draw = |samples: usize, shifted: bool, g: &mut rand_chacha::ChaCha8Rng| {
        let mut x = gaussian_matrix(samples, cfg.n, g) * cfg.noise_std;
        let labels: Vec<usize> = (0..samples).map(|i| i % cfg.classes).collect();
        let shift = Normal::new(cfg.nuisance_shift, cfg.nuisance_std).expect("valid std");
        for (i, &c) in labels.iter().enumerate() {
            let mut coeffs: Vec<f64> = (0..cfg.class_dim)
                .map(|_| cfg.class_std * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, g))
                .collect();
            coeffs[0] += cfg.class_mean;
            let mut row = x.row_mut(i);
            for (j, a) in coeffs.iter().enumerate() {
                row += class_bases[c].column(j).transpose() * *a;
            }
            if shifted {
                row += nuisance.column(0).transpose() * shift.sample(g);
            }
        }
        (x, labels)
    };
    let (xs, ys) = draw(cfg.source_samples, false, &mut g);
    let (xt, yt) = draw(cfg.target_samples, true, &mut g);
    let source = LabeledDataset::from_indices(xs, ys).expect("every class drawn");
    PlantedTransfer { source, target: xt, target_labels: yt, class_bases, nuisance }
}

/// Uniform random labels `0..classes`.
pub fn random_labels<R: Rng + ?Sized>(count: usize, classes: usize, rng: &mut R) -> Vec<usize> {
    (0..count).map(|_| rng.random_range(0..classes)).collect()
}
