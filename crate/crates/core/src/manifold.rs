//! The partitioned subspace (PS) manifold.
//!
//! A point is an equivalence class of n×n orthogonal matrices: two matrices
//! are identified when they differ by independent rotations inside each of
//! the column blocks `k₁, …, k_m` and inside the trailing `n − k` block. Each
//! point therefore describes an ordered tuple of mutually orthogonal
//! subspaces of the given sizes. With a single block this is the
//! Grassmannian; with all blocks of size one it is the Stiefel manifold.
//!
//! Points keep the full orthogonal matrix because the tangent projection
//! reads the trailing block too. The n×k representative is derived on demand.

use std::ops::Range;

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::{self, ensure_finite, orthonormality_defect, qr_positive, Mat};

/// Orthonormality defect accepted as-is by [`PsPoint::new`].
pub const ORTHO_TOL: f64 = 1e-10;
/// Defects up to this value are repaired by re-orthonormalization; above it
/// construction fails.
pub const ORTHO_REPAIR_TOL: f64 = 1e-6;
/// Tolerance for the tangent-space structure checks.
pub const TANGENT_TOL: f64 = 1e-10;

/// Ambient dimension plus ordered partition sizes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PartitionSpec {
    n: usize,
    sizes: Vec<usize>,
}

impl PartitionSpec {
    pub fn new(n: usize, sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::InvalidSpec("at least one partition is required".into()));
        }
        if let Some(i) = sizes.iter().position(|&k| k == 0) {
            return Err(Error::InvalidSpec(format!("partition {i} has size 0")));
        }
        let k: usize = sizes.iter().sum();
        if k > n {
            return Err(Error::InvalidSpec(format!("partition sizes sum to {k}, exceeding ambient dimension {n}")));
        }
        Ok(Self { n, sizes })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Number of partitions `m` (the trailing complement block is not counted).
    pub fn partition_count(&self) -> usize {
        self.sizes.len()
    }

    /// k = Σ kᵢ.
    pub fn total_k(&self) -> usize {
        self.sizes.iter().sum()
    }

    /// n − k.
    pub fn remainder(&self) -> usize {
        self.n - self.total_k()
    }

    /// Column range of partition `i`.
    pub fn range(&self, i: usize) -> Range<usize> {
        let start: usize = self.sizes[..i].iter().sum();
        start..start + self.sizes[i]
    }

    /// Column range of the orthogonal complement block (possibly empty).
    pub fn perp_range(&self) -> Range<usize> {
        self.total_k()..self.n
    }

    /// All m + 1 diagonal block ranges, complement last.
    pub fn block_ranges(&self) -> Vec<Range<usize>> {
        let mut out: Vec<_> = (0..self.sizes.len()).map(|i| self.range(i)).collect();
        out.push(self.perp_range());
        out
    }

    /// Dimension of the manifold: (n² − Σ bᵢ²) / 2 over all m + 1 blocks.
    pub fn dimension(&self) -> usize {
        let diag: usize = self.block_ranges().iter().map(|r| r.len() * r.len()).sum();
        (self.n * self.n - diag) / 2
    }
}

impl std::fmt::Display for PartitionSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let sizes: Vec<String> = self.sizes.iter().map(ToString::to_string).collect();
        write!(f, "PS(n={}; [{}])", self.n, sizes.join(","))
    }
}

/// One orthogonal representative of a PS equivalence class.
#[derive(Debug, Clone, PartialEq)]
pub struct PsPoint {
    spec: PartitionSpec,
    q: Mat,
}

impl PsPoint {
    /// Validates `q` as an n×n orthogonal matrix. Defects in
    /// (`ORTHO_TOL`, `ORTHO_REPAIR_TOL`] are repaired via QR.
    pub fn new(spec: PartitionSpec, q: Mat) -> Result<Self> {
        matrix::expect_shape(&q, spec.n, spec.n, "PsPoint matrix")?;
        ensure_finite(&q)?;
        let defect = orthonormality_defect(&q);
        if defect <= ORTHO_TOL {
            Ok(Self { spec, q })
        } else if defect <= ORTHO_REPAIR_TOL {
            let (q, _) = qr_positive(&q)?;
            Ok(Self { spec, q })
        } else {
            Err(Error::NotOrthonormal { defect })
        }
    }

    /// Point whose representative is the first k columns of the identity.
    pub fn identity(spec: PartitionSpec) -> Self {
        let n = spec.n;
        Self { spec, q: Mat::identity(n, n) }
    }

    pub fn random(spec: PartitionSpec, seed: u64) -> Self {
        let q = matrix::random_orthogonal(spec.n, seed);
        Self { spec, q }
    }

    pub fn spec(&self) -> &PartitionSpec {
        &self.spec
    }

    pub fn q(&self) -> &Mat {
        &self.q
    }

    pub fn into_q(self) -> Mat {
        self.q
    }

    /// First k columns of Q.
    pub fn representative(&self) -> Mat {
        self.q.columns(0, self.spec.total_k()).into_owned()
    }

    /// Columns spanning partition `i`.
    pub fn partition_cols(&self, i: usize) -> Mat {
        let r = self.spec.range(i);
        self.q.columns(r.start, r.len()).into_owned()
    }

    /// Columns of the orthogonal complement block.
    pub fn perp_cols(&self) -> Mat {
        let r = self.spec.perp_range();
        self.q.columns(r.start, r.len()).into_owned()
    }

    pub fn orthonormality_defect(&self) -> f64 {
        orthonormality_defect(&self.q)
    }
}

/// A direction Δ in the tangent space at a point: QᵀΔ is skew-symmetric
/// and its m + 1 diagonal blocks vanish.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    spec: PartitionSpec,
    delta: Mat,
}

impl TangentVector {
    /// Wraps `delta` after checking the tangent structure at `p`.
    pub fn new(p: &PsPoint, delta: Mat) -> Result<Self> {
        matrix::expect_shape(&delta, p.spec.n, p.spec.n, "tangent vector")?;
        ensure_finite(&delta)?;
        let defect = tangent_defect(p, &delta);
        if defect > TANGENT_TOL * delta.norm().max(1.0) {
            return Err(Error::InvalidConfig(format!(
                "matrix is not tangent at the point (structure defect {defect:e})"
            )));
        }
        Ok(Self { spec: p.spec.clone(), delta })
    }

    pub fn zero(spec: &PartitionSpec) -> Self {
        Self { spec: spec.clone(), delta: Mat::zeros(spec.n, spec.n) }
    }

    pub fn spec(&self) -> &PartitionSpec {
        &self.spec
    }

    pub fn delta(&self) -> &Mat {
        &self.delta
    }

    pub fn norm(&self) -> f64 {
        self.delta.norm()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { spec: self.spec.clone(), delta: &self.delta * s }
    }

    pub fn neg(&self) -> Self {
        self.scaled(-1.0)
    }
}

/// Largest violation of the tangent structure: the Frobenius norm of the
/// symmetric part of QᵀΔ plus the norms of its diagonal blocks.
pub fn tangent_defect(p: &PsPoint, delta: &Mat) -> f64 {
    let a = p.q.transpose() * delta;
    let sym = (&a + a.transpose()).norm() * 0.5;
    let diag: f64 = p
        .spec
        .block_ranges()
        .into_iter()
        .map(|r| a.view((r.start, r.start), (r.len(), r.len())).norm_squared())
        .sum::<f64>()
        .sqrt();
    sym + diag
}

/// Projects an ambient n×n direction onto the tangent space at `p`.
///
/// Column block i of the result is
/// ½[(Zᵢ − Q Zᵀ Qᵢ) + (Qᵢ Zᵢᵀ Qᵢ − Qᵢ Qᵢᵀ Zᵢ)], for every partition and the
/// complement block.
pub fn project_tangent(p: &PsPoint, z: &Mat) -> Result<TangentVector> {
    let n = p.spec.n;
    matrix::expect_shape(z, n, n, "project_tangent input")?;
    let q = &p.q;

    // Q Zᵀ Q, whose column block i is Q Zᵀ Qᵢ.
    let qztq = q * (z.transpose() * q);
    let mut out = z - qztq;
    for r in p.spec.block_ranges() {
        if r.is_empty() {
            continue;
        }
        let qi = q.columns(r.start, r.len());
        let zi = z.columns(r.start, r.len());
        let correction = qi * (zi.transpose() * qi) - qi * (qi.transpose() * zi);
        let mut block = out.columns_mut(r.start, r.len());
        block += correction;
    }
    out *= 0.5;
    Ok(TangentVector { spec: p.spec.clone(), delta: out })
}

/// Projects a gradient given with respect to the representative (n×k) by
/// zero-padding the complement columns.
pub fn lift_euclidean_gradient(p: &PsPoint, g: &Mat) -> Result<TangentVector> {
    let (n, k) = (p.spec.n, p.spec.total_k());
    matrix::expect_shape(g, n, k, "euclidean gradient")?;
    let mut z = Mat::zeros(n, n);
    z.columns_mut(0, k).copy_from(g);
    project_tangent(p, &z)
}

fn check_tangent_at(p: &PsPoint, d: &TangentVector) -> Result<()> {
    if p.spec != d.spec {
        return Err(Error::SpecMismatch);
    }
    Ok(())
}

/// Q-factor retraction in the descent convention: qr(Q − αΔ).
pub fn retract_qr(p: &PsPoint, d: &TangentVector, alpha: f64) -> Result<PsPoint> {
    check_tangent_at(p, d)?;
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::InvalidConfig(format!("step size must be >= 0, got {alpha}")));
    }
    let moved = &p.q - &d.delta * alpha;
    let (q, _) = qr_positive(&moved)?;
    PsPoint::new(p.spec.clone(), q)
}

/// Exponential map Q exp(α QᵀΔ).
///
/// Note the sign: this follows the ascent form, so it agrees to first order
/// with `retract_qr(p, &d.neg(), α)`. Intended for small n as a reference
/// for the retraction.
pub fn exp_map(p: &PsPoint, d: &TangentVector, alpha: f64) -> Result<PsPoint> {
    check_tangent_at(p, d)?;
    let a = (p.q.transpose() * &d.delta) * alpha;
    // QᵀΔ is skew up to round-off; use the exact skew part.
    let a = matrix::skew(&a)?;
    let q = &p.q * expm(&a);
    PsPoint::new(p.spec.clone(), q)
}

/// Matrix exponential by scaling and squaring with a Taylor core.
pub fn expm(a: &Mat) -> Mat {
    let n = a.nrows();
    let norm = a.norm();
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a / 2f64.powi(squarings);

    let mut result = Mat::identity(n, n);
    let mut term = Mat::identity(n, n);
    for j in 1..=30 {
        term = &term * &scaled / j as f64;
        result += &term;
        if term.norm() <= f64::EPSILON * 1e-3 {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// Right-multiplies Q by the block-diagonal assembly of `rotations`
/// (one orthogonal matrix per partition plus one for the complement).
/// The result represents the same manifold point.
pub fn block_rotate(p: &PsPoint, rotations: &[Mat]) -> Result<PsPoint> {
    let blocks = p.spec.block_ranges();
    if rotations.len() != blocks.len() {
        return Err(Error::InvalidConfig(format!(
            "expected {} block rotations, got {}",
            blocks.len(),
            rotations.len()
        )));
    }
    let mut q = p.q.clone();
    for (r, rot) in blocks.iter().zip(rotations) {
        matrix::expect_shape(rot, r.len(), r.len(), "block rotation")?;
        if r.is_empty() {
            continue;
        }
        let defect = orthonormality_defect(rot);
        if defect > ORTHO_TOL {
            return Err(Error::NotOrthonormal { defect });
        }
        let rotated = p.q.columns(r.start, r.len()) * rot;
        q.columns_mut(r.start, r.len()).copy_from(&rotated);
    }
    PsPoint::new(p.spec.clone(), q)
}

/// Haar-random element of the equivalence set, one orthogonal block per
/// partition plus the complement block (reflections included).
pub fn random_block_rotation<R: Rng + ?Sized>(spec: &PartitionSpec, rng: &mut R) -> Vec<Mat> {
    spec.block_ranges()
        .into_iter()
        .map(|r| {
            if r.is_empty() {
                return Mat::zeros(0, 0);
            }
            let mut o = matrix::random_orthogonal_from(r.len(), rng);
            if rng.random_bool(0.5) {
                o.column_mut(0).neg_mut();
            }
            o
        })
        .collect()
}

/// Max over partitions of ‖PᵢPᵢᵀ − RᵢRᵢᵀ‖_F. Zero exactly when both points
/// lie in the same equivalence class.
pub fn subspace_distance(p: &PsPoint, r: &PsPoint) -> Result<f64> {
    if p.spec != r.spec {
        return Err(Error::SpecMismatch);
    }
    let mut worst = 0.0_f64;
    for i in 0..p.spec.partition_count() {
        let a = p.partition_cols(i);
        let b = r.partition_cols(i);
        let d = (&a * a.transpose() - &b * b.transpose()).norm();
        worst = worst.max(d);
    }
    Ok(worst)
}
