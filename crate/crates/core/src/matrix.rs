//! Dense real-matrix primitives shared by every other module.
//!
//! Matrices are plain `nalgebra::DMatrix<f64>`. Entry points that accept
//! external data validate finiteness with [`ensure_finite`].

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;

/// Default relative tolerance for detecting rank deficiency in [`qr_positive`].
pub const DEFAULT_RANK_TOL: f64 = 1e-12;

/// Orthonormality precondition used by [`principal_angles`].
pub const PRINCIPAL_ANGLE_ORTHO_TOL: f64 = 1e-8;

/// Rejects empty matrices and matrices with NaN or infinite entries.
pub fn ensure_finite(m: &Mat) -> Result<()> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::Empty { rows: m.nrows(), cols: m.ncols() });
    }
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            if !m[(r, c)].is_finite() {
                return Err(Error::NonFinite { row: r, col: c });
            }
        }
    }
    Ok(())
}

/// Builds a matrix from row slices, validating shape and finiteness.
pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Mat> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.as_ref().len());
    for (i, r) in rows.iter().enumerate() {
        if r.as_ref().len() != ncols {
            return Err(Error::ShapeMismatch {
                context: "row length",
                expected_rows: 1,
                expected_cols: ncols,
                rows: i,
                cols: r.as_ref().len(),
            });
        }
    }
    let m = Mat::from_fn(nrows, ncols, |i, j| rows[i].as_ref()[j]);
    ensure_finite(&m)?;
    Ok(m)
}

pub(crate) fn expect_shape(m: &Mat, rows: usize, cols: usize, context: &'static str) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(Error::ShapeMismatch {
            context,
            expected_rows: rows,
            expected_cols: cols,
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(())
}

/// Thin QR factorization with a strictly positive R diagonal.
///
/// For `m` of shape n×k (n ≥ k) returns `(Q, R)` with Q n×k orthonormal and
/// R k×k upper triangular. Fails with [`Error::RankDeficient`] when a
/// diagonal entry of R falls below `DEFAULT_RANK_TOL` times the largest
/// column norm of `m`.
pub fn qr_positive(m: &Mat) -> Result<(Mat, Mat)> {
    qr_positive_with_tol(m, DEFAULT_RANK_TOL)
}

pub fn qr_positive_with_tol(m: &Mat, rel_tol: f64) -> Result<(Mat, Mat)> {
    let (n, k) = m.shape();
    if n < k {
        return Err(Error::ShapeMismatch {
            context: "qr_positive needs rows >= cols",
            expected_rows: k,
            expected_cols: k,
            rows: n,
            cols: k,
        });
    }
    ensure_finite(m)?;
    let scale = (0..k).map(|j| m.column(j).norm()).fold(0.0_f64, f64::max);
    let tol = rel_tol * scale;

    let qr = m.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for i in 0..k {
        let d = r[(i, i)];
        if d.abs() <= tol || scale == 0.0 {
            return Err(Error::RankDeficient { col: i, value: d.abs(), tol });
        }
        if d < 0.0 {
            q.column_mut(i).neg_mut();
            r.row_mut(i).neg_mut();
        }
    }
    Ok((q, r))
}

/// Returns ½(m − mᵀ).
pub fn skew(m: &Mat) -> Result<Mat> {
    if !m.is_square() {
        return Err(Error::NonSquare { rows: m.nrows(), cols: m.ncols() });
    }
    let n = m.nrows();
    Ok(Mat::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] - m[(j, i)])))
}

pub fn frobenius_norm(m: &Mat) -> f64 {
    m.norm()
}

/// ‖mᵀm − I‖_F.
pub fn orthonormality_defect(m: &Mat) -> f64 {
    let k = m.ncols();
    (m.transpose() * m - Mat::identity(k, k)).norm()
}

/// Singular value decomposition with singular values sorted descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Mat,
    pub singular_values: DVector<f64>,
    pub v_t: Mat,
}

impl Svd {
    pub fn reconstruct(&self) -> Mat {
        &self.u * Mat::from_diagonal(&self.singular_values) * &self.v_t
    }
}

/// Thin SVD: for an r×c input, `u` is r×p, `v_t` is p×c with p = min(r, c).
pub fn svd(m: &Mat) -> Svd {
    let decomp = m.clone().svd(true, true);
    let u = decomp.u.expect("u requested");
    let v_t = decomp.v_t.expect("v_t requested");
    let s = decomp.singular_values;

    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));

    Svd {
        u: Mat::from_fn(u.nrows(), order.len(), |i, j| u[(i, order[j])]),
        singular_values: DVector::from_iterator(order.len(), order.iter().map(|&i| s[i])),
        v_t: Mat::from_fn(order.len(), v_t.ncols(), |i, j| v_t[(order[i], j)]),
    }
}

/// Principal angles (radians, ascending) between the column spans of two
/// orthonormal-column matrices.
pub fn principal_angles(a: &Mat, b: &Mat) -> Result<Vec<f64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::ShapeMismatch {
            context: "principal_angles ambient dimension",
            expected_rows: a.nrows(),
            expected_cols: b.ncols(),
            rows: b.nrows(),
            cols: b.ncols(),
        });
    }
    for m in [a, b] {
        let defect = orthonormality_defect(m);
        if defect.is_nan() || defect > PRINCIPAL_ANGLE_ORTHO_TOL {
            return Err(Error::NotOrthonormal { defect });
        }
    }
    let cross = a.transpose() * b;
    let s = cross.singular_values();
    let mut angles: Vec<f64> = s.iter().map(|&c| c.clamp(0.0, 1.0).acos()).collect();
    angles.sort_by(f64::total_cmp);
    Ok(angles)
}

/// Largest principal angle, the usual scalar summary of subspace mismatch.
pub fn max_principal_angle(a: &Mat, b: &Mat) -> Result<f64> {
    Ok(principal_angles(a, b)?.last().copied().unwrap_or(0.0))
}

/// Deterministic RNG used across the crate.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix<R: rand::Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Mat {
    // Column-major fill keeps the draw order independent of nalgebra internals.
    let mut m = Mat::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = StandardNormal.sample(rng);
        }
    }
    m
}

/// Haar-distributed (up to the sign convention) orthogonal matrix: the
/// positive-diagonal Q factor of an n×n standard Gaussian matrix.
pub fn random_orthogonal(n: usize, seed: u64) -> Mat {
    random_orthogonal_from(n, &mut rng(seed))
}

pub fn random_orthogonal_from<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> Mat {
    assert!(n >= 1, "random_orthogonal needs n >= 1");
    loop {
        let g = gaussian_matrix(n, n, rng);
        // A singular Gaussian draw has probability zero; redraw if it happens.
        if let Ok((q, _)) = qr_positive(&g) {
            return q;
        }
    }
}

/// n×k matrix with orthonormal columns drawn like [`random_orthogonal`].
pub fn random_orthonormal_columns<R: rand::Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Mat {
    random_orthogonal_from(n, rng).columns(0, k).into_owned()
}
