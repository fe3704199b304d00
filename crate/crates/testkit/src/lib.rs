//! Straightforward reference implementations for the test suites.
//!
//! Nothing here depends on `psman-core`. Every routine takes plain
//! matrices and favors the most direct formulation over speed.

use nalgebra::{DMatrix, DVector};

pub type Mat = DMatrix<f64>;

/// Block index of every column for partitions `sizes` plus the complement.
fn block_labels(n: usize, sizes: &[usize]) -> Vec<usize> {
    let mut labels = Vec::with_capacity(n);
    for (b, &k) in sizes.iter().enumerate() {
        labels.extend(std::iter::repeat_n(b, k));
    }
    labels.resize(n, sizes.len());
    labels
}

/// Orthogonal projection of `z` onto the tangent space at the orthogonal
/// matrix `q`, by least squares over the spanning set Q(eᵢeⱼᵀ − eⱼeᵢᵀ),
/// i < j in different blocks. Solved through the normal equations.
pub fn tangent_projection(q: &Mat, sizes: &[usize], z: &Mat) -> Mat {
    let n = q.nrows();
    let labels = block_labels(n, sizes);
    let mut basis: Vec<Mat> = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if labels[i] != labels[j] {
                let mut e = Mat::zeros(n, n);
                e[(i, j)] = 1.0;
                e[(j, i)] = -1.0;
                basis.push(q * e);
            }
        }
    }
    let m = basis.len();
    if m == 0 {
        return Mat::zeros(n, n);
    }
    let gram = Mat::from_fn(m, m, |a, b| basis[a].dot(&basis[b]));
    let rhs = DVector::from_fn(m, |a, _| basis[a].dot(z));
    let coeffs = gram.cholesky().expect("spanning set is linearly independent").solve(&rhs);
    basis.iter().zip(coeffs.iter()).fold(Mat::zeros(n, n), |acc, (b, c)| acc + b * *c)
}

/// Classical Gram–Schmidt with one re-orthogonalization pass; R has a
/// positive diagonal.
pub fn gram_schmidt(m: &Mat) -> (Mat, Mat) {
    let (n, k) = m.shape();
    let mut q = Mat::zeros(n, k);
    let mut r = Mat::zeros(k, k);
    for j in 0..k {
        let mut v = m.column(j).into_owned();
        for _pass in 0..2 {
            for i in 0..j {
                let c = q.column(i).dot(&v);
                r[(i, j)] += c;
                v -= q.column(i) * c;
            }
        }
        let norm = v.norm();
        r[(j, j)] = norm;
        q.set_column(j, &(v / norm));
    }
    (q, r)
}

/// Top-k eigenvectors of xᵀx.
pub fn top_eigenvectors(x: &Mat, k: usize) -> Mat {
    let eig = (x.transpose() * x).symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    Mat::from_fn(x.ncols(), k, |i, j| eig.eigenvectors[(i, order[j])])
}

/// Largest principal angle between two orthonormal bases, from the
/// eigenvalues of (AᵀB)(AᵀB)ᵀ. Needs dim A ≤ dim B.
pub fn max_angle(a: &Mat, b: &Mat) -> f64 {
    let c = a.transpose() * b;
    let cos2 = (&c * c.transpose()).symmetric_eigen().eigenvalues;
    let smallest = cos2.iter().copied().fold(f64::INFINITY, f64::min);
    smallest.clamp(0.0, 1.0).sqrt().acos()
}

/// ‖aaᵀ − bbᵀ‖_F for two orthonormal bases.
pub fn projector_distance(a: &Mat, b: &Mat) -> f64 {
    (a * a.transpose() - b * b.transpose()).norm()
}

/// Column ranges of the partitions in a representative.
pub fn ranges(sizes: &[usize]) -> Vec<std::ops::Range<usize>> {
    let mut start = 0;
    sizes
        .iter()
        .map(|&k| {
            let r = start..start + k;
            start += k;
            r
        })
        .collect()
}

fn columns(y: &Mat, cols: &[usize]) -> Mat {
    Mat::from_fn(y.nrows(), cols.len(), |i, j| y[(i, cols[j])])
}

fn row_energy(x: &[f64], p: &Mat) -> f64 {
    // ‖x P Pᵀ‖² for a row vector x.
    let k = p.ncols();
    let coords: Vec<f64> = (0..k).map(|j| (0..x.len()).map(|i| x[i] * p[(i, j)]).sum()).collect();
    (0..x.len())
        .map(|i| {
            let v: f64 = (0..k).map(|j| coords[j] * p[(i, j)]).sum();
            v * v
        })
        .sum()
}

fn row_residual(x: &[f64], p: &Mat) -> f64 {
    let k = p.ncols();
    let coords: Vec<f64> = (0..k).map(|j| (0..x.len()).map(|i| x[i] * p[(i, j)]).sum()).collect();
    (0..x.len())
        .map(|i| {
            let v: f64 = x[i] - (0..k).map(|j| coords[j] * p[(i, j)]).sum::<f64>();
            v * v
        })
        .sum()
}

fn rows(x: &Mat) -> Vec<Vec<f64>> {
    (0..x.nrows()).map(|i| x.row(i).iter().copied().collect()).collect()
}

/// Multiple-dataset PCA loss, sample by sample. The last partition is the
/// shared one; a single partition means every dataset uses it alone.
pub fn mdpca_loss(y: &Mat, sizes: &[usize], data: &[Mat]) -> f64 {
    let r = ranges(sizes);
    let shared = r.last().expect("at least one partition").clone();
    data.iter()
        .enumerate()
        .map(|(i, x)| {
            let mut cols: Vec<usize> = if sizes.len() > 1 { r[i].clone().collect() } else { Vec::new() };
            cols.extend(shared.clone());
            let s = columns(y, &cols);
            rows(x).iter().map(|row| row_residual(row, &s)).sum::<f64>() / x.nrows() as f64
        })
        .sum()
}

/// Class-discriminative transfer loss, sample by sample.
pub fn cdt_loss(y: &Mat, sizes: &[usize], source: &Mat, labels: &[usize], target: &Mat, lambda: f64) -> f64 {
    let all: Vec<usize> = (0..y.ncols()).collect();
    let full = columns(y, &all);
    let recon: f64 = rows(source).iter().chain(rows(target).iter()).map(|row| row_residual(row, &full)).sum();
    let r = ranges(sizes);
    let mut disc = 0.0;
    for (row, &c) in rows(source).iter().zip(labels) {
        let own: Vec<usize> = r[c].clone().collect();
        let other: Vec<usize> = all.iter().copied().filter(|j| !r[c].contains(j)).collect();
        disc += row_energy(row, &columns(y, &own)) - row_energy(row, &columns(y, &other));
    }
    recon - lambda * disc
}

/// Central differences of `f` with respect to every entry of `y`.
pub fn central_difference(y: &Mat, h: f64, f: impl Fn(&Mat) -> f64) -> Mat {
    let mut g = Mat::zeros(y.nrows(), y.ncols());
    for i in 0..y.nrows() {
        for j in 0..y.ncols() {
            let mut up = y.clone();
            up[(i, j)] += h;
            let mut down = y.clone();
            down[(i, j)] -= h;
            g[(i, j)] = (f(&up) - f(&down)) / (2.0 * h);
        }
    }
    g
}

/// Relative Frobenius error ‖a − b‖ / ‖b‖.
pub fn relative_error(a: &Mat, b: &Mat) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// Least-squares slope of log10(y) against log10(x).
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.log10(), y.log10())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let num: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let den: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    num / den
}

/// Gaussian naive Bayes accuracy with the textbook per-class MLE moments.
pub fn gaussian_nb_accuracy(train: &Mat, labels: &[usize], test: &Mat, truth: &[usize], floor: f64) -> f64 {
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let d = train.ncols();
    let mut stats = Vec::new();
    for c in 0..classes {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        let cnt = members.len() as f64;
        let mean: Vec<f64> = (0..d).map(|j| members.iter().map(|&i| train[(i, j)]).sum::<f64>() / cnt).collect();
        let var: Vec<f64> = (0..d)
            .map(|j| {
                let v = members.iter().map(|&i| (train[(i, j)] - mean[j]).powi(2)).sum::<f64>() / cnt;
                v.max(floor)
            })
            .collect();
        stats.push(((cnt / labels.len() as f64).ln(), mean, var));
    }
    let mut hits = 0;
    for (i, &t) in truth.iter().enumerate() {
        let score = |c: usize| {
            let (prior, mean, var) = &stats[c];
            prior
                - (0..d)
                    .map(|j| {
                        0.5 * ((2.0 * std::f64::consts::PI * var[j]).ln() + (test[(i, j)] - mean[j]).powi(2) / var[j])
                    })
                    .sum::<f64>()
        };
        let best = (0..classes).max_by(|&a, &b| score(a).total_cmp(&score(b))).expect("classes");
        hits += usize::from(best == t);
    }
    hits as f64 / truth.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gram_schmidt_reconstructs() {
        let m = Mat::from_row_slice(3, 2, &[1.0, 2.0, 0.0, 1.0, 1.0, 0.0]);
        let (q, r) = gram_schmidt(&m);
        assert!((&q * &r - &m).norm() < 1e-14);
        assert!((q.transpose() * &q - Mat::identity(2, 2)).norm() < 1e-14);
    }

    #[test]
    fn angle_between_lines() {
        let a = Mat::from_column_slice(2, 1, &[1.0, 0.0]);
        let b = Mat::from_column_slice(2, 1, &[0.3f64.cos(), 0.3f64.sin()]);
        assert!((max_angle(&a, &b) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn slope_of_power_law() {
        let pts = [(1e-2, 3e-4), (1e-3, 3e-6)];
        assert!((log_log_slope(&pts) - 2.0).abs() < 1e-12);
    }
}
