use psman_core::cdt::CdtProblem;
use psman_core::data::{Dataset, LabeledDataset};
use psman_core::manifold::lift_euclidean_gradient;
use psman_core::matrix::{gaussian_matrix, rng, Mat};
use psman_core::mdpca::MdpcaProblem;
use psman_core::{Exec, LossProblem, PartitionSpec, PsPoint};
use psman_testkit as oracle;

const H: f64 = 1e-6;

fn projected(p: &PsPoint, g: &Mat) -> Mat {
    lift_euclidean_gradient(p, g).unwrap().delta().clone()
}

/// tr Cᵢ − tr(SᵢᵀCᵢSᵢ) summed over datasets: equal to the loss on the
/// manifold, and the function whose plain gradient is the analytic one.
fn mdpca_surrogate(y: &Mat, sizes: &[usize], data: &[Mat]) -> f64 {
    let r = oracle::ranges(sizes);
    let shared = r.last().unwrap().clone();
    data.iter()
        .enumerate()
        .map(|(i, x)| {
            let c = x.transpose() * x / x.nrows() as f64;
            let mut cols: Vec<usize> = if sizes.len() > 1 { r[i].clone().collect() } else { vec![] };
            cols.extend(shared.clone());
            let s = y.select_columns(cols.iter());
            c.trace() - (s.transpose() * &c * &s).trace()
        })
        .sum()
}

fn cdt_surrogate(y: &Mat, sizes: &[usize], xs: &Mat, labels: &[usize], xt: &Mat, lambda: f64) -> f64 {
    let c = xs.transpose() * xs + xt.transpose() * xt;
    let mut f = c.trace() - (y.transpose() * &c * y).trace();
    let r = oracle::ranges(sizes);
    for (class, range) in r.iter().enumerate() {
        let rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        let xc = xs.select_rows(rows.iter());
        let s = xc.transpose() * xc;
        let own = y.columns(range.start, range.len());
        let other_cols: Vec<usize> = (0..y.ncols()).filter(|j| !range.contains(j)).collect();
        let other = y.select_columns(other_cols.iter());
        f -= lambda * ((own.transpose() * &s * own).trace() - (other.transpose() * &s * &other).trace());
    }
    f
}

fn mdpca_instances() -> Vec<(PartitionSpec, Vec<Dataset>)> {
    (0..24u64)
        .map(|t| {
            let mut g = rng(t);
            let d = 1 + t as usize % 3;
            let sizes = match (d, t % 2) {
                (1, 0) => vec![3],
                _ => {
                    let mut s = vec![1 + t as usize % 2; d];
                    s.push(1);
                    s
                }
            };
            let n = (5 + t as usize % 8).max(sizes.iter().sum::<usize>() + 1);
            let data =
                (0..d).map(|i| Dataset::new(format!("{i}"), gaussian_matrix(10 + 3 * i, n, &mut g)).unwrap()).collect();
            (PartitionSpec::new(n, sizes).unwrap(), data)
        })
        .collect()
}

#[test]
fn mdpca_gradient_matches_finite_differences_on_the_manifold() {
    for (t, (spec, data)) in mdpca_instances().into_iter().enumerate() {
        let raw: Vec<Mat> = data.iter().map(|d| d.x().clone()).collect();
        let problem = MdpcaProblem::new(spec.clone(), &data, Exec::Sequential).unwrap();
        let p = PsPoint::random(spec.clone(), 500 + t as u64);
        let y = p.representative();
        let fd = oracle::central_difference(&y, H, |y| oracle::mdpca_loss(y, spec.sizes(), &raw));
        let err = oracle::relative_error(&projected(&p, &problem.euclidean_grad(&y)), &projected(&p, &fd));
        assert!(err < 1e-5, "instance {t}: {err:e}");
    }
}

#[test]
fn mdpca_gradient_is_the_ambient_gradient_of_the_trace_form() {
    for (t, (spec, data)) in mdpca_instances().into_iter().enumerate() {
        let raw: Vec<Mat> = data.iter().map(|d| d.x().clone()).collect();
        let problem = MdpcaProblem::new(spec.clone(), &data, Exec::Sequential).unwrap();
        let y = PsPoint::random(spec.clone(), 900 + t as u64).representative();
        let fd = oracle::central_difference(&y, H, |y| mdpca_surrogate(y, spec.sizes(), &raw));
        let err = oracle::relative_error(&problem.euclidean_grad(&y), &fd);
        assert!(err < 1e-5, "instance {t}: {err:e}");
    }
}

struct CdtInstance {
    spec: PartitionSpec,
    xs: Mat,
    labels: Vec<usize>,
    xt: Mat,
    lambda: f64,
}

fn cdt_instances() -> Vec<CdtInstance> {
    (0..24u64)
        .map(|t| {
            let mut g = rng(t + 77);
            let classes = 2 + t as usize % 2;
            let k_pc = 1 + t as usize % 2;
            let n = (classes * k_pc + 1).max(6 + t as usize % 7).min(12);
            let labels: Vec<usize> = (0..20).map(|i| i % classes).collect();
            CdtInstance {
                spec: PartitionSpec::new(n, vec![k_pc; classes]).unwrap(),
                xs: gaussian_matrix(20, n, &mut g),
                labels,
                xt: gaussian_matrix(15, n, &mut g),
                lambda: [0.0, 0.5, 2.0][t as usize % 3],
            }
        })
        .collect()
}

fn cdt_problem(c: &CdtInstance) -> CdtProblem {
    let source = LabeledDataset::from_indices(c.xs.clone(), c.labels.clone()).unwrap();
    CdtProblem::new(c.spec.clone(), &source, &c.xt, c.lambda, Exec::Sequential).unwrap()
}

#[test]
fn cdt_gradient_matches_finite_differences_on_the_manifold() {
    for (t, c) in cdt_instances().iter().enumerate() {
        let problem = cdt_problem(c);
        let p = PsPoint::random(c.spec.clone(), 40 + t as u64);
        let y = p.representative();
        let fd = oracle::central_difference(&y, H, |y| {
            oracle::cdt_loss(y, c.spec.sizes(), &c.xs, &c.labels, &c.xt, c.lambda)
        });
        let err = oracle::relative_error(&projected(&p, &problem.euclidean_grad(&y)), &projected(&p, &fd));
        assert!(err < 1e-5, "instance {t} (lambda {}): {err:e}", c.lambda);
    }
}

#[test]
fn cdt_gradient_is_the_ambient_gradient_of_the_trace_form() {
    for (t, c) in cdt_instances().iter().enumerate() {
        let problem = cdt_problem(c);
        let y = PsPoint::random(c.spec.clone(), 140 + t as u64).representative();
        let fd =
            oracle::central_difference(&y, H, |y| cdt_surrogate(y, c.spec.sizes(), &c.xs, &c.labels, &c.xt, c.lambda));
        let err = oracle::relative_error(&problem.euclidean_grad(&y), &fd);
        assert!(err < 1e-5, "instance {t}: {err:e}");
    }
}

#[test]
fn production_losses_match_sample_by_sample_reference() {
    for (t, (spec, data)) in mdpca_instances().into_iter().enumerate() {
        let raw: Vec<Mat> = data.iter().map(|d| d.x().clone()).collect();
        let problem = MdpcaProblem::new(spec.clone(), &data, Exec::Sequential).unwrap();
        // Off-manifold inputs too: the trace form is exact for any matrix.
        let y = gaussian_matrix(spec.n(), spec.total_k(), &mut rng(t as u64));
        let want = oracle::mdpca_loss(&y, spec.sizes(), &raw);
        assert!((problem.loss(&y) - want).abs() < 1e-9 * want.abs().max(1.0));
    }
    for (t, c) in cdt_instances().iter().enumerate() {
        let y = gaussian_matrix(c.spec.n(), c.spec.total_k(), &mut rng(t as u64 + 3));
        let want = oracle::cdt_loss(&y, c.spec.sizes(), &c.xs, &c.labels, &c.xt, c.lambda);
        assert!((cdt_problem(c).loss(&y) - want).abs() < 1e-9 * want.abs().max(1.0));
    }
}
