//! Riemannian gradient descent on the PS manifold.
//!
//! Each iteration takes the Euclidean gradient with respect to the
//! representative, projects it onto the tangent space, and steps with the
//! Q-factor retraction `qr(Q − αΔ)`. Convergence is declared when two
//! consecutive iterates are within `tol` in [`subspace_distance`], which
//! ignores within-partition rotations.

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::manifold::{lift_euclidean_gradient, retract_qr, subspace_distance, PartitionSpec, PsPoint};
use crate::matrix::Mat;

/// A differentiable loss on the PS manifold.
///
/// Both functions take the n×k representative. They must also be defined
/// for matrices slightly off the manifold, since finite-difference checks
/// perturb single entries.
pub trait LossProblem: Sync {
    fn spec(&self) -> &PartitionSpec;

    fn loss(&self, y: &Mat) -> f64;

    /// Ambient gradient with respect to the representative (n×k).
    fn euclidean_grad(&self, y: &Mat) -> Mat;

    fn loss_at(&self, p: &PsPoint) -> f64 {
        self.loss(&p.representative())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Backtracking {
    /// Factor in (0, 1) applied to the step after a rejected trial.
    pub shrink: f64,
    pub max_halvings: usize,
}

impl Default for Backtracking {
    fn default() -> Self {
        Self { shrink: 0.5, max_halvings: 30 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub alpha: f64,
    pub max_iters: usize,
    /// Subspace-distance threshold between consecutive iterates.
    pub tol: f64,
    pub backtracking: Option<Backtracking>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { alpha: 1e-2, max_iters: 5000, tol: 1e-8, backtracking: Some(Backtracking::default()) }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidConfig(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be >= 1".into()));
        }
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidConfig(format!("tol must be >= 0, got {}", self.tol)));
        }
        if let Some(bt) = self.backtracking {
            if !(bt.shrink > 0.0 && bt.shrink < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "backtracking shrink factor must lie in (0, 1), got {}",
                    bt.shrink
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Termination {
    Converged,
    MaxIters,
    StepFailure,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Termination::Converged => "converged",
            Termination::MaxIters => "max_iters",
            Termination::StepFailure => "step_failure",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeReport {
    pub final_point: PsPoint,
    /// Loss at the start followed by the loss after every accepted step.
    pub loss_trace: Vec<f64>,
    /// Norm of the projected gradient at each iteration.
    pub grad_norm_trace: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
}

impl OptimizeReport {
    pub fn final_loss(&self) -> f64 {
        *self.loss_trace.last().expect("trace holds the initial loss")
    }

    pub fn is_monotone(&self) -> bool {
        self.loss_trace.windows(2).all(|w| w[1] <= w[0])
    }
}

/// Progress information passed to the observer after each accepted step.
#[derive(Debug, Clone, Copy)]
pub struct IterationEvent {
    pub iteration: usize,
    pub loss: f64,
    pub grad_norm: f64,
    pub step: f64,
    pub distance: f64,
}

pub fn minimize<P: LossProblem + ?Sized>(
    problem: &P,
    start: PsPoint,
    config: &OptimizerConfig,
) -> Result<OptimizeReport> {
    minimize_with_observer(problem, start, config, &mut |_| {})
}

enum StepOutcome {
    Accepted { point: PsPoint, loss: f64, distance: f64, step: f64 },
    Stationary,
    Failed,
}

pub fn minimize_with_observer<P: LossProblem + ?Sized>(
    problem: &P,
    start: PsPoint,
    config: &OptimizerConfig,
    observer: &mut dyn FnMut(&IterationEvent),
) -> Result<OptimizeReport> {
    config.validate()?;
    if start.spec() != problem.spec() {
        return Err(Error::SpecMismatch);
    }
    let mut point = start;
    let mut loss = problem.loss_at(&point);
    if !loss.is_finite() {
        return Err(Error::InvalidConfig("loss is not finite at the starting point".into()));
    }
    let mut loss_trace = vec![loss];
    let mut grad_norm_trace = Vec::new();

    for iteration in 1..=config.max_iters {
        let grad = problem.euclidean_grad(&point.representative());
        let delta = lift_euclidean_gradient(&point, &grad)?;
        let grad_norm = delta.norm();
        grad_norm_trace.push(grad_norm);

        let mut step = config.alpha;
        let mut attempts = 0;
        let outcome = loop {
            match retract_qr(&point, &delta, step) {
                Ok(candidate) => {
                    let distance = subspace_distance(&point, &candidate)?;
                    let cand_loss = problem.loss_at(&candidate);
                    match config.backtracking {
                        None => {
                            break StepOutcome::Accepted { point: candidate, loss: cand_loss, distance, step };
                        }
                        Some(_) if cand_loss <= loss => {
                            break StepOutcome::Accepted { point: candidate, loss: cand_loss, distance, step };
                        }
                        // No decrease, but the trial move is already below the
                        // convergence threshold: the current iterate is stationary.
                        Some(_) if distance <= config.tol => break StepOutcome::Stationary,
                        Some(_) => {}
                    }
                }
                Err(Error::RankDeficient { .. }) if config.backtracking.is_none() => {
                    break StepOutcome::Failed;
                }
                // A rank-deficient trial means the step was far too long.
                Err(Error::RankDeficient { .. }) => {}
                Err(e) => return Err(e),
            }
            let bt = config.backtracking.expect("non-backtracking paths break above");
            attempts += 1;
            if attempts > bt.max_halvings {
                break StepOutcome::Failed;
            }
            step *= bt.shrink;
        };

        match outcome {
            StepOutcome::Accepted { point: next, loss: next_loss, distance, step } => {
                point = next;
                loss = next_loss;
                loss_trace.push(loss);
                observer(&IterationEvent { iteration, loss, grad_norm, step, distance });
                if distance <= config.tol {
                    return Ok(report(point, loss_trace, grad_norm_trace, iteration, Termination::Converged));
                }
            }
            StepOutcome::Stationary => {
                return Ok(report(point, loss_trace, grad_norm_trace, iteration, Termination::Converged));
            }
            StepOutcome::Failed => {
                return Ok(report(point, loss_trace, grad_norm_trace, iteration, Termination::StepFailure));
            }
        }
    }
    Ok(report(point, loss_trace, grad_norm_trace, config.max_iters, Termination::MaxIters))
}

fn report(
    final_point: PsPoint,
    loss_trace: Vec<f64>,
    grad_norm_trace: Vec<f64>,
    iterations: usize,
    termination: Termination,
) -> OptimizeReport {
    OptimizeReport { final_point, loss_trace, grad_norm_trace, iterations, termination }
}

/// Runs one descent per start and returns all reports in start order.
pub fn minimize_each<P: LossProblem + ?Sized>(
    problem: &P,
    starts: &[PsPoint],
    config: &OptimizerConfig,
    exec: Exec,
) -> Result<Vec<OptimizeReport>> {
    exec.map(starts, |s| minimize(problem, s.clone(), config)).into_iter().collect()
}

/// Picks the report with the lowest final loss; ties keep the earliest.
pub fn best_report(reports: Vec<OptimizeReport>) -> Option<OptimizeReport> {
    reports.into_iter().reduce(|best, r| if r.final_loss() < best.final_loss() { r } else { best })
}

/// Central-difference gradient of the loss with respect to each entry of
/// the representative of `p`.
pub fn finite_difference_grad<P: LossProblem + ?Sized>(problem: &P, p: &PsPoint, h: f64) -> Mat {
    finite_difference_grad_at(problem, &p.representative(), h)
}

pub fn finite_difference_grad_at<P: LossProblem + ?Sized>(problem: &P, y: &Mat, h: f64) -> Mat {
    let mut g = Mat::zeros(y.nrows(), y.ncols());
    let mut work = y.clone();
    for j in 0..y.ncols() {
        for i in 0..y.nrows() {
            let orig = work[(i, j)];
            work[(i, j)] = orig + h;
            let up = problem.loss(&work);
            work[(i, j)] = orig - h;
            let down = problem.loss(&work);
            work[(i, j)] = orig;
            g[(i, j)] = (up - down) / (2.0 * h);
        }
    }
    g
}

pub const DEFAULT_FD_STEP: f64 = 1e-6;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{project_tangent, PartitionSpec};
    use crate::matrix::{gaussian_matrix, max_principal_angle, qr_positive, rng, svd};

    struct Constant(PartitionSpec);

    impl LossProblem for Constant {
        fn spec(&self) -> &PartitionSpec {
            &self.0
        }
        fn loss(&self, _: &Mat) -> f64 {
            3.0
        }
        fn euclidean_grad(&self, y: &Mat) -> Mat {
            Mat::zeros(y.nrows(), y.ncols())
        }
    }

    /// f(Y) = ‖X − X Y Yᵀ‖²_F written out literally.
    struct Reconstruction {
        spec: PartitionSpec,
        x: Mat,
    }

    impl LossProblem for Reconstruction {
        fn spec(&self) -> &PartitionSpec {
            &self.spec
        }
        fn loss(&self, y: &Mat) -> f64 {
            (&self.x - &self.x * y * y.transpose()).norm_squared()
        }
        fn euclidean_grad(&self, y: &Mat) -> Mat {
            -2.0 * self.x.transpose() * (&self.x * y)
        }
    }

    /// Σᵢ ‖Yᵢ − Tᵢ‖² with one planted target column per partition.
    struct Targets {
        spec: PartitionSpec,
        targets: Mat,
    }

    impl LossProblem for Targets {
        fn spec(&self) -> &PartitionSpec {
            &self.spec
        }
        fn loss(&self, y: &Mat) -> f64 {
            (y - &self.targets).norm_squared()
        }
        fn euclidean_grad(&self, y: &Mat) -> Mat {
            2.0 * (y - &self.targets)
        }
    }

    fn spec(n: usize, sizes: &[usize]) -> PartitionSpec {
        PartitionSpec::new(n, sizes.to_vec()).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(OptimizerConfig::default().validate().is_ok());
        let bad = [
            OptimizerConfig { alpha: 0.0, ..Default::default() },
            OptimizerConfig { max_iters: 0, ..Default::default() },
            OptimizerConfig { tol: -1.0, ..Default::default() },
            OptimizerConfig { backtracking: Some(Backtracking { shrink: 1.0, max_halvings: 3 }), ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err());
        }
    }

    #[test]
    fn constant_loss_converges_immediately() {
        let s = spec(4, &[1, 2]);
        let start = PsPoint::random(s.clone(), 3);
        let r = minimize(&Constant(s), start.clone(), &OptimizerConfig::default()).unwrap();
        assert_eq!(r.termination, Termination::Converged);
        assert_eq!(r.iterations, 1);
        assert!((r.final_point.q() - start.q()).norm() < 1e-12);
    }

    #[test]
    fn constant_loss_fd_is_zero() {
        let s = spec(4, &[2]);
        let p = PsPoint::random(s.clone(), 1);
        assert!(finite_difference_grad(&Constant(s), &p, DEFAULT_FD_STEP).norm() < 1e-9);
    }

    #[test]
    fn spec_mismatch_is_rejected() {
        let r = minimize(&Constant(spec(4, &[1])), PsPoint::random(spec(4, &[2]), 1), &OptimizerConfig::default());
        assert!(matches!(r, Err(Error::SpecMismatch)));
    }

    #[test]
    fn one_dimensional_pca() {
        let mut g = rng(5);
        let scales = [3.0, 1.0, 0.5, 0.3, 0.2];
        let z = gaussian_matrix(60, 5, &mut g);
        let basis = crate::matrix::random_orthogonal(5, 6);
        let x = z * Mat::from_diagonal(&nalgebra::DVector::from_row_slice(&scales)) * basis.transpose();
        let problem = Reconstruction { spec: spec(5, &[1]), x: x.clone() };
        let config = OptimizerConfig { alpha: 2e-3, ..Default::default() };
        let r = minimize(&problem, PsPoint::random(spec(5, &[1]), 1), &config).unwrap();
        assert_eq!(r.termination, Termination::Converged);
        assert!(r.is_monotone());

        let top = svd(&x).v_t.rows(0, 1).transpose();
        let angle = max_principal_angle(&r.final_point.representative(), &top).unwrap();
        assert!(angle < 1e-6, "angle {angle}");
    }

    #[test]
    fn planted_targets_strictly_decrease() {
        let s = spec(3, &[1, 1]);
        let basis = crate::matrix::random_orthogonal(3, 12);
        let targets = basis.columns(0, 2).into_owned();
        let problem = Targets { spec: s.clone(), targets };
        let config = OptimizerConfig { alpha: 0.1, ..Default::default() };
        let r = minimize(&problem, PsPoint::random(s, 2), &config).unwrap();
        assert_eq!(r.termination, Termination::Converged);
        // Strict decrease until the loss reaches round-off level.
        for w in r.loss_trace.windows(2) {
            assert!(w[1] < w[0] || w[0] < 1e-12, "{} -> {}", w[0], w[1]);
        }
        assert!(r.final_loss() < 1e-10);
    }

    #[test]
    fn without_backtracking_large_steps_can_increase_loss() {
        let s = spec(3, &[1, 1]);
        let problem =
            Targets { spec: s.clone(), targets: crate::matrix::random_orthogonal(3, 4).columns(0, 2).into_owned() };
        let config = OptimizerConfig { alpha: 5.0, max_iters: 20, backtracking: None, ..Default::default() };
        let r = minimize(&problem, PsPoint::random(s.clone(), 2), &config).unwrap();
        assert_eq!(r.loss_trace.len(), r.iterations + 1);
        let bt = minimize(
            &problem,
            PsPoint::random(s, 2),
            &OptimizerConfig { backtracking: Some(Backtracking::default()), ..config },
        )
        .unwrap();
        assert!(bt.is_monotone());
    }

    #[test]
    fn every_iterate_stays_orthonormal() {
        let s = spec(5, &[2, 1]);
        let problem = Targets { spec: s.clone(), targets: gaussian_matrix(5, 3, &mut rng(1)) };
        let config = OptimizerConfig { alpha: 0.05, max_iters: 1, ..Default::default() };
        let mut p = PsPoint::random(s, 0);
        for _ in 0..300 {
            p = minimize(&problem, p, &config).unwrap().final_point;
            assert!(p.orthonormality_defect() < 1e-10);
        }
    }

    #[test]
    fn observer_sees_each_accepted_step() {
        let s = spec(4, &[1, 1]);
        let problem =
            Targets { spec: s.clone(), targets: crate::matrix::random_orthogonal(4, 9).columns(0, 2).into_owned() };
        let mut events = Vec::new();
        let r = minimize_with_observer(
            &problem,
            PsPoint::random(s, 3),
            &OptimizerConfig { alpha: 0.1, ..Default::default() },
            &mut |e| events.push(e.iteration),
        )
        .unwrap();
        assert_eq!(events.len(), r.loss_trace.len() - 1);
        assert!(events.windows(2).all(|w| w[1] == w[0] + 1));
    }

    /// Gradient descent on Gr(n, k) written directly: the tangent is
    /// ½[(I − YYᵀ)G | −Y Gᵀ Q⊥] in the (Y | Q⊥) column blocks.
    fn grassmann_step(q: &Mat, k: usize, g: &Mat, alpha: f64) -> Mat {
        let n = q.nrows();
        let y = q.columns(0, k);
        let perp = q.columns(k, n - k);
        let mut delta = Mat::zeros(n, n);
        let top = (g - y * (y.transpose() * g)) * 0.5;
        delta.columns_mut(0, k).copy_from(&top);
        let rest = -(y * (g.transpose() * perp)) * 0.5;
        delta.columns_mut(k, n - k).copy_from(&rest);
        qr_positive(&(q - delta * alpha)).unwrap().0
    }

    #[test]
    fn grassmannian_degeneration_matches_reference() {
        let s = spec(6, &[2]);
        let x = gaussian_matrix(30, 6, &mut rng(8));
        let problem = Reconstruction { spec: s.clone(), x };
        let config = OptimizerConfig { alpha: 1e-3, max_iters: 1, backtracking: None, tol: 0.0 };

        let mut p = PsPoint::random(s.clone(), 4);
        let mut q_ref = p.q().clone();
        for _ in 0..25 {
            let g = problem.euclidean_grad(&q_ref.columns(0, 2).into_owned());
            q_ref = grassmann_step(&q_ref, 2, &g, config.alpha);
            p = minimize(&problem, p, &config).unwrap().final_point;
            assert!((p.q() - &q_ref).norm() < 1e-10);
        }
    }

    #[test]
    fn projected_fd_matches_projected_analytic() {
        let s = spec(5, &[2]);
        let problem = Reconstruction { spec: s.clone(), x: gaussian_matrix(12, 5, &mut rng(2)) };
        let p = PsPoint::random(s, 6);
        let fd = finite_difference_grad(&problem, &p, DEFAULT_FD_STEP);
        let an = problem.euclidean_grad(&p.representative());
        let a = lift_euclidean_gradient(&p, &an).unwrap();
        let b = lift_euclidean_gradient(&p, &fd).unwrap();
        assert!((a.delta() - b.delta()).norm() / a.norm() < 1e-5);
        let _ = project_tangent;
    }

    #[test]
    fn best_report_prefers_lowest_loss() {
        let s = spec(3, &[1, 1]);
        let problem =
            Targets { spec: s.clone(), targets: crate::matrix::random_orthogonal(3, 4).columns(0, 2).into_owned() };
        let starts: Vec<_> = (0..4).map(|i| PsPoint::random(s.clone(), i)).collect();
        let config = OptimizerConfig { alpha: 0.1, max_iters: 3, ..Default::default() };
        let seq = minimize_each(&problem, &starts, &config, Exec::Sequential).unwrap();
        let par = minimize_each(&problem, &starts, &config, Exec::Parallel).unwrap();
        assert_eq!(seq, par);
        let min = seq.iter().map(|r| r.final_loss()).fold(f64::INFINITY, f64::min);
        assert_eq!(best_report(seq).unwrap().final_loss(), min);
    }
}
