use proptest::prelude::*;

use psman_core::cdt::{cdt_loss, CdtModel};
use psman_core::checkpoint;
use psman_core::data::{Dataset, LabeledDataset};
use psman_core::manifold::{block_rotate, project_tangent, random_block_rotation, subspace_distance, tangent_defect};
use psman_core::matrix::{gaussian_matrix, principal_angles, qr_positive, random_orthogonal, rng, skew, Mat};
use psman_core::mdpca::{mdpca_loss, variance_explained, MdpcaModel};
use psman_core::{PartitionSpec, PsPoint};

/// A valid spec: n in 2..=8 and 1..=3 partitions filling at most n.
fn spec_strategy() -> impl Strategy<Value = PartitionSpec> {
    (2usize..=8, prop::collection::vec(1usize..=3, 1..=3)).prop_map(|(n, mut sizes)| {
        while sizes.iter().sum::<usize>() > n {
            if sizes.len() > 1 {
                sizes.pop();
            } else {
                sizes[0] = n;
            }
        }
        PartitionSpec::new(n, sizes).unwrap()
    })
}

fn random_mat(rows: usize, cols: usize, seed: u64) -> Mat {
    gaussian_matrix(rows, cols, &mut rng(seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_is_idempotent_and_tangent(spec in spec_strategy(), seed in any::<u64>()) {
        let n = spec.n();
        let p = PsPoint::random(spec, seed);
        let z = random_mat(n, n, seed ^ 1);
        let once = project_tangent(&p, &z).unwrap();
        let twice = project_tangent(&p, once.delta()).unwrap();
        prop_assert!((twice.delta() - once.delta()).norm() < 1e-10);
        prop_assert!(tangent_defect(&p, once.delta()) < 1e-10);
        // Orthogonal projection: the discarded part is orthogonal to the kept part.
        prop_assert!((&z - once.delta()).dot(once.delta()).abs() < 1e-9 * z.norm_squared().max(1.0));
    }

    #[test]
    fn skew_properties(n in 1usize..7, seed in any::<u64>()) {
        let m = random_mat(n, n, seed);
        let s = skew(&m).unwrap();
        prop_assert!((&s + s.transpose()).norm() < 1e-15);
        prop_assert!((skew(&s).unwrap() - &s).norm() < 1e-15);
        prop_assert!((skew(&m.transpose()).unwrap() + &s).norm() < 1e-15);
        let sym = &m + m.transpose();
        prop_assert!(skew(&sym).unwrap().norm() < 1e-15);
    }

    #[test]
    fn principal_angles_symmetric_and_rotation_invariant(n in 2usize..8, k in 1usize..4, seed in any::<u64>()) {
        let k = k.min(n);
        let a = qr_positive(&random_mat(n, k, seed)).unwrap().0;
        let b = qr_positive(&random_mat(n, k, seed ^ 7)).unwrap().0;
        let ab = principal_angles(&a, &b).unwrap();
        let ba = principal_angles(&b, &a).unwrap();
        let u = random_orthogonal(n, seed ^ 9);
        let moved = principal_angles(&(&u * &a), &(&u * &b)).unwrap();
        let r = random_orthogonal(k, seed ^ 11);
        let rebased = principal_angles(&(&a * &r), &b).unwrap();
        for i in 0..k {
            prop_assert!((ab[i] - ba[i]).abs() < 1e-7);
            prop_assert!((ab[i] - moved[i]).abs() < 1e-7);
            prop_assert!((ab[i] - rebased[i]).abs() < 1e-7);
            prop_assert!((0.0..=std::f64::consts::FRAC_PI_2 + 1e-12).contains(&ab[i]));
        }
    }

    #[test]
    fn qr_factor_is_unique(n in 1usize..8, k in 1usize..8, seed in any::<u64>()) {
        let k = k.min(n);
        let m = random_mat(n, k, seed);
        let (q, r) = qr_positive(&m).unwrap();
        prop_assert!((&q * &r - &m).norm() < 1e-12 * m.norm().max(1.0));
        for i in 0..k {
            prop_assert!(r[(i, i)] > 0.0);
            for j in 0..i {
                prop_assert_eq!(r[(i, j)], 0.0);
            }
        }
        // Any factorization with a positive diagonal has the same Q:
        // refactoring Q·T for an upper-triangular T > 0 returns Q.
        let t = Mat::from_fn(k, k, |i, j| if i == j { 1.0 + (i as f64) } else if i < j { 0.5 } else { 0.0 });
        let (q2, r2) = qr_positive(&(&q * &t)).unwrap();
        prop_assert!((q2 - &q).norm() < 1e-10);
        prop_assert!((r2 - t).norm() < 1e-10);
    }

    #[test]
    fn block_rotation_preserves_class_and_losses(seed in any::<u64>()) {
        let mut g = rng(seed);
        let spec = PartitionSpec::new(7, vec![2, 1, 2]).unwrap();
        let p = PsPoint::random(spec.clone(), seed);
        let rotated = block_rotate(&p, &random_block_rotation(&spec, &mut g)).unwrap();
        prop_assert!(subspace_distance(&p, &rotated).unwrap() < 1e-10);

        let data: Vec<Dataset> = (0..2).map(|i| Dataset::new(format!("{i}"), gaussian_matrix(9, 7, &mut g)).unwrap()).collect();
        let names = vec!["0".to_string(), "1".to_string()];
        let a = mdpca_loss(&MdpcaModel::new(p.clone(), names.clone()).unwrap(), &data).unwrap();
        let b = mdpca_loss(&MdpcaModel::new(rotated.clone(), names).unwrap(), &data).unwrap();
        prop_assert!((a - b).abs() < 1e-10);

        let cspec = PartitionSpec::new(7, vec![2, 2, 1]).unwrap();
        let cp = PsPoint::random(cspec.clone(), seed ^ 3);
        let crot = block_rotate(&cp, &random_block_rotation(&cspec, &mut g)).unwrap();
        let labels: Vec<usize> = (0..12).map(|i| i % 3).collect();
        let source = LabeledDataset::from_indices(gaussian_matrix(12, 7, &mut g), labels).unwrap();
        let target = gaussian_matrix(8, 7, &mut g);
        let classes = source.classes().to_vec();
        let la = cdt_loss(&CdtModel::new(cp, classes.clone(), 2.0).unwrap(), &source, &target).unwrap();
        let lb = cdt_loss(&CdtModel::new(crot, classes, 2.0).unwrap(), &source, &target).unwrap();
        prop_assert!((la - lb).abs() < 1e-10);
    }

    #[test]
    fn checkpoint_round_trip_is_exact(spec in spec_strategy(), seed in any::<u64>()) {
        let p = PsPoint::random(spec, seed);
        let text = checkpoint::to_string(&p);
        let back = checkpoint::read(text.as_bytes()).unwrap();
        prop_assert_eq!(back.q(), p.q());
        prop_assert_eq!(subspace_distance(&p, &back).unwrap(), 0.0);
    }

    #[test]
    fn variance_fractions_sum_to_one(seed in any::<u64>(), d in 1usize..4) {
        let mut g = rng(seed);
        let mut sizes = vec![1; d];
        sizes.push(2);
        let spec = PartitionSpec::new(8, sizes).unwrap();
        let data: Vec<Dataset> = (0..d).map(|i| Dataset::new(format!("{i}"), gaussian_matrix(10, 8, &mut g)).unwrap()).collect();
        let names = data.iter().map(|x| x.name().to_string()).collect();
        let model = MdpcaModel::new(PsPoint::random(spec, seed), names).unwrap();
        let rows = variance_explained(&model, &data).unwrap();
        for ds in &data {
            let sum: f64 = rows.iter().filter(|r| r.dataset == ds.name()).map(|r| r.fraction).sum();
            prop_assert!((sum - 1.0).abs() < 1e-10);
        }
    }
}
