mod common;

use common::{oracle_achievable, oracle_points, oracle_rank};
use gsa_core::achievable::{achievable_dof, achievable_per_m_exact, model_points, TightRegion};
use gsa_core::bounds::{cutset_bound, model_bound, PiecewiseBound};
use gsa_core::linalg::{
    complex_gaussian, frobenius_norm, hstack, null_space_basis, numerical_rank, vstack, ComplexMatrix, TolerancePolicy,
};
use gsa_core::rational::ratio;
use gsa_core::{make_pattern, Model, Pattern};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn model_and_k() -> impl Strategy<Value = (Model, usize)> {
    prop_oneof![
        (4usize..=12).prop_map(|k| (Model::Y, k)),
        (2usize..=6).prop_map(|h| (Model::Pairwise, 2 * h)),
        (2usize..=6).prop_map(|h| (Model::X, 2 * h)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn achievable_never_exceeds_bound((model, k) in model_and_k(), m in 0.1f64..10.0, n in 0.1f64..80.0) {
        let pts = model_points(model, k).unwrap();
        let ach = achievable_dof(&pts, m, n);
        let upper = model_bound(model, k, m, n).unwrap();
        prop_assert!(ach <= upper * (1.0 + 1e-12) + 1e-12);
        prop_assert!(upper <= cutset_bound(k, m, n) * (1.0 + 1e-12));
    }

    #[test]
    fn achievable_matches_float_oracle((model, k) in model_and_k(), r in 0.01f64..20.0) {
        let ach = achievable_dof(&model_points(model, k).unwrap(), 1.0, r);
        let oracle = oracle_achievable(&oracle_points(model.name(), k), r);
        prop_assert!((ach - oracle).abs() <= 1e-9 * oracle.max(1.0));
    }

    #[test]
    fn achievable_is_monotone_in_relay_antennas((model, k) in model_and_k(), m in 0.5f64..5.0, n in 0.1f64..40.0, dn in 0.0f64..10.0) {
        let pts = model_points(model, k).unwrap();
        prop_assert!(achievable_dof(&pts, m, n) <= achievable_dof(&pts, m, n + dn) + 1e-12);
        let b = PiecewiseBound::for_model(model, k).unwrap();
        prop_assert!(b.evaluate(m, n) <= b.evaluate(m, n + dn) + 1e-9);
    }

    #[test]
    fn achievable_is_homogeneous((model, k) in model_and_k(), m in 0.1f64..10.0, n in 0.1f64..60.0, c in 0.1f64..10.0) {
        let pts = model_points(model, k).unwrap();
        let a = achievable_dof(&pts, m, n);
        let b = achievable_dof(&pts, c * m, c * n);
        prop_assert!((b - c * a).abs() <= 1e-9 * b.max(1.0));
    }

    #[test]
    fn exact_tightness_matches_region((model, k) in model_and_k(), num in 1i128..4000, den in 1i128..400) {
        let r = ratio(num, den);
        let pts = model_points(model, k).unwrap();
        let upper = PiecewiseBound::for_model(model, k).unwrap().per_m_exact(r);
        let tight = achievable_per_m_exact(&pts, r) == upper;
        let region = TightRegion::for_model(model, k).unwrap();
        // K = 4 has no gap anywhere
        if k > 4 {
            prop_assert_eq!(tight, region.contains(r));
        } else {
            prop_assert!(tight);
        }
    }

    #[test]
    fn patterns_are_symmetric_with_zero_diagonal(h in 2usize..=6, streams in 1usize..4, which in 0usize..3) {
        let k = 2 * h;
        let pattern = [Pattern::Y, Pattern::Pairwise, Pattern::X][which];
        let d = make_pattern(pattern, k, streams, None).unwrap();
        for i in 1..=k {
            prop_assert_eq!(d.streams(i, i), 0);
            for j in 1..=k {
                prop_assert_eq!(d.streams(i, j), d.streams(j, i));
            }
        }
        prop_assert_eq!(d.d_total() % 2, 0);
        prop_assert_eq!(d.pair_order().iter().map(|p| d.streams(p.i, p.j)).sum::<usize>(), d.d_total() / 2);
        prop_assert_eq!(d.detect_model(), pattern.model());
    }

    #[test]
    fn rank_plus_nullity(rows in 1usize..8, cols in 1usize..8, inner in 1usize..8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: ComplexMatrix = complex_gaussian(rows, inner, &mut rng) * complex_gaussian(inner, cols, &mut rng);
        let tol = TolerancePolicy::default();
        let rank = numerical_rank(&a, &tol);
        prop_assert_eq!(rank, rows.min(cols).min(inner));
        prop_assert_eq!(rank, oracle_rank(&a, 1e-9));
        let z = null_space_basis(&a, &tol);
        prop_assert_eq!(z.ncols(), cols - rank);
        if z.ncols() > 0 {
            prop_assert!(frobenius_norm(&(&a * &z)) <= 1e-9 * frobenius_norm(&a));
            let gram = z.adjoint() * &z;
            let eye = ComplexMatrix::identity(z.ncols(), z.ncols());
            prop_assert!(frobenius_norm(&(gram - eye)) < 1e-9);
        }
    }

    #[test]
    fn stacking_shapes(r1 in 1usize..5, r2 in 1usize..5, c in 1usize..5, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = complex_gaussian(r1, c, &mut rng);
        let b = complex_gaussian(r2, c, &mut rng);
        let v = vstack([&a, &b]).unwrap();
        prop_assert_eq!(v.shape(), (r1 + r2, c));
        prop_assert_eq!(v.rows(r1, r2).into_owned(), b.clone());
        let h = hstack([&a.transpose(), &b.transpose()]).unwrap();
        prop_assert_eq!(h, v.transpose());
    }
}
