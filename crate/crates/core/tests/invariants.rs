use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use nrmdl::dataset::{compute_precision, max_pairwise_distance, parse_csv, scale_dataset, to_csv, DataMatrix, MaxDistMode};
use nrmdl::linalg::random_orthogonal;
use nrmdl::mdl::{model_cost, universal_int_cost, MdlConstants};
use nrmdl::metrics::{nmi, pair_f1};
use nrmdl::nrkmeans::{random_fit, FitConfig, RandomLayout};

fn matrix(max_n: usize, max_d: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (3..=max_n, 1..=max_d).prop_flat_map(|(n, d)| {
        prop::collection::vec(-50i32..50, n * d).prop_map(move |v| DMatrix::from_iterator(n, d, v.into_iter().map(|x| x as f64 * 0.25)))
    })
}

fn permuted(x: &DMatrix<f64>, perm: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |r, c| x[(perm[r], c)])
}

fn labels(n: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (prop::collection::vec(0usize..4, n), prop::collection::vec(0usize..5, n))
}

fn relabel(v: &[usize], shift: usize) -> Vec<usize> {
    v.iter().map(|l| (l * 7 + shift) % 97).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn geometry_ignores_row_order(x in matrix(30, 4), seed in any::<u64>()) {
        let n = x.nrows();
        let mut perm: Vec<usize> = (0..n).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = DataMatrix::new(x.clone()).unwrap();
        let b = DataMatrix::new(permuted(&x, &perm)).unwrap();
        match (compute_precision(&a), compute_precision(&b)) {
            (Ok(p), Ok(q)) => prop_assert!((p - q).abs() <= 1e-12 * p.abs()),
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "precision disagrees on permuted data"),
        }
        prop_assert_eq!(max_pairwise_distance(&a, MaxDistMode::Exact), max_pairwise_distance(&b, MaxDistMode::Exact));
    }

    #[test]
    fn geometry_scales_linearly(x in matrix(20, 3), f in 0.01f64..1000.0) {
        let a = DataMatrix::new(x).unwrap();
        let b = scale_dataset(&a, f).unwrap();
        if let (Ok(p), Ok(q)) = (compute_precision(&a), compute_precision(&b)) {
            prop_assert!((q - f * p).abs() <= 1e-9 * q.abs());
        }
        let (da, db) = (max_pairwise_distance(&a, MaxDistMode::Exact), max_pairwise_distance(&b, MaxDistMode::Exact));
        prop_assert!((db - f * da).abs() <= 1e-9 * db.abs().max(1e-300));
    }

    #[test]
    fn exact_diameter_is_rotation_invariant_and_bounded_by_bbox(x in matrix(20, 4), seed in any::<u64>()) {
        let a = DataMatrix::new(x.clone()).unwrap();
        let v = random_orthogonal(x.ncols(), &mut ChaCha8Rng::seed_from_u64(seed));
        let b = DataMatrix::new(&x * v).unwrap();
        let (da, db) = (max_pairwise_distance(&a, MaxDistMode::Exact), max_pairwise_distance(&b, MaxDistMode::Exact));
        prop_assert!((da - db).abs() <= 1e-9 * da.max(1.0));
        prop_assert!(max_pairwise_distance(&a, MaxDistMode::BboxDiagonal) >= da - 1e-12);
    }

    #[test]
    fn csv_round_trip(x in matrix(10, 5), f in 1e-6f64..1e6) {
        let a = scale_dataset(&DataMatrix::new(x).unwrap(), f).unwrap();
        let b = parse_csv(&to_csv(&a), false).unwrap();
        prop_assert_eq!(a.values(), b.values());
    }

    #[test]
    fn universal_code_is_monotone(n in 1u64..1_000_000) {
        prop_assert!(universal_int_cost(n + 1).unwrap() >= universal_int_cost(n).unwrap());
    }

    #[test]
    fn nmi_is_symmetric_bounded_and_label_free((a, b) in labels(40), shift in 0usize..50) {
        let ab = nmi(&a, &b);
        prop_assert!((ab - nmi(&b, &a)).abs() < 1e-12);
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&ab));
        prop_assert!((nmi(&relabel(&a, shift), &b) - ab).abs() < 1e-12);
        prop_assert!((nmi(&a, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pair_f1_is_label_free((a, b) in labels(40), shift in 0usize..50) {
        let f = pair_f1(&a, &b);
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert!((pair_f1(&relabel(&a, shift), &relabel(&b, shift + 1)) - f).abs() < 1e-12);
        prop_assert!((pair_f1(&a, &a) - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn model_cost_survives_row_permutation(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(120, 4, |r, c| ((r % 3) * 10 * (c % 2)) as f64 + rand::Rng::random_range(&mut rng, -1.0..1.0));
        let consts = MdlConstants::new(0.01, 50.0).unwrap();
        let layout = RandomLayout { subspaces: vec![(2, 3), (2, 1)] };
        let cfg = FitConfig { rng_seed: seed, ..Default::default() };
        let fitted = random_fit(&x, &layout, &consts, &cfg).unwrap().model;
        let mut perm: Vec<usize> = (0..x.nrows()).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut rng);
        let mut moved = fitted.clone();
        let mut inverse = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        for (s, orig) in moved.subspaces.iter_mut().zip(&fitted.subspaces) {
            s.assignments = perm.iter().map(|&old| orig.assignments[old]).collect();
            s.outliers = orig.outliers.iter().map(|&o| inverse[o]).collect();
            s.outliers.sort_unstable();
        }
        let a = model_cost(&fitted, &DataMatrix::new(x.clone()).unwrap(), &consts).unwrap().total;
        let b = model_cost(&moved, &DataMatrix::new(permuted(&x, &perm)).unwrap(), &consts).unwrap().total;
        prop_assert!((a - b).abs() <= 1e-9 * a.abs());
    }
}
