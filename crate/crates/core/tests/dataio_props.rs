use proptest::prelude::*;
use sea_core::dataio::{kfold_split, one_hot_encode, parse_libsvm, standardize, to_libsvm};
use sea_core::{Dataset, Matrix, Task};

fn values() -> impl Strategy<Value = f64> {
    prop_oneof![
        1 => Just(0.0),
        4 => -1e3..1e3f64,
        1 => (-1e6..1e6f64).prop_map(|v| v.round()),
    ]
}

fn dataset() -> impl Strategy<Value = Dataset> {
    (1usize..30, 1usize..8).prop_flat_map(|(n, d)| {
        (
            prop::collection::vec(values(), n * d),
            prop::collection::vec(values(), n),
        )
            .prop_map(move |(x, t)| {
                Dataset::new(
                    Matrix::from_vec(n, d, x).unwrap(),
                    Matrix::from_vec(n, 1, t).unwrap(),
                    Task::Regression,
                    "",
                )
                .unwrap()
            })
    })
}

proptest! {
    #[test]
    fn libsvm_round_trip(ds in dataset()) {
        let text = to_libsvm(&ds).unwrap();
        let back = parse_libsvm(&text, Some(ds.n_features())).unwrap();
        prop_assert_eq!(&back, &ds);
        prop_assert_eq!(to_libsvm(&back).unwrap(), text);
    }

    #[test]
    fn standardized_columns_have_unit_moments(ds in dataset()) {
        let (z, _) = standardize(&ds, None).unwrap();
        let n = ds.len() as f64;
        for c in 0..ds.n_features() {
            let raw = ds.features().column(c);
            if raw.iter().all(|&v| v == raw[0]) {
                continue;
            }
            let col = z.features().column(c);
            let mean = col.iter().sum::<f64>() / n;
            let std = (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
            prop_assert!(mean.abs() < 1e-10, "column {c} mean {mean}");
            prop_assert!((std - 1.0).abs() < 1e-10, "column {c} std {std}");
        }
    }

    #[test]
    fn one_hot_rows_sum_to_one(labels in prop::collection::vec(0usize..6, 1..50)) {
        let m = one_hot_encode(&labels, 6).unwrap();
        for (row, &l) in m.iter_rows().zip(&labels) {
            prop_assert_eq!(row.iter().sum::<f64>(), 1.0);
            prop_assert_eq!(row[l], 1.0);
        }
    }
}

#[test]
fn kfold_partitions_every_size_up_to_1000() {
    for n in 1..=1000usize {
        for k in [2usize, 3, 5, 10] {
            if k > n {
                assert!(kfold_split(n, k, 3).is_err());
                continue;
            }
            let split = kfold_split(n, k, n as u64).unwrap();
            assert_eq!(split.folds.len(), k);
            let mut seen = vec![false; n];
            for fold in &split.folds {
                assert!(fold.len() == n / k || fold.len() == n / k + 1);
                for &i in fold {
                    assert!(!seen[i], "index {i} assigned twice (n={n}, k={k})");
                    seen[i] = true;
                }
            }
            assert!(seen.iter().all(|&s| s), "n={n}, k={k} misses an index");
        }
    }
}

#[test]
fn kfold_depends_only_on_seed() {
    assert_eq!(
        kfold_split(57, 5, 9).unwrap(),
        kfold_split(57, 5, 9).unwrap()
    );
    assert_ne!(
        kfold_split(57, 5, 9).unwrap(),
        kfold_split(57, 5, 10).unwrap()
    );
}
