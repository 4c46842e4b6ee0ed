use proptest::prelude::*;
use spoken_digits::eval::{accuracy, evaluate, per_class_metrics, stratified_folds, ConfusionMatrix};
use spoken_digits::features::FeatureMap;
use spoken_digits::model::Sample;

fn matrix(k: usize) -> impl Strategy<Value = Vec<Vec<u64>>> {
    prop::collection::vec(prop::collection::vec(0u64..20, k), k)
}

fn permuted(counts: &[Vec<u64>], perm: &[usize]) -> Vec<Vec<u64>> {
    let k = counts.len();
    let mut out = vec![vec![0; k]; k];
    for i in 0..k {
        for j in 0..k {
            out[perm[i]][perm[j]] = counts[i][j];
        }
    }
    out
}

proptest! {
    #[test]
    fn accuracy_is_relabel_invariant(
        (counts, perm) in (2usize..8).prop_flat_map(|k| (matrix(k), Just((0..k).collect::<Vec<_>>()).prop_shuffle()))
    ) {
        prop_assume!(counts.iter().flatten().sum::<u64>() > 0);
        let a = ConfusionMatrix::from_counts(counts.clone()).unwrap();
        let b = ConfusionMatrix::from_counts(permuted(&counts, &perm)).unwrap();
        prop_assert_eq!(accuracy(&a).unwrap(), accuracy(&b).unwrap());
        let (ma, mb) = (per_class_metrics(&a), per_class_metrics(&b));
        for (c, m) in ma.iter().enumerate() {
            prop_assert_eq!(m, &mb[perm[c]]);
        }
    }

    #[test]
    fn balanced_mean_recall_equals_accuracy(
        k in 2usize..8,
        per_class in 1u64..30,
        seed_rows in prop::collection::vec(prop::collection::vec(0u64..100, 8), 8),
    ) {
        // each row redistributes exactly per_class samples
        let counts: Vec<Vec<u64>> = (0..k)
            .map(|i| {
                let w: Vec<u64> = seed_rows[i][..k].iter().map(|v| v + 1).collect();
                let total: u64 = w.iter().sum();
                let mut row: Vec<u64> = w.iter().map(|v| v * per_class / total).collect();
                row[i] += per_class - row.iter().sum::<u64>();
                row
            })
            .collect();
        let cm = ConfusionMatrix::from_counts(counts).unwrap();
        let mean = per_class_metrics(&cm).iter().map(|m| m.accuracy).sum::<f64>() / k as f64;
        prop_assert!((mean - accuracy(&cm).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn folds_partition_indices(labels in prop::collection::vec(0usize..4, 40..120), k in 2usize..6, seed in 0u64..1000) {
        let mut per_class = [0usize; 4];
        labels.iter().for_each(|&l| per_class[l] += 1);
        prop_assume!(per_class.iter().all(|&n| n >= k));
        let folds = stratified_folds(&labels, k, seed).unwrap();
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }
}

#[test]
fn row_sums_match_test_counts() {
    let map = |v: f64| FeatureMap::new(ndarray::Array2::from_elem((39, 39), v)).unwrap();
    let test: Vec<Sample> = (0..37).map(|i| Sample::new(map(i as f64), i % 10)).collect();
    let classifier = |m: &FeatureMap| (m.values()[[0, 0]] as usize * 7) % 10;
    let report = evaluate(&classifier, &test, 10).unwrap();
    assert_eq!(report.confusion.total(), 37);
    for c in 0..10 {
        let expected = test.iter().filter(|s| s.label == c).count() as u64;
        assert_eq!(report.confusion.row_sum(c), expected);
    }
}
