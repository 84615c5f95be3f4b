mod common;

use std::collections::{BTreeMap, BTreeSet, HashSet};

use proptest::prelude::*;
use refine_core::data::{
    load_manifest, split_dataset, write_manifest, Dataset, FeatureMatrix, ItemRecord,
};
use refine_core::pca::fit_pca;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO,
        -1e3..1e3f64,
    ]
}

fn matrix(max_rows: usize, max_cols: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1..=max_rows, 1..=max_cols)
        .prop_flat_map(|(r, c)| prop::collection::vec(prop::collection::vec(finite(), c), r))
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn feature_file_round_trip_is_bit_exact(rows in matrix(12, 9)) {
        let m = FeatureMatrix::from_rows(&rows).unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let back = FeatureMatrix::parse(buf.as_slice()).unwrap();
        prop_assert_eq!((back.rows(), back.cols()), (m.rows(), m.cols()));
        for (a, b) in back.values().iter().zip(m.values()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn manifest_round_trip(
        entries in prop::collection::btree_map("[A-Za-z0-9_./ \"é-]{1,10}", ("[A-Za-z0-9 \\\\é]{1,6}", prop::option::of("[a-z/]{1,8}\\.png")), 1..20)
    ) {
        let items: Vec<ItemRecord> = entries
            .into_iter()
            .map(|(id, (label, thumbnail))| ItemRecord { id, label, thumbnail })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.jsonl");
        write_manifest(&path, &items).unwrap();
        let back = load_manifest(&path).unwrap();
        prop_assert_eq!(back.items(), items.as_slice());
    }

    #[test]
    fn split_partitions_the_dataset(
        sizes in prop::collection::vec(2usize..8, 1..6),
        k in 0usize..2,
        v in 0usize..10,
        seed in any::<u64>(),
    ) {
        let mut items = Vec::new();
        for (l, &n) in sizes.iter().enumerate() {
            for i in 0..n {
                items.push(ItemRecord::new(format!("l{l}_{i}"), format!("l{l}")));
            }
        }
        let ds = Dataset::from_items(items).unwrap();
        let pool = ds.len() - k * sizes.len();
        let result = split_dataset(&ds, seed, k, v);
        if v > pool {
            prop_assert!(result.is_err());
            return Ok(());
        }
        let split = result.unwrap();
        prop_assert_eq!(split.test.len(), k * sizes.len());
        prop_assert_eq!(split.validation.len(), v);
        let mut all: Vec<&String> = split.test.iter().chain(&split.validation).chain(&split.retrieval_db).collect();
        prop_assert_eq!(all.len(), ds.len());
        all.sort();
        all.dedup();
        prop_assert_eq!(all.len(), ds.len());
        let mut per_label: BTreeMap<&str, usize> = BTreeMap::new();
        for id in &split.test {
            *per_label.entry(ds.label_of(id).unwrap()).or_default() += 1;
        }
        prop_assert!(per_label.values().all(|&c| c == k));
        prop_assert_eq!(split_dataset(&ds, seed, k, v).unwrap(), split);
    }

    #[test]
    fn pca_properties(rows in (3usize..20, 1usize..6).prop_flat_map(|(n, d)| prop::collection::vec(prop::collection::vec(-10.0..10.0f64, d), n))) {
        let n = rows.len();
        let d = rows[0].len();
        let m = FeatureMatrix::from_rows(&rows).unwrap();
        let k = d.min(n - 1);
        let model = fit_pca(&m, k).unwrap();

        let comps: Vec<&[f64]> = model.components().iter_rows().collect();
        for a in 0..k {
            for b in 0..k {
                let dot: f64 = comps[a].iter().zip(comps[b]).map(|(x, y)| x * y).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                prop_assert!((dot - want).abs() < 1e-9);
            }
        }
        let ev = model.explained_variance();
        prop_assert!(ev.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(ev.iter().all(|&v| v >= 0.0));

        let t = model.transform(&m).unwrap();
        for c in 0..k {
            let col: Vec<f64> = t.iter_rows().map(|r| r[c]).collect();
            let mu = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (n - 1) as f64;
            prop_assert!((var - ev[c]).abs() <= 1e-9 * ev[0].max(1.0), "component {}: {} vs {}", c, var, ev[c]);
        }

        let again = model.transform(&model.reconstruct(&t).unwrap()).unwrap();
        for (a, b) in again.values().iter().zip(t.values()) {
            prop_assert!((a - b).abs() < 1e-9);
        }

        if k == d {
            for i in 0..n {
                for j in 0..n {
                    let before = dist(&rows[i], &rows[j]);
                    let after = dist(t.row(i), t.row(j));
                    prop_assert!((before - after).abs() < 1e-9);
                }
            }
        }
    }
}

#[test]
fn pca_of_points_on_a_line() {
    let dir = [2.0, -3.0, 6.0];
    let rows: Vec<Vec<f64>> = (0..10)
        .map(|i| {
            let s = i as f64 - 3.0;
            vec![1.0 + s * dir[0], 0.5 + s * dir[1], s * dir[2]]
        })
        .collect();
    let model = fit_pca(&FeatureMatrix::from_rows(&rows).unwrap(), 3).unwrap();
    let ev = model.explained_variance();
    assert!(ev[0] > 1.0);
    assert!(ev[1].abs() < 1e-12 && ev[2].abs() < 1e-12);
    let axis = model.components().row(0);
    let norm = 7.0;
    let want = [dir[0] / norm, dir[1] / norm, dir[2] / norm];
    for (a, w) in axis.iter().zip(want) {
        assert!((a - w).abs() < 1e-12, "{axis:?}");
    }
}

#[test]
fn store_keeps_a_partition_across_random_sessions() {
    use rand::Rng;
    use refine_core::groups::GroupStore;
    let mut rng = common::rng(21);
    let mut store = GroupStore::new();
    for _ in 0..200 {
        let relevant: Vec<String> = (0..rng.random_range(0..6))
            .map(|_| format!("i{}", rng.random_range(0..60)))
            .collect();
        let matched = store.match_groups(&relevant);
        let before = store.group_count();
        store.record_session(&relevant, &matched);
        assert!(store.group_count() <= before + 1);
        let groups = store.groups();
        let mut seen = HashSet::new();
        for members in groups.values() {
            for m in members {
                assert!(seen.insert(m.clone()), "{m} in two groups");
            }
        }
        let roots: BTreeSet<&String> = groups.keys().collect();
        assert_eq!(roots.len(), store.group_count());
    }
}
