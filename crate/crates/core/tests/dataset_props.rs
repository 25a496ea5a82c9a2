use aadt_qrf::dataset::{
    drop_incomplete_rows, drop_sparse_columns, exp_transform_target, filter_rows, load_table, log_transform_target,
    read_table, split_indices, synth_generate, Column, FeatureTable, SplitSpec, TargetScale,
};
use aadt_qrf::forest::{fit_forest, ForestParams};
use aadt_qrf::metrics::point_metrics;
use aadt_qrf::pca::GroupManifest;
use proptest::prelude::*;

fn table_from(cells: &[Vec<Option<i32>>], target: &[u32]) -> FeatureTable<f64> {
    let d = cells.first().map_or(0, Vec::len);
    let mut cols: Vec<Column<f64>> = (0..d)
        .map(|j| Column::new(format!("c{j}"), cells.iter().map(|r| r[j].map(f64::from)).collect()))
        .collect();
    cols.push(Column::complete("aadt", target.iter().map(|&t| f64::from(t) + 1.0).collect()));
    FeatureTable::new(cols, "aadt").unwrap()
}

fn rows_of(t: &FeatureTable<f64>) -> Vec<Vec<Option<u64>>> {
    let mut rows: Vec<Vec<Option<u64>>> = (0..t.n_rows())
        .map(|i| t.columns().iter().map(|c| c.values[i].map(f64::to_bits)).collect())
        .collect();
    rows.sort();
    rows
}

fn cells_strategy() -> impl Strategy<Value = (Vec<Vec<Option<i32>>>, Vec<u32>)> {
    (1usize..30, 1usize..6).prop_flat_map(|(n, d)| {
        (
            prop::collection::vec(prop::collection::vec(prop::option::weighted(0.8, -20i32..20), d), n),
            prop::collection::vec(0u32..1000, n),
        )
    })
}

proptest! {
    #[test]
    fn cleaning_leaves_no_missing_cells_and_reconciles((cells, target) in cells_strategy(), thr in 0.0..1.0f64) {
        let t = table_from(&cells, &target);
        let (a, la) = drop_sparse_columns(&t, thr).unwrap();
        let Ok((b, lb)) = drop_incomplete_rows(&a) else {
            prop_assert!((0..a.n_rows()).all(|i| a.columns().iter().any(|c| c.values[i].is_none())));
            return Ok(());
        };
        prop_assert_eq!(b.missing_cells(), 0);
        prop_assert!(la.is_consistent() && lb.is_consistent());
        let s = &lb.stages[0];
        prop_assert_eq!((s.rows_after, s.columns_after), (b.n_rows(), b.n_columns() - 1));
        prop_assert_eq!((la.stages[0].rows_before, la.stages[0].columns_before), (t.n_rows(), t.n_columns() - 1));
    }

    #[test]
    fn cleaning_commutes_with_row_order((cells, target) in cells_strategy(), rot in 0usize..30) {
        let t = table_from(&cells, &target);
        let n = t.n_rows();
        let order: Vec<usize> = (0..n).map(|i| (i + rot) % n).rev().collect();
        let tp = t.select_rows(&order);
        let clean = |t: &FeatureTable<f64>| drop_incomplete_rows(&drop_sparse_columns(t, 0.25).unwrap().0).map(|r| r.0);
        let (Ok(c), Ok(cp)) = (clean(&t), clean(&tp)) else {
            prop_assert!(clean(&t).is_err() && clean(&tp).is_err());
            return Ok(());
        };
        prop_assert_eq!(c.column_names(), cp.column_names());
        prop_assert_eq!(rows_of(&c), rows_of(&cp));
    }

    #[test]
    fn split_is_a_bijection(n in 2usize..500, f in 0.05..0.95f64, seed in 0u64..1000) {
        let k = (f * n as f64).round() as usize;
        let r = split_indices(n, &SplitSpec::new(f, seed).unwrap());
        if k == 0 || k == n {
            prop_assert!(r.is_err());
            return Ok(());
        }
        let (tr, te) = r.unwrap();
        let mut all: Vec<usize> = tr.iter().chain(&te).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert_eq!(tr.len(), k);
    }

    #[test]
    fn csv_round_trip((cells, target) in cells_strategy()) {
        let t = table_from(&cells, &target);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = read_table::<f64, _>(buf.as_slice(), "aadt", "NA").unwrap();
        prop_assert_eq!(back.columns(), t.columns());
    }

    #[test]
    fn log_transform_round_trips(target in prop::collection::vec(1e-3..1e6f64, 1..50)) {
        let t = FeatureTable::new(vec![Column::complete("aadt", target.clone())], "aadt").unwrap();
        let l = log_transform_target(&t).unwrap();
        prop_assert_eq!(l.target_scale(), TargetScale::Log);
        let back = exp_transform_target(&l).unwrap().target().unwrap();
        for (a, b) in back.iter().zip(&target) {
            prop_assert!((a - b).abs() <= 1e-12 * b);
        }
    }
}

#[test]
fn cleaning_examples() {
    let t = table_from(
        &[vec![Some(1), Some(2)], vec![Some(3), None], vec![Some(5), Some(6)], vec![Some(1), Some(8)], vec![Some(9), Some(1)]],
        &[1, 2, 3, 4, 5],
    );
    let (f, log) = filter_rows(&t, "c0", &[1.0]).unwrap();
    assert_eq!(f.n_rows(), 2);
    assert!(log.is_consistent());
    let (c, _) = drop_incomplete_rows(&t.select_rows(&[0, 1, 2, 3])).unwrap();
    assert_eq!(c.n_rows(), 3);
    // c1 is 20% missing: kept at 0.25, dropped at 0.1
    assert_eq!(drop_sparse_columns(&t, 0.25).unwrap().0.n_columns(), 3);
    assert_eq!(drop_sparse_columns(&t, 0.1).unwrap().0.n_columns(), 2);
    assert!(log_transform_target(&table_from(&[vec![Some(1)]], &[0])).is_ok());
    let zero = FeatureTable::new(vec![Column::complete("aadt", vec![0.0])], "aadt").unwrap();
    assert!(log_transform_target(&zero).is_err());
}

#[test]
fn split_of_2247_rows() {
    let (tr, te) = split_indices(2247, &SplitSpec::new(0.8, 1).unwrap()).unwrap();
    assert_eq!((tr.len(), te.len()), (1798, 449));
}

#[test]
fn synthetic_tables_are_deterministic_and_grouped() {
    let manifest = GroupManifest::uniform(3, 4);
    let a = synth_generate::<f64>(400, &manifest, 11, 0.5).unwrap();
    let b = synth_generate::<f64>(400, &manifest, 11, 0.5).unwrap();
    assert_eq!(a, b);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    a.save(&path).unwrap();
    let back = load_table::<f64>(&path, "aadt", "NA").unwrap();
    assert_eq!(back.columns(), a.columns());
    for (_, feats) in manifest.iter() {
        let cols: Vec<Vec<f64>> = feats.iter().map(|f| a.values(f).unwrap()).collect();
        let mut s = 0.0;
        let mut k = 0;
        for i in 0..cols.len() {
            for j in i + 1..cols.len() {
                s += corr(&cols[i], &cols[j]).abs();
                k += 1;
            }
        }
        assert!(s / k as f64 >= 0.5, "mean |corr| {}", s / k as f64);
    }
    assert!(a.target().unwrap().iter().all(|&v| v > 0.0));
}

#[test]
fn noise_free_target_is_learnable() {
    let manifest = GroupManifest::uniform(3, 4);
    let t = log_transform_target(&synth_generate::<f64>(800, &manifest, 5, 0.0).unwrap()).unwrap();
    let (tr, te) = split_indices(t.n_rows(), &SplitSpec::new(0.8, 2).unwrap()).unwrap();
    let names = t.feature_names();
    let (a, b) = (t.select_rows(&tr), t.select_rows(&te));
    let params = ForestParams { n_estimators: 60, seed: 3, ..ForestParams::default() };
    let f = fit_forest(&a.matrix(&names).unwrap(), &a.target().unwrap(), &params).unwrap();
    let pred = f.predict_mean_batch(&b.matrix(&names).unwrap()).unwrap();
    let r2 = point_metrics(&b.target().unwrap(), &pred).unwrap().pseudo_r2;
    assert!(r2 > 0.95, "pseudo-R2 {r2}");
}

fn corr(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
