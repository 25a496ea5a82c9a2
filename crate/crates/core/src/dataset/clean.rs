use serde::{Deserialize, Serialize};

use super::FeatureTable;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Shape of the table before and after one cleaning stage. Column counts
/// exclude the target column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningStage {
    pub stage: String,
    pub rows_before: usize,
    pub rows_after: usize,
    pub columns_before: usize,
    pub columns_after: usize,
    pub dropped_column_names: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningLog {
    pub stages: Vec<CleaningStage>,
}

impl CleaningLog {
    fn single<T: Scalar>(stage: &str, before: &FeatureTable<T>, after: &FeatureTable<T>, dropped: Vec<String>) -> Self {
        Self {
            stages: vec![CleaningStage {
                stage: stage.to_string(),
                rows_before: before.n_rows(),
                rows_after: after.n_rows(),
                columns_before: before.n_columns() - 1,
                columns_after: after.n_columns() - 1,
                dropped_column_names: dropped,
            }],
        }
    }

    pub fn append(&mut self, other: CleaningLog) {
        self.stages.extend(other.stages);
    }

    /// True when consecutive stages chain (after of one = before of next)
    /// and no stage grows the table.
    pub fn is_consistent(&self) -> bool {
        let monotone = self
            .stages
            .iter()
            .all(|s| s.rows_after <= s.rows_before && s.columns_after <= s.columns_before);
        let chained = self.stages.windows(2).all(|w| {
            w[0].rows_after == w[1].rows_before && w[0].columns_after == w[1].columns_before
        });
        monotone && chained
    }
}

/// Keeps rows whose value in `column` is one of `allowed`. Missing cells
/// never match.
pub fn filter_rows<T: Scalar>(
    table: &FeatureTable<T>,
    column: &str,
    allowed: &[T],
) -> Result<(FeatureTable<T>, CleaningLog)> {
    let col = table.column(column)?;
    let keep: Vec<usize> = col
        .values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_some_and(|v| allowed.contains(&v)))
        .map(|(i, _)| i)
        .collect();
    let out = table.select_rows(&keep);
    let log = CleaningLog::single("filter_rows", table, &out, Vec::new());
    Ok((out, log))
}

/// Drops every non-target column whose missing fraction exceeds
/// `max_missing_fraction`.
pub fn drop_sparse_columns<T: Scalar>(
    table: &FeatureTable<T>,
    max_missing_fraction: f64,
) -> Result<(FeatureTable<T>, CleaningLog)> {
    if !(0.0..=1.0).contains(&max_missing_fraction) {
        return Err(Error::invalid(format!(
            "max_missing_fraction must lie in [0, 1], got {max_missing_fraction}"
        )));
    }
    let n = table.n_rows().max(1) as f64;
    let target = table.target_name().to_string();
    let mut dropped = Vec::new();
    let out = table.retain_columns(|c| {
        if c.name == target {
            return true;
        }
        let keep = c.missing_count() as f64 / n <= max_missing_fraction;
        if !keep {
            dropped.push(c.name.clone());
        }
        keep
    });
    let log = CleaningLog::single("drop_sparse_columns", table, &out, dropped);
    Ok((out, log))
}

/// Removes rows with any missing cell. Errors if nothing survives.
pub fn drop_incomplete_rows<T: Scalar>(table: &FeatureTable<T>) -> Result<(FeatureTable<T>, CleaningLog)> {
    let keep: Vec<usize> = (0..table.n_rows())
        .filter(|&i| table.columns().iter().all(|c| c.values[i].is_some()))
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptyDataset(
            "every row has at least one missing value".into(),
        ));
    }
    let out = table.select_rows(&keep);
    let log = CleaningLog::single("drop_incomplete_rows", table, &out, Vec::new());
    Ok((out, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Column;

    fn table(cols: Vec<(&str, Vec<Option<f64>>)>) -> FeatureTable<f64> {
        FeatureTable::new(cols.into_iter().map(|(n, v)| Column::new(n, v)).collect(), "y").unwrap()
    }

    #[test]
    fn filter_keeps_matching_rows() {
        let t = table(vec![
            ("road", vec![Some(1.), Some(2.), Some(1.), Some(3.), None]),
            ("y", vec![Some(1.), Some(2.), Some(3.), Some(4.), Some(5.)]),
        ]);
        let (out, log) = filter_rows(&t, "road", &[1.0]).unwrap();
        assert_eq!(out.n_rows(), 2);
        assert_eq!(out.target().unwrap(), vec![1., 3.]);
        assert_eq!(log.stages[0].rows_before, 5);
        assert_eq!(log.stages[0].rows_after, 2);
    }

    #[test]
    fn filter_with_full_allowed_set_is_identity() {
        let t = table(vec![
            ("road", vec![Some(1.), Some(2.)]),
            ("y", vec![Some(1.), Some(2.)]),
        ]);
        let (out, _) = filter_rows(&t, "road", &[1.0, 2.0]).unwrap();
        assert_eq!(out, t);
    }

    #[test]
    fn filter_unknown_column() {
        let t = table(vec![("y", vec![Some(1.)])]);
        assert!(filter_rows(&t, "nope", &[1.0]).is_err());
    }

    #[test]
    fn sparse_column_dropped_target_kept() {
        // 3 of 10 missing = 30% > 25%
        let mut a = vec![Some(1.0); 10];
        a[0] = None;
        a[1] = None;
        a[2] = None;
        let mut y = vec![Some(1.0); 10];
        y[0] = None;
        y[1] = None;
        y[2] = None;
        y[3] = None;
        let t = table(vec![("a", a), ("b", vec![Some(2.0); 10]), ("y", y)]);
        let (out, log) = drop_sparse_columns(&t, 0.25).unwrap();
        assert_eq!(out.column_names(), vec!["b", "y"]);
        assert_eq!(log.stages[0].dropped_column_names, vec!["a".to_string()]);
        assert_eq!((log.stages[0].columns_before, log.stages[0].columns_after), (2, 1));
    }

    #[test]
    fn complete_table_unchanged() {
        let t = table(vec![("a", vec![Some(1.), Some(2.)]), ("y", vec![Some(3.), Some(4.)])]);
        assert_eq!(drop_sparse_columns(&t, 0.25).unwrap().0, t);
        assert_eq!(drop_incomplete_rows(&t).unwrap().0, t);
    }

    #[test]
    fn incomplete_rows_removed() {
        let t = table(vec![
            ("a", vec![Some(1.), None, Some(3.), Some(4.)]),
            ("y", vec![Some(1.), Some(2.), Some(3.), Some(4.)]),
        ]);
        let (out, log) = drop_incomplete_rows(&t).unwrap();
        assert_eq!(out.n_rows(), 3);
        assert_eq!(out.missing_cells(), 0);
        assert!(log.is_consistent());
    }

    #[test]
    fn all_rows_incomplete_is_error() {
        let t = table(vec![("a", vec![None, None]), ("y", vec![Some(1.), Some(2.)])]);
        assert!(matches!(drop_incomplete_rows(&t), Err(Error::EmptyDataset(_))));
    }

    #[test]
    fn threshold_out_of_range() {
        let t = table(vec![("y", vec![Some(1.)])]);
        assert!(drop_sparse_columns(&t, 1.5).is_err());
    }
}
