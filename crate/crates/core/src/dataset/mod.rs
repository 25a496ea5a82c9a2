//! Feature tables: CSV loading, the cleaning stages, log transform of the
//! target, train/test split and the synthetic generator.

mod clean;
mod synth;

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::seed;

pub use clean::{drop_incomplete_rows, drop_sparse_columns, filter_rows, CleaningLog, CleaningStage};
pub use synth::{add_sparse_columns, inject_missing, synth_generate, synth_generate_with, SynthConfig};

/// Default marker for missing cells besides the empty string.
pub const DEFAULT_MISSING_MARKER: &str = "NA";

/// Scale the target column is currently expressed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TargetScale {
    #[default]
    Raw,
    Log,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column<T> {
    pub name: String,
    pub values: Vec<Option<T>>,
}

impl<T: Scalar> Column<T> {
    pub fn new(name: impl Into<String>, values: Vec<Option<T>>) -> Self {
        Self {
            name: name.into(),
            values,
        }
    }

    pub fn complete(name: impl Into<String>, values: Vec<T>) -> Self {
        Self::new(name, values.into_iter().map(Some).collect())
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }
}

/// Observation rows with named numeric columns and a distinguished target.
///
/// Columns listed as auxiliary (identifiers, coordinates carried through a
/// transform) are neither features nor target.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable<T> {
    n_rows: usize,
    columns: Vec<Column<T>>,
    target_name: String,
    coord_names: Option<(String, String)>,
    auxiliary: Vec<String>,
    target_scale: TargetScale,
}

impl<T: Scalar> FeatureTable<T> {
    pub fn new(columns: Vec<Column<T>>, target_name: impl Into<String>) -> Result<Self> {
        let target_name = target_name.into();
        let n_rows = columns.first().map_or(0, |c| c.values.len());
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::DuplicateColumn(c.name.clone()));
            }
            if c.values.len() != n_rows {
                return Err(Error::LengthMismatch {
                    left: c.values.len(),
                    right: n_rows,
                });
            }
        }
        if !seen.contains(target_name.as_str()) {
            return Err(Error::MissingColumn(target_name));
        }
        Ok(Self {
            n_rows,
            columns,
            target_name,
            coord_names: None,
            auxiliary: Vec::new(),
            target_scale: TargetScale::Raw,
        })
    }

    pub fn with_coords(mut self, x: impl Into<String>, y: impl Into<String>) -> Result<Self> {
        let (x, y) = (x.into(), y.into());
        for n in [&x, &y] {
            if self.column_index(n).is_none() {
                return Err(Error::MissingColumn(n.clone()));
            }
        }
        self.coord_names = Some((x, y));
        Ok(self)
    }

    /// Marks columns as auxiliary (excluded from [`feature_names`](Self::feature_names)).
    pub fn with_auxiliary<I, S>(mut self, names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        for n in names {
            let n = n.into();
            if self.column_index(&n).is_none() {
                return Err(Error::MissingColumn(n));
            }
            if n == self.target_name {
                return Err(Error::invalid("target cannot be auxiliary"));
            }
            if !self.auxiliary.contains(&n) {
                self.auxiliary.push(n);
            }
        }
        Ok(self)
    }

    pub fn with_target_scale(mut self, scale: TargetScale) -> Self {
        self.target_scale = scale;
        self
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column<T>] {
        &self.columns
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Result<&Column<T>> {
        self.column_index(name)
            .map(|i| &self.columns[i])
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    pub fn coord_names(&self) -> Option<(&str, &str)> {
        self.coord_names
            .as_ref()
            .map(|(x, y)| (x.as_str(), y.as_str()))
    }

    pub fn auxiliary(&self) -> &[String] {
        &self.auxiliary
    }

    pub fn target_scale(&self) -> TargetScale {
        self.target_scale
    }

    /// Feature columns: everything except the target and auxiliary columns.
    pub fn feature_names(&self) -> Vec<String> {
        self.columns
            .iter()
            .filter(|c| c.name != self.target_name && !self.auxiliary.contains(&c.name))
            .map(|c| c.name.clone())
            .collect()
    }

    pub fn missing_cells(&self) -> usize {
        self.columns.iter().map(Column::missing_count).sum()
    }

    /// Complete values of a column; errors if any cell is missing.
    pub fn values(&self, name: &str) -> Result<Vec<T>> {
        let col = self.column(name)?;
        col.values
            .iter()
            .enumerate()
            .map(|(row, v)| {
                v.ok_or_else(|| Error::Degenerate(format!("missing value in `{name}` at row {row}")))
            })
            .collect()
    }

    pub fn target(&self) -> Result<Vec<T>> {
        self.values(&self.target_name)
    }

    /// Dense matrix of the named columns, in the given order.
    pub fn matrix(&self, names: &[String]) -> Result<Matrix<T>> {
        let cols = names
            .iter()
            .map(|n| self.values(n))
            .collect::<Result<Vec<_>>>()?;
        if cols.is_empty() {
            return Matrix::from_row_major(self.n_rows, 0, Vec::new());
        }
        Matrix::from_columns(&cols)
    }

    /// Coordinates of each row, if the table carries them.
    pub fn coords(&self) -> Option<Vec<(T, T)>> {
        let (x, y) = self.coord_names()?;
        let xs = self.values(x).ok()?;
        let ys = self.values(y).ok()?;
        Some(xs.into_iter().zip(ys).collect())
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let columns = self
            .columns
            .iter()
            .map(|c| Column::new(c.name.clone(), idx.iter().map(|&i| c.values[i]).collect()))
            .collect();
        Self {
            n_rows: idx.len(),
            columns,
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> Self {
        Self {
            n_rows: 0,
            columns: Vec::new(),
            target_name: self.target_name.clone(),
            coord_names: self.coord_names.clone(),
            auxiliary: self.auxiliary.clone(),
            target_scale: self.target_scale,
        }
    }

    /// Keeps only the columns for which `keep` holds, preserving metadata for
    /// the survivors.
    pub(crate) fn retain_columns(&self, mut keep: impl FnMut(&Column<T>) -> bool) -> Self {
        let columns: Vec<Column<T>> = self.columns.iter().filter(|c| keep(c)).cloned().collect();
        let present = |n: &str| columns.iter().any(|c| c.name == n);
        let coord_names = self
            .coord_names
            .clone()
            .filter(|(x, y)| present(x) && present(y));
        let auxiliary = self.auxiliary.iter().filter(|a| present(a)).cloned().collect();
        Self {
            n_rows: self.n_rows,
            columns,
            target_name: self.target_name.clone(),
            coord_names,
            auxiliary,
            target_scale: self.target_scale,
        }
    }

    /// Adds or replaces a column.
    pub fn set_column(&mut self, column: Column<T>) -> Result<()> {
        if column.values.len() != self.n_rows {
            return Err(Error::LengthMismatch {
                left: column.values.len(),
                right: self.n_rows,
            });
        }
        match self.column_index(&column.name) {
            Some(i) => self.columns[i] = column,
            None => self.columns.push(column),
        }
        Ok(())
    }

    /// Writes the table as CSV; missing cells are written empty.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.columns.iter().map(|c| c.name.as_str()))?;
        let mut record = Vec::with_capacity(self.columns.len());
        for i in 0..self.n_rows {
            record.clear();
            for c in &self.columns {
                record.push(match c.values[i] {
                    Some(v) => v.to_string(),
                    None => String::new(),
                });
            }
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Parses a CSV table. Empty cells and cells equal to `missing_marker` are
/// missing; every other cell must parse as a real number.
pub fn read_table<T: Scalar, R: Read>(reader: R, target: &str, missing_marker: &str) -> Result<FeatureTable<T>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut values: Vec<Vec<Option<T>>> = vec![Vec::new(); headers.len()];
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::DimensionMismatch {
                expected: headers.len(),
                got: record.len(),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            let v = if cell.is_empty() || cell == missing_marker {
                None
            } else {
                Some(cell.parse::<T>().map_err(|_| Error::Parse {
                    column: headers[j].clone(),
                    row,
                    value: cell.to_string(),
                })?)
            };
            values[j].push(v);
        }
    }
    let columns = headers
        .into_iter()
        .zip(values)
        .map(|(n, v)| Column::new(n, v))
        .collect();
    FeatureTable::new(columns, target)
}

pub fn load_table<T: Scalar>(path: impl AsRef<Path>, target: &str, missing_marker: &str) -> Result<FeatureTable<T>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_table(std::io::BufReader::new(file), target, missing_marker)
}

/// Replaces the target with its natural log. Fails on the first
/// non-positive value, reporting its row.
pub fn log_transform_target<T: Scalar>(table: &FeatureTable<T>) -> Result<FeatureTable<T>> {
    if table.target_scale == TargetScale::Log {
        return Err(Error::invalid("target is already log-transformed"));
    }
    let idx = table
        .column_index(&table.target_name)
        .ok_or_else(|| Error::MissingColumn(table.target_name.clone()))?;
    let mut out = table.clone();
    let col = &mut out.columns[idx];
    for (row, v) in col.values.iter_mut().enumerate() {
        if let Some(y) = v {
            if *y <= T::zero() || !y.is_finite() {
                return Err(Error::NonPositiveTarget { row });
            }
            *y = y.ln();
        }
    }
    out.target_scale = TargetScale::Log;
    Ok(out)
}

/// Inverse of [`log_transform_target`].
pub fn exp_transform_target<T: Scalar>(table: &FeatureTable<T>) -> Result<FeatureTable<T>> {
    if table.target_scale == TargetScale::Raw {
        return Ok(table.clone());
    }
    let idx = table
        .column_index(&table.target_name)
        .ok_or_else(|| Error::MissingColumn(table.target_name.clone()))?;
    let mut out = table.clone();
    for v in out.columns[idx].values.iter_mut().flatten() {
        *v = v.exp();
    }
    out.target_scale = TargetScale::Raw;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train_fraction: f64, seed: u64) -> Result<Self> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::invalid(format!(
                "train_fraction must lie in (0, 1), got {train_fraction}"
            )));
        }
        Ok(Self { train_fraction, seed })
    }
}

/// Seeded shuffle followed by a prefix split. The train partition holds
/// `round(train_fraction * n)` rows.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    SplitSpec::new(spec.train_fraction, spec.seed)?;
    if n < 2 {
        return Err(Error::EmptyDataset(format!("cannot split {n} rows")));
    }
    let n_train = (spec.train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::Degenerate(format!(
            "split of {n} rows at {} leaves an empty partition",
            spec.train_fraction
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng_from(spec.seed));
    let test = idx.split_off(n_train);
    Ok((idx, test))
}

pub fn split<T: Scalar>(table: &FeatureTable<T>, spec: &SplitSpec) -> Result<(FeatureTable<T>, FeatureTable<T>)> {
    let (train, test) = split_indices(table.n_rows(), spec)?;
    Ok((table.select_rows(&train), table.select_rows(&test)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv_table(text: &str, target: &str) -> Result<FeatureTable<f64>> {
        read_table(text.as_bytes(), target, DEFAULT_MISSING_MARKER)
    }

    #[test]
    fn empty_cell_becomes_missing() {
        let t = csv_table("a,b,y\n1,2,3\n4,,6\n7,8,9\n", "y").unwrap();
        assert_eq!(t.n_rows(), 3);
        assert_eq!(t.missing_cells(), 1);
        assert_eq!(t.column("b").unwrap().values[1], None);
    }

    #[test]
    fn na_marker_becomes_missing() {
        let t = csv_table("a,y\nNA,1\n2,3\n", "y").unwrap();
        assert_eq!(t.missing_cells(), 1);
    }

    #[test]
    fn missing_target_is_an_error() {
        assert!(matches!(csv_table("a,b\n1,2\n", "y"), Err(Error::MissingColumn(_))));
    }

    #[test]
    fn unparseable_cell_is_an_error() {
        let err = csv_table("a,y\nfoo,1\n", "y").unwrap_err();
        assert!(matches!(err, Error::Parse { row: 0, .. }));
    }

    #[test]
    fn duplicate_columns_rejected() {
        assert!(matches!(csv_table("a,a,y\n1,2,3\n", "y"), Err(Error::DuplicateColumn(_))));
    }

    #[test]
    fn log_identities() {
        let t = csv_table(&format!("y\n1\n{}\n", std::f64::consts::E), "y").unwrap();
        let l = log_transform_target(&t).unwrap();
        let y = l.target().unwrap();
        assert_eq!(y[0], 0.0);
        assert!((y[1] - 1.0).abs() < 1e-15);
        assert_eq!(l.target_scale(), TargetScale::Log);
    }

    #[test]
    fn log_round_trip() {
        let raw: [f64; 4] = [0.5, 3.0, 1234.5, 98765.4321];
        let t = FeatureTable::new(vec![Column::complete("y", raw.to_vec())], "y").unwrap();
        let back = exp_transform_target(&log_transform_target(&t).unwrap()).unwrap();
        for (a, b) in raw.iter().zip(back.target().unwrap()) {
            assert!(((a - b) / a).abs() < 1e-12);
        }
    }

    #[test]
    fn non_positive_target_reports_row() {
        let t = csv_table("y\n3\n0\n", "y").unwrap();
        assert!(matches!(log_transform_target(&t), Err(Error::NonPositiveTarget { row: 1 })));
    }

    #[test]
    fn split_sizes() {
        let (tr, te) = split_indices(10, &SplitSpec::new(0.8, 1).unwrap()).unwrap();
        assert_eq!((tr.len(), te.len()), (8, 2));
        let (tr, te) = split_indices(2247, &SplitSpec::new(0.8, 1).unwrap()).unwrap();
        assert_eq!((tr.len(), te.len()), (1798, 449));
    }

    #[test]
    fn split_is_deterministic_and_exact() {
        let spec = SplitSpec::new(0.7, 99).unwrap();
        let a = split_indices(57, &spec).unwrap();
        let b = split_indices(57, &spec).unwrap();
        assert_eq!(a, b);
        let mut all: Vec<usize> = a.0.iter().chain(a.1.iter()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..57).collect::<Vec<_>>());
    }

    #[test]
    fn degenerate_split_rejected() {
        assert!(split_indices(2, &SplitSpec { train_fraction: 0.1, seed: 0 }).is_err());
        assert!(split_indices(1, &SplitSpec { train_fraction: 0.5, seed: 0 }).is_err());
        assert!(SplitSpec::new(1.0, 0).is_err());
    }
}
