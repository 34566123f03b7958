//! Tabular data ingestion, synthetic blobs and deterministic stratified splits.
//!
//! Labels are stored as `±1.0`. Numeric CSV columns are standardized with
//! population statistics of the rows the preprocessor was fitted on;
//! categorical columns are one-hot encoded in schema order.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{rng_from_seed, Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positive_label: Option<String>,
}

impl ColumnSchema {
    pub fn numeric(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Numeric,
            categories: None,
            positive_label: None,
        }
    }

    pub fn categorical(name: impl Into<String>, categories: &[&str]) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Categorical,
            categories: Some(categories.iter().map(|c| c.to_string()).collect()),
            positive_label: None,
        }
    }

    pub fn label(name: impl Into<String>, positive: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Label,
            categories: None,
            positive_label: Some(positive.into()),
        }
    }
}

/// Checks the schema invariants: one label column, non-empty duplicate-free categories.
pub fn validate_schema(schema: &[ColumnSchema]) -> Result<()> {
    let labels = schema
        .iter()
        .filter(|c| c.kind == ColumnKind::Label)
        .count();
    if labels != 1 {
        return Err(Error::Schema(format!(
            "expected exactly one label column, found {labels}"
        )));
    }
    let mut names = HashSet::new();
    for col in schema {
        if !names.insert(col.name.as_str()) {
            return Err(Error::Schema(format!("duplicate column `{}`", col.name)));
        }
        match col.kind {
            ColumnKind::Categorical => {
                let cats = col.categories.as_ref().ok_or_else(|| {
                    Error::Schema(format!(
                        "categorical column `{}` has no categories",
                        col.name
                    ))
                })?;
                if cats.is_empty() {
                    return Err(Error::Schema(format!(
                        "categorical column `{}` has no categories",
                        col.name
                    )));
                }
                let unique: HashSet<_> = cats.iter().collect();
                if unique.len() != cats.len() {
                    return Err(Error::Schema(format!(
                        "duplicate category in column `{}`",
                        col.name
                    )));
                }
            }
            ColumnKind::Label => {
                if col.positive_label.is_none() {
                    return Err(Error::Schema(format!(
                        "label column `{}` lacks positive_label",
                        col.name
                    )));
                }
            }
            ColumnKind::Numeric => {}
        }
    }
    Ok(())
}

/// Mean/std pair applied to one numeric source column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub column: String,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_per_class: usize,
    pub d: usize,
    pub class_separation: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(
        n_per_class: usize,
        d: usize,
        class_separation: f64,
        noise_std: f64,
        seed: u64,
    ) -> Self {
        Self {
            n_per_class,
            d,
            class_separation,
            noise_std,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_per_class < 1 {
            return Err(Error::param("n_per_class", "must be at least 1"));
        }
        if self.d < 1 {
            return Err(Error::param("d", "must be at least 1"));
        }
        if !(self.noise_std > 0.0 && self.noise_std.is_finite()) {
            return Err(Error::param("noise_std", "must be positive and finite"));
        }
        if !self.class_separation.is_finite() {
            return Err(Error::param("class_separation", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `n × d` feature matrix.
    pub x: Matrix,
    /// Labels in `{-1, +1}`.
    pub y: Vector,
    pub schema: Vec<ColumnSchema>,
    pub standardization: Vec<Standardization>,
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vector) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                actual: y.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("x", "contains NaN or infinite entries"));
        }
        if y.iter().any(|&v| v != 1.0 && v != -1.0) {
            return Err(Error::param("y", "labels must be +1 or -1"));
        }
        let d = x.ncols();
        let mut schema: Vec<ColumnSchema> = (0..d)
            .map(|j| ColumnSchema::numeric(format!("x{j}")))
            .collect();
        schema.push(ColumnSchema::label("y", "1"));
        Ok(Self {
            feature_names: (0..d).map(|j| format!("x{j}")).collect(),
            x,
            y,
            schema,
            standardization: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn row(&self, i: usize) -> Vector {
        self.x.row(i).transpose()
    }

    /// Rows selected by `idx`, in the given order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let x = Matrix::from_fn(idx.len(), self.dim(), |i, j| self.x[(idx[i], j)]);
        let y = Vector::from_fn(idx.len(), |i, _| self.y[idx[i]]);
        Dataset {
            x,
            y,
            schema: self.schema.clone(),
            standardization: self.standardization.clone(),
            feature_names: self.feature_names.clone(),
        }
    }

    pub fn count_label(&self, label: f64) -> usize {
        self.y.iter().filter(|&&v| v == label).count()
    }
}

/// Fitted CSV preprocessing: column lookup, standardization stats and one-hot layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessor {
    schema: Vec<ColumnSchema>,
    header_index: Vec<usize>,
    stats: Vec<Option<Standardization>>,
}

impl Preprocessor {
    fn new(schema: &[ColumnSchema], headers: &csv::StringRecord) -> Result<Self> {
        validate_schema(schema)?;
        let mut header_index = Vec::with_capacity(schema.len());
        for col in schema {
            let pos = headers
                .iter()
                .position(|h| h.trim() == col.name)
                .ok_or_else(|| Error::MissingColumn(col.name.clone()))?;
            header_index.push(pos);
        }
        Ok(Self {
            schema: schema.to_vec(),
            header_index,
            stats: vec![None; schema.len()],
        })
    }

    fn cell<'a>(&self, record: &'a csv::StringRecord, col: usize) -> &'a str {
        record.get(self.header_index[col]).unwrap_or("").trim()
    }

    fn parse_numeric(&self, record: &csv::StringRecord, col: usize, row: usize) -> Result<f64> {
        let raw = self.cell(record, col);
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(Error::UnparseableCell {
                row,
                column: self.schema[col].name.clone(),
                value: raw.to_string(),
            }),
        }
    }

    /// Fits mean/std on the given records (population standard deviation).
    fn fit(&mut self, records: &[(usize, &csv::StringRecord)]) -> Result<()> {
        for col in 0..self.schema.len() {
            if self.schema[col].kind != ColumnKind::Numeric {
                continue;
            }
            let mut values = Vec::with_capacity(records.len());
            for (row, rec) in records {
                values.push(self.parse_numeric(rec, col, *row)?);
            }
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let std = var.sqrt();
            if !(std > 0.0) {
                return Err(Error::ConstantColumn(self.schema[col].name.clone()));
            }
            self.stats[col] = Some(Standardization {
                column: self.schema[col].name.clone(),
                mean,
                std,
            });
        }
        Ok(())
    }

    fn label(&self, record: &csv::StringRecord, row: usize) -> Result<f64> {
        let col = self
            .schema
            .iter()
            .position(|c| c.kind == ColumnKind::Label)
            .expect("validated schema has a label column");
        let raw = self.cell(record, col);
        let positive = self.schema[col]
            .positive_label
            .as_deref()
            .unwrap_or_default();
        if raw.is_empty() {
            return Err(Error::UnparseableCell {
                row,
                column: self.schema[col].name.clone(),
                value: raw.to_string(),
            });
        }
        Ok(if raw == positive { 1.0 } else { -1.0 })
    }

    pub fn feature_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for col in &self.schema {
            match col.kind {
                ColumnKind::Numeric => names.push(col.name.clone()),
                ColumnKind::Categorical => {
                    for cat in col.categories.iter().flatten() {
                        names.push(format!("{}={}", col.name, cat));
                    }
                }
                ColumnKind::Label => {}
            }
        }
        names
    }

    /// Encodes one raw CSV record into the feature vector.
    pub fn transform(&self, record: &csv::StringRecord, row: usize) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        for (col, schema) in self.schema.iter().enumerate() {
            match schema.kind {
                ColumnKind::Numeric => {
                    let v = self.parse_numeric(record, col, row)?;
                    let st = self.stats[col].as_ref().expect("preprocessor fitted");
                    out.push((v - st.mean) / st.std);
                }
                ColumnKind::Categorical => {
                    let raw = self.cell(record, col);
                    let cats = schema.categories.as_ref().expect("validated");
                    let hit = cats.iter().position(|c| c == raw).ok_or_else(|| {
                        Error::UnknownCategory {
                            row,
                            column: schema.name.clone(),
                            value: raw.to_string(),
                        }
                    })?;
                    out.extend((0..cats.len()).map(|k| if k == hit { 1.0 } else { 0.0 }));
                }
                ColumnKind::Label => {}
            }
        }
        Ok(out)
    }

    fn build(&self, records: &[(usize, &csv::StringRecord)]) -> Result<Dataset> {
        let names = self.feature_names();
        let d = names.len();
        let mut data = Vec::with_capacity(records.len() * d);
        let mut labels = Vec::with_capacity(records.len());
        for (row, rec) in records {
            data.extend(self.transform(rec, *row)?);
            labels.push(self.label(rec, *row)?);
        }
        Ok(Dataset {
            x: Matrix::from_row_slice(records.len(), d, &data),
            y: Vector::from_vec(labels),
            schema: self.schema.clone(),
            standardization: self.stats.iter().flatten().cloned().collect(),
            feature_names: names,
        })
    }
}

fn read_records(path: &Path) -> Result<(csv::StringRecord, Vec<csv::StringRecord>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    let headers = reader.headers()?.clone();
    let mut rows = Vec::new();
    for rec in reader.records() {
        rows.push(rec?);
    }
    Ok((headers, rows))
}

/// Loads a CSV, fitting standardization on every row of the file.
pub fn load_csv(
    path: impl AsRef<Path>,
    schema: &[ColumnSchema],
) -> Result<(Dataset, Preprocessor)> {
    let (headers, rows) = read_records(path.as_ref())?;
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut pre = Preprocessor::new(schema, &headers)?;
    let indexed: Vec<_> = rows.iter().enumerate().map(|(i, r)| (i + 1, r)).collect();
    pre.fit(&indexed)?;
    let ds = pre.build(&indexed)?;
    Ok((ds, pre))
}

/// Loads a CSV, splits the raw rows, and fits standardization on the training part only.
pub fn load_csv_split(
    path: impl AsRef<Path>,
    schema: &[ColumnSchema],
    test_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    let (headers, rows) = read_records(path.as_ref())?;
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut pre = Preprocessor::new(schema, &headers)?;
    let mut labels = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        labels.push(pre.label(r, i + 1)?);
    }
    let (train_idx, test_idx) = split_indices(&labels, test_fraction, seed)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| (i + 1, &rows[i])).collect::<Vec<_>>();
    let train_rows = pick(&train_idx);
    pre.fit(&train_rows)?;
    Ok((pre.build(&train_rows)?, pre.build(&pick(&test_idx))?))
}

/// Two isotropic Gaussian blobs centred at `±(sep/2)·e₁`; positives first.
pub fn make_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = rng_from_seed(spec.seed);
    let n = 2 * spec.n_per_class;
    let half = spec.class_separation / 2.0;
    let noise = spec.noise_std;
    let mut x = Matrix::zeros(n, spec.d);
    let mut y = Vector::zeros(n);
    for i in 0..n {
        let label = if i < spec.n_per_class { 1.0 } else { -1.0 };
        y[i] = label;
        for j in 0..spec.d {
            let z: f64 = rng.sample(StandardNormal);
            x[(i, j)] = noise * z + if j == 0 { label * half } else { 0.0 };
        }
    }
    Dataset::new(x, y)
}

/// Stratified train/test index partition; both lists are sorted ascending.
pub fn split_indices(y: &[f64], test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::param(
            "test_fraction",
            format!("{test_fraction} is outside (0, 1)"),
        ));
    }
    if y.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = rng_from_seed(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for label in [-1.0, 1.0] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == label).collect();
        if idx.len() < 2 {
            return Err(Error::ClassTooSmall {
                label: label as i8,
                count: idx.len(),
            });
        }
        idx.shuffle(&mut rng);
        let n_test = ((test_fraction * idx.len() as f64).round() as usize).clamp(1, idx.len() - 1);
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (train, test) = split_indices(ds.y.as_slice(), test_fraction, seed)?;
    Ok((ds.subset(&train), ds.subset(&test)))
}
