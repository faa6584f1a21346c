//! Tabular datasets with a declared schema, plus CSV ingestion.
//!
//! A schema sidecar lists every CSV column with its kind and names the
//! label column:
//!
//! ```json
//! {"columns": [{"name": "gender", "kind": "discrete", "cardinality": 2},
//!              {"name": "score", "kind": "continuous"},
//!              {"name": "admitted", "kind": "discrete", "cardinality": 2}],
//!  "label": "admitted"}
//! ```
//!
//! Discrete values are integer codes in `0..cardinality`, stored as `f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{AsvError, Result};
use crate::rng::{stream, STREAM_SPLIT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ColumnKind {
    Discrete { cardinality: usize },
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    #[serde(flatten)]
    pub kind: ColumnKind,
}

impl Column {
    pub fn discrete(name: &str, cardinality: usize) -> Self {
        Self {
            name: name.to_string(),
            kind: ColumnKind::Discrete { cardinality },
        }
    }

    pub fn continuous(name: &str) -> Self {
        Self {
            name: name.to_string(),
            kind: ColumnKind::Continuous,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.kind, ColumnKind::Discrete { .. })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawSchema {
    columns: Vec<Column>,
    label: String,
}

/// Column layout of a dataset. Features are every column except the label,
/// in file order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSchema", into = "RawSchema")]
pub struct Schema {
    columns: Vec<Column>,
    label: String,
    label_position: usize,
    n_classes: usize,
}

impl TryFrom<RawSchema> for Schema {
    type Error = AsvError;
    fn try_from(raw: RawSchema) -> Result<Self> {
        Schema::new(raw.columns, &raw.label)
    }
}

impl From<Schema> for RawSchema {
    fn from(s: Schema) -> RawSchema {
        RawSchema {
            columns: s.columns,
            label: s.label,
        }
    }
}

impl Schema {
    pub fn new(columns: Vec<Column>, label: &str) -> Result<Self> {
        for (k, c) in columns.iter().enumerate() {
            if columns[..k].iter().any(|o| o.name == c.name) {
                return Err(AsvError::Schema(format!("duplicate column '{}'", c.name)));
            }
            if let ColumnKind::Discrete { cardinality } = c.kind {
                if cardinality == 0 {
                    return Err(AsvError::Schema(format!(
                        "column '{}' has zero cardinality",
                        c.name
                    )));
                }
            }
        }
        let label_position = columns
            .iter()
            .position(|c| c.name == label)
            .ok_or_else(|| AsvError::Schema(format!("label column '{label}' not declared")))?;
        let n_classes = match columns[label_position].kind {
            ColumnKind::Discrete { cardinality } if cardinality >= 2 => cardinality,
            _ => {
                return Err(AsvError::Schema(format!(
                    "label column '{label}' must be discrete with at least 2 classes"
                )))
            }
        };
        if columns.len() < 2 {
            return Err(AsvError::Schema("schema declares no feature columns".into()));
        }
        Ok(Self {
            columns,
            label: label.to_string(),
            label_position,
            n_classes,
        })
    }

    /// Features in order, followed by a discrete label column.
    pub fn with_label(features: Vec<Column>, label: &str, n_classes: usize) -> Result<Self> {
        let mut columns = features;
        columns.push(Column::discrete(label, n_classes));
        Self::new(columns, label)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| {
            AsvError::Schema(format!("cannot open schema {}: {e}", path.display()))
        })?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w)?;
        Ok(())
    }

    pub fn n_features(&self) -> usize {
        self.columns.len() - 1
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn label_name(&self) -> &str {
        &self.label
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn features(&self) -> impl Iterator<Item = &Column> + '_ {
        self.columns
            .iter()
            .enumerate()
            .filter(move |(k, _)| *k != self.label_position)
            .map(|(_, c)| c)
    }

    pub fn feature(&self, i: usize) -> &Column {
        let k = if i >= self.label_position { i + 1 } else { i };
        &self.columns[k]
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features().map(|c| c.name.clone()).collect()
    }

    pub fn feature_index(&self, name: &str) -> Result<usize> {
        self.features()
            .position(|c| c.name == name)
            .ok_or_else(|| AsvError::Schema(format!("no feature named '{name}'")))
    }

    pub fn is_discrete(&self, i: usize) -> bool {
        self.feature(i).is_discrete()
    }

    /// Checks arity and discrete codes of a data point.
    pub fn validate_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features() {
            return Err(AsvError::DimensionMismatch {
                expected: self.n_features(),
                found: x.len(),
            });
        }
        for (i, &v) in x.iter().enumerate() {
            let col = self.feature(i);
            match col.kind {
                ColumnKind::Discrete { cardinality } => {
                    if v.fract() != 0.0 || v < 0.0 || v >= cardinality as f64 {
                        return Err(AsvError::Schema(format!(
                            "value {v} of '{}' is not a code in 0..{cardinality}",
                            col.name
                        )));
                    }
                }
                ColumnKind::Continuous => {
                    if !v.is_finite() {
                        return Err(AsvError::Schema(format!(
                            "non-finite value in '{}'",
                            col.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Schema keeping only the listed features (in the given order).
    pub fn project(&self, features: &[usize]) -> Result<Self> {
        let cols = features.iter().map(|&i| self.feature(i).clone()).collect();
        Self::with_label(cols, &self.label, self.n_classes)
    }

    pub fn content_hash(&self) -> String {
        let text = serde_json::to_vec(self).expect("schema serializes");
        hex::encode(Sha256::digest(&text))
    }
}

/// Rows of feature values with integer labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    schema: Arc<Schema>,
    values: Vec<f64>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(schema: Arc<Schema>, rows: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(AsvError::DimensionMismatch {
                expected: rows.len(),
                found: labels.len(),
            });
        }
        let mut values = Vec::with_capacity(rows.len() * schema.n_features());
        for row in &rows {
            schema.validate_point(row)?;
            values.extend_from_slice(row);
        }
        for &y in &labels {
            if y >= schema.n_classes() {
                return Err(AsvError::Schema(format!(
                    "label {y} out of range for {} classes",
                    schema.n_classes()
                )));
            }
        }
        Ok(Self {
            schema,
            values,
            labels,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn schema_arc(&self) -> Arc<Schema> {
        Arc::clone(&self.schema)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.schema.n_features()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_features();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.n_features().max(1))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let d = self.n_features();
        let mut values = Vec::with_capacity(indices.len() * d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            values.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self {
            schema: Arc::clone(&self.schema),
            values,
            labels,
        }
    }

    /// Keeps only the listed feature columns.
    pub fn project(&self, features: &[usize]) -> Result<Self> {
        let schema = Arc::new(self.schema.project(features)?);
        let mut values = Vec::with_capacity(self.len() * features.len());
        for row in self.rows() {
            values.extend(features.iter().map(|&j| row[j]));
        }
        Ok(Self {
            schema,
            values,
            labels: self.labels.clone(),
        })
    }

    /// Shuffled split into `(first, second)` with `round(first_fraction·len)`
    /// rows in the first part.
    pub fn split(&self, first_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(0.0..=1.0).contains(&first_fraction) {
            return Err(AsvError::InvalidArgument(format!(
                "split fraction {first_fraction} outside [0, 1]"
            )));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut stream(seed, STREAM_SPLIT));
        let cut = (first_fraction * self.len() as f64).round() as usize;
        Ok((self.subset(&idx[..cut]), self.subset(&idx[cut..])))
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.schema.n_classes()];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    pub fn read_csv(path: &Path, schema: Arc<Schema>) -> Result<Self> {
        let file = File::open(path)?;
        Self::from_csv_reader(BufReader::new(file), schema)
    }

    pub fn from_csv_reader<R: std::io::Read>(reader: R, schema: Arc<Schema>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        // Map each schema column to its CSV position.
        let mut positions = Vec::with_capacity(schema.columns().len());
        for col in schema.columns() {
            let pos = headers.iter().position(|h| h == col.name).ok_or_else(|| {
                AsvError::Schema(format!("CSV has no column '{}'", col.name))
            })?;
            positions.push(pos);
        }
        if headers.len() != schema.columns().len() {
            return Err(AsvError::Schema(format!(
                "CSV has {} columns, schema declares {}",
                headers.len(),
                schema.columns().len()
            )));
        }
        let label_col = schema.label_position;
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            let mut row = Vec::with_capacity(schema.n_features());
            let mut label = 0usize;
            for (k, (col, &pos)) in schema.columns().iter().zip(&positions).enumerate() {
                let field = record.get(pos).unwrap_or("").trim();
                let v: f64 = field.parse().map_err(|_| {
                    AsvError::Schema(format!(
                        "row {}: cannot parse '{field}' in column '{}'",
                        line + 1,
                        col.name
                    ))
                })?;
                if k == label_col {
                    if v.fract() != 0.0 || v < 0.0 {
                        return Err(AsvError::Schema(format!(
                            "row {}: label '{field}' is not a class code",
                            line + 1
                        )));
                    }
                    label = v as usize;
                } else {
                    row.push(v);
                }
            }
            rows.push(row);
            labels.push(label);
        }
        Self::new(schema, rows, labels)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path)?;
        self.to_csv_writer(BufWriter::new(file))
    }

    pub fn to_csv_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.schema.columns().iter().map(|c| c.name.as_str()))?;
        let mut record = Vec::with_capacity(self.schema.columns().len());
        for (row, &y) in self.rows().zip(&self.labels) {
            record.clear();
            let mut feats = row.iter();
            for (k, col) in self.schema.columns().iter().enumerate() {
                if k == self.schema.label_position {
                    record.push(y.to_string());
                } else {
                    let v = *feats.next().expect("row arity matches schema");
                    record.push(match col.kind {
                        ColumnKind::Discrete { .. } => format!("{}", v as i64),
                        ColumnKind::Continuous => format!("{v:?}"),
                    });
                }
            }
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }
}
