//! CSV ingestion, label/feature encoding, and the row partitioning used to
//! simulate horizontally federated data.

use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot open {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed csv {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("column `{0}` not found")]
    MissingColumn(String),
    #[error("line {line}, column `{column}`: cannot parse `{value}` as a number")]
    Parse {
        line: u64,
        column: String,
        value: String,
    },
    #[error("line {line}: expected {expected} fields, found {found}")]
    Ragged {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: label `{value}` is not one of the configured classes")]
    UnknownClass { line: u64, value: String },
    #[error("{0} contains no data rows")]
    Empty(PathBuf),
    #[error("fraction {0} must lie in (0, 1)")]
    BadFraction(f64),
    #[error("cannot split {rows} rows into {shards} shards")]
    TooManyShards { shards: usize, rows: usize },
    #[error("operation needs at least {needed} rows, got {rows}")]
    TooFewRows { needed: usize, rows: usize },
    #[error("row has {found} values, schema has {expected} features")]
    Width { expected: usize, found: usize },
    #[error("label index {label} out of range for {classes} classes")]
    LabelRange { label: usize, classes: usize },
    #[error("label space needs at least 2 classes, got {0}")]
    LabelSpace(usize),
}

pub type Result<T, E = DatasetError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    /// Ordinal codes assigned by first appearance; `categories[code]` is the
    /// original string.
    Categorical { categories: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub name: String,
    pub index: usize,
    #[serde(flatten)]
    pub kind: FeatureKind,
}

impl FeatureMeta {
    pub fn numeric(name: impl Into<String>, index: usize) -> Self {
        FeatureMeta {
            name: name.into(),
            index,
            kind: FeatureKind::Numeric,
        }
    }

    /// Maps a raw cell to the numeric value the trees split on.
    pub fn encode(&self, raw: &str) -> Option<f64> {
        match &self.kind {
            FeatureKind::Numeric => raw.trim().parse().ok(),
            FeatureKind::Categorical { categories } => categories
                .iter()
                .position(|c| c == raw.trim())
                .map(|p| p as f64),
        }
    }

    pub fn decode(&self, value: f64) -> String {
        match &self.kind {
            FeatureKind::Numeric => value.to_string(),
            FeatureKind::Categorical { categories } => categories
                .get(value as usize)
                .cloned()
                .unwrap_or_else(|| value.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelSpace {
    classes: Vec<String>,
}

impl LabelSpace {
    pub fn new(classes: Vec<String>) -> Result<Self> {
        if classes.len() < 2 {
            return Err(DatasetError::LabelSpace(classes.len()));
        }
        Ok(LabelSpace { classes })
    }

    /// Label space with classes named `"0"`, `"1"`, ...
    pub fn indexed(count: usize) -> Result<Self> {
        Self::new((0..count).map(|c| c.to_string()).collect())
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn name(&self, index: usize) -> &str {
        &self.classes[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }
}

/// Column layout shared by every shard of a session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub features: Vec<FeatureMeta>,
    pub labels: LabelSpace,
}

impl Schema {
    pub fn numeric(feature_count: usize, labels: LabelSpace) -> Self {
        Schema {
            features: (0..feature_count)
                .map(|i| FeatureMeta::numeric(format!("f{i}"), i))
                .collect(),
            labels,
        }
    }

    pub fn feature_count(&self) -> usize {
        self.features.len()
    }

    pub fn class_count(&self) -> usize {
        self.labels.len()
    }
}

/// One participant's rows, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DataShard {
    pub client_id: u32,
    schema: Arc<Schema>,
    values: Vec<f64>,
    labels: Vec<usize>,
}

impl DataShard {
    pub fn new(schema: Arc<Schema>, values: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        let width = schema.feature_count();
        if width == 0 || values.len() != labels.len() * width {
            return Err(DatasetError::Width {
                expected: width,
                found: values.len().checked_div(labels.len()).unwrap_or(0),
            });
        }
        let classes = schema.class_count();
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(DatasetError::LabelRange { label, classes });
        }
        Ok(DataShard {
            client_id: 0,
            schema,
            values,
            labels,
        })
    }

    pub fn from_rows(schema: Arc<Schema>, rows: &[Vec<f64>], labels: Vec<usize>) -> Result<Self> {
        let width = schema.feature_count();
        if let Some(bad) = rows.iter().find(|r| r.len() != width) {
            return Err(DatasetError::Width {
                expected: width,
                found: bad.len(),
            });
        }
        Self::new(schema, rows.concat(), labels)
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        self.schema.feature_count()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.feature_count();
        &self.values[i * w..(i + 1) * w]
    }

    pub fn value(&self, row: usize, feature: usize) -> f64 {
        self.values[row * self.feature_count() + feature]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.feature_count())
    }

    /// New shard holding `indices` in the given order.
    pub fn select(&self, indices: &[usize]) -> DataShard {
        let w = self.feature_count();
        let mut values = Vec::with_capacity(indices.len() * w);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        DataShard {
            client_id: self.client_id,
            schema: Arc::clone(&self.schema),
            values,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn class_histogram(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.schema.class_count()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// How to read a CSV file into a [`DataShard`].
#[derive(Debug, Clone, Default)]
pub struct CsvOptions {
    /// Header name of the label column, or `last`, or a 0-based column index.
    pub label_column: String,
    pub has_header: bool,
    pub categorical_columns: Vec<String>,
    pub ignore_columns: Vec<String>,
    /// Fixed class order. When absent, classes are numbered by first
    /// appearance.
    pub classes: Option<Vec<String>>,
}

impl CsvOptions {
    pub fn new(label_column: impl Into<String>) -> Self {
        CsvOptions {
            label_column: label_column.into(),
            has_header: true,
            ..Default::default()
        }
    }
}

fn resolve_column(names: &[String], key: &str) -> Option<usize> {
    if let Some(i) = names.iter().position(|n| n == key) {
        return Some(i);
    }
    if key == "last" {
        return names.len().checked_sub(1);
    }
    key.parse::<usize>().ok().filter(|&i| i < names.len())
}

pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<DataShard> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let csv_err = |source| DatasetError::Csv {
        path: path.to_owned(),
        source,
    };

    let mut records = reader.records();
    let first = match records.next() {
        Some(r) => r.map_err(csv_err)?,
        None => return Err(DatasetError::Empty(path.to_owned())),
    };
    let width = first.len();
    let names: Vec<String> = if opts.has_header {
        first.iter().map(str::to_owned).collect()
    } else {
        (0..width).map(|i| format!("c{i}")).collect()
    };
    let label_col = resolve_column(&names, &opts.label_column)
        .ok_or_else(|| DatasetError::MissingColumn(opts.label_column.clone()))?;
    let mut ignored = Vec::new();
    for c in &opts.ignore_columns {
        ignored.push(resolve_column(&names, c).ok_or_else(|| DatasetError::MissingColumn(c.clone()))?);
    }
    let mut categorical = Vec::new();
    for c in &opts.categorical_columns {
        categorical.push(resolve_column(&names, c).ok_or_else(|| DatasetError::MissingColumn(c.clone()))?);
    }
    let feature_cols: Vec<usize> = (0..width)
        .filter(|c| *c != label_col && !ignored.contains(c))
        .collect();

    let mut tables: Vec<Option<(Vec<String>, HashMap<String, usize>)>> = feature_cols
        .iter()
        .map(|c| categorical.contains(c).then(Default::default))
        .collect();
    let fixed_classes = opts.classes.clone();
    let mut classes: Vec<String> = fixed_classes.clone().unwrap_or_default();
    let mut class_index: HashMap<String, usize> = classes
        .iter()
        .enumerate()
        .map(|(i, c)| (c.clone(), i))
        .collect();

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let pending = if opts.has_header { None } else { Some(Ok(first)) };
    for record in pending.into_iter().chain(records) {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        if record.len() != width {
            return Err(DatasetError::Ragged {
                line,
                expected: width,
                found: record.len(),
            });
        }
        for (slot, &c) in feature_cols.iter().enumerate() {
            let cell = &record[c];
            let v = match &mut tables[slot] {
                Some((list, index)) => {
                    let next = list.len();
                    let code = *index.entry(cell.to_owned()).or_insert_with(|| {
                        list.push(cell.to_owned());
                        next
                    });
                    code as f64
                }
                None => match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => v,
                    _ => {
                        return Err(DatasetError::Parse {
                            line,
                            column: names[c].clone(),
                            value: cell.to_owned(),
                        })
                    }
                },
            };
            values.push(v);
        }
        let raw = &record[label_col];
        let label = match class_index.get(raw) {
            Some(&l) => l,
            None if fixed_classes.is_some() => {
                return Err(DatasetError::UnknownClass {
                    line,
                    value: raw.to_owned(),
                })
            }
            None => {
                classes.push(raw.to_owned());
                class_index.insert(raw.to_owned(), classes.len() - 1);
                classes.len() - 1
            }
        };
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(DatasetError::Empty(path.to_owned()));
    }
    if classes.len() < 2 {
        log::warn!("{}: label column has a single class", path.display());
        let only = classes.first().cloned().unwrap_or_default();
        classes.push(format!("{only}~other"));
    }
    let features = feature_cols
        .iter()
        .zip(tables)
        .enumerate()
        .map(|(i, (&c, table))| FeatureMeta {
            name: names[c].clone(),
            index: i,
            kind: match table {
                Some((categories, _)) => FeatureKind::Categorical { categories },
                None => FeatureKind::Numeric,
            },
        })
        .collect();
    let schema = Schema {
        features,
        labels: LabelSpace::new(classes)?,
    };
    DataShard::new(Arc::new(schema), values, labels)
}

/// Writes a shard with a header row, decoding categorical codes and class
/// indices back to their original strings. Numbers are written in shortest
/// round-trip form so reloading is lossless.
pub fn write_csv(shard: &DataShard, path: impl AsRef<Path>, label_column: &str) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| DatasetError::Io {
        path: path.to_owned(),
        source,
    };
    let mut out = std::io::BufWriter::new(File::create(path).map_err(io_err)?);
    let schema = shard.schema();
    let mut header: Vec<&str> = schema.features.iter().map(|f| f.name.as_str()).collect();
    header.push(label_column);
    writeln!(out, "{}", header.join(",")).map_err(io_err)?;
    for (i, row) in shard.rows().enumerate() {
        let mut cells: Vec<String> = row
            .iter()
            .zip(&schema.features)
            .map(|(&v, meta)| meta.decode(v))
            .collect();
        cells.push(schema.labels.name(shard.label(i)).to_owned());
        writeln!(out, "{}", cells.join(",")).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

fn check_fraction(f: f64) -> Result<()> {
    if f > 0.0 && f < 1.0 {
        Ok(())
    } else {
        Err(DatasetError::BadFraction(f))
    }
}

/// Seeded row-disjoint train/test partition; the train side holds
/// `round(train_fraction * n)` rows. Both sides keep the input's row order.
pub fn split_train_test(
    shard: &DataShard,
    train_fraction: f64,
    seed: u64,
) -> Result<(DataShard, DataShard)> {
    check_fraction(train_fraction)?;
    let n = shard.len();
    if n < 2 {
        return Err(DatasetError::TooFewRows { needed: 2, rows: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, &[rng::TAG_SPLIT]));
    let cut = (train_fraction * n as f64).round() as usize;
    let (train, test) = order.split_at_mut(cut);
    train.sort_unstable();
    test.sort_unstable();
    Ok((shard.select(train), shard.select(test)))
}

/// Deals rows into `count` disjoint shards whose sizes differ by at most one.
pub fn shard_rows(shard: &DataShard, count: usize, seed: u64) -> Result<Vec<DataShard>> {
    let n = shard.len();
    if count == 0 || count > n {
        return Err(DatasetError::TooManyShards {
            shards: count,
            rows: n,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, &[rng::TAG_SHARD]));
    let (base, extra) = (n / count, n % count);
    let mut shards = Vec::with_capacity(count);
    let mut start = 0;
    for i in 0..count {
        let len = base + usize::from(i < extra);
        let part = &mut order[start..start + len];
        part.sort_unstable();
        let mut s = shard.select(part);
        s.client_id = i as u32;
        shards.push(s);
        start += len;
    }
    Ok(shards)
}

/// Sorted row indices of a without-replacement sample of
/// `ceil(fraction * n)` rows.
pub fn subsample_indices<R: rand::Rng + ?Sized>(n: usize, fraction: f64, rng: &mut R) -> Vec<usize> {
    if fraction >= 1.0 {
        return (0..n).collect();
    }
    let k = ((fraction * n as f64) - 1e-9).ceil().clamp(0.0, n as f64) as usize;
    let mut picked = rand::seq::index::sample(rng, n, k).into_vec();
    picked.sort_unstable();
    picked
}

pub fn subsample(shard: &DataShard, fraction: f64, seed: u64) -> Result<DataShard> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(DatasetError::BadFraction(fraction));
    }
    if shard.is_empty() {
        return Err(DatasetError::TooFewRows { needed: 1, rows: 0 });
    }
    let idx = subsample_indices(shard.len(), fraction, &mut rng::stream(seed, &[rng::TAG_SUBSAMPLE]));
    Ok(shard.select(&idx))
}
