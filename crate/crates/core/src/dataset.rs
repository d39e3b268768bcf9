//! Tabular data, feature metadata and holdout splits.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_from;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    BinaryClassification,
    MulticlassClassification,
    Regression,
}

impl TaskKind {
    pub fn is_classification(self) -> bool {
        !matches!(self, TaskKind::Regression)
    }

    /// Classification kind implied by a class count.
    pub fn classification_for(n_classes: usize) -> Self {
        if n_classes <= 2 {
            TaskKind::BinaryClassification
        } else {
            TaskKind::MulticlassClassification
        }
    }
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            TaskKind::BinaryClassification => "binary-classification",
            TaskKind::MulticlassClassification => "multiclass-classification",
            TaskKind::Regression => "regression",
        };
        f.write_str(s)
    }
}

/// Columnar numeric dataset. Columns are stored feature-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    feature_names: Vec<String>,
    columns: Vec<Vec<f64>>,
    labels: Vec<f64>,
    task: TaskKind,
}

impl FeatureTable {
    pub fn new(
        feature_names: Vec<String>,
        columns: Vec<Vec<f64>>,
        labels: Vec<f64>,
        task: TaskKind,
    ) -> Result<Self> {
        if feature_names.len() != columns.len() {
            return Err(Error::InvalidTable(format!(
                "{} names for {} columns",
                feature_names.len(),
                columns.len()
            )));
        }
        if columns.len() < 2 {
            return Err(Error::InvalidTable(format!(
                "need at least 2 features, found {}",
                columns.len()
            )));
        }
        let m = labels.len();
        if m < 2 {
            return Err(Error::InvalidTable(format!(
                "need at least 2 rows, found {m}"
            )));
        }
        for (name, col) in feature_names.iter().zip(&columns) {
            if col.len() != m {
                return Err(Error::InvalidTable(format!(
                    "column {name:?} has {} rows, labels have {m}",
                    col.len()
                )));
            }
            if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonNumericCell {
                    row: row + 1,
                    column: name.clone(),
                    value: col[row].to_string(),
                });
            }
        }
        let unique: BTreeSet<&str> = feature_names.iter().map(String::as_str).collect();
        if unique.len() != feature_names.len() {
            return Err(Error::InvalidTable("duplicate feature names".into()));
        }
        if task.is_classification() {
            let classes = validate_class_labels(&labels)?;
            if task == TaskKind::BinaryClassification && classes > 2 {
                return Err(Error::InvalidTable(format!(
                    "binary task but labels cover {classes} classes"
                )));
            }
        } else if let Some(row) = labels.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidLabel {
                row: row + 1,
                value: labels[row].to_string(),
                reason: "regression target must be finite".into(),
            });
        }
        Ok(Self {
            feature_names,
            columns,
            labels,
            task,
        })
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    /// Number of classes (0 for regression).
    pub fn n_classes(&self) -> usize {
        if self.task.is_classification() {
            self.labels.iter().fold(0usize, |acc, &y| acc.max(y as usize + 1))
        } else {
            0
        }
    }

    pub fn value(&self, row: usize, feature: usize) -> f64 {
        self.columns[feature][row]
    }

    /// Sub-table with the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            feature_names: self.feature_names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&r| c[r]).collect())
                .collect(),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            task: self.task,
        }
    }

    /// Copy with every column z-score normalized (population std).
    /// Constant columns become all zeros.
    pub fn z_normalized(&self) -> Self {
        Self {
            columns: self.columns.iter().map(|c| z_score(c)).collect(),
            ..self.clone()
        }
    }

    /// Writes the table back as CSV with the label column last.
    pub fn write_csv(&self, path: &Path, label_column: &str) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.push(label_column);
        w.write_record(&header)?;
        for row in 0..self.n_rows() {
            let mut rec: Vec<String> = self.columns.iter().map(|c| c[row].to_string()).collect();
            rec.push(self.labels[row].to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

pub fn z_score(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd <= f64::EPSILON * mean.abs().max(1.0) {
        vec![0.0; values.len()]
    } else {
        values.iter().map(|v| (v - mean) / sd).collect()
    }
}

fn validate_class_labels(labels: &[f64]) -> Result<usize> {
    let mut seen = BTreeSet::new();
    for (row, &y) in labels.iter().enumerate() {
        if !(y.is_finite() && y >= 0.0 && y.fract() == 0.0) {
            return Err(Error::InvalidLabel {
                row: row + 1,
                value: y.to_string(),
                reason: "class labels must be non-negative integers".into(),
            });
        }
        seen.insert(y as usize);
    }
    let n_classes = seen.len();
    if let Some(gap) = (0..n_classes).find(|c| !seen.contains(c)) {
        return Err(Error::InvalidTable(format!(
            "class labels must cover 0..{}; class {gap} is absent",
            n_classes - 1
        )));
    }
    Ok(n_classes)
}

/// Loads a CSV file whose header names the features and one label column.
///
/// For classification tasks the binary/multiclass distinction is taken from
/// `task`; use [`TaskKind::classification_for`] after counting classes if the
/// caller does not know it up front.
pub fn load_table(path: &Path, label_column: &str, task: TaskKind) -> Result<FeatureTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header = reader.headers()?.clone();
    let label_idx = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::UnknownLabelColumn(label_column.to_string()))?;
    let feature_names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != label_idx)
        .map(|(_, h)| h.to_string())
        .collect();
    if feature_names.len() < 2 {
        return Err(Error::InvalidTable(format!(
            "need at least 2 features, found {}",
            feature_names.len()
        )));
    }

    let mut columns = vec![Vec::new(); feature_names.len()];
    let mut labels = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = r + 1;
        let mut j = 0;
        for (i, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            let parsed = cell.parse::<f64>().ok().filter(|v| v.is_finite());
            if i == label_idx {
                labels.push(parsed.ok_or_else(|| Error::InvalidLabel {
                    row,
                    value: cell.to_string(),
                    reason: "not a finite number".into(),
                })?);
            } else {
                columns[j].push(parsed.ok_or_else(|| Error::NonNumericCell {
                    row,
                    column: feature_names[j].clone(),
                    value: cell.to_string(),
                })?);
                j += 1;
            }
        }
    }
    FeatureTable::new(feature_names, columns, labels, task)
}

/// Loads a CSV and infers binary vs multiclass from the label values when
/// `classification` is set.
pub fn load_table_inferred(
    path: &Path,
    label_column: &str,
    classification: bool,
) -> Result<FeatureTable> {
    if !classification {
        return load_table(path, label_column, TaskKind::Regression);
    }
    let table = load_table(path, label_column, TaskKind::MulticlassClassification)?;
    let kind = TaskKind::classification_for(table.n_classes());
    Ok(FeatureTable { task: kind, ..table })
}

const SPLIT_STREAM: u64 = 0x5917;

#[derive(Clone, Debug, PartialEq)]
pub struct SplitPair {
    pub train: FeatureTable,
    pub valid: FeatureTable,
    pub train_rows: Vec<usize>,
    pub valid_rows: Vec<usize>,
}

/// Seeded holdout split. Classification tables are stratified when every
/// class has at least two rows.
pub fn split_table(table: &FeatureTable, holdout_fraction: f64, seed: u64) -> Result<SplitPair> {
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        return Err(Error::DegenerateSplit(format!(
            "holdout fraction {holdout_fraction} not in (0, 1)"
        )));
    }
    let m = table.n_rows();
    let floor = (m as f64 * holdout_fraction).floor() as usize;
    let n_valid = (m as f64 * holdout_fraction).round() as usize;
    if floor < 1 || n_valid >= m {
        return Err(Error::DegenerateSplit(format!(
            "{m} rows with fraction {holdout_fraction} leaves an empty side"
        )));
    }

    let mut rng = rng_from(seed, &[SPLIT_STREAM]);
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let stratify = table.task.is_classification() && {
        groups = vec![Vec::new(); table.n_classes()];
        for (i, &y) in table.labels.iter().enumerate() {
            groups[y as usize].push(i);
        }
        groups.iter().all(|g| g.len() >= 2)
    };
    if !stratify {
        groups = vec![(0..m).collect()];
    }

    let quotas = largest_remainder(&groups.iter().map(Vec::len).collect::<Vec<_>>(), holdout_fraction, n_valid);
    let mut valid_rows = Vec::with_capacity(n_valid);
    let mut train_rows = Vec::with_capacity(m - n_valid);
    for (group, quota) in groups.iter_mut().zip(quotas) {
        group.shuffle(&mut rng);
        valid_rows.extend_from_slice(&group[..quota]);
        train_rows.extend_from_slice(&group[quota..]);
    }
    valid_rows.sort_unstable();
    train_rows.sort_unstable();
    Ok(SplitPair {
        train: table.select_rows(&train_rows),
        valid: table.select_rows(&valid_rows),
        train_rows,
        valid_rows,
    })
}

/// Integer quotas proportional to `sizes * fraction` summing to `total`.
fn largest_remainder(sizes: &[usize], fraction: f64, total: usize) -> Vec<usize> {
    let exact: Vec<f64> = sizes.iter().map(|&s| s as f64 * fraction).collect();
    let mut quotas: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut assigned: usize = quotas.iter().sum();
    let mut cursor = 0;
    while assigned < total {
        let g = order[cursor % order.len()];
        if quotas[g] < sizes[g] {
            quotas[g] += 1;
            assigned += 1;
        }
        cursor += 1;
    }
    while assigned > total {
        let g = order[order.len() - 1 - cursor % order.len()];
        if quotas[g] > 0 {
            quotas[g] -= 1;
            assigned -= 1;
        }
        cursor += 1;
    }
    quotas
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureMetadata {
    pub dataset_description: Option<String>,
    pub descriptions: BTreeMap<String, String>,
    /// Feature names without a description, in table order.
    pub missing: Vec<String>,
}

impl FeatureMetadata {
    /// Metadata with nothing known about any feature.
    pub fn empty(feature_names: &[String]) -> Self {
        Self {
            dataset_description: None,
            descriptions: BTreeMap::new(),
            missing: feature_names.to_vec(),
        }
    }

    pub fn is_fully_missing(&self) -> bool {
        self.dataset_description.is_none() && self.descriptions.is_empty()
    }

    pub fn description(&self, name: &str) -> Option<&str> {
        self.descriptions.get(name).map(String::as_str)
    }

    pub(crate) fn recompute_missing(&mut self, feature_names: &[String]) {
        self.missing = feature_names
            .iter()
            .filter(|n| !self.descriptions.contains_key(*n))
            .cloned()
            .collect();
    }

    pub fn to_file(&self) -> MetadataFile {
        MetadataFile {
            dataset_description: self.dataset_description.clone(),
            features: self
                .descriptions
                .iter()
                .map(|(name, description)| FeatureDescription {
                    name: name.clone(),
                    description: description.clone(),
                })
                .collect(),
        }
    }
}

/// On-disk metadata schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetadataFile {
    pub dataset_description: Option<String>,
    pub features: Vec<FeatureDescription>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureDescription {
    pub name: String,
    pub description: String,
}

pub fn load_metadata(path: &Path, table: &FeatureTable) -> Result<FeatureMetadata> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: MetadataFile = serde_json::from_str(&text)?;
    metadata_from_file(file, table.feature_names())
}

pub fn metadata_from_file(file: MetadataFile, feature_names: &[String]) -> Result<FeatureMetadata> {
    let known: BTreeSet<&str> = feature_names.iter().map(String::as_str).collect();
    let mut descriptions = BTreeMap::new();
    for fd in file.features {
        if !known.contains(fd.name.as_str()) {
            return Err(Error::UnknownFeature(fd.name));
        }
        descriptions.insert(fd.name, fd.description);
    }
    let mut meta = FeatureMetadata {
        dataset_description: file.dataset_description,
        descriptions,
        missing: Vec::new(),
    };
    meta.recompute_missing(feature_names);
    Ok(meta)
}

pub fn write_metadata(path: &Path, meta: &FeatureMetadata) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    let text = serde_json::to_string_pretty(&meta.to_file())?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
