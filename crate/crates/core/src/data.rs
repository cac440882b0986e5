//! Tabular datasets: feature schema, CSV ingestion, min-max normalization and
//! cross-validation folds.
//!
//! Records are stored row-wise as [`Value`]s. Quantitative features are
//! mapped to `[0, 1]` and regression labels to `[-1, 1]` by [`normalize`];
//! every map is kept in a [`NormalizationReport`] so that model outputs can be
//! translated back to the original label scale.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("schema error (line {line}): {message}")]
    Schema { line: usize, message: String },
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("missing column `{0}` in header")]
    MissingColumn(String),
    #[error("unparseable value `{value}` in column `{column}`, row {row}")]
    Parse { row: usize, column: String, value: String },
    #[error("missing value in column `{column}`, row {row}")]
    MissingValue { row: usize, column: String },
    #[error("unknown level `{value}` in column `{column}`, row {row}")]
    UnknownLevel { row: usize, column: String, value: String },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("fold count {k} out of range for {n} records (need 2 <= k <= n)")]
    FoldCount { k: usize, n: usize },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DataError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureRole {
    Protected,
    Unprotected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FeatureKind {
    Quantitative,
    Categorical { levels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: FeatureKind,
    pub role: FeatureRole,
}

impl FeatureSpec {
    pub fn is_protected(&self) -> bool {
        self.role == FeatureRole::Protected
    }

    pub fn is_quantitative(&self) -> bool {
        matches!(self.kind, FeatureKind::Quantitative)
    }

    pub fn levels(&self) -> Option<&[String]> {
        match &self.kind {
            FeatureKind::Categorical { levels } => Some(levels),
            FeatureKind::Quantitative => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LabelKind {
    Classification { classes: Vec<String> },
    Regression,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: LabelKind,
}

/// Column layout of a dataset.
///
/// The plain-text form is one directive per line, `#` starts a comment:
///
/// ```text
/// feature age quantitative unprotected
/// feature race categorical protected A,B,C
/// label y classification -1,1
/// ```
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<FeatureSpec>,
    pub label: LabelSpec,
}

impl FeatureSchema {
    pub fn new(features: Vec<FeatureSpec>, label: LabelSpec) -> Result<Self> {
        let schema = FeatureSchema { features, label };
        schema.validate()?;
        Ok(schema)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut features = Vec::new();
        let mut label = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let line_no = lineno + 1;
            let err = |message: &str| DataError::Schema { line: line_no, message: message.to_string() };
            let tokens: Vec<&str> = line.split_whitespace().collect();
            match tokens[0] {
                "feature" => {
                    if tokens.len() < 4 {
                        return Err(err("expected `feature <name> <kind> <role> [levels]`"));
                    }
                    let role = match tokens[3] {
                        "protected" => FeatureRole::Protected,
                        "unprotected" => FeatureRole::Unprotected,
                        other => return Err(err(&format!("unknown role `{other}`"))),
                    };
                    let kind = match tokens[2] {
                        "quantitative" | "quant" => {
                            if tokens.len() != 4 {
                                return Err(err("quantitative features take no levels"));
                            }
                            FeatureKind::Quantitative
                        }
                        "categorical" | "cat" => {
                            if tokens.len() != 5 {
                                return Err(err("categorical features need a comma-separated level list"));
                            }
                            FeatureKind::Categorical { levels: split_list(tokens[4]) }
                        }
                        other => return Err(err(&format!("unknown kind `{other}`"))),
                    };
                    features.push(FeatureSpec { name: tokens[1].to_string(), kind, role });
                }
                "label" => {
                    if label.is_some() {
                        return Err(err("duplicate label directive"));
                    }
                    let kind = match (tokens.get(2).copied(), tokens.len()) {
                        (Some("classification"), 4) => LabelKind::Classification { classes: split_list(tokens[3]) },
                        (Some("regression"), 3) => LabelKind::Regression,
                        _ => return Err(err("expected `label <name> classification <classes>` or `label <name> regression`")),
                    };
                    label = Some(LabelSpec { name: tokens[1].to_string(), kind });
                }
                other => return Err(err(&format!("unknown directive `{other}`"))),
            }
        }
        let label = label.ok_or_else(|| DataError::InvalidSchema("no label directive".into()))?;
        Self::new(features, label)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<()> {
        let mut names = HashSet::new();
        for f in &self.features {
            if !names.insert(f.name.as_str()) {
                return Err(DataError::InvalidSchema(format!("duplicate feature `{}`", f.name)));
            }
            if let FeatureKind::Categorical { levels } = &f.kind {
                check_levels(&f.name, levels)?;
            }
            if f.is_protected() && f.is_quantitative() {
                return Err(DataError::InvalidSchema(format!(
                    "protected feature `{}` must be categorical (bin it before ingestion)",
                    f.name
                )));
            }
        }
        if !names.insert(self.label.name.as_str()) {
            return Err(DataError::InvalidSchema(format!("label `{}` clashes with a feature", self.label.name)));
        }
        if let LabelKind::Classification { classes } = &self.label.kind {
            check_levels(&self.label.name, classes)?;
        }
        if !self.features.iter().any(FeatureSpec::is_protected) {
            return Err(DataError::InvalidSchema("at least one protected feature is required".into()));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for f in &self.features {
            let role = if f.is_protected() { "protected" } else { "unprotected" };
            match &f.kind {
                FeatureKind::Quantitative => out.push_str(&format!("feature {} quantitative {role}\n", f.name)),
                FeatureKind::Categorical { levels } => {
                    out.push_str(&format!("feature {} categorical {role} {}\n", f.name, levels.join(",")))
                }
            }
        }
        match &self.label.kind {
            LabelKind::Classification { classes } => {
                out.push_str(&format!("label {} classification {}\n", self.label.name, classes.join(",")))
            }
            LabelKind::Regression => out.push_str(&format!("label {} regression\n", self.label.name)),
        }
        out
    }

    /// SHA-256 of the canonical text form.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn is_classification(&self) -> bool {
        matches!(self.label.kind, LabelKind::Classification { .. })
    }

    pub fn classes(&self) -> Option<&[String]> {
        match &self.label.kind {
            LabelKind::Classification { classes } => Some(classes),
            LabelKind::Regression => None,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.classes().map_or(0, <[String]>::len)
    }

    /// Indices of unprotected features (the only ones usable for learning).
    pub fn unprotected(&self) -> Vec<usize> {
        (0..self.features.len()).filter(|&j| !self.features[j].is_protected()).collect()
    }

    pub fn unprotected_quantitative(&self) -> Vec<usize> {
        self.unprotected().into_iter().filter(|&j| self.features[j].is_quantitative()).collect()
    }

    pub fn unprotected_categorical(&self) -> Vec<usize> {
        self.unprotected().into_iter().filter(|&j| !self.features[j].is_quantitative()).collect()
    }

    pub fn protected(&self) -> Vec<usize> {
        (0..self.features.len()).filter(|&j| self.features[j].is_protected()).collect()
    }

    /// Number of protected groups: the cross product of all protected level sets.
    pub fn n_groups(&self) -> usize {
        self.protected().iter().map(|&j| self.features[j].levels().map_or(1, <[String]>::len)).product()
    }

    /// Human readable name of a protected group, e.g. `race=A,sex=F`.
    pub fn group_name(&self, mut group: usize) -> String {
        let protected = self.protected();
        let mut parts = vec![String::new(); protected.len()];
        for (slot, &j) in protected.iter().enumerate().rev() {
            let levels = self.features[j].levels().unwrap_or(&[]);
            let k = group % levels.len();
            group /= levels.len();
            parts[slot] = format!("{}={}", self.features[j].name, levels[k]);
        }
        parts.join(",")
    }
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect()
}

fn check_levels(name: &str, levels: &[String]) -> Result<()> {
    if levels.is_empty() {
        return Err(DataError::InvalidSchema(format!("`{name}` has an empty level set")));
    }
    let unique: HashSet<&String> = levels.iter().collect();
    if unique.len() != levels.len() {
        return Err(DataError::InvalidSchema(format!("`{name}` has duplicate levels")));
    }
    Ok(())
}

/// One cell of a record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Num(f64),
    /// Index into the feature's level list.
    Level(usize),
}

impl Value {
    pub fn num(self) -> f64 {
        match self {
            Value::Num(v) => v,
            Value::Level(_) => panic!("categorical value used as a number"),
        }
    }

    pub fn level(self) -> usize {
        match self {
            Value::Level(k) => k,
            Value::Num(_) => panic!("quantitative value used as a level"),
        }
    }
}

pub type Record = Vec<Value>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Labels {
    /// Indices into the schema's class list.
    Class(Vec<usize>),
    Real(Vec<f64>),
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Class(v) => v.len(),
            Labels::Real(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn subset(&self, idx: &[usize]) -> Labels {
        match self {
            Labels::Class(v) => Labels::Class(idx.iter().map(|&i| v[i]).collect()),
            Labels::Real(v) => Labels::Real(idx.iter().map(|&i| v[i]).collect()),
        }
    }
}

/// Affine map `v -> (v - offset) * scale + shift`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub min: f64,
    pub max: f64,
    /// Target interval.
    pub lo: f64,
    pub hi: f64,
}

impl AffineMap {
    fn is_identity(&self) -> bool {
        self.min == self.lo && self.max == self.hi
    }

    fn is_constant(&self) -> bool {
        self.max == self.min
    }

    pub fn apply(&self, v: f64) -> f64 {
        if self.is_identity() {
            v
        } else if self.is_constant() {
            // constant columns collapse onto the lower end of the target range,
            // except the regression label whose constant maps to the midpoint
            if self.lo < 0.0 {
                0.0
            } else {
                self.lo
            }
        } else {
            self.lo + (v - self.min) / (self.max - self.min) * (self.hi - self.lo)
        }
    }

    pub fn invert(&self, v: f64) -> f64 {
        if self.is_identity() {
            v
        } else if self.is_constant() {
            self.min
        } else {
            self.min + (v - self.lo) / (self.hi - self.lo) * (self.max - self.min)
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NormalizationReport {
    /// One entry per feature; `None` for categorical features.
    pub features: Vec<Option<AffineMap>>,
    pub label: Option<AffineMap>,
    pub constant_features: Vec<String>,
}

impl NormalizationReport {
    pub fn identity(schema: &FeatureSchema) -> Self {
        NormalizationReport {
            features: schema
                .features
                .iter()
                .map(|f| f.is_quantitative().then_some(AffineMap { min: 0.0, max: 1.0, lo: 0.0, hi: 1.0 }))
                .collect(),
            label: (!schema.is_classification()).then_some(AffineMap { min: -1.0, max: 1.0, lo: -1.0, hi: 1.0 }),
            constant_features: Vec::new(),
        }
    }

    pub fn apply_record(&self, record: &[Value]) -> Record {
        record
            .iter()
            .zip(&self.features)
            .map(|(v, m)| match (v, m) {
                (Value::Num(x), Some(map)) => Value::Num(map.apply(*x)),
                _ => *v,
            })
            .collect()
    }

    pub fn denormalize_label(&self, v: f64) -> f64 {
        self.label.map_or(v, |m| m.invert(v))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Arc<FeatureSchema>,
    records: Vec<Record>,
    labels: Labels,
    normalization: Option<NormalizationReport>,
}

impl Dataset {
    /// Validates every record against the schema.
    pub fn new(schema: Arc<FeatureSchema>, records: Vec<Record>, labels: Labels) -> Result<Self> {
        if records.is_empty() {
            return Err(DataError::EmptyDataset);
        }
        if records.len() != labels.len() {
            return Err(DataError::InvalidSchema(format!("{} records but {} labels", records.len(), labels.len())));
        }
        for (i, rec) in records.iter().enumerate() {
            if rec.len() != schema.features.len() {
                return Err(DataError::InvalidSchema(format!("record {} has {} values", i + 1, rec.len())));
            }
            for (f, v) in schema.features.iter().zip(rec) {
                let ok = match (&f.kind, v) {
                    (FeatureKind::Quantitative, Value::Num(x)) => x.is_finite(),
                    (FeatureKind::Categorical { levels }, Value::Level(k)) => *k < levels.len(),
                    _ => false,
                };
                if !ok {
                    return Err(DataError::InvalidSchema(format!("record {} does not conform in column `{}`", i + 1, f.name)));
                }
            }
        }
        match (&schema.label.kind, &labels) {
            (LabelKind::Classification { classes }, Labels::Class(v)) => {
                if v.iter().any(|&c| c >= classes.len()) {
                    return Err(DataError::InvalidSchema("class index out of range".into()));
                }
            }
            (LabelKind::Regression, Labels::Real(v)) => {
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(DataError::InvalidSchema("non-finite regression label".into()));
                }
            }
            _ => return Err(DataError::InvalidSchema("label vector does not match label kind".into())),
        }
        Ok(Dataset { schema, records, labels, normalization: None })
    }

    /// Reads a CSV file with a header row. Extra columns are ignored.
    pub fn load_csv(path: impl AsRef<Path>, schema: Arc<FeatureSchema>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(file, schema)
    }

    pub fn from_reader(reader: impl std::io::Read, schema: Arc<FeatureSchema>) -> Result<Self> {
        let (records, labels) = read_rows(reader, &schema, true)?;
        let mut recs = Vec::with_capacity(records.len());
        for r in records {
            recs.push(r?);
        }
        let labels = labels.expect("label column required")?;
        if recs.is_empty() {
            return Err(DataError::EmptyDataset);
        }
        Self::new(schema, recs, labels)
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn schema_arc(&self) -> Arc<FeatureSchema> {
        Arc::clone(&self.schema)
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn record(&self, i: usize) -> &Record {
        &self.records[i]
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn class_labels(&self) -> Option<&[usize]> {
        match &self.labels {
            Labels::Class(v) => Some(v),
            Labels::Real(_) => None,
        }
    }

    pub fn real_labels(&self) -> Option<&[f64]> {
        match &self.labels {
            Labels::Real(v) => Some(v),
            Labels::Class(_) => None,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.schema.features.len()
    }

    pub fn normalization(&self) -> Option<&NormalizationReport> {
        self.normalization.as_ref()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalization.is_some()
    }

    pub fn value(&self, i: usize, j: usize) -> Value {
        self.records[i][j]
    }

    /// Protected group of record `i` (mixed-radix index over protected level sets).
    pub fn group_of(&self, i: usize) -> usize {
        group_of_record(&self.schema, &self.records[i])
    }

    pub fn groups(&self) -> Vec<usize> {
        (0..self.len()).map(|i| self.group_of(i)).collect()
    }

    /// Observed `(min, max)` of a quantitative feature.
    pub fn feature_range(&self, j: usize) -> Option<(f64, f64)> {
        if !self.schema.features[j].is_quantitative() {
            return None;
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for r in &self.records {
            let v = r[j].num();
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Some((lo, hi))
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            schema: Arc::clone(&self.schema),
            records: idx.iter().map(|&i| self.records[i].clone()).collect(),
            labels: self.labels.subset(idx),
            normalization: self.normalization.clone(),
        }
    }

    pub fn with_labels(&self, labels: Labels) -> Result<Dataset> {
        let mut ds = Dataset::new(Arc::clone(&self.schema), self.records.clone(), labels)?;
        ds.normalization = self.normalization.clone();
        Ok(ds)
    }
}

pub(crate) fn group_of_record(schema: &FeatureSchema, record: &[Value]) -> usize {
    let mut g = 0;
    for j in schema.protected() {
        let n = schema.features[j].levels().map_or(1, <[String]>::len);
        g = g * n + record[j].level();
    }
    g
}

type RowResult = Result<Record>;

/// Parses CSV rows. Row numbers in errors are 1-based data rows (header excluded).
/// When `need_label` is false the label column may be absent.
pub(crate) fn read_rows(
    reader: impl std::io::Read,
    schema: &FeatureSchema,
    need_label: bool,
) -> Result<(Vec<RowResult>, Option<Result<Labels>>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let find = |name: &str| header.iter().position(|h| h == name);
    let mut cols = Vec::with_capacity(schema.features.len());
    for f in &schema.features {
        cols.push(find(&f.name).ok_or_else(|| DataError::MissingColumn(f.name.clone()))?);
    }
    let label_col = match find(&schema.label.name) {
        Some(c) => Some(c),
        None if need_label => return Err(DataError::MissingColumn(schema.label.name.clone())),
        None => None,
    };

    let mut rows = Vec::new();
    let mut class_labels = Vec::new();
    let mut real_labels = Vec::new();
    let mut label_err = None;
    for (idx, rec) in rdr.records().enumerate() {
        let row = idx + 1;
        let rec = rec?;
        let parsed: RowResult = schema
            .features
            .iter()
            .zip(&cols)
            .map(|(f, &c)| parse_cell(rec.get(c).unwrap_or(""), row, &f.name, &f.kind))
            .collect();
        rows.push(parsed);
        if let Some(c) = label_col {
            let cell = rec.get(c).unwrap_or("");
            let name = &schema.label.name;
            match &schema.label.kind {
                LabelKind::Classification { classes } => match classes.iter().position(|x| x == cell) {
                    Some(k) => class_labels.push(k),
                    None => {
                        label_err.get_or_insert(if cell.is_empty() {
                            DataError::MissingValue { row, column: name.clone() }
                        } else {
                            DataError::UnknownLevel { row, column: name.clone(), value: cell.to_string() }
                        });
                    }
                },
                LabelKind::Regression => match parse_num(cell, row, name) {
                    Ok(v) => real_labels.push(v),
                    Err(e) => {
                        label_err.get_or_insert(e);
                    }
                },
            }
        }
    }
    let labels = label_col.map(|_| match label_err {
        Some(e) => Err(e),
        None if schema.is_classification() => Ok(Labels::Class(class_labels)),
        None => Ok(Labels::Real(real_labels)),
    });
    Ok((rows, labels))
}

fn parse_num(cell: &str, row: usize, column: &str) -> Result<f64> {
    if cell.is_empty() {
        return Err(DataError::MissingValue { row, column: column.to_string() });
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(DataError::Parse { row, column: column.to_string(), value: cell.to_string() }),
    }
}

fn parse_cell(cell: &str, row: usize, column: &str, kind: &FeatureKind) -> Result<Value> {
    match kind {
        FeatureKind::Quantitative => parse_num(cell, row, column).map(Value::Num),
        FeatureKind::Categorical { levels } => {
            if cell.is_empty() {
                return Err(DataError::MissingValue { row, column: column.to_string() });
            }
            levels.iter().position(|l| l == cell).map(Value::Level).ok_or_else(|| DataError::UnknownLevel {
                row,
                column: column.to_string(),
                value: cell.to_string(),
            })
        }
    }
}

/// Reads records for prediction: each row is parsed independently and the
/// label column is optional.
pub fn read_records_lenient(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<Vec<Result<Record>>> {
    let file = std::fs::File::open(path)?;
    let (rows, _) = read_rows(file, schema, false)?;
    Ok(rows)
}

/// Maps quantitative features to `[0, 1]` and regression labels to `[-1, 1]`.
///
/// Constant feature columns map to 0 and are listed in the report. A dataset
/// that is already normalized is returned unchanged, with the original report.
pub fn normalize(ds: &Dataset) -> (Dataset, NormalizationReport) {
    let schema = ds.schema();
    let mut report = NormalizationReport::default();
    for (j, f) in schema.features.iter().enumerate() {
        match ds.feature_range(j) {
            Some((min, max)) => {
                if min == max {
                    report.constant_features.push(f.name.clone());
                }
                report.features.push(Some(AffineMap { min, max, lo: 0.0, hi: 1.0 }));
            }
            None => report.features.push(None),
        }
    }
    if let Labels::Real(v) = ds.labels() {
        let min = v.iter().copied().fold(f64::INFINITY, f64::min);
        let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        report.label = Some(AffineMap { min, max, lo: -1.0, hi: 1.0 });
    }

    let records = ds.records().iter().map(|r| report.apply_record(r)).collect();
    let labels = match ds.labels() {
        Labels::Real(v) => {
            let m = report.label.expect("regression map");
            Labels::Real(v.iter().map(|&y| m.apply(y)).collect())
        }
        other => other.clone(),
    };
    // Re-normalizing keeps the report describing raw -> normalized.
    let final_report = match ds.normalization() {
        Some(prev) if is_identity_report(&report) => prev.clone(),
        _ => report.clone(),
    };
    let out = Dataset { schema: ds.schema_arc(), records, labels, normalization: Some(final_report.clone()) };
    (out, final_report)
}

fn is_identity_report(r: &NormalizationReport) -> bool {
    r.features.iter().flatten().all(|m| m.is_identity() || m.is_constant())
        && r.label.map_or(true, |m| m.is_identity() || m.is_constant())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<Fold>,
}

/// Shuffles record indices with a seeded ChaCha stream and deals them into `k`
/// contiguous test blocks; the first `n mod k` folds get one extra record.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 || k > n {
        return Err(DataError::FoldCount { k, n });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    perm.shuffle(&mut rng);
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let mut test: Vec<usize> = perm[start..start + size].to_vec();
        test.sort_unstable();
        let in_test: HashSet<usize> = test.iter().copied().collect();
        let train = (0..n).filter(|i| !in_test.contains(i)).collect();
        folds.push(Fold { train, test });
        start += size;
    }
    Ok(FoldPlan { k, seed, folds })
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(v) => write!(f, "{v}"),
            Value::Level(k) => write!(f, "#{k}"),
        }
    }
}
