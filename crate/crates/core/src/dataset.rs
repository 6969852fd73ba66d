//! Labeled feature matrices, stratified folds and corpus file formats.
//!
//! Two on-disk forms are supported:
//!
//! * CSV: header `f1,...,fn,label`, one sample per row, empty cell = missing.
//! * JSONL (raw corpus): one contract per line with hex bytecode, category
//!   and optional account data. Features are extracted on load.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::disasm::{parse_hex, Bytecode, CodeSource};
use crate::error::{Error, Result};
use crate::features::{
    assemble_vector, extract_account_features, extract_code_features, Direction, FeatureSchema,
    FeatureVector, SchemaKind, TransactionRecord, Wei,
};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    schema: FeatureSchema,
    /// Row-major, `NaN` = missing.
    values: Vec<f64>,
    labels: Vec<usize>,
    class_names: Vec<String>,
}

impl LabeledDataset {
    pub fn new(schema: FeatureSchema, class_names: Vec<String>) -> Self {
        LabeledDataset {
            schema,
            values: Vec::new(),
            labels: Vec::new(),
            class_names,
        }
    }

    pub fn push(&mut self, vector: FeatureVector, label: usize) -> Result<()> {
        if vector.len() != self.schema.len() {
            return Err(Error::LengthMismatch {
                expected: self.schema.len(),
                found: vector.len(),
            });
        }
        if label >= self.class_names.len() {
            return Err(Error::UnknownLabel {
                line: self.labels.len() + 1,
                label: label.to_string(),
            });
        }
        self.values.extend_from_slice(vector.as_slice());
        self.labels.push(label);
        Ok(())
    }

    /// Pushes a sample, registering `class` on first appearance.
    pub fn push_named(&mut self, vector: FeatureVector, class: &str) -> Result<usize> {
        let label = match self.class_index(class) {
            Some(i) => i,
            None => {
                self.class_names.push(class.to_owned());
                self.class_names.len() - 1
            }
        };
        self.push(vector, label)?;
        Ok(label)
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.class_names.iter().position(|c| c == name)
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        self.schema.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.feature_count();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn value(&self, i: usize, feature: usize) -> f64 {
        self.values[i * self.feature_count() + feature]
    }

    pub fn vector(&self, i: usize) -> FeatureVector {
        FeatureVector(self.row(i).to_vec())
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Rows at `indices`, in that order; class names are kept.
    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        let mut values = Vec::with_capacity(indices.len() * self.feature_count());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            values.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        LabeledDataset {
            schema: self.schema.clone(),
            values,
            labels,
            class_names: self.class_names.clone(),
        }
    }
}

/// Largest class size over smallest class size.
pub fn imbalance_ratio(ds: &LabeledDataset) -> Result<f64> {
    let counts = ds.class_counts();
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyClass(ds.class_names()[empty].clone()));
    }
    let max = counts.iter().copied().max().ok_or(Error::EmptyDataset)?;
    let min = counts.iter().copied().min().ok_or(Error::EmptyDataset)?;
    Ok(max as f64 / min as f64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub fold_count: usize,
    /// Fold index of each sample.
    pub assignments: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] != fold)
            .collect()
    }
}

/// Seeded stratified k-fold assignment.
///
/// Each class is shuffled and dealt round-robin; the starting fold carries
/// over between classes so overall fold sizes stay within one of each other.
pub fn stratified_folds(ds: &LabeledDataset, k_folds: usize, seed: u64) -> Result<FoldPlan> {
    if k_folds < 2 {
        return Err(Error::BadFoldCount(k_folds));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.class_count()];
    for (i, &l) in ds.labels().iter().enumerate() {
        by_class[l].push(i);
    }
    let mut assignments = vec![0; ds.len()];
    let mut next = 0;
    for mut members in by_class {
        members.shuffle(&mut rng);
        for i in members {
            assignments[i] = next;
            next = (next + 1) % k_folds;
        }
    }
    Ok(FoldPlan {
        fold_count: k_folds,
        assignments,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassFeatureMeans {
    pub class: String,
    pub samples: usize,
    /// `(feature, mean)` sorted by descending mean.
    pub means: Vec<(String, f64)>,
}

impl ClassFeatureMeans {
    pub fn top(&self, n: usize) -> &[(String, f64)] {
        &self.means[..n.min(self.means.len())]
    }
}

/// Per-class feature averages ranked high to low. Missing cells are skipped;
/// classes without samples are left out.
pub fn category_feature_means(ds: &LabeledDataset) -> Vec<ClassFeatureMeans> {
    let f = ds.feature_count();
    let k = ds.class_count();
    let mut sums = vec![vec![0.0; f]; k];
    let mut present = vec![vec![0usize; f]; k];
    let mut samples = vec![0usize; k];
    for i in 0..ds.len() {
        let l = ds.label(i);
        samples[l] += 1;
        for (j, &v) in ds.row(i).iter().enumerate() {
            if !v.is_nan() {
                sums[l][j] += v;
                present[l][j] += 1;
            }
        }
    }
    (0..k)
        .filter(|&c| samples[c] > 0)
        .map(|c| {
            let mut means: Vec<(String, f64)> = (0..f)
                .filter(|&j| present[c][j] > 0)
                .map(|j| {
                    (
                        ds.schema().feature_names[j].clone(),
                        sums[c][j] / present[c][j] as f64,
                    )
                })
                .collect();
            means.sort_by(|a, b| b.1.total_cmp(&a.1));
            ClassFeatureMeans {
                class: ds.class_names()[c].clone(),
                samples: samples[c],
                means,
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// CSV

pub fn write_csv(ds: &LabeledDataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    write_csv_to(ds, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_csv_to<W: Write>(ds: &LabeledDataset, w: &mut csv::Writer<W>) -> Result<()> {
    let mut header: Vec<&str> = ds.schema().feature_names.iter().map(String::as_str).collect();
    header.push("label");
    w.write_record(&header)?;
    let mut record: Vec<String> = Vec::with_capacity(header.len());
    for i in 0..ds.len() {
        record.clear();
        // `{}` prints the shortest representation that parses back to the same f64.
        record.extend(ds.row(i).iter().map(|v| {
            if v.is_nan() {
                String::new()
            } else {
                format!("{v}")
            }
        }));
        record.push(ds.class_names()[ds.label(i)].clone());
        w.write_record(&record)?;
    }
    Ok(())
}

/// Reads a CSV corpus.
///
/// With `schema` given, the header must list exactly its features. Without
/// one, a header matching the code-0day or full schema maps to that schema and
/// anything else becomes a custom schema. With `classes` given, labels outside
/// it are rejected; otherwise classes are registered in order of appearance.
pub fn read_csv(
    path: &Path,
    schema: Option<&FeatureSchema>,
    classes: Option<&[String]>,
) -> Result<LabeledDataset> {
    let reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)?;
    read_csv_from(reader, schema, classes)
}

pub fn read_csv_from<R: std::io::Read>(
    mut reader: csv::Reader<R>,
    schema: Option<&FeatureSchema>,
    classes: Option<&[String]>,
) -> Result<LabeledDataset> {
    let header = reader.headers()?.clone();
    let names: Vec<String> = header.iter().map(str::to_owned).collect();
    let (label_col, feature_names) = match names.split_last() {
        Some((last, rest)) if last == "label" => (rest.len(), rest.to_vec()),
        _ => {
            return Err(Error::SchemaHeaderMismatch {
                expected: schema.map_or("any", |s| s.name.as_str()).to_owned(),
            })
        }
    };
    let schema = match schema {
        Some(s) if s.feature_names == feature_names => s.clone(),
        Some(s) => {
            return Err(Error::SchemaHeaderMismatch {
                expected: s.name.as_str().to_owned(),
            })
        }
        None => [FeatureSchema::code_0day(), FeatureSchema::full()]
            .into_iter()
            .find(|s| s.feature_names == feature_names)
            .map_or_else(|| FeatureSchema::custom(feature_names), Ok)?,
    };
    let mut ds = LabeledDataset::new(schema, classes.map(<[String]>::to_vec).unwrap_or_default());
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let line = row + 2;
        if record.len() != label_col + 1 {
            return Err(Error::RaggedRow {
                line,
                expected: label_col + 1,
                found: record.len(),
            });
        }
        let mut values = Vec::with_capacity(label_col);
        for cell in record.iter().take(label_col) {
            let cell = cell.trim();
            if cell.is_empty() {
                values.push(f64::NAN);
            } else {
                let v: f64 = cell.parse().map_err(|_| Error::BadRecord {
                    line,
                    message: format!("not a number: {cell:?}"),
                })?;
                values.push(v);
            }
        }
        let label = &record[label_col];
        if classes.is_some() {
            let idx = ds.class_index(label).ok_or_else(|| Error::UnknownLabel {
                line,
                label: label.to_owned(),
            })?;
            ds.push(FeatureVector(values), idx)?;
        } else {
            ds.push_named(FeatureVector(values), label)?;
        }
    }
    Ok(ds)
}

// ---------------------------------------------------------------------------
// JSONL raw corpus

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawTransaction {
    pub t: u64,
    pub dir: Direction,
    /// Decimal wei.
    pub value: String,
    pub addr: String,
}

/// One line of the raw corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRecord {
    pub address: String,
    pub bytecode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    /// Decimal wei.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub balance: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonce: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub txs: Option<Vec<RawTransaction>>,
}

fn parse_wei(s: &str) -> std::result::Result<Wei, String> {
    s.trim()
        .parse::<Wei>()
        .map_err(|e| format!("bad wei amount {s:?}: {e}"))
}

impl RawRecord {
    pub fn code(&self) -> Result<Bytecode> {
        let mut code = parse_hex(&self.bytecode)?;
        code.source = CodeSource::JsonlRecord;
        Ok(code)
    }

    pub fn has_account(&self) -> bool {
        self.balance.is_some()
    }

    pub fn transactions(&self) -> std::result::Result<Vec<TransactionRecord>, String> {
        self.txs
            .iter()
            .flatten()
            .map(|t| {
                Ok(TransactionRecord {
                    timestamp: t.t,
                    direction: t.dir,
                    value: parse_wei(&t.value)?,
                    counterparty: t.addr.clone(),
                })
            })
            .collect()
    }

    pub fn account_features(
        &self,
    ) -> std::result::Result<Option<crate::features::AccountFeatures>, String> {
        let Some(balance) = &self.balance else {
            return Ok(None);
        };
        let balance = parse_wei(balance)?;
        let txs = self.transactions()?;
        Ok(Some(extract_account_features(
            balance,
            self.nonce.unwrap_or(0),
            &txs,
        )))
    }

    /// Feature vector under `schema` (code-0day or full).
    pub fn to_vector(&self, schema: &FeatureSchema) -> Result<FeatureVector> {
        let code = extract_code_features(&self.code()?);
        let account = if schema.requires_account() {
            self.account_features()
                .map_err(|m| Error::BadRecord { line: 0, message: m })?
        } else {
            None
        };
        assemble_vector(&code, account.as_ref(), schema)
    }
}

pub fn read_jsonl_records(path: &Path) -> Result<Vec<RawRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RawRecord = serde_json::from_str(&line).map_err(|e| Error::BadRecord {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_jsonl_records<'a>(
    path: &Path,
    records: impl IntoIterator<Item = &'a RawRecord>,
) -> Result<usize> {
    let mut w = BufWriter::new(File::create(path)?);
    let mut n = 0;
    for rec in records {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n")?;
        n += 1;
    }
    w.flush()?;
    Ok(n)
}

/// Extracts features for every labeled record.
pub fn dataset_from_records(records: &[RawRecord], kind: SchemaKind) -> Result<LabeledDataset> {
    let schema = FeatureSchema::for_kind(kind).ok_or_else(|| {
        Error::InvalidConfig("raw corpora produce code-0day or full features".into())
    })?;
    let mut ds = LabeledDataset::new(schema, Vec::new());
    for (i, rec) in records.iter().enumerate() {
        let line = i + 1;
        let category = rec.category.as_deref().ok_or_else(|| Error::BadRecord {
            line,
            message: "record has no category".into(),
        })?;
        let vector = rec.to_vector(ds.schema()).map_err(|e| match e {
            Error::BadRecord { message, .. } => Error::BadRecord { line, message },
            Error::SchemaMismatch(m) => Error::SchemaMismatch(format!("line {line}: {m}")),
            other => Error::BadRecord {
                line,
                message: other.to_string(),
            },
        })?;
        ds.push_named(vector, category)?;
    }
    Ok(ds)
}

/// Loads a CSV or JSONL corpus, chosen by file extension.
pub fn read_corpus(path: &Path, kind: SchemaKind) -> Result<LabeledDataset> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") | Some("json") => dataset_from_records(&read_jsonl_records(path)?, kind),
        _ => {
            let schema = FeatureSchema::for_kind(kind);
            read_csv(path, schema.as_ref(), None)
        }
    }
}

pub fn write_corpus(ds: &LabeledDataset, path: &Path) -> Result<()> {
    write_csv(ds, path)
}

/// Class sizes keyed by name, for reporting.
pub fn class_summary(ds: &LabeledDataset) -> BTreeMap<String, usize> {
    ds.class_names()
        .iter()
        .cloned()
        .zip(ds.class_counts())
        .collect()
}
