//! Fingerprint database persistence.
//!
//! A database lives in two files: a CSV of fixed fingerprints (label plus 276
//! values per row) at the given path, and a JSON document with the full packet
//! matrices next to it (`<stem>.fingerprints.json`). Row `i` of the CSV and
//! entry `i` of the JSON describe the same capture.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{to_fixed, DeviceTypeId, Fingerprint, FixedFingerprint, FIXED_LEN};
use crate::scalar::Scalar;

pub const FINGERPRINT_SCHEMA: &str = "devtype-fingerprints/1";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("corrupt fingerprint file: {0}")]
    CorruptFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for StoreError {
    fn from(e: csv::Error) -> Self {
        StoreError::CorruptFile(e.to_string())
    }
}

/// A full fingerprint paired with its fixed-width form.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFingerprint<T = f64> {
    pub full: Fingerprint,
    pub fixed: FixedFingerprint<T>,
}

impl<T: Scalar> LabeledFingerprint<T> {
    pub fn from_full(full: Fingerprint) -> Self {
        let fixed = to_fixed(&full);
        LabeledFingerprint { full, fixed }
    }

    pub fn label(&self) -> Option<&DeviceTypeId> {
        self.full.label.as_ref()
    }

    pub fn set_label(&mut self, label: Option<DeviceTypeId>) {
        self.full.label = label.clone();
        self.fixed.label = label;
    }
}

/// An ordered collection of labeled fingerprints.
#[derive(Debug, Clone, PartialEq)]
pub struct FingerprintDb<T = f64> {
    pub entries: Vec<LabeledFingerprint<T>>,
}

impl<T> Default for FingerprintDb<T> {
    fn default() -> Self {
        FingerprintDb { entries: Vec::new() }
    }
}

impl<T: Scalar> FingerprintDb<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, full: Fingerprint) {
        self.entries.push(LabeledFingerprint::from_full(full));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sorted distinct labels.
    pub fn types(&self) -> Vec<DeviceTypeId> {
        let mut t: Vec<_> = self.entries.iter().filter_map(|e| e.label().cloned()).collect();
        t.sort();
        t.dedup();
        t
    }

    /// Entry indices per label, in database order.
    pub fn indices_by_type(&self) -> BTreeMap<DeviceTypeId, Vec<usize>> {
        let mut map: BTreeMap<DeviceTypeId, Vec<usize>> = BTreeMap::new();
        for (i, e) in self.entries.iter().enumerate() {
            if let Some(l) = e.label() {
                map.entry(l.clone()).or_default().push(i);
            }
        }
        map
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixDoc {
    schema: String,
    fingerprints: Vec<Fingerprint>,
}

/// Location of the JSON matrix file that accompanies a fixed-fingerprint CSV.
pub fn matrices_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("fingerprints.json")
}

fn csv_header() -> Vec<String> {
    let mut h = Vec::with_capacity(FIXED_LEN + 1);
    h.push("label".to_string());
    h.extend((0..FIXED_LEN).map(|i| format!("v{i:03}")));
    h
}

pub fn save_fingerprints<T: Scalar>(db: &FingerprintDb<T>, path: impl AsRef<Path>) -> Result<(), StoreError> {
    let path = path.as_ref();
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "#schema={FINGERPRINT_SCHEMA}")?;
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(csv_header())?;
        for e in &db.entries {
            let mut rec = Vec::with_capacity(FIXED_LEN + 1);
            rec.push(e.label().map(|l| l.to_string()).unwrap_or_default());
            rec.extend(e.fixed.values().iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
    }
    out.flush()?;

    let doc = MatrixDoc {
        schema: FINGERPRINT_SCHEMA.to_string(),
        fingerprints: db.entries.iter().map(|e| e.full.clone()).collect(),
    };
    let mut jw = BufWriter::new(File::create(matrices_path(path))?);
    serde_json::to_writer(&mut jw, &doc).map_err(|e| StoreError::CorruptFile(e.to_string()))?;
    jw.flush()?;
    Ok(())
}

pub fn load_fingerprints<T: Scalar>(path: impl AsRef<Path>) -> Result<FingerprintDb<T>, StoreError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let (first, rest) = text.split_once('\n').unwrap_or((text.as_str(), ""));
    let schema = first
        .trim()
        .strip_prefix("#schema=")
        .ok_or_else(|| StoreError::SchemaMismatch("missing #schema line".into()))?;
    if schema != FINGERPRINT_SCHEMA {
        return Err(StoreError::SchemaMismatch(format!("expected {FINGERPRINT_SCHEMA}, found {schema}")));
    }
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(rest.as_bytes());
    if r.headers()?.iter().ne(csv_header().iter().map(String::as_str)) {
        return Err(StoreError::SchemaMismatch("unexpected CSV header".into()));
    }
    let mut rows: Vec<(Option<DeviceTypeId>, Vec<T>)> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != FIXED_LEN + 1 {
            return Err(StoreError::CorruptFile(format!("row {} has {} columns", i + 1, rec.len())));
        }
        let label = match &rec[0] {
            "" => None,
            s => Some(DeviceTypeId::new(s).expect("non-empty")),
        };
        let values = rec
            .iter()
            .skip(1)
            .map(|v| v.parse::<T>().map_err(|_| StoreError::CorruptFile(format!("row {}: bad value {v:?}", i + 1))))
            .collect::<Result<Vec<T>, _>>()?;
        rows.push((label, values));
    }

    let jr = BufReader::new(File::open(matrices_path(path))?);
    let doc: MatrixDoc = serde_json::from_reader(jr).map_err(|e| StoreError::CorruptFile(e.to_string()))?;
    if doc.schema != FINGERPRINT_SCHEMA {
        return Err(StoreError::SchemaMismatch(format!("matrix file schema {}", doc.schema)));
    }
    if doc.fingerprints.len() != rows.len() {
        return Err(StoreError::CorruptFile(format!(
            "{} fixed rows but {} matrices",
            rows.len(),
            doc.fingerprints.len()
        )));
    }
    let mut db = FingerprintDb::new();
    for (i, (full, (label, values))) in doc.fingerprints.into_iter().zip(rows).enumerate() {
        if full.columns.is_empty() {
            return Err(StoreError::CorruptFile(format!("entry {i} has no columns")));
        }
        if full.label != label {
            return Err(StoreError::CorruptFile(format!("entry {i}: label differs between files")));
        }
        let fixed = FixedFingerprint::from_values(values, label)
            .map_err(|e| StoreError::CorruptFile(format!("entry {i}: {e}")))?;
        db.entries.push(LabeledFingerprint { full, fixed });
    }
    Ok(db)
}
