//! Setup-phase fingerprints: the variable-length packet matrix and its
//! fixed-width flattening.

mod segment;
mod store;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::mac::MacAddr;
use crate::pcap::{PacketFeatures, FEATURE_COUNT};
use crate::scalar::Scalar;

pub use segment::{segment_setup, SessionConfigError, SetupSessionConfig};
pub use store::{load_fingerprints, matrices_path, save_fingerprints, FingerprintDb, LabeledFingerprint, StoreError, FINGERPRINT_SCHEMA};

/// Unique packets kept in a fixed fingerprint.
pub const FIXED_PACKETS: usize = 12;
/// Width of a fixed fingerprint.
pub const FIXED_LEN: usize = FIXED_PACKETS * FEATURE_COUNT;

/// Device-type label: make, model and software version folded into one string.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct DeviceTypeId(String);

#[derive(Debug, thiserror::Error)]
#[error("device-type id must be non-empty")]
pub struct EmptyTypeId;

impl DeviceTypeId {
    pub fn new(id: impl Into<String>) -> Result<Self, EmptyTypeId> {
        let s = id.into();
        if s.trim().is_empty() {
            return Err(EmptyTypeId);
        }
        Ok(DeviceTypeId(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for DeviceTypeId {
    type Error = EmptyTypeId;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        DeviceTypeId::new(s)
    }
}

impl From<DeviceTypeId> for String {
    fn from(id: DeviceTypeId) -> String {
        id.0
    }
}

impl fmt::Display for DeviceTypeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for DeviceTypeId {
    type Err = EmptyTypeId;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DeviceTypeId::new(s)
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum FingerprintError {
    #[error("no packets to fingerprint")]
    EmptyInput,
    #[error("setup session contained no packets")]
    EmptySession,
}

/// Ordered packet columns of one device's setup phase, with consecutive
/// repeats removed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub device_mac: MacAddr,
    pub columns: Vec<PacketFeatures>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<DeviceTypeId>,
}

impl Fingerprint {
    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn with_label(mut self, label: DeviceTypeId) -> Self {
        self.label = Some(label);
        self
    }
}

/// Builds F from an ordered packet list, dropping every packet equal to its
/// immediate predecessor.
pub fn build_fingerprint(
    mac: MacAddr,
    packets: impl IntoIterator<Item = PacketFeatures>,
) -> Result<Fingerprint, FingerprintError> {
    let mut columns: Vec<PacketFeatures> = Vec::new();
    for p in packets {
        if columns.last() != Some(&p) {
            columns.push(p);
        }
    }
    if columns.is_empty() {
        return Err(FingerprintError::EmptyInput);
    }
    Ok(Fingerprint { device_mac: mac, columns, label: None })
}

/// The first twelve globally unique columns of F, flattened and zero-padded
/// to 276 values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedFingerprint<T = f64> {
    values: Vec<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<DeviceTypeId>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("fixed fingerprint must have {FIXED_LEN} values, got {0}")]
pub struct DimensionMismatch(pub usize);

impl<T: Scalar> FixedFingerprint<T> {
    pub fn from_values(values: Vec<T>, label: Option<DeviceTypeId>) -> Result<Self, DimensionMismatch> {
        if values.len() != FIXED_LEN {
            return Err(DimensionMismatch(values.len()));
        }
        Ok(FixedFingerprint { values, label })
    }

    pub fn zeros() -> Self {
        FixedFingerprint { values: vec![T::zero(); FIXED_LEN], label: None }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The 23-value slot of the `i`-th kept packet.
    pub fn packet_slot(&self, i: usize) -> &[T] {
        &self.values[i * FEATURE_COUNT..(i + 1) * FEATURE_COUNT]
    }
}

/// Derives F' from F.
pub fn to_fixed<T: Scalar>(fp: &Fingerprint) -> FixedFingerprint<T> {
    let mut kept: Vec<&PacketFeatures> = Vec::with_capacity(FIXED_PACKETS);
    for col in &fp.columns {
        if kept.len() == FIXED_PACKETS {
            break;
        }
        if !kept.contains(&col) {
            kept.push(col);
        }
    }
    let mut values = Vec::with_capacity(FIXED_LEN);
    for col in kept {
        values.extend(col.to_array().iter().map(|&v| T::from_count(v)));
    }
    values.resize(FIXED_LEN, T::zero());
    FixedFingerprint { values, label: fp.label.clone() }
}
