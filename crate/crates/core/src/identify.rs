//! End-to-end identification: per-type classifiers, edit-distance
//! discrimination on multiple matches, and the isolation level that follows.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discriminate::{discriminate, DiscriminateError, DissimilarityScore, REFS_PER_TYPE};
use crate::enforce::IsolationLevel;
use crate::fingerprint::{DeviceTypeId, Fingerprint, FingerprintDb, FixedFingerprint};
use crate::mac::MacAddr;
use crate::scalar::Scalar;
use crate::typemodel::{ClassifierRegistry, ModelError, TypePrediction};

#[derive(Debug, thiserror::Error)]
pub enum IdentifyError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Discriminate(#[from] DiscriminateError),
    #[error("type {0} has a classifier but no reference fingerprints")]
    MissingReferences(DeviceTypeId),
    #[error("vulnerability registry: {0}")]
    Registry(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Identified(DeviceTypeId),
    Unknown,
}

/// Stage timings in milliseconds (microsecond resolution).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Elapsed {
    pub classify_ms: f64,
    pub discriminate_ms: f64,
    pub total_ms: f64,
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_micros() as f64 / 1000.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationResult {
    pub device_mac: MacAddr,
    pub outcome: Outcome,
    /// Every classifier's answer, ordered by type id.
    pub matched_types: Vec<TypePrediction>,
    pub discrimination_used: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dissimilarity: Vec<DissimilarityScore>,
    pub elapsed: Elapsed,
}

impl IdentificationResult {
    pub fn match_count(&self) -> usize {
        self.matched_types.iter().filter(|p| p.prediction.matched).count()
    }

    pub fn identified(&self) -> Option<&DeviceTypeId> {
        match &self.outcome {
            Outcome::Identified(t) => Some(t),
            Outcome::Unknown => None,
        }
    }
}

/// How reference fingerprints are drawn for discrimination.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferencePolicy {
    /// The last `refs_per_type` fingerprints of each type in database order.
    MostRecent,
    /// A seeded random subset per type.
    Random { seed: u64 },
}

/// Immutable identification pipeline over a classifier registry and a
/// labeled reference store.
pub struct Identifier<'a, T = f64> {
    registry: &'a ClassifierRegistry<T>,
    refs: BTreeMap<DeviceTypeId, Vec<&'a Fingerprint>>,
}

/// FNV-1a over the type id, mixed with the seed, so each type gets its own stream.
fn type_seed(seed: u64, id: &DeviceTypeId) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.as_str().bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h ^ seed.rotate_left(17)
}

impl<'a, T: Scalar> Identifier<'a, T> {
    pub fn new(
        registry: &'a ClassifierRegistry<T>,
        db: &'a FingerprintDb<T>,
        policy: ReferencePolicy,
        refs_per_type: usize,
    ) -> Result<Self, IdentifyError> {
        let by_type = db.indices_by_type();
        let mut refs = BTreeMap::new();
        for t in registry.types() {
            let idx = by_type.get(t).filter(|v| !v.is_empty()).ok_or_else(|| IdentifyError::MissingReferences(t.clone()))?;
            let k = refs_per_type.clamp(1, REFS_PER_TYPE).min(idx.len());
            let chosen: Vec<usize> = match policy {
                ReferencePolicy::MostRecent => idx[idx.len() - k..].to_vec(),
                ReferencePolicy::Random { seed } => {
                    let mut rng = ChaCha8Rng::seed_from_u64(type_seed(seed, t));
                    index::sample(&mut rng, idx.len(), k).iter().map(|i| idx[i]).collect()
                }
            };
            refs.insert(t.clone(), chosen.into_iter().map(|i| &db.entries[i].full).collect());
        }
        Ok(Identifier { registry, refs })
    }

    pub fn references(&self, t: &DeviceTypeId) -> Option<&[&'a Fingerprint]> {
        self.refs.get(t).map(Vec::as_slice)
    }

    pub fn identify(&self, fixed: &FixedFingerprint<T>, full: &Fingerprint) -> Result<IdentificationResult, IdentifyError> {
        let start = Instant::now();
        let predictions = self.registry.predict_all(fixed)?;
        let classify_ms = ms_since(start);

        let matched: Vec<&DeviceTypeId> =
            predictions.iter().filter(|p| p.prediction.matched).map(|p| &p.device_type).collect();
        let mut discriminate_ms = 0.0;
        let mut dissimilarity = Vec::new();
        let outcome = match matched.len() {
            0 => Outcome::Unknown,
            1 => Outcome::Identified(matched[0].clone()),
            _ => {
                let t = Instant::now();
                let candidates: Vec<(DeviceTypeId, Vec<&Fingerprint>)> = matched
                    .iter()
                    .map(|&id| {
                        let r = self.refs.get(id).ok_or_else(|| IdentifyError::MissingReferences(id.clone()))?;
                        Ok((id.clone(), r.clone()))
                    })
                    .collect::<Result<_, IdentifyError>>()?;
                let d = discriminate(full, &candidates)?;
                discriminate_ms = ms_since(t);
                dissimilarity = d.scores;
                Outcome::Identified(d.winner)
            }
        };
        let total_ms = ms_since(start).max(classify_ms).max(discriminate_ms);
        Ok(IdentificationResult {
            device_mac: full.device_mac,
            outcome,
            discrimination_used: matched.len() >= 2,
            matched_types: predictions,
            dissimilarity,
            elapsed: Elapsed { classify_ms, discriminate_ms, total_ms },
        })
    }
}

/// One-shot form of [`Identifier::identify`] with seeded reference selection.
pub fn identify<T: Scalar>(
    fixed: &FixedFingerprint<T>,
    full: &Fingerprint,
    registry: &ClassifierRegistry<T>,
    db: &FingerprintDb<T>,
    seed: u64,
) -> Result<IdentificationResult, IdentifyError> {
    Identifier::new(registry, db, ReferencePolicy::Random { seed }, REFS_PER_TYPE)?.identify(fixed, full)
}

/// Vulnerability assessment outcome for one device-type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VulnerabilityEntry {
    pub isolation: IsolationLevel,
    /// IP literals or DNS names reachable under `restricted`.
    #[serde(default)]
    pub permitted_ip: Vec<String>,
}

/// Device-type → isolation assessment, read from a local JSON file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VulnerabilityRegistry {
    pub entries: BTreeMap<DeviceTypeId, VulnerabilityEntry>,
}

impl VulnerabilityRegistry {
    pub fn validate(&self) -> Result<(), IdentifyError> {
        for (t, e) in &self.entries {
            match e.isolation {
                IsolationLevel::Restricted if e.permitted_ip.is_empty() => {
                    return Err(IdentifyError::Registry(format!("{t}: restricted entry without permitted destinations")));
                }
                IsolationLevel::Strict | IsolationLevel::Trusted if !e.permitted_ip.is_empty() => {
                    return Err(IdentifyError::Registry(format!("{t}: {} entry must not list destinations", e.isolation)));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, IdentifyError> {
        let reg: VulnerabilityRegistry =
            serde_json::from_str(text).map_err(|e| IdentifyError::Registry(e.to_string()))?;
        reg.validate()?;
        Ok(reg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IdentifyError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IsolationAssignment {
    pub level: IsolationLevel,
    pub permitted: Vec<String>,
}

/// Unknown devices, and identified types missing from the registry, get `strict`.
pub fn assign_isolation(result: &IdentificationResult, vulns: &VulnerabilityRegistry) -> IsolationAssignment {
    let strict = IsolationAssignment { level: IsolationLevel::Strict, permitted: Vec::new() };
    match &result.outcome {
        Outcome::Unknown => strict,
        Outcome::Identified(t) => match vulns.entries.get(t) {
            Some(e) => IsolationAssignment { level: e.isolation, permitted: e.permitted_ip.clone() },
            None => strict,
        },
    }
}
