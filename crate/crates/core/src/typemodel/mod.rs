//! One binary Random Forest per device-type, and the registry holding them.

mod tree;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::index;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fingerprint::{DeviceTypeId, DimensionMismatch, FixedFingerprint, FIXED_LEN};
use crate::scalar::Scalar;

pub use tree::{DecisionTree, Node, Samples, TreeError, TreeParams};

pub const MODEL_SCHEMA: &str = "devtype-model/1";

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("insufficient training data: {0}")]
    InsufficientData(String),
    #[error(transparent)]
    DimensionMismatch(#[from] DimensionMismatch),
    #[error("classifier registry is empty")]
    EmptyRegistry,
    #[error("a classifier for {0} is already registered")]
    DuplicateType(DeviceTypeId),
    #[error("model version mismatch: {0}")]
    VersionMismatch(String),
    #[error("corrupt model file: {0}")]
    CorruptFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Forest hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features examined per split; `None` means ⌈√276⌉.
    pub max_features: Option<usize>,
    pub min_samples_split: usize,
    pub bootstrap: bool,
    /// Negatives drawn per positive.
    pub negative_ratio: usize,
    /// Take the whole pool instead of failing when it holds fewer than
    /// `negative_ratio * positives` samples.
    pub allow_short_pool: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_features: None,
            min_samples_split: 2,
            bootstrap: true,
            negative_ratio: 10,
            allow_short_pool: false,
        }
    }
}

impl ForestParams {
    pub fn features_per_split(&self) -> usize {
        self.max_features
            .unwrap_or_else(|| (FIXED_LEN as f64).sqrt().ceil() as usize)
            .clamp(1, FIXED_LEN)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub n_positive: usize,
    pub n_negative: usize,
    pub seed: u64,
}

/// Outcome of one classifier on one fingerprint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    #[serde(rename = "match")]
    pub matched: bool,
    /// Fraction of trees voting for a match.
    pub score: f64,
}

/// Binary "is it this device-type?" forest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct TypeClassifier<T = f64> {
    pub device_type: DeviceTypeId,
    pub n_trees: usize,
    pub trees: Vec<DecisionTree<T>>,
    pub training_meta: TrainingMeta,
}

/// Trains the forest for one type: all positives against `negative_ratio`
/// times as many negatives drawn without replacement from the pool.
pub fn train_type_classifier<T: Scalar>(
    device_type: DeviceTypeId,
    positives: &[&FixedFingerprint<T>],
    negatives_pool: &[&FixedFingerprint<T>],
    params: &ForestParams,
    seed: u64,
) -> Result<TypeClassifier<T>, ModelError> {
    let n = positives.len();
    if n < 2 {
        return Err(ModelError::InsufficientData(format!("{device_type}: {n} positives, need at least 2")));
    }
    if params.n_trees == 0 {
        return Err(ModelError::InsufficientData("forest needs at least one tree".into()));
    }
    let wanted = params.negative_ratio * n;
    let n_negative = if negatives_pool.len() >= wanted {
        wanted
    } else if params.allow_short_pool && !negatives_pool.is_empty() {
        negatives_pool.len()
    } else {
        return Err(ModelError::InsufficientData(format!(
            "{device_type}: negative pool of {} is smaller than {wanted}",
            negatives_pool.len()
        )));
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = index::sample(&mut rng, negatives_pool.len(), n_negative);
    let mut rows: Vec<&[T]> = positives.iter().map(|f| f.values()).collect();
    rows.extend(picked.iter().map(|i| negatives_pool[i].values()));
    let mut labels = vec![true; n];
    labels.resize(n + n_negative, false);

    let tree_seeds: Vec<u64> = (0..params.n_trees).map(|_| rng.next_u64()).collect();
    let tree_params = TreeParams {
        max_features: params.features_per_split(),
        min_samples_split: params.min_samples_split,
    };
    let data = Samples { rows: &rows, labels: &labels };
    let total = rows.len();
    let trees = tree_seeds
        .par_iter()
        .map(|&s| {
            let mut trng = ChaCha8Rng::seed_from_u64(s);
            let sample: Vec<usize> = if params.bootstrap {
                (0..total).map(|_| (trng.next_u64() % total as u64) as usize).collect()
            } else {
                (0..total).collect()
            };
            DecisionTree::fit(&data, sample, &tree_params, &mut trng)
        })
        .collect();

    Ok(TypeClassifier {
        device_type,
        n_trees: params.n_trees,
        trees,
        training_meta: TrainingMeta { n_positive: n, n_negative, seed },
    })
}

impl<T: Scalar> TypeClassifier<T> {
    pub fn predict(&self, fp: &FixedFingerprint<T>) -> Prediction {
        self.predict_values(fp.values()).expect("fixed fingerprints always have the full width")
    }

    pub fn predict_values(&self, x: &[T]) -> Result<Prediction, DimensionMismatch> {
        if x.len() != FIXED_LEN {
            return Err(DimensionMismatch(x.len()));
        }
        let votes = self.trees.iter().filter(|t| t.votes_match(x)).count();
        Ok(Prediction {
            // Ties count as a match.
            matched: 2 * votes >= self.trees.len(),
            score: votes as f64 / self.trees.len() as f64,
        })
    }

    fn validate(&self) -> Result<(), ModelError> {
        if self.n_trees == 0 || self.trees.len() != self.n_trees {
            return Err(ModelError::CorruptFile(format!(
                "{}: n_trees {} but {} trees stored",
                self.device_type,
                self.n_trees,
                self.trees.len()
            )));
        }
        for (i, t) in self.trees.iter().enumerate() {
            t.validate(FIXED_LEN)
                .map_err(|e| ModelError::CorruptFile(format!("{} tree {i}: {e}", self.device_type)))?;
        }
        Ok(())
    }
}

/// One registry entry of `predict_all`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypePrediction {
    pub device_type: DeviceTypeId,
    #[serde(flatten)]
    pub prediction: Prediction,
}

/// All per-type classifiers, keyed and ordered by type id.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierRegistry<T = f64> {
    classifiers: BTreeMap<DeviceTypeId, TypeClassifier<T>>,
}

impl<T> Default for ClassifierRegistry<T> {
    fn default() -> Self {
        ClassifierRegistry { classifiers: BTreeMap::new() }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
struct ModelDoc<T> {
    schema: String,
    scalar: String,
    classifiers: Vec<TypeClassifier<T>>,
}

impl<T: Scalar> ClassifierRegistry<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a classifier. Existing classifiers are never touched; registering
    /// a type twice is an error.
    pub fn insert(&mut self, clf: TypeClassifier<T>) -> Result<(), ModelError> {
        if self.classifiers.contains_key(&clf.device_type) {
            return Err(ModelError::DuplicateType(clf.device_type));
        }
        self.classifiers.insert(clf.device_type.clone(), clf);
        Ok(())
    }

    pub fn get(&self, id: &DeviceTypeId) -> Option<&TypeClassifier<T>> {
        self.classifiers.get(id)
    }

    pub fn len(&self) -> usize {
        self.classifiers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classifiers.is_empty()
    }

    pub fn types(&self) -> impl Iterator<Item = &DeviceTypeId> {
        self.classifiers.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TypeClassifier<T>> {
        self.classifiers.values()
    }

    /// Runs every classifier; results are ordered by type id.
    pub fn predict_all(&self, fp: &FixedFingerprint<T>) -> Result<Vec<TypePrediction>, ModelError> {
        if self.classifiers.is_empty() {
            return Err(ModelError::EmptyRegistry);
        }
        Ok(self
            .classifiers
            .values()
            .map(|c| TypePrediction { device_type: c.device_type.clone(), prediction: c.predict(fp) })
            .collect())
    }

    pub fn to_json(&self) -> String {
        let doc = ModelDoc {
            schema: MODEL_SCHEMA.to_string(),
            scalar: T::NAME.to_string(),
            classifiers: self.classifiers.values().cloned().collect(),
        };
        serde_json::to_string(&doc).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        #[derive(Deserialize)]
        struct Head {
            schema: String,
            scalar: String,
        }
        let head: Head = serde_json::from_str(text).map_err(|e| ModelError::CorruptFile(e.to_string()))?;
        if head.schema != MODEL_SCHEMA {
            return Err(ModelError::VersionMismatch(format!("expected {MODEL_SCHEMA}, found {}", head.schema)));
        }
        if head.scalar != T::NAME {
            return Err(ModelError::VersionMismatch(format!("model stores {}, reader expects {}", head.scalar, T::NAME)));
        }
        let doc: ModelDoc<T> = serde_json::from_str(text).map_err(|e| ModelError::CorruptFile(e.to_string()))?;
        let mut reg = ClassifierRegistry::new();
        for clf in doc.classifiers {
            clf.validate()?;
            reg.insert(clf).map_err(|e| ModelError::CorruptFile(e.to_string()))?;
        }
        Ok(reg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(self.to_json().as_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let mut text = String::new();
        std::io::Read::read_to_string(&mut BufReader::new(File::open(path)?), &mut text)?;
        Self::from_json(&text)
    }
}
