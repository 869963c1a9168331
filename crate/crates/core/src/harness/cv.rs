use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::timing::{TimingSamples, TimingSummary};
use super::HarnessError;
use crate::discriminate::REFS_PER_TYPE;
use crate::fingerprint::{DeviceTypeId, FingerprintDb, LabeledFingerprint};
use crate::identify::{Identifier, ReferencePolicy};
use crate::scalar::Scalar;
use crate::typemodel::{train_type_classifier, ClassifierRegistry, ForestParams};

pub const REPORT_SCHEMA: &str = "devtype-report/1";

#[derive(Debug, Clone, PartialEq)]
pub struct CvConfig {
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
    pub refs_per_type: usize,
    pub forest: ForestParams,
    /// Include wall-clock stage timings in the report. Timings vary run to
    /// run, so reports with them are not byte-reproducible.
    pub collect_timing: bool,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            folds: 10,
            repeats: 10,
            seed: 0,
            refs_per_type: REFS_PER_TYPE,
            // Small folds can leave fewer than 10n negatives; use what is there.
            forest: ForestParams { allow_short_pool: true, ..ForestParams::default() },
            collect_timing: false,
        }
    }
}

/// Aggregated cross-validation outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema: String,
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
    pub n_fingerprints: usize,
    /// Row/column order of the confusion matrix.
    pub types: Vec<DeviceTypeId>,
    pub per_type_accuracy: BTreeMap<DeviceTypeId, f64>,
    pub global_accuracy: f64,
    /// `confusion[i][j]`: fingerprints of `types[i]` identified as `types[j]`;
    /// the extra last column counts Unknown outcomes.
    pub confusion: Vec<Vec<u64>>,
    /// Fraction of identifications where two or more classifiers matched.
    pub multi_match_rate: f64,
    pub unknown_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<TimingSummary>,
}

impl EvaluationReport {
    pub fn total(&self) -> u64 {
        self.confusion.iter().flatten().sum()
    }

    pub fn accuracy_of(&self, t: &DeviceTypeId) -> Option<f64> {
        self.per_type_accuracy.get(t).copied()
    }

    pub fn type_index(&self, t: &DeviceTypeId) -> Option<usize> {
        self.types.iter().position(|x| x == t)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Fold number for every entry of every labeled type. Within a type the
/// order is shuffled, then folds are dealt round-robin, continuing the deal
/// across types so total fold sizes stay balanced.
pub fn stratified_folds(by_type: &BTreeMap<DeviceTypeId, Vec<usize>>, n_entries: usize, folds: usize, rng: &mut ChaCha8Rng) -> Vec<Option<usize>> {
    let mut out = vec![None; n_entries];
    let mut deal = 0usize;
    for idx in by_type.values() {
        let mut shuffled = idx.clone();
        shuffled.shuffle(rng);
        for i in shuffled {
            out[i] = Some(deal % folds);
            deal += 1;
        }
    }
    out
}

/// Derives a sub-seed; keeps every random stream in a run independent of the others.
fn mix(seed: u64, a: u64, b: u64, c: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ b.wrapping_mul(0xc2b2_ae3d_27d4_eb4f) ^ c.wrapping_mul(0x1656_67b1_9e37_79f9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Trains one classifier per labeled type: its entries as positives, every
/// other labeled entry as the negative pool.
pub fn train_registry<T: Scalar>(db: &FingerprintDb<T>, params: &ForestParams, seed: u64) -> Result<ClassifierRegistry<T>, HarnessError> {
    let by_type = db.indices_by_type();
    if by_type.is_empty() {
        return Err(HarnessError::NoLabels);
    }
    let trained: Vec<_> = by_type
        .iter()
        .enumerate()
        .map(|(k, (t, idx))| {
            let positives: Vec<_> = idx.iter().map(|&i| &db.entries[i].fixed).collect();
            let pool: Vec<_> = db
                .entries
                .iter()
                .filter(|e| e.label().is_some_and(|l| l != t))
                .map(|e| &e.fixed)
                .collect();
            train_type_classifier(t.clone(), &positives, &pool, params, mix(seed, k as u64, 0, 0))
        })
        .collect();
    let mut reg = ClassifierRegistry::new();
    for clf in trained {
        reg.insert(clf?)?;
    }
    Ok(reg)
}

#[derive(Default)]
struct FoldTally {
    /// (true type index, predicted index or K for unknown)
    outcomes: Vec<(usize, usize)>,
    multi: u64,
    timing: TimingSamples,
}

fn run_fold<T: Scalar>(
    db: &FingerprintDb<T>,
    types: &[DeviceTypeId],
    assignment: &[Option<usize>],
    fold: usize,
    cfg: &CvConfig,
    fold_seed: u64,
) -> Result<FoldTally, HarnessError> {
    let mut train = FingerprintDb::new();
    let mut test: Vec<&LabeledFingerprint<T>> = Vec::new();
    for (e, a) in db.entries.iter().zip(assignment) {
        match a {
            Some(f) if *f == fold => test.push(e),
            Some(_) => train.entries.push(e.clone()),
            None => {}
        }
    }
    let registry = train_registry(&train, &cfg.forest, fold_seed)?;
    let identifier = Identifier::new(
        &registry,
        &train,
        ReferencePolicy::Random { seed: mix(fold_seed, 1, 1, 1) },
        cfg.refs_per_type,
    )?;
    let index: BTreeMap<&DeviceTypeId, usize> = types.iter().enumerate().map(|(i, t)| (t, i)).collect();
    let mut tally = FoldTally::default();
    for e in test {
        let r = identifier.identify(&e.fixed, &e.full)?;
        let truth = index[e.label().expect("only labeled entries are assigned folds")];
        let predicted = r.identified().map_or(types.len(), |t| index[t]);
        tally.outcomes.push((truth, predicted));
        if r.discrimination_used {
            tally.multi += 1;
        }
        tally.timing.record(&r, registry.len());
    }
    Ok(tally)
}

/// Repeated stratified k-fold evaluation of the full identification pipeline.
///
/// Classifiers and discrimination references come from the training split
/// only. Unknown outcomes count as misidentifications.
pub fn cross_validate<T: Scalar>(db: &FingerprintDb<T>, cfg: &CvConfig) -> Result<EvaluationReport, HarnessError> {
    let by_type = db.indices_by_type();
    if by_type.is_empty() {
        return Err(HarnessError::NoLabels);
    }
    if cfg.folds < 2 {
        return Err(HarnessError::InvalidSpec("need at least 2 folds".into()));
    }
    for (t, idx) in &by_type {
        if idx.len() < cfg.folds {
            return Err(HarnessError::InsufficientFingerprints { device_type: t.clone(), count: idx.len(), folds: cfg.folds });
        }
    }
    let types: Vec<DeviceTypeId> = by_type.keys().cloned().collect();
    let k = types.len();

    let assignments: Vec<Vec<Option<usize>>> = (0..cfg.repeats)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, r as u64, 0, 7));
            stratified_folds(&by_type, db.len(), cfg.folds, &mut rng)
        })
        .collect();
    let jobs: Vec<(usize, usize)> = (0..cfg.repeats).flat_map(|r| (0..cfg.folds).map(move |f| (r, f))).collect();
    let tallies: Vec<FoldTally> = jobs
        .par_iter()
        .map(|&(r, f)| run_fold(db, &types, &assignments[r], f, cfg, mix(cfg.seed, r as u64, f as u64 + 1, 3)))
        .collect::<Result<_, _>>()?;

    let mut confusion = vec![vec![0u64; k + 1]; k];
    let mut multi = 0u64;
    let mut timing = TimingSamples::default();
    for t in tallies {
        for (truth, pred) in t.outcomes {
            confusion[truth][pred] += 1;
        }
        multi += t.multi;
        timing.append(t.timing);
    }
    let n: u64 = confusion.iter().flatten().sum();
    let correct: u64 = (0..k).map(|i| confusion[i][i]).sum();
    let unknown: u64 = confusion.iter().map(|row| row[k]).sum();
    let per_type_accuracy = types
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let row: u64 = confusion[i].iter().sum();
            (t.clone(), if row == 0 { 0.0 } else { confusion[i][i] as f64 / row as f64 })
        })
        .collect();
    let ratio = |a: u64| if n == 0 { 0.0 } else { a as f64 / n as f64 };
    let timing: Option<TimingSummary> = cfg.collect_timing.then(|| timing.summary());

    Ok(EvaluationReport {
        schema: REPORT_SCHEMA.to_string(),
        folds: cfg.folds,
        repeats: cfg.repeats,
        seed: cfg.seed,
        n_fingerprints: db.len(),
        types,
        per_type_accuracy,
        global_accuracy: ratio(correct),
        confusion,
        multi_match_rate: ratio(multi),
        unknown_rate: ratio(unknown),
        timing,
    })
}

/// Returns a copy of `db` with labels randomly permuted across entries
/// (per-type counts are preserved).
pub fn shuffle_labels<T: Scalar>(db: &FingerprintDb<T>, seed: u64) -> FingerprintDb<T> {
    let mut labels: Vec<_> = db.entries.iter().map(|e| e.label().cloned()).collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = db.clone();
    for (e, l) in out.entries.iter_mut().zip(labels) {
        e.set_label(l);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::corpus::{generate_corpus, SyntheticCorpusSpec};

    #[test]
    fn folds_are_stratified() {
        let mut by_type = BTreeMap::new();
        let mut next = 0;
        for (t, n) in [("a", 20usize), ("b", 23), ("c", 10)] {
            by_type.insert(DeviceTypeId::new(t).unwrap(), (next..next + n).collect::<Vec<_>>());
            next += n;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = stratified_folds(&by_type, next, 10, &mut rng);
        for idx in by_type.values() {
            let mut per = [0usize; 10];
            for &i in idx {
                per[a[i].unwrap()] += 1;
            }
            let (lo, hi) = (idx.len() / 10, idx.len().div_ceil(10));
            assert!(per.iter().all(|&c| c == lo || c == hi), "{per:?}");
        }
    }

    #[test]
    fn small_cv_report_is_consistent() {
        let spec = SyntheticCorpusSpec { n_types: 4, fingerprints_per_type: 6, ..Default::default() };
        let db: FingerprintDb = generate_corpus(&spec, 1).unwrap();
        let cfg = CvConfig {
            folds: 3,
            repeats: 2,
            seed: 5,
            forest: ForestParams { n_trees: 10, allow_short_pool: true, ..Default::default() },
            ..Default::default()
        };
        let r = cross_validate(&db, &cfg).unwrap();
        assert_eq!(r.total(), 24 * 2);
        for (i, t) in r.types.iter().enumerate() {
            let row: u64 = r.confusion[i].iter().sum();
            assert_eq!(row, 12);
            assert!((r.per_type_accuracy[t] - r.confusion[i][i] as f64 / row as f64).abs() < 1e-15);
        }
        let trace: u64 = (0..4).map(|i| r.confusion[i][i]).sum();
        assert!((r.global_accuracy - trace as f64 / 48.0).abs() < 1e-15);
        assert!(r.timing.is_none());
        assert_eq!(cross_validate(&db, &cfg).unwrap().to_json(), r.to_json());
    }

    #[test]
    fn too_few_fingerprints() {
        let spec = SyntheticCorpusSpec { n_types: 3, fingerprints_per_type: 4, ..Default::default() };
        let db: FingerprintDb = generate_corpus(&spec, 1).unwrap();
        let err = cross_validate(&db, &CvConfig::default()).unwrap_err();
        assert!(matches!(err, HarnessError::InsufficientFingerprints { count: 4, folds: 10, .. }));
    }

    #[test]
    fn shuffling_preserves_counts() {
        let spec = SyntheticCorpusSpec { n_types: 5, fingerprints_per_type: 7, ..Default::default() };
        let db: FingerprintDb = generate_corpus(&spec, 1).unwrap();
        let s = shuffle_labels(&db, 9);
        let count = |d: &FingerprintDb| d.indices_by_type().values().map(Vec::len).collect::<Vec<_>>();
        assert_eq!(count(&db), count(&s));
        assert_ne!(db, s);
        assert!(s.entries.iter().all(|e| e.fixed.label == e.full.label));
    }
}
