use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::discriminate::REFS_PER_TYPE;
use crate::fingerprint::{build_fingerprint, to_fixed, FingerprintDb, FixedFingerprint};
use crate::identify::{IdentificationResult, Identifier, ReferencePolicy};
use crate::scalar::Scalar;
use crate::typemodel::ClassifierRegistry;

/// Mean and sample standard deviation of one stage, in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageStats {
    pub n: usize,
    pub mean_ms: f64,
    pub stdev_ms: f64,
    pub max_ms: f64,
}

impl StageStats {
    pub fn from_samples(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return StageStats::default();
        }
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
        StageStats { n, mean_ms: mean, stdev_ms: var.sqrt(), max_ms: xs.iter().copied().fold(0.0, f64::max) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TimingSummary {
    /// Rebuilding F and F' from the stored packet columns.
    pub extract: StageStats,
    /// All classifiers of the registry together.
    pub classify: StageStats,
    pub per_classifier: StageStats,
    /// Only identifications that needed discrimination.
    pub discriminate: StageStats,
    pub per_distance: StageStats,
    pub total: StageStats,
}

/// Raw per-identification samples behind a [`TimingSummary`].
#[derive(Debug, Default)]
pub(crate) struct TimingSamples {
    pub extract: Vec<f64>,
    pub classify: Vec<f64>,
    pub per_classifier: Vec<f64>,
    pub discriminate: Vec<f64>,
    pub per_distance: Vec<f64>,
    pub total: Vec<f64>,
}

impl TimingSamples {
    pub fn record(&mut self, r: &IdentificationResult, n_classifiers: usize) {
        self.classify.push(r.elapsed.classify_ms);
        self.per_classifier.push(r.elapsed.classify_ms / n_classifiers.max(1) as f64);
        if r.discrimination_used {
            self.discriminate.push(r.elapsed.discriminate_ms);
            let distances: usize = r.dissimilarity.iter().map(|d| d.comparisons_used).sum();
            self.per_distance.push(r.elapsed.discriminate_ms / distances.max(1) as f64);
        }
        self.total.push(r.elapsed.total_ms);
    }

    pub fn append(&mut self, other: TimingSamples) {
        self.extract.extend(other.extract);
        self.classify.extend(other.classify);
        self.per_classifier.extend(other.per_classifier);
        self.discriminate.extend(other.discriminate);
        self.per_distance.extend(other.per_distance);
        self.total.extend(other.total);
    }

    pub fn summary(&self) -> TimingSummary {
        TimingSummary {
            extract: StageStats::from_samples(&self.extract),
            classify: StageStats::from_samples(&self.classify),
            per_classifier: StageStats::from_samples(&self.per_classifier),
            discriminate: StageStats::from_samples(&self.discriminate),
            per_distance: StageStats::from_samples(&self.per_distance),
            total: StageStats::from_samples(&self.total),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub n_types: usize,
    pub n_fingerprints: usize,
    #[serde(flatten)]
    pub summary: TimingSummary,
}

/// Times identification of every fingerprint in `db` against `registry`.
pub fn timing_report<T: Scalar>(db: &FingerprintDb<T>, registry: &ClassifierRegistry<T>, seed: u64) -> Result<TimingReport, HarnessError> {
    let mut samples = TimingSamples::default();
    if !db.is_empty() {
        let identifier = Identifier::new(registry, db, ReferencePolicy::Random { seed }, REFS_PER_TYPE)?;
        for e in &db.entries {
            let start = Instant::now();
            let full = build_fingerprint(e.full.device_mac, e.full.columns.iter().copied())?;
            let fixed: FixedFingerprint<T> = to_fixed(&full);
            samples.extract.push(start.elapsed().as_micros() as f64 / 1000.0);
            let r = identifier.identify(&fixed, &full)?;
            samples.record(&r, registry.len());
        }
    }
    Ok(TimingReport { n_types: registry.len(), n_fingerprints: db.len(), summary: samples.summary() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats() {
        let s = StageStats::from_samples(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(s.n, 8);
        assert!((s.mean_ms - 5.0).abs() < 1e-12);
        assert!((s.stdev_ms - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
        assert_eq!(s.max_ms, 9.0);
        assert_eq!(StageStats::from_samples(&[]), StageStats::default());
        assert_eq!(StageStats::from_samples(&[3.0]).stdev_ms, 0.0);
    }

    #[test]
    fn empty_db() {
        let r = timing_report::<f64>(&FingerprintDb::new(), &ClassifierRegistry::new(), 0).unwrap();
        assert_eq!(r.n_fingerprints, 0);
        assert_eq!(r.summary.total.n, 0);
    }
}
