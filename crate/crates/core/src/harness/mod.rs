//! Evaluation harness: synthetic corpora, stratified cross-validation,
//! confusion matrices and timing statistics.

mod corpus;
mod cv;
mod dataset;
mod timing;

pub use corpus::{generate_corpus, synthetic_type_id, NoiseSpec, SyntheticCorpusSpec};
pub use cv::{cross_validate, shuffle_labels, stratified_folds, train_registry, CvConfig, EvaluationReport, REPORT_SCHEMA};
pub use dataset::{fingerprints_from_capture, load_capture_dir};
pub use timing::{timing_report, StageStats, TimingReport, TimingSummary};

use crate::fingerprint::{DeviceTypeId, FingerprintError, StoreError};
use crate::identify::IdentifyError;
use crate::pcap::PcapError;
use crate::typemodel::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid corpus spec: {0}")]
    InvalidSpec(String),
    #[error("type {device_type} has {count} fingerprints, fewer than {folds} folds")]
    InsufficientFingerprints { device_type: DeviceTypeId, count: usize, folds: usize },
    #[error("fingerprint database has no labeled entries")]
    NoLabels,
    #[error(transparent)]
    Fingerprint(#[from] FingerprintError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Identify(#[from] IdentifyError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Pcap(#[from] PcapError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
