//! Device-type identification from setup-phase network traffic, and the
//! network isolation policy that follows from it.
//!
//! The pipeline runs capture → per-packet features ([`pcap`]) → setup-phase
//! fingerprint ([`fingerprint`]) → per-type forests ([`typemodel`]) →
//! edit-distance tie-break ([`discriminate`]) → isolation level
//! ([`identify`]) → MAC-keyed flow rules ([`enforce`]). [`harness`] holds the
//! cross-validation and synthetic-corpus tooling.
//!
//! Fixed fingerprints and forests are generic over a [`Scalar`]; the aliases
//! below pick `f64` (the default) or `f32`.

pub mod discriminate;
pub mod enforce;
pub mod fingerprint;
pub mod harness;
pub mod identify;
pub mod mac;
pub mod pcap;
pub mod scalar;
pub mod typemodel;

pub use mac::MacAddr;
pub use scalar::Scalar;

pub type FixedFingerprintF64 = fingerprint::FixedFingerprint<f64>;
pub type FixedFingerprintF32 = fingerprint::FixedFingerprint<f32>;
pub type FingerprintDbF64 = fingerprint::FingerprintDb<f64>;
pub type FingerprintDbF32 = fingerprint::FingerprintDb<f32>;
pub type TypeClassifierF64 = typemodel::TypeClassifier<f64>;
pub type TypeClassifierF32 = typemodel::TypeClassifier<f32>;
pub type ClassifierRegistryF64 = typemodel::ClassifierRegistry<f64>;
pub type ClassifierRegistryF32 = typemodel::ClassifierRegistry<f32>;
