use std::fs;
use std::path::{Path, PathBuf};

use super::HarnessError;
use crate::fingerprint::{build_fingerprint, segment_setup, DeviceTypeId, Fingerprint, FingerprintDb, SetupSessionConfig};
use crate::pcap::{read_pcap, Capture, SessionSet};
use crate::scalar::Scalar;

/// One setup fingerprint per source MAC seen in the capture.
pub fn fingerprints_from_capture(capture: &Capture, cfg: &SetupSessionConfig) -> Vec<Fingerprint> {
    SessionSet::from_capture(capture)
        .sessions
        .values()
        .filter_map(|s| {
            let packets = segment_setup(&s.packets, cfg).ok()?;
            build_fingerprint(s.mac, packets).ok()
        })
        .collect()
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
    v.sort();
    Ok(v)
}

/// Loads a directory laid out as `<root>/<type>/<capture>.pcap`. Each capture
/// contributes the fingerprint of its busiest source MAC, labeled with the
/// directory name.
pub fn load_capture_dir<T: Scalar>(root: impl AsRef<Path>, cfg: &SetupSessionConfig) -> Result<FingerprintDb<T>, HarnessError> {
    let mut db = FingerprintDb::new();
    for type_dir in sorted_entries(root.as_ref())? {
        if !type_dir.is_dir() {
            continue;
        }
        let name = type_dir.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let Ok(label) = DeviceTypeId::new(name) else { continue };
        for file in sorted_entries(&type_dir)? {
            let is_pcap = file.extension().is_some_and(|e| e == "pcap" || e == "cap");
            if !is_pcap {
                continue;
            }
            let sessions = SessionSet::from_capture(&read_pcap(&file)?);
            let Some(busiest) = sessions.sessions.values().max_by_key(|s| s.packets.len()) else { continue };
            let Ok(packets) = segment_setup(&busiest.packets, cfg) else { continue };
            if let Ok(fp) = build_fingerprint(busiest.mac, packets) {
                db.push(fp.with_label(label.clone()));
            }
        }
    }
    Ok(db)
}
