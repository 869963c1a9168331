//! Synthetic setup-phase corpora.
//!
//! Every type gets a base packet sequence drawn from a vocabulary of setup
//! traffic (ARP, EAPoL, DHCP, DNS, mDNS, SSDP, NTP, HTTP(S), ICMP, ...).
//! Each fingerprint of the type replays the base sequence through a noise
//! model; destination counters are recomputed afterwards so drops shift them
//! the way a missing packet would on the wire.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::fingerprint::{build_fingerprint, DeviceTypeId, FingerprintDb};
use crate::mac::MacAddr;
use crate::pcap::{port_class, PacketFeatures};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    /// Probability that a packet is lost.
    pub drop_prob: f64,
    /// Probability that a packet is repeated immediately.
    pub duplicate_prob: f64,
    /// Each packet size moves by a uniform integer in `[-size_jitter, size_jitter]`.
    pub size_jitter: u32,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec { drop_prob: 0.0, duplicate_prob: 0.0, size_jitter: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticCorpusSpec {
    pub n_types: usize,
    pub fingerprints_per_type: usize,
    /// Inclusive range of base sequence lengths.
    pub packets_per_setup: (usize, usize),
    pub noise: NoiseSpec,
    /// Type index pairs `(a, b)`: `b` reuses the base sequence of `a`.
    pub duplicated_type_pairs: Vec<(usize, usize)>,
}

impl Default for SyntheticCorpusSpec {
    fn default() -> Self {
        SyntheticCorpusSpec {
            n_types: 27,
            fingerprints_per_type: 20,
            packets_per_setup: (20, 60),
            noise: NoiseSpec::default(),
            duplicated_type_pairs: Vec::new(),
        }
    }
}

impl SyntheticCorpusSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::InvalidSpec(m));
        if self.n_types < 2 {
            return bad("n_types must be at least 2".into());
        }
        if self.fingerprints_per_type == 0 {
            return bad("fingerprints_per_type must be positive".into());
        }
        let (lo, hi) = self.packets_per_setup;
        if lo == 0 || lo > hi {
            return bad(format!("packets_per_setup range {lo}..={hi} is empty"));
        }
        for (name, p) in [("drop_prob", self.noise.drop_prob), ("duplicate_prob", self.noise.duplicate_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1]"));
            }
        }
        let mut copied = vec![false; self.n_types];
        for &(a, b) in &self.duplicated_type_pairs {
            if a >= self.n_types || b >= self.n_types || a == b {
                return bad(format!("duplicated pair ({a}, {b}) is out of range"));
            }
            if std::mem::replace(&mut copied[b], true) {
                return bad(format!("type {b} is the copy in more than one pair"));
            }
        }
        Ok(())
    }

    /// Reads a spec from JSON, or TOML when the extension is `.toml`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let spec: SyntheticCorpusSpec = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| HarnessError::InvalidSpec(e.to_string()))?
        } else {
            serde_json::from_str(&text).map_err(|e| HarnessError::InvalidSpec(e.to_string()))?
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Type label used by generated corpora.
pub fn synthetic_type_id(i: usize) -> DeviceTypeId {
    DeviceTypeId::new(format!("synthetic-{i:02}")).expect("non-empty")
}

/// A packet of a base sequence; `host` is an abstract destination that gets
/// its counter value only after noise is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct BasePacket {
    features: PacketFeatures,
    host: Option<u32>,
}

const HOST_BROADCAST: u32 = 0;
const HOST_GATEWAY: u32 = 1;
const HOST_MDNS: u32 = 2;
const HOST_SSDP: u32 = 3;
const HOST_NTP: u32 = 4;
const HOST_IGMP: u32 = 5;
const FIRST_CLOUD_HOST: u32 = 10;

fn random_packet(rng: &mut ChaCha8Rng, clouds: u32) -> BasePacket {
    let mut f = PacketFeatures::default();
    let dyn_port = |rng: &mut ChaCha8Rng| -> u16 {
        if rng.random_bool(0.7) {
            rng.random_range(49152..=65535)
        } else {
            rng.random_range(1024..=49151)
        }
    };
    let cloud = |rng: &mut ChaCha8Rng| FIRST_CLOUD_HOST + rng.random_range(0..clouds);
    let mut ports: Option<(u16, u16)> = None;
    let mut host = None;
    match rng.random_range(0..15u8) {
        0 => {
            f.arp = true;
            f.size = if rng.random_bool(0.5) { 42 } else { 60 };
        }
        1 => {
            f.eapol = true;
            f.raw_data = true;
            f.size = rng.random_range(99..=200);
        }
        2 => {
            f.llc = true;
            f.raw_data = true;
            f.size = rng.random_range(60..=120);
        }
        3 => {
            f.ip = true;
            f.udp = true;
            f.dhcp = true;
            f.bootp = true;
            f.raw_data = true;
            f.size = rng.random_range(342..=400);
            ports = Some((68, 67));
            host = Some(HOST_BROADCAST);
        }
        4 => {
            f.ip = true;
            f.udp = true;
            f.dns = true;
            f.raw_data = true;
            f.size = rng.random_range(70..=110);
            ports = Some((dyn_port(rng), 53));
            host = Some(HOST_GATEWAY);
        }
        5 => {
            f.ip = true;
            f.udp = true;
            f.mdns = true;
            f.raw_data = true;
            f.size = rng.random_range(80..=400);
            ports = Some((5353, 5353));
            host = Some(HOST_MDNS);
        }
        6 => {
            f.ip = true;
            f.udp = true;
            f.ssdp = true;
            f.raw_data = true;
            f.size = rng.random_range(120..=400);
            ports = Some((dyn_port(rng), 1900));
            host = Some(HOST_SSDP);
        }
        7 => {
            f.ip = true;
            f.udp = true;
            f.ntp = true;
            f.raw_data = true;
            f.size = 90;
            ports = Some(if rng.random_bool(0.5) { (123, 123) } else { (dyn_port(rng), 123) });
            host = Some(HOST_NTP);
        }
        8 => {
            // TCP handshake segment to a cloud endpoint.
            f.ip = true;
            f.tcp = true;
            f.https = true;
            f.size = if rng.random_bool(0.5) { 66 } else { 74 };
            ports = Some((dyn_port(rng), 443));
            host = Some(cloud(rng));
        }
        9 => {
            f.ip = true;
            f.tcp = true;
            f.https = true;
            f.raw_data = true;
            f.size = rng.random_range(100..=1514);
            ports = Some((dyn_port(rng), 443));
            host = Some(cloud(rng));
        }
        10 => {
            f.ip = true;
            f.tcp = true;
            f.http = true;
            f.raw_data = rng.random_bool(0.7);
            f.size = if f.raw_data { rng.random_range(100..=900) } else { 74 };
            ports = Some((dyn_port(rng), 80));
            host = Some(cloud(rng));
        }
        11 => {
            f.ip = true;
            f.icmp = true;
            f.raw_data = true;
            f.size = 98;
            host = Some(HOST_GATEWAY);
        }
        12 => {
            // MLD report: hop-by-hop router alert plus PadN.
            f.ip = true;
            f.icmpv6 = true;
            f.ip_opt_router_alert = true;
            f.ip_opt_padding = true;
            f.size = rng.random_range(86..=150);
            host = Some(HOST_IGMP);
        }
        13 => {
            // IGMP membership report with router alert.
            f.ip = true;
            f.ip_opt_router_alert = true;
            f.raw_data = true;
            f.size = 60;
            host = Some(HOST_IGMP);
        }
        _ => {
            // Vendor protocol on a registered port (e.g. MQTT over TLS).
            f.ip = true;
            f.tcp = rng.random_bool(0.5);
            f.udp = !f.tcp;
            f.raw_data = true;
            f.size = rng.random_range(60..=600);
            let service = rng.random_range(1024..=49151u16);
            ports = Some(if rng.random_bool(0.5) { (dyn_port(rng), service) } else { (service, dyn_port(rng)) });
            host = Some(cloud(rng));
        }
    }
    if let Some((s, d)) = ports {
        f.src_port_class = port_class(Some(s));
        f.dst_port_class = port_class(Some(d));
    }
    BasePacket { features: f, host }
}

/// How many identical copies of a setup packet a device sends: three ARP
/// probes, repeated mDNS/SSDP announcements and IGMP/MLD reports, DHCP
/// retries; unicast TCP and query traffic goes out once.
fn copies(f: &PacketFeatures, rng: &mut ChaCha8Rng) -> usize {
    if f.arp {
        3
    } else if f.mdns || f.ssdp {
        rng.random_range(2..=3)
    } else if f.ip_opt_router_alert {
        2
    } else if f.dhcp {
        rng.random_range(1..=2)
    } else {
        1
    }
}

fn base_sequence(rng: &mut ChaCha8Rng, len: usize) -> Vec<BasePacket> {
    let clouds = rng.random_range(1..=5);
    let mut seq = Vec::with_capacity(len + 2);
    while seq.len() < len {
        let p = random_packet(rng, clouds);
        let n = copies(&p.features, rng);
        seq.extend(std::iter::repeat_n(p, n));
    }
    seq.truncate(len);
    seq
}

/// Assigns first-seen destination counters to a packet sequence.
fn with_counters(seq: &[BasePacket]) -> Vec<PacketFeatures> {
    let mut seen: HashMap<u32, u32> = HashMap::new();
    seq.iter()
        .map(|p| {
            let mut f = p.features;
            f.dest_ip_counter = p.host.map_or(0, |h| {
                let next = seen.len() as u32 + 1;
                *seen.entry(h).or_insert(next)
            });
            f
        })
        .collect()
}

fn perturb(rng: &mut ChaCha8Rng, base: &[BasePacket], noise: &NoiseSpec) -> Vec<BasePacket> {
    let mut out = Vec::with_capacity(base.len() + 4);
    for p in base {
        if noise.drop_prob > 0.0 && rng.random_bool(noise.drop_prob) {
            continue;
        }
        let mut q = *p;
        if noise.size_jitter > 0 {
            let j = noise.size_jitter as i64;
            let size = q.features.size as i64 + rng.random_range(-j..=j);
            q.features.size = size.max(14) as u32;
        }
        out.push(q);
        if noise.duplicate_prob > 0.0 && rng.random_bool(noise.duplicate_prob) {
            out.push(q);
        }
    }
    if out.is_empty() {
        // A setup phase always yields at least one packet.
        out.push(base[0]);
    }
    out
}

/// Generates a labeled fingerprint database; deterministic in `seed`.
pub fn generate_corpus<T: Scalar>(spec: &SyntheticCorpusSpec, seed: u64) -> Result<FingerprintDb<T>, HarnessError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = spec.packets_per_setup;

    let mut bases: Vec<Vec<BasePacket>> = Vec::with_capacity(spec.n_types);
    for _ in 0..spec.n_types {
        loop {
            let len = rng.random_range(lo..=hi);
            let cand = base_sequence(&mut rng, len);
            let key = with_counters(&cand);
            if !bases.iter().any(|b| with_counters(b) == key) {
                bases.push(cand);
                break;
            }
        }
    }
    for &(a, b) in &spec.duplicated_type_pairs {
        bases[b] = bases[a].clone();
    }

    let mut db = FingerprintDb::new();
    for (t, base) in bases.iter().enumerate() {
        let label = synthetic_type_id(t);
        for k in 0..spec.fingerprints_per_type {
            let packets = with_counters(&perturb(&mut rng, base, &spec.noise));
            let mac = MacAddr([0x02, 0x00, (t >> 8) as u8, t as u8, (k >> 8) as u8, k as u8]);
            let fp = build_fingerprint(mac, packets).expect("perturb keeps at least one packet");
            db.push(fp.with_label(label.clone()));
        }
    }
    Ok(db)
}
