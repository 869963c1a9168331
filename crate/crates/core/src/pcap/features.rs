use std::io::Write;
use std::net::IpAddr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::decode::{DecodedPacket, TransportProtocol};
use crate::mac::MacAddr;

/// Number of per-packet features.
pub const FEATURE_COUNT: usize = 23;

/// Column names in feature order.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "arp",
    "llc",
    "ip",
    "icmp",
    "icmpv6",
    "eapol",
    "tcp",
    "udp",
    "http",
    "https",
    "dhcp",
    "bootp",
    "ssdp",
    "dns",
    "mdns",
    "ntp",
    "ip_opt_padding",
    "ip_opt_router_alert",
    "size",
    "raw_data",
    "dest_ip_counter",
    "src_port_class",
    "dst_port_class",
];

pub const SIZE_INDEX: usize = 18;
pub const DEST_IP_COUNTER_INDEX: usize = 20;

pub const PORT_HTTP: u16 = 80;
pub const PORT_HTTPS: u16 = 443;
pub const PORT_DHCP_SERVER: u16 = 67;
pub const PORT_DHCP_CLIENT: u16 = 68;
pub const PORT_DNS: u16 = 53;
pub const PORT_MDNS: u16 = 5353;
pub const PORT_SSDP: u16 = 1900;
pub const PORT_NTP: u16 = 123;

/// Coarse port bucket: 0 none, 1 well-known, 2 registered, 3 dynamic.
pub fn port_class(port: Option<u16>) -> u8 {
    match port {
        None => 0,
        Some(0..=1023) => 1,
        Some(1024..=49151) => 2,
        Some(_) => 3,
    }
}

/// The 23 per-packet features. Two packets are the same "character" of a
/// fingerprint exactly when all fields compare equal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(into = "[u32; FEATURE_COUNT]", try_from = "[u32; FEATURE_COUNT]")]
pub struct PacketFeatures {
    pub arp: bool,
    pub llc: bool,
    pub ip: bool,
    pub icmp: bool,
    pub icmpv6: bool,
    pub eapol: bool,
    pub tcp: bool,
    pub udp: bool,
    pub http: bool,
    pub https: bool,
    pub dhcp: bool,
    pub bootp: bool,
    pub ssdp: bool,
    pub dns: bool,
    pub mdns: bool,
    pub ntp: bool,
    pub ip_opt_padding: bool,
    pub ip_opt_router_alert: bool,
    pub size: u32,
    pub raw_data: bool,
    pub dest_ip_counter: u32,
    pub src_port_class: u8,
    pub dst_port_class: u8,
}

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("feature {name} must be 0 or 1, got {value}")]
    NotBinary { name: &'static str, value: u32 },
    #[error("port class {0} outside 0..=3")]
    PortClass(u32),
    #[error("tcp and udp flags are both set")]
    TcpAndUdp,
    #[error("arp and ip flags are both set")]
    ArpAndIp,
}

impl PacketFeatures {
    pub fn to_array(&self) -> [u32; FEATURE_COUNT] {
        let b = |v: bool| v as u32;
        [
            b(self.arp),
            b(self.llc),
            b(self.ip),
            b(self.icmp),
            b(self.icmpv6),
            b(self.eapol),
            b(self.tcp),
            b(self.udp),
            b(self.http),
            b(self.https),
            b(self.dhcp),
            b(self.bootp),
            b(self.ssdp),
            b(self.dns),
            b(self.mdns),
            b(self.ntp),
            b(self.ip_opt_padding),
            b(self.ip_opt_router_alert),
            self.size,
            b(self.raw_data),
            self.dest_ip_counter,
            self.src_port_class as u32,
            self.dst_port_class as u32,
        ]
    }

    /// Builds features from raw values, checking the per-field domains and
    /// the protocol exclusivity rules.
    pub fn from_array(v: [u32; FEATURE_COUNT]) -> Result<Self, FeatureError> {
        let bit = |i: usize| -> Result<bool, FeatureError> {
            match v[i] {
                0 => Ok(false),
                1 => Ok(true),
                value => Err(FeatureError::NotBinary { name: FEATURE_NAMES[i], value }),
            }
        };
        let class = |i: usize| -> Result<u8, FeatureError> {
            if v[i] <= 3 {
                Ok(v[i] as u8)
            } else {
                Err(FeatureError::PortClass(v[i]))
            }
        };
        let f = PacketFeatures {
            arp: bit(0)?,
            llc: bit(1)?,
            ip: bit(2)?,
            icmp: bit(3)?,
            icmpv6: bit(4)?,
            eapol: bit(5)?,
            tcp: bit(6)?,
            udp: bit(7)?,
            http: bit(8)?,
            https: bit(9)?,
            dhcp: bit(10)?,
            bootp: bit(11)?,
            ssdp: bit(12)?,
            dns: bit(13)?,
            mdns: bit(14)?,
            ntp: bit(15)?,
            ip_opt_padding: bit(16)?,
            ip_opt_router_alert: bit(17)?,
            size: v[18],
            raw_data: bit(19)?,
            dest_ip_counter: v[20],
            src_port_class: class(21)?,
            dst_port_class: class(22)?,
        };
        if f.tcp && f.udp {
            return Err(FeatureError::TcpAndUdp);
        }
        if f.arp && f.ip {
            return Err(FeatureError::ArpAndIp);
        }
        Ok(f)
    }
}

impl From<PacketFeatures> for [u32; FEATURE_COUNT] {
    fn from(f: PacketFeatures) -> Self {
        f.to_array()
    }
}

impl TryFrom<[u32; FEATURE_COUNT]> for PacketFeatures {
    type Error = FeatureError;

    fn try_from(v: [u32; FEATURE_COUNT]) -> Result<Self, Self::Error> {
        PacketFeatures::from_array(v)
    }
}

/// Per-device mapping from destination IP to its first-seen rank (1-based).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DestIpCounterState {
    seen: IndexMap<IpAddr, u32>,
}

impl DestIpCounterState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Counter for `ip`, assigning the next value on first sight.
    pub fn counter_for(&mut self, ip: IpAddr) -> u32 {
        let next = self.seen.len() as u32 + 1;
        *self.seen.entry(ip).or_insert(next)
    }

    pub fn get(&self, ip: &IpAddr) -> Option<u32> {
        self.seen.get(ip).copied()
    }

    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&IpAddr, u32)> {
        self.seen.iter().map(|(ip, c)| (ip, *c))
    }
}

/// Turns a decoded packet into its feature vector, updating the counter state.
///
/// Application-layer flags come from transport ports only.
pub fn extract_features(pkt: &DecodedPacket, state: &mut DestIpCounterState) -> PacketFeatures {
    let transport = pkt.transport;
    let tcp = matches!(transport, Some(t) if t.protocol == TransportProtocol::Tcp);
    let udp = matches!(transport, Some(t) if t.protocol == TransportProtocol::Udp);
    let on_port = |port: u16| transport.is_some_and(|t| t.src_port == port || t.dst_port == port);
    let dhcp = udp && (on_port(PORT_DHCP_SERVER) || on_port(PORT_DHCP_CLIENT));
    let dest_ip_counter = pkt.destination_ip().map_or(0, |ip| state.counter_for(ip));

    PacketFeatures {
        arp: pkt.arp,
        llc: pkt.llc,
        ip: pkt.ip.is_some(),
        icmp: pkt.icmp,
        icmpv6: pkt.icmpv6,
        eapol: pkt.eapol,
        tcp,
        udp,
        http: on_port(PORT_HTTP),
        https: on_port(PORT_HTTPS),
        dhcp,
        bootp: dhcp,
        ssdp: on_port(PORT_SSDP),
        dns: on_port(PORT_DNS),
        mdns: on_port(PORT_MDNS),
        ntp: on_port(PORT_NTP),
        ip_opt_padding: pkt.ip.is_some_and(|ip| ip.opt_padding),
        ip_opt_router_alert: pkt.ip.is_some_and(|ip| ip.opt_router_alert),
        size: pkt.frame_len as u32,
        raw_data: pkt.payload_len > 0,
        dest_ip_counter,
        src_port_class: port_class(transport.map(|t| t.src_port)),
        dst_port_class: port_class(transport.map(|t| t.dst_port)),
    }
}

/// Writes feature rows as CSV: `mac,packet_index,<23 feature columns>`.
pub fn write_feature_csv<W: Write>(
    out: W,
    rows: impl IntoIterator<Item = (MacAddr, usize, PacketFeatures)>,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["mac", "packet_index"];
    header.extend(FEATURE_NAMES);
    w.write_record(&header)?;
    for (mac, idx, f) in rows {
        let mut rec = vec![mac.to_string(), idx.to_string()];
        rec.extend(f.to_array().iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pcap::decode::{IpSummary, IpVersion, TransportSummary};
    use std::net::Ipv4Addr;

    fn udp_packet(src: u16, dst: u16, payload: usize, dst_ip: Ipv4Addr) -> DecodedPacket {
        DecodedPacket {
            frame_len: 42 + payload,
            llc: false,
            arp: false,
            eapol: false,
            ip: Some(IpSummary {
                version: IpVersion::V4,
                src: Ipv4Addr::new(0, 0, 0, 0).into(),
                dst: dst_ip.into(),
                protocol: 17,
                opt_padding: false,
                opt_router_alert: false,
            }),
            icmp: false,
            icmpv6: false,
            transport: Some(TransportSummary {
                protocol: TransportProtocol::Udp,
                src_port: src,
                dst_port: dst,
            }),
            payload_len: payload,
        }
    }

    #[test]
    fn port_class_boundaries() {
        assert_eq!(port_class(None), 0);
        assert_eq!(port_class(Some(0)), 1);
        assert_eq!(port_class(Some(1023)), 1);
        assert_eq!(port_class(Some(1024)), 2);
        assert_eq!(port_class(Some(49151)), 2);
        assert_eq!(port_class(Some(49152)), 3);
        assert_eq!(port_class(Some(65535)), 3);
    }

    #[test]
    fn dhcp_sets_bootp_and_well_known_classes() {
        let mut st = DestIpCounterState::new();
        let f = extract_features(&udp_packet(68, 67, 300, Ipv4Addr::BROADCAST), &mut st);
        assert!(f.dhcp && f.bootp && f.udp && f.ip);
        assert!(!f.tcp);
        assert_eq!((f.src_port_class, f.dst_port_class), (1, 1));
        assert_eq!(f.dest_ip_counter, 1);
        assert!(f.raw_data);
    }

    #[test]
    fn counters_are_dense_and_stable() {
        let mut st = DestIpCounterState::new();
        let a = Ipv4Addr::new(10, 0, 0, 1);
        let b = Ipv4Addr::new(10, 0, 0, 2);
        let seq: Vec<u32> = [a, b, a, Ipv4Addr::BROADCAST, b]
            .into_iter()
            .map(|ip| extract_features(&udp_packet(5000, 53, 10, ip), &mut st).dest_ip_counter)
            .collect();
        assert_eq!(seq, vec![1, 2, 1, 3, 2]);
        assert_eq!(st.len(), 3);
    }

    #[test]
    fn array_round_trip_and_validation() {
        let mut st = DestIpCounterState::new();
        let f = extract_features(&udp_packet(5353, 5353, 20, Ipv4Addr::new(224, 0, 0, 251)), &mut st);
        assert_eq!(PacketFeatures::from_array(f.to_array()).unwrap(), f);

        let mut bad = f.to_array();
        bad[0] = 2;
        assert!(matches!(PacketFeatures::from_array(bad), Err(FeatureError::NotBinary { .. })));
        let mut bad = f.to_array();
        bad[6] = 1;
        assert!(matches!(PacketFeatures::from_array(bad), Err(FeatureError::TcpAndUdp)));
        let mut bad = f.to_array();
        bad[22] = 4;
        assert!(matches!(PacketFeatures::from_array(bad), Err(FeatureError::PortClass(4))));
    }

    #[test]
    fn csv_header_has_25_columns() {
        let mut buf = Vec::new();
        write_feature_csv(&mut buf, [(MacAddr([1, 2, 3, 4, 5, 6]), 0, PacketFeatures::default())]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        assert_eq!(header.split(',').count(), 25);
        assert!(header.starts_with("mac,packet_index,arp,llc,ip,"));
        assert_eq!(lines.next().unwrap().split(',').count(), 25);
    }
}
