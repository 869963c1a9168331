//! Header-only protocol decoding of ethernet frames.
//!
//! Nothing here looks at payload content. The decoder walks headers down to
//! the transport layer and records which protocols are present, the ports,
//! IP option markers and how many octets remain after the last parsed header.

use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};

use super::reader::{LinkType, RawFrame};
use super::PcapError;

pub const ETHERTYPE_IPV4: u16 = 0x0800;
pub const ETHERTYPE_ARP: u16 = 0x0806;
pub const ETHERTYPE_VLAN: u16 = 0x8100;
pub const ETHERTYPE_QINQ: u16 = 0x88a8;
pub const ETHERTYPE_IPV6: u16 = 0x86dd;
pub const ETHERTYPE_EAPOL: u16 = 0x888e;

pub const IPPROTO_ICMP: u8 = 1;
pub const IPPROTO_TCP: u8 = 6;
pub const IPPROTO_UDP: u8 = 17;
pub const IPPROTO_ICMPV6: u8 = 58;

const IPV6_HOP_BY_HOP: u8 = 0;
const IPV6_ROUTING: u8 = 43;
const IPV6_FRAGMENT: u8 = 44;
const IPV6_DEST_OPTS: u8 = 60;

const IPV4_OPT_EOL: u8 = 0;
const IPV4_OPT_NOP: u8 = 1;
const IPV4_OPT_ROUTER_ALERT: u8 = 148;
const IPV6_OPT_PAD1: u8 = 0;
const IPV6_OPT_PADN: u8 = 1;
const IPV6_OPT_ROUTER_ALERT: u8 = 5;

const ICMP_HEADER_LEN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IpVersion {
    V4,
    V6,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IpSummary {
    pub version: IpVersion,
    pub src: IpAddr,
    pub dst: IpAddr,
    /// Upper-layer protocol after any IPv6 extension headers.
    pub protocol: u8,
    pub opt_padding: bool,
    pub opt_router_alert: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransportProtocol {
    Tcp,
    Udp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TransportSummary {
    pub protocol: TransportProtocol,
    pub src_port: u16,
    pub dst_port: u16,
}

/// Protocol stack summary of one frame.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DecodedPacket {
    /// Captured frame length in bytes.
    pub frame_len: usize,
    pub llc: bool,
    pub arp: bool,
    pub eapol: bool,
    pub ip: Option<IpSummary>,
    pub icmp: bool,
    pub icmpv6: bool,
    pub transport: Option<TransportSummary>,
    /// Octets left after the highest parsed header, bounded by the
    /// network-layer length so ethernet trailer padding is not counted.
    pub payload_len: usize,
}

impl DecodedPacket {
    fn empty(frame_len: usize) -> Self {
        DecodedPacket {
            frame_len,
            llc: false,
            arp: false,
            eapol: false,
            ip: None,
            icmp: false,
            icmpv6: false,
            transport: None,
            payload_len: 0,
        }
    }

    pub fn destination_ip(&self) -> Option<IpAddr> {
        self.ip.map(|ip| ip.dst)
    }
}

fn malformed(what: &str) -> PcapError {
    PcapError::MalformedFrame(format!("truncated {what}"))
}

fn be16(b: &[u8], at: usize) -> u16 {
    u16::from_be_bytes([b[at], b[at + 1]])
}

/// Decodes one ethernet frame.
pub fn decode_frame(frame: &RawFrame) -> Result<DecodedPacket, PcapError> {
    match frame.link_type {
        LinkType::Ethernet => decode_ethernet(&frame.bytes),
    }
}

pub fn decode_ethernet(bytes: &[u8]) -> Result<DecodedPacket, PcapError> {
    if bytes.len() < 14 {
        return Err(malformed("ethernet header"));
    }
    let mut pkt = DecodedPacket::empty(bytes.len());
    let mut ethertype = be16(bytes, 12);
    let mut off = 14;
    while ethertype == ETHERTYPE_VLAN || ethertype == ETHERTYPE_QINQ {
        if bytes.len() < off + 4 {
            return Err(malformed("VLAN tag"));
        }
        ethertype = be16(bytes, off + 2);
        off += 4;
    }
    if ethertype <= 1500 {
        // IEEE 802.3 length field followed by an LLC header.
        pkt.llc = true;
        let end = (off + ethertype as usize).min(bytes.len());
        if end < off + 3 {
            return Err(malformed("LLC header"));
        }
        let llc = &bytes[off..end];
        if llc[0] == 0xaa && llc[1] == 0xaa && llc[2] == 0x03 {
            // SNAP: OUI + ethertype, then the encapsulated protocol.
            if llc.len() < 8 {
                return Err(malformed("SNAP header"));
            }
            let inner = be16(llc, 6);
            decode_network(inner, &llc[8..], &mut pkt)?;
        } else {
            pkt.payload_len = llc.len() - 3;
        }
        return Ok(pkt);
    }
    decode_network(ethertype, &bytes[off..], &mut pkt)?;
    Ok(pkt)
}

fn decode_network(ethertype: u16, data: &[u8], pkt: &mut DecodedPacket) -> Result<(), PcapError> {
    match ethertype {
        ETHERTYPE_ARP => {
            pkt.arp = true;
            if data.len() < 8 {
                return Err(malformed("ARP header"));
            }
            let body = 8 + 2 * data[4] as usize + 2 * data[5] as usize;
            if data.len() < body {
                return Err(malformed("ARP addresses"));
            }
            pkt.payload_len = 0;
        }
        ETHERTYPE_EAPOL => {
            pkt.eapol = true;
            if data.len() < 4 {
                return Err(malformed("EAPoL header"));
            }
            let body = be16(data, 2) as usize;
            pkt.payload_len = body.min(data.len() - 4);
        }
        ETHERTYPE_IPV4 => decode_ipv4(data, pkt)?,
        ETHERTYPE_IPV6 => decode_ipv6(data, pkt)?,
        _ => {
            // Unlisted ethertype: nothing parsed beyond ethernet.
            pkt.payload_len = data.len();
        }
    }
    Ok(())
}

fn decode_ipv4(data: &[u8], pkt: &mut DecodedPacket) -> Result<(), PcapError> {
    if data.len() < 20 {
        return Err(malformed("IPv4 header"));
    }
    if data[0] >> 4 != 4 {
        return Err(PcapError::MalformedFrame("IPv4 version field is not 4".into()));
    }
    let ihl = (data[0] & 0x0f) as usize * 4;
    if ihl < 20 || data.len() < ihl {
        return Err(malformed("IPv4 options"));
    }
    let total = be16(data, 2) as usize;
    if total < ihl {
        return Err(PcapError::MalformedFrame("IPv4 total length below header length".into()));
    }
    let end = total.min(data.len());
    let (opt_padding, opt_router_alert) = scan_ipv4_options(&data[20..ihl])?;
    let protocol = data[9];
    let frag_offset = be16(data, 6) & 0x1fff;
    let src = IpAddr::V4(Ipv4Addr::new(data[12], data[13], data[14], data[15]));
    let dst = IpAddr::V4(Ipv4Addr::new(data[16], data[17], data[18], data[19]));
    pkt.ip = Some(IpSummary {
        version: IpVersion::V4,
        src,
        dst,
        protocol,
        opt_padding,
        opt_router_alert,
    });
    let upper = &data[ihl..end];
    if frag_offset != 0 {
        pkt.payload_len = upper.len();
        return Ok(());
    }
    decode_upper(protocol, upper, pkt)
}

fn scan_ipv4_options(opts: &[u8]) -> Result<(bool, bool), PcapError> {
    let (mut padding, mut router_alert) = (false, false);
    let mut i = 0;
    while i < opts.len() {
        match opts[i] {
            IPV4_OPT_EOL => {
                padding = true;
                break;
            }
            IPV4_OPT_NOP => {
                padding = true;
                i += 1;
            }
            kind => {
                let len = *opts.get(i + 1).ok_or_else(|| malformed("IPv4 option"))? as usize;
                if len < 2 || i + len > opts.len() {
                    return Err(malformed("IPv4 option"));
                }
                if kind == IPV4_OPT_ROUTER_ALERT {
                    router_alert = true;
                }
                i += len;
            }
        }
    }
    Ok((padding, router_alert))
}

fn decode_ipv6(data: &[u8], pkt: &mut DecodedPacket) -> Result<(), PcapError> {
    if data.len() < 40 {
        return Err(malformed("IPv6 header"));
    }
    if data[0] >> 4 != 6 {
        return Err(PcapError::MalformedFrame("IPv6 version field is not 6".into()));
    }
    let payload_len = be16(data, 4) as usize;
    let end = if payload_len == 0 { data.len() } else { (40 + payload_len).min(data.len()) };
    let mut next = data[6];
    let addr = |at: usize| {
        let o: [u8; 16] = data[at..at + 16].try_into().unwrap();
        IpAddr::V6(Ipv6Addr::from(o))
    };
    let (src, dst) = (addr(8), addr(24));
    let (mut padding, mut router_alert) = (false, false);
    let mut off = 40;
    let mut fragmented = false;
    loop {
        match next {
            IPV6_HOP_BY_HOP | IPV6_DEST_OPTS => {
                if end < off + 2 {
                    return Err(malformed("IPv6 options header"));
                }
                let len = (data[off + 1] as usize + 1) * 8;
                if end < off + len {
                    return Err(malformed("IPv6 options header"));
                }
                let (p, ra) = scan_ipv6_options(&data[off + 2..off + len])?;
                padding |= p;
                router_alert |= ra;
                next = data[off];
                off += len;
            }
            IPV6_ROUTING => {
                if end < off + 2 {
                    return Err(malformed("IPv6 routing header"));
                }
                let len = (data[off + 1] as usize + 1) * 8;
                if end < off + len {
                    return Err(malformed("IPv6 routing header"));
                }
                next = data[off];
                off += len;
            }
            IPV6_FRAGMENT => {
                if end < off + 8 {
                    return Err(malformed("IPv6 fragment header"));
                }
                fragmented = be16(data, off + 2) >> 3 != 0;
                next = data[off];
                off += 8;
                if fragmented {
                    break;
                }
            }
            _ => break,
        }
    }
    pkt.ip = Some(IpSummary {
        version: IpVersion::V6,
        src,
        dst,
        protocol: next,
        opt_padding: padding,
        opt_router_alert: router_alert,
    });
    let upper = &data[off..end];
    if fragmented {
        pkt.payload_len = upper.len();
        return Ok(());
    }
    decode_upper(next, upper, pkt)
}

fn scan_ipv6_options(opts: &[u8]) -> Result<(bool, bool), PcapError> {
    let (mut padding, mut router_alert) = (false, false);
    let mut i = 0;
    while i < opts.len() {
        match opts[i] {
            IPV6_OPT_PAD1 => {
                padding = true;
                i += 1;
            }
            kind => {
                let len = *opts.get(i + 1).ok_or_else(|| malformed("IPv6 option"))? as usize;
                if i + 2 + len > opts.len() {
                    return Err(malformed("IPv6 option"));
                }
                match kind {
                    IPV6_OPT_PADN => padding = true,
                    IPV6_OPT_ROUTER_ALERT => router_alert = true,
                    _ => {}
                }
                i += 2 + len;
            }
        }
    }
    Ok((padding, router_alert))
}

fn decode_upper(protocol: u8, upper: &[u8], pkt: &mut DecodedPacket) -> Result<(), PcapError> {
    match protocol {
        IPPROTO_TCP => {
            if upper.len() < 20 {
                return Err(malformed("TCP header"));
            }
            let doff = (upper[12] >> 4) as usize * 4;
            if doff < 20 || upper.len() < doff {
                return Err(malformed("TCP options"));
            }
            pkt.transport = Some(TransportSummary {
                protocol: TransportProtocol::Tcp,
                src_port: be16(upper, 0),
                dst_port: be16(upper, 2),
            });
            pkt.payload_len = upper.len() - doff;
        }
        IPPROTO_UDP => {
            if upper.len() < 8 {
                return Err(malformed("UDP header"));
            }
            let udp_len = be16(upper, 4) as usize;
            if udp_len < 8 {
                return Err(PcapError::MalformedFrame("UDP length below header length".into()));
            }
            pkt.transport = Some(TransportSummary {
                protocol: TransportProtocol::Udp,
                src_port: be16(upper, 0),
                dst_port: be16(upper, 2),
            });
            pkt.payload_len = udp_len.min(upper.len()) - 8;
        }
        IPPROTO_ICMP | IPPROTO_ICMPV6 => {
            if upper.len() < ICMP_HEADER_LEN {
                return Err(malformed("ICMP header"));
            }
            if protocol == IPPROTO_ICMP {
                pkt.icmp = true;
            } else {
                pkt.icmpv6 = true;
            }
            pkt.payload_len = upper.len() - ICMP_HEADER_LEN;
        }
        _ => pkt.payload_len = upper.len(),
    }
    Ok(())
}
