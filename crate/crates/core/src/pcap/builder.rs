//! Construction of well-formed ethernet frames.
//!
//! Used to synthesize captures for tests and demos. Checksums are left zero;
//! the decoder never validates them.

use std::net::{Ipv4Addr, Ipv6Addr};

use super::decode::{
    ETHERTYPE_ARP, ETHERTYPE_EAPOL, ETHERTYPE_IPV4, ETHERTYPE_IPV6, IPPROTO_ICMP, IPPROTO_ICMPV6,
    IPPROTO_TCP, IPPROTO_UDP,
};
use crate::mac::MacAddr;

#[derive(Debug, Clone)]
enum Upper {
    Raw(u8),
    Udp { src: u16, dst: u16 },
    Tcp { src: u16, dst: u16, flags: u8 },
    Icmp { ty: u8, code: u8 },
    Icmpv6 { ty: u8, code: u8 },
}

#[derive(Debug, Clone)]
enum Network {
    Ethertype(u16),
    Arp { oper: u16, sender: Ipv4Addr, target: Ipv4Addr },
    Eapol { packet_type: u8 },
    Llc { dsap: u8, ssap: u8 },
    Ipv4 { src: Ipv4Addr, dst: Ipv4Addr, options: Vec<u8>, upper: Upper },
    Ipv6 { src: Ipv6Addr, dst: Ipv6Addr, hop_by_hop: Option<Vec<u8>>, upper: Upper },
}

/// Builder for a single ethernet frame.
#[derive(Debug, Clone)]
pub struct FrameBuilder {
    src: MacAddr,
    dst: MacAddr,
    vlan: Option<u16>,
    network: Network,
    payload: Vec<u8>,
    pad_to_minimum: bool,
}

impl FrameBuilder {
    pub fn new(src: MacAddr, dst: MacAddr) -> Self {
        FrameBuilder {
            src,
            dst,
            vlan: None,
            network: Network::Ethertype(0x88b5),
            payload: Vec::new(),
            pad_to_minimum: false,
        }
    }

    pub fn vlan(mut self, id: u16) -> Self {
        self.vlan = Some(id);
        self
    }

    pub fn ethertype(mut self, ethertype: u16) -> Self {
        self.network = Network::Ethertype(ethertype);
        self
    }

    pub fn arp_request(mut self, sender: Ipv4Addr, target: Ipv4Addr) -> Self {
        self.network = Network::Arp { oper: 1, sender, target };
        self
    }

    pub fn eapol(mut self, packet_type: u8) -> Self {
        self.network = Network::Eapol { packet_type };
        self
    }

    /// IEEE 802.3 frame with an LLC header; the length field replaces the ethertype.
    pub fn llc(mut self, dsap: u8, ssap: u8) -> Self {
        self.network = Network::Llc { dsap, ssap };
        self
    }

    pub fn ipv4(mut self, src: Ipv4Addr, dst: Ipv4Addr) -> Self {
        self.network = Network::Ipv4 { src, dst, options: Vec::new(), upper: Upper::Raw(253) };
        self
    }

    pub fn ipv6(mut self, src: Ipv6Addr, dst: Ipv6Addr) -> Self {
        self.network = Network::Ipv6 { src, dst, hop_by_hop: None, upper: Upper::Raw(59) };
        self
    }

    /// Raw IPv4 option bytes; padded with end-of-list octets to a 4-byte boundary.
    pub fn ipv4_options(mut self, opts: &[u8]) -> Self {
        if let Network::Ipv4 { options, .. } = &mut self.network {
            *options = opts.to_vec();
        }
        self
    }

    /// IPv6 hop-by-hop option TLVs (without the 2-byte extension header prefix).
    pub fn ipv6_hop_by_hop(mut self, tlvs: &[u8]) -> Self {
        if let Network::Ipv6 { hop_by_hop, .. } = &mut self.network {
            *hop_by_hop = Some(tlvs.to_vec());
        }
        self
    }

    pub fn udp(self, src: u16, dst: u16) -> Self {
        self.upper(Upper::Udp { src, dst })
    }

    pub fn tcp(self, src: u16, dst: u16, flags: u8) -> Self {
        self.upper(Upper::Tcp { src, dst, flags })
    }

    pub fn icmp(self, ty: u8, code: u8) -> Self {
        self.upper(Upper::Icmp { ty, code })
    }

    pub fn icmpv6(self, ty: u8, code: u8) -> Self {
        self.upper(Upper::Icmpv6 { ty, code })
    }

    pub fn ip_protocol(self, proto: u8) -> Self {
        self.upper(Upper::Raw(proto))
    }

    fn upper(mut self, u: Upper) -> Self {
        match &mut self.network {
            Network::Ipv4 { upper, .. } | Network::Ipv6 { upper, .. } => *upper = u,
            _ => {}
        }
        self
    }

    pub fn payload(mut self, bytes: &[u8]) -> Self {
        self.payload = bytes.to_vec();
        self
    }

    /// Pad the frame with zero octets to the 60-byte ethernet minimum.
    pub fn pad_to_minimum(mut self) -> Self {
        self.pad_to_minimum = true;
        self
    }

    pub fn build(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.payload.len());
        out.extend_from_slice(&self.dst.0);
        out.extend_from_slice(&self.src.0);
        if let Some(id) = self.vlan {
            out.extend_from_slice(&0x8100u16.to_be_bytes());
            out.extend_from_slice(&(id & 0x0fff).to_be_bytes());
        }
        match &self.network {
            Network::Ethertype(t) => {
                out.extend_from_slice(&t.to_be_bytes());
                out.extend_from_slice(&self.payload);
            }
            Network::Arp { oper, sender, target } => {
                out.extend_from_slice(&ETHERTYPE_ARP.to_be_bytes());
                out.extend_from_slice(&[0, 1, 0x08, 0x00, 6, 4]);
                out.extend_from_slice(&oper.to_be_bytes());
                out.extend_from_slice(&self.src.0);
                out.extend_from_slice(&sender.octets());
                out.extend_from_slice(&[0; 6]);
                out.extend_from_slice(&target.octets());
            }
            Network::Eapol { packet_type } => {
                out.extend_from_slice(&ETHERTYPE_EAPOL.to_be_bytes());
                out.push(2);
                out.push(*packet_type);
                out.extend_from_slice(&(self.payload.len() as u16).to_be_bytes());
                out.extend_from_slice(&self.payload);
            }
            Network::Llc { dsap, ssap } => {
                let len = 3 + self.payload.len();
                out.extend_from_slice(&(len as u16).to_be_bytes());
                out.extend_from_slice(&[*dsap, *ssap, 0x03]);
                out.extend_from_slice(&self.payload);
            }
            Network::Ipv4 { src, dst, options, upper } => {
                out.extend_from_slice(&ETHERTYPE_IPV4.to_be_bytes());
                let mut opts = options.clone();
                while opts.len() % 4 != 0 {
                    opts.push(0);
                }
                let (proto, seg) = upper_segment(upper, &self.payload);
                let ihl = 20 + opts.len();
                let total = ihl + seg.len();
                out.push(0x40 | (ihl / 4) as u8);
                out.push(0);
                out.extend_from_slice(&(total as u16).to_be_bytes());
                out.extend_from_slice(&[0, 0, 0x40, 0]);
                out.push(64);
                out.push(proto);
                out.extend_from_slice(&[0, 0]);
                out.extend_from_slice(&src.octets());
                out.extend_from_slice(&dst.octets());
                out.extend_from_slice(&opts);
                out.extend_from_slice(&seg);
            }
            Network::Ipv6 { src, dst, hop_by_hop, upper } => {
                out.extend_from_slice(&ETHERTYPE_IPV6.to_be_bytes());
                let (proto, seg) = upper_segment(upper, &self.payload);
                let mut ext = Vec::new();
                let next = if let Some(tlvs) = hop_by_hop {
                    ext.push(proto);
                    let mut body = tlvs.clone();
                    // Fill to a multiple of 8 with Pad1/PadN.
                    let rem = (2 + body.len()) % 8;
                    if rem != 0 {
                        let pad = 8 - rem;
                        if pad == 1 {
                            body.push(0);
                        } else {
                            body.push(1);
                            body.push((pad - 2) as u8);
                            body.extend(std::iter::repeat_n(0, pad - 2));
                        }
                    }
                    ext.push(((2 + body.len()) / 8 - 1) as u8);
                    ext.extend_from_slice(&body);
                    0
                } else {
                    proto
                };
                out.extend_from_slice(&[0x60, 0, 0, 0]);
                out.extend_from_slice(&((ext.len() + seg.len()) as u16).to_be_bytes());
                out.push(next);
                out.push(255);
                out.extend_from_slice(&src.octets());
                out.extend_from_slice(&dst.octets());
                out.extend_from_slice(&ext);
                out.extend_from_slice(&seg);
            }
        }
        if self.pad_to_minimum && out.len() < 60 {
            out.resize(60, 0);
        }
        out
    }
}

fn upper_segment(upper: &Upper, payload: &[u8]) -> (u8, Vec<u8>) {
    let mut seg = Vec::with_capacity(20 + payload.len());
    let proto = match upper {
        Upper::Raw(p) => *p,
        Upper::Udp { src, dst } => {
            seg.extend_from_slice(&src.to_be_bytes());
            seg.extend_from_slice(&dst.to_be_bytes());
            seg.extend_from_slice(&((8 + payload.len()) as u16).to_be_bytes());
            seg.extend_from_slice(&[0, 0]);
            IPPROTO_UDP
        }
        Upper::Tcp { src, dst, flags } => {
            seg.extend_from_slice(&src.to_be_bytes());
            seg.extend_from_slice(&dst.to_be_bytes());
            seg.extend_from_slice(&[0, 0, 0, 1, 0, 0, 0, 0]);
            seg.push(5 << 4);
            seg.push(*flags);
            seg.extend_from_slice(&[0xff, 0xff, 0, 0, 0, 0]);
            IPPROTO_TCP
        }
        Upper::Icmp { ty, code } => {
            seg.extend_from_slice(&[*ty, *code, 0, 0, 0, 1, 0, 1]);
            IPPROTO_ICMP
        }
        Upper::Icmpv6 { ty, code } => {
            seg.extend_from_slice(&[*ty, *code, 0, 0, 0, 0, 0, 0]);
            IPPROTO_ICMPV6
        }
    };
    seg.extend_from_slice(payload);
    (proto, seg)
}
