use std::fs::File;
use std::io::{self, BufReader, Read};
use std::path::Path;

use super::PcapError;
use crate::mac::MacAddr;

pub const MAGIC_USEC: u32 = 0xa1b2_c3d4;
pub const MAGIC_NSEC: u32 = 0xa1b2_3c4d;
pub const LINKTYPE_ETHERNET: u32 = 1;

const ETHERNET_HEADER_LEN: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkType {
    Ethernet,
}

/// Capture timestamp, seconds and microseconds since the epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp {
    pub secs: u32,
    pub micros: u32,
}

impl Timestamp {
    pub fn new(secs: u32, micros: u32) -> Self {
        Timestamp { secs, micros }
    }

    pub fn as_secs_f64(&self) -> f64 {
        self.secs as f64 + self.micros as f64 * 1e-6
    }
}

/// One captured link-layer frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawFrame {
    pub timestamp: Timestamp,
    pub link_type: LinkType,
    pub bytes: Vec<u8>,
}

impl RawFrame {
    /// Fails with [`PcapError::MalformedFrame`] when the frame cannot hold an ethernet header.
    pub fn new(timestamp: Timestamp, link_type: LinkType, bytes: Vec<u8>) -> Result<Self, PcapError> {
        if bytes.len() < ETHERNET_HEADER_LEN {
            return Err(PcapError::MalformedFrame(format!(
                "{} bytes is shorter than an ethernet header",
                bytes.len()
            )));
        }
        Ok(RawFrame { timestamp, link_type, bytes })
    }

    pub fn source_mac(&self) -> MacAddr {
        MacAddr::from_slice(&self.bytes[6..12]).expect("length checked at construction")
    }

    pub fn destination_mac(&self) -> MacAddr {
        MacAddr::from_slice(&self.bytes[0..6]).expect("length checked at construction")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Endian {
    Little,
    Big,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GlobalHeader {
    pub magic: u32,
    pub version_major: u16,
    pub version_minor: u16,
    pub snaplen: u32,
    pub network: u32,
}

impl GlobalHeader {
    pub fn is_nanosecond(&self) -> bool {
        self.magic == MAGIC_NSEC
    }
}

/// Streaming reader over a classic libpcap file.
///
/// Yields one item per record. Records too short to carry an ethernet header
/// come back as `Err(MalformedFrame)` and the stream continues; structural
/// damage (a truncated record header or body) ends the stream with
/// `CorruptHeader`.
pub struct PcapReader<R> {
    inner: R,
    endian: Endian,
    header: GlobalHeader,
    done: bool,
    last_ts: Timestamp,
}

impl PcapReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, PcapError> {
        let f = File::open(path.as_ref())?;
        PcapReader::new(BufReader::new(f))
    }
}

impl<R: Read> PcapReader<R> {
    pub fn new(mut inner: R) -> Result<Self, PcapError> {
        let mut buf = [0u8; 24];
        read_exact_or(&mut inner, &mut buf, "global header")?;
        let le = u32::from_le_bytes(buf[0..4].try_into().unwrap());
        let endian = match le {
            MAGIC_USEC | MAGIC_NSEC => Endian::Little,
            _ => match u32::from_be_bytes(buf[0..4].try_into().unwrap()) {
                MAGIC_USEC | MAGIC_NSEC => Endian::Big,
                other => {
                    return Err(PcapError::CorruptHeader(format!("bad magic 0x{other:08x}")));
                }
            },
        };
        let u16_at = |i: usize| {
            let b = [buf[i], buf[i + 1]];
            match endian {
                Endian::Little => u16::from_le_bytes(b),
                Endian::Big => u16::from_be_bytes(b),
            }
        };
        let u32_at = |i: usize| {
            let b: [u8; 4] = buf[i..i + 4].try_into().unwrap();
            match endian {
                Endian::Little => u32::from_le_bytes(b),
                Endian::Big => u32::from_be_bytes(b),
            }
        };
        let header = GlobalHeader {
            magic: u32_at(0),
            version_major: u16_at(4),
            version_minor: u16_at(6),
            snaplen: u32_at(16),
            network: u32_at(20),
        };
        if header.network != LINKTYPE_ETHERNET {
            return Err(PcapError::UnsupportedLinkType(header.network));
        }
        Ok(PcapReader { inner, endian, header, done: false, last_ts: Timestamp::default() })
    }

    pub fn header(&self) -> &GlobalHeader {
        &self.header
    }

    fn u32(&self, b: &[u8]) -> u32 {
        let b: [u8; 4] = b.try_into().unwrap();
        match self.endian {
            Endian::Little => u32::from_le_bytes(b),
            Endian::Big => u32::from_be_bytes(b),
        }
    }

    fn next_record(&mut self) -> Result<Option<RawFrame>, PcapError> {
        let mut hdr = [0u8; 16];
        let n = read_fully(&mut self.inner, &mut hdr)?;
        if n == 0 {
            return Ok(None);
        }
        if n < hdr.len() {
            return Err(PcapError::CorruptHeader("truncated record header".into()));
        }
        let ts_sec = self.u32(&hdr[0..4]);
        let ts_frac = self.u32(&hdr[4..8]);
        let incl_len = self.u32(&hdr[8..12]) as usize;
        // Guard against absurd lengths before allocating.
        let limit = (self.header.snaplen as usize).max(262_144);
        if incl_len > limit {
            return Err(PcapError::CorruptHeader(format!("record length {incl_len} exceeds snaplen")));
        }
        let mut bytes = vec![0u8; incl_len];
        read_exact_or(&mut self.inner, &mut bytes, "record body")?;
        let micros = if self.header.is_nanosecond() { ts_frac / 1000 } else { ts_frac };
        let mut ts = Timestamp::new(ts_sec, micros);
        // Keep the stream non-decreasing even if the capture clock stepped back.
        if ts < self.last_ts {
            ts = self.last_ts;
        }
        self.last_ts = ts;
        Ok(Some(RawFrame { timestamp: ts, link_type: LinkType::Ethernet, bytes }))
    }
}

impl<R: Read> Iterator for PcapReader<R> {
    type Item = Result<RawFrame, PcapError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.next_record() {
            Ok(Some(frame)) => {
                if frame.bytes.len() < ETHERNET_HEADER_LEN {
                    Some(Err(PcapError::MalformedFrame(format!(
                        "{}-byte record at {}.{:06}",
                        frame.bytes.len(),
                        frame.timestamp.secs,
                        frame.timestamp.micros
                    ))))
                } else {
                    Some(Ok(frame))
                }
            }
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Frames of a whole capture, with the ethernet source address pulled out.
#[derive(Debug, Clone, Default)]
pub struct Capture {
    pub frames: Vec<(MacAddr, RawFrame)>,
    /// Records skipped because they were too short to decode.
    pub skipped: usize,
}

/// Reads every frame of a pcap file in file order.
pub fn read_pcap(path: impl AsRef<Path>) -> Result<Capture, PcapError> {
    read_pcap_from(PcapReader::open(path)?)
}

pub fn read_pcap_from<R: Read>(reader: PcapReader<R>) -> Result<Capture, PcapError> {
    let mut out = Capture::default();
    for item in reader {
        match item {
            Ok(frame) => out.frames.push((frame.source_mac(), frame)),
            Err(PcapError::MalformedFrame(_)) => out.skipped += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

fn read_fully<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<(), PcapError> {
    let n = read_fully(r, buf)?;
    if n < buf.len() {
        return Err(PcapError::CorruptHeader(format!("truncated {what}")));
    }
    Ok(())
}
