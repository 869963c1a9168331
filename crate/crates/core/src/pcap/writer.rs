use std::io::{self, Write};

use super::reader::{Timestamp, LINKTYPE_ETHERNET, MAGIC_USEC};

/// Byte order of a written capture file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ByteOrder {
    Little,
    Big,
}

/// Minimal classic-pcap writer (microsecond timestamps, ethernet link type).
pub struct PcapWriter<W: Write> {
    out: W,
    order: ByteOrder,
}

impl<W: Write> PcapWriter<W> {
    pub fn new(out: W) -> io::Result<Self> {
        Self::with_byte_order(out, ByteOrder::Little)
    }

    pub fn with_byte_order(out: W, order: ByteOrder) -> io::Result<Self> {
        let mut w = PcapWriter { out, order };
        w.u32(MAGIC_USEC)?;
        w.u16(2)?;
        w.u16(4)?;
        w.u32(0)?; // thiszone
        w.u32(0)?; // sigfigs
        w.u32(65_535)?;
        w.u32(LINKTYPE_ETHERNET)?;
        Ok(w)
    }

    pub fn write_frame(&mut self, ts: Timestamp, bytes: &[u8]) -> io::Result<()> {
        let len = u32::try_from(bytes.len())
            .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "frame too large"))?;
        self.u32(ts.secs)?;
        self.u32(ts.micros)?;
        self.u32(len)?;
        self.u32(len)?;
        self.out.write_all(bytes)
    }

    pub fn into_inner(mut self) -> io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }

    fn u32(&mut self, v: u32) -> io::Result<()> {
        match self.order {
            ByteOrder::Little => self.out.write_all(&v.to_le_bytes()),
            ByteOrder::Big => self.out.write_all(&v.to_be_bytes()),
        }
    }

    fn u16(&mut self, v: u16) -> io::Result<()> {
        match self.order {
            ByteOrder::Little => self.out.write_all(&v.to_le_bytes()),
            ByteOrder::Big => self.out.write_all(&v.to_be_bytes()),
        }
    }
}
