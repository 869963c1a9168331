//! Capture ingestion: pcap reading, header decoding and per-packet features.

mod builder;
mod decode;
mod features;
mod reader;
mod session;
mod writer;

pub use builder::FrameBuilder;
pub use decode::*;
pub use features::*;
pub use reader::*;
pub use session::*;
pub use writer::*;

#[derive(Debug, thiserror::Error)]
pub enum PcapError {
    #[error("malformed frame: {0}")]
    MalformedFrame(String),
    #[error("unsupported link type {0} (only ethernet is handled)")]
    UnsupportedLinkType(u32),
    #[error("corrupt pcap: {0}")]
    CorruptHeader(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
