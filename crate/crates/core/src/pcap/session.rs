use std::collections::BTreeMap;

use super::decode::decode_frame;
use super::features::{extract_features, DestIpCounterState, PacketFeatures};
use super::reader::{Capture, RawFrame};
use crate::mac::MacAddr;

/// A feature vector with its capture time in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedPacket {
    pub ts: f64,
    pub features: PacketFeatures,
}

/// All packets one source MAC sent during a capture.
#[derive(Debug, Clone, Default)]
pub struct DeviceSession {
    pub mac: MacAddr,
    pub packets: Vec<TimedPacket>,
    pub counters: DestIpCounterState,
}

#[derive(Debug, Clone, Default)]
pub struct SessionSet {
    pub sessions: BTreeMap<MacAddr, DeviceSession>,
    /// Frames dropped because a header was truncated.
    pub malformed: usize,
}

impl SessionSet {
    /// Decodes frames in order and groups the features by source MAC.
    pub fn from_frames(frames: impl IntoIterator<Item = (MacAddr, RawFrame)>) -> Self {
        let mut out = SessionSet::default();
        for (mac, frame) in frames {
            out.push(mac, &frame);
        }
        out
    }

    pub fn from_capture(capture: &Capture) -> Self {
        let mut out = SessionSet { malformed: capture.skipped, ..Default::default() };
        for (mac, frame) in &capture.frames {
            out.push(*mac, frame);
        }
        out
    }

    fn push(&mut self, mac: MacAddr, frame: &RawFrame) {
        let decoded = match decode_frame(frame) {
            Ok(d) => d,
            Err(_) => {
                self.malformed += 1;
                return;
            }
        };
        let session = self
            .sessions
            .entry(mac)
            .or_insert_with(|| DeviceSession { mac, ..Default::default() });
        let features = extract_features(&decoded, &mut session.counters);
        session.packets.push(TimedPacket { ts: frame.timestamp.as_secs_f64(), features });
    }
}
