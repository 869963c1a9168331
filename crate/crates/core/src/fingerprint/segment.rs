use std::collections::VecDeque;
use std::path::Path;

use super::FingerprintError;
use crate::pcap::{PacketFeatures, TimedPacket};

/// Parameters of setup-phase end detection.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SetupSessionConfig {
    /// Silence, in seconds, that ends the setup phase.
    pub idle_timeout: f64,
    /// Hard cap on collected packets.
    pub max_packets: usize,
    /// Width of the sliding window used for the packet rate, in seconds.
    pub rate_window: f64,
    /// The phase ends once the windowed rate falls below this fraction of the peak.
    pub rate_drop_factor: f64,
}

impl Default for SetupSessionConfig {
    fn default() -> Self {
        SetupSessionConfig { idle_timeout: 30.0, max_packets: 500, rate_window: 10.0, rate_drop_factor: 0.1 }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SessionConfigError {
    #[error("line {line}: expected key=value, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for {key}: {value:?}")]
    BadValue { line: usize, key: String, value: String },
    #[error("invalid session config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SetupSessionConfig {
    pub fn validate(&self) -> Result<(), SessionConfigError> {
        if !(self.idle_timeout > 0.0) {
            return Err(SessionConfigError::Invalid("idle_timeout must be > 0".into()));
        }
        if self.max_packets < super::FIXED_PACKETS {
            return Err(SessionConfigError::Invalid(format!(
                "max_packets must be at least {}",
                super::FIXED_PACKETS
            )));
        }
        if !(self.rate_window > 0.0) {
            return Err(SessionConfigError::Invalid("rate_window must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.rate_drop_factor) {
            return Err(SessionConfigError::Invalid("rate_drop_factor must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Parses `key=value` lines over the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, SessionConfigError> {
        let mut cfg = SetupSessionConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| SessionConfigError::Syntax { line: i + 1, text: raw.to_string() })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = || SessionConfigError::BadValue { line: i + 1, key: key.to_string(), value: value.to_string() };
            match key {
                "idle_timeout" => cfg.idle_timeout = value.parse().map_err(|_| bad())?,
                "max_packets" => cfg.max_packets = value.parse().map_err(|_| bad())?,
                "rate_window" => cfg.rate_window = value.parse().map_err(|_| bad())?,
                "rate_drop_factor" => cfg.rate_drop_factor = value.parse().map_err(|_| bad())?,
                _ => return Err(SessionConfigError::UnknownKey { line: i + 1, key: key.to_string() }),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SessionConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// Returns the setup-phase prefix of a device's packet stream.
///
/// The phase ends before the first packet that (a) follows a silence of at
/// least `idle_timeout`, or (b) sees the windowed packet rate fall below
/// `rate_drop_factor` times the highest rate so far; or once `max_packets`
/// have been collected.
pub fn segment_setup(
    stream: &[TimedPacket],
    cfg: &SetupSessionConfig,
) -> Result<Vec<PacketFeatures>, FingerprintError> {
    if stream.is_empty() {
        return Err(FingerprintError::EmptySession);
    }
    let mut out = Vec::new();
    let mut window: VecDeque<f64> = VecDeque::new();
    let mut peak = 0.0f64;
    let mut prev_ts: Option<f64> = None;

    for p in stream {
        if out.len() >= cfg.max_packets {
            break;
        }
        if let Some(prev) = prev_ts {
            if p.ts - prev >= cfg.idle_timeout {
                break;
            }
        }
        window.push_back(p.ts);
        while window.front().is_some_and(|&t| t <= p.ts - cfg.rate_window) {
            window.pop_front();
        }
        let rate = window.len() as f64 / cfg.rate_window;
        if rate < cfg.rate_drop_factor * peak {
            break;
        }
        peak = peak.max(rate);
        out.push(p.features);
        prev_ts = Some(p.ts);
    }
    Ok(out)
}
