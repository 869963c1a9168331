//! MAC-keyed isolation rules and flow permit/deny decisions.

mod cache;
mod decide;
mod rule;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use cache::{CacheError, RuleCache};
pub use decide::{decide, parse_flows_csv, Decision, Destination, FlowError, FlowKey, Reason, Verdict};
pub use rule::{
    load_rules, make_rule, parse_rules, rule_hash, rules_to_json, save_rules, resolve_destinations,
    EnforcementRule, NoResolver, Resolver, RuleError, StaticResolver, SystemResolver,
};

/// Network isolation applied to a device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IsolationLevel {
    /// Untrusted overlay only, no Internet.
    Strict,
    /// Untrusted overlay plus an allow-list of remote addresses.
    Restricted,
    /// Trusted overlay and unrestricted Internet.
    Trusted,
}

/// Virtual partition of the local network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Overlay {
    Trusted,
    Untrusted,
}

pub fn overlay_of(level: IsolationLevel) -> Overlay {
    match level {
        IsolationLevel::Strict | IsolationLevel::Restricted => Overlay::Untrusted,
        IsolationLevel::Trusted => Overlay::Trusted,
    }
}

impl IsolationLevel {
    pub const ALL: [IsolationLevel; 3] = [IsolationLevel::Strict, IsolationLevel::Restricted, IsolationLevel::Trusted];

    pub fn as_str(&self) -> &'static str {
        match self {
            IsolationLevel::Strict => "strict",
            IsolationLevel::Restricted => "restricted",
            IsolationLevel::Trusted => "trusted",
        }
    }
}

impl fmt::Display for IsolationLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("unknown isolation level {0:?}")]
pub struct ParseLevelError(String);

impl FromStr for IsolationLevel {
    type Err = ParseLevelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "strict" => Ok(IsolationLevel::Strict),
            "restricted" => Ok(IsolationLevel::Restricted),
            "trusted" => Ok(IsolationLevel::Trusted),
            _ => Err(ParseLevelError(s.to_string())),
        }
    }
}

impl fmt::Display for Overlay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Overlay::Trusted => "trusted",
            Overlay::Untrusted => "untrusted",
        })
    }
}

impl FromStr for Overlay {
    type Err = ParseLevelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "trusted" => Ok(Overlay::Trusted),
            "untrusted" => Ok(Overlay::Untrusted),
            _ => Err(ParseLevelError(s.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlays() {
        assert_eq!(overlay_of(IsolationLevel::Strict), Overlay::Untrusted);
        assert_eq!(overlay_of(IsolationLevel::Restricted), Overlay::Untrusted);
        assert_eq!(overlay_of(IsolationLevel::Trusted), Overlay::Trusted);
    }

    #[test]
    fn level_strings() {
        for l in IsolationLevel::ALL {
            assert_eq!(l.as_str().parse::<IsolationLevel>().unwrap(), l);
            assert_eq!(serde_json::to_string(&l).unwrap(), format!("\"{l}\""));
        }
        assert!("open".parse::<IsolationLevel>().is_err());
    }
}
