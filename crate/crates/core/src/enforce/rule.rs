use std::collections::HashMap;
use std::net::{IpAddr, Ipv4Addr, ToSocketAddrs};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::IsolationLevel;
use crate::mac::MacAddr;

/// Per-device enforcement rule. Field names follow the controller's rule
/// schema; `isolation` is an extension.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnforcementRule {
    pub id: u64,
    pub name: String,
    pub source_mac: Vec<MacAddr>,
    pub permitted_ip: Vec<Ipv4Addr>,
    pub priority: i64,
    pub hash: String,
    #[serde(rename = "isolation")]
    pub level: IsolationLevel,
}

#[derive(Debug, thiserror::Error)]
pub enum RuleError {
    #[error("restricted rule needs at least one permitted IP")]
    RestrictedWithoutPermittedIps,
    #[error("{0} rule must not carry permitted IPs")]
    UnexpectedPermittedIps(IsolationLevel),
    #[error("rule has no source MAC")]
    NoSourceMac,
    #[error("rule {id}: stored hash {stored} does not match {computed}")]
    HashMismatch { id: u64, stored: String, computed: String },
    #[error("invalid rule JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Digest of (source MACs, level, permitted IP set). IP order does not matter.
pub fn rule_hash(source_mac: &[MacAddr], level: IsolationLevel, permitted_ip: &[Ipv4Addr]) -> String {
    let mut ips: Vec<Ipv4Addr> = permitted_ip.to_vec();
    ips.sort();
    ips.dedup();
    let mut h = Sha256::new();
    for m in source_mac {
        h.update(m.0);
    }
    h.update([0xff]);
    h.update(level.as_str().as_bytes());
    h.update([0xff]);
    for ip in ips {
        h.update(ip.octets());
    }
    hex::encode(&h.finalize()[..8])
}

fn check_ips(level: IsolationLevel, ips: &[Ipv4Addr]) -> Result<(), RuleError> {
    match level {
        IsolationLevel::Restricted if ips.is_empty() => Err(RuleError::RestrictedWithoutPermittedIps),
        IsolationLevel::Strict | IsolationLevel::Trusted if !ips.is_empty() => {
            Err(RuleError::UnexpectedPermittedIps(level))
        }
        _ => Ok(()),
    }
}

/// Builds the rule for one device.
pub fn make_rule(
    mac: MacAddr,
    level: IsolationLevel,
    permitted_ip: Vec<Ipv4Addr>,
    id: u64,
    priority: i64,
) -> Result<EnforcementRule, RuleError> {
    check_ips(level, &permitted_ip)?;
    let source_mac = vec![mac];
    Ok(EnforcementRule {
        id,
        name: format!("{level}-{mac}"),
        hash: rule_hash(&source_mac, level, &permitted_ip),
        source_mac,
        permitted_ip,
        priority,
        level,
    })
}

impl EnforcementRule {
    pub fn validate(&self) -> Result<(), RuleError> {
        if self.source_mac.is_empty() {
            return Err(RuleError::NoSourceMac);
        }
        check_ips(self.level, &self.permitted_ip)?;
        let computed = rule_hash(&self.source_mac, self.level, &self.permitted_ip);
        if computed != self.hash {
            return Err(RuleError::HashMismatch { id: self.id, stored: self.hash.clone(), computed });
        }
        Ok(())
    }

    pub fn permits_ip(&self, ip: Ipv4Addr) -> bool {
        self.permitted_ip.contains(&ip)
    }
}

pub fn rules_to_json(rules: &[EnforcementRule]) -> String {
    serde_json::to_string_pretty(rules).expect("rules serialize")
}

/// Parses a JSON array of rules and validates each.
pub fn parse_rules(text: &str) -> Result<Vec<EnforcementRule>, RuleError> {
    let rules: Vec<EnforcementRule> = serde_json::from_str(text)?;
    for r in &rules {
        r.validate()?;
    }
    Ok(rules)
}

pub fn save_rules(rules: &[EnforcementRule], path: impl AsRef<Path>) -> Result<(), RuleError> {
    std::fs::write(path, rules_to_json(rules))?;
    Ok(())
}

pub fn load_rules(path: impl AsRef<Path>) -> Result<Vec<EnforcementRule>, RuleError> {
    parse_rules(&std::fs::read_to_string(path)?)
}

/// Maps DNS names in permitted destinations to IPv4 addresses. Names are
/// resolved once, when a rule is installed.
pub trait Resolver {
    fn resolve(&self, name: &str) -> Vec<Ipv4Addr>;
}

/// Resolver that knows no names.
pub struct NoResolver;

impl Resolver for NoResolver {
    fn resolve(&self, _name: &str) -> Vec<Ipv4Addr> {
        Vec::new()
    }
}

/// Fixed name table.
#[derive(Debug, Clone, Default)]
pub struct StaticResolver(pub HashMap<String, Vec<Ipv4Addr>>);

impl Resolver for StaticResolver {
    fn resolve(&self, name: &str) -> Vec<Ipv4Addr> {
        self.0.get(&name.to_ascii_lowercase()).cloned().unwrap_or_default()
    }
}

/// The operating system's resolver.
pub struct SystemResolver;

impl Resolver for SystemResolver {
    fn resolve(&self, name: &str) -> Vec<Ipv4Addr> {
        let Ok(addrs) = (name, 0u16).to_socket_addrs() else {
            return Vec::new();
        };
        let mut out: Vec<Ipv4Addr> = addrs
            .filter_map(|a| match a.ip() {
                IpAddr::V4(v4) => Some(v4),
                IpAddr::V6(_) => None,
            })
            .collect();
        out.sort();
        out.dedup();
        out
    }
}

/// Turns a list of IP literals and DNS names into a static IPv4 set, keeping
/// first-seen order. Unresolvable names and IPv6 literals are dropped.
pub fn resolve_destinations(dests: &[String], resolver: &dyn Resolver) -> Vec<Ipv4Addr> {
    let mut out: Vec<Ipv4Addr> = Vec::new();
    for d in dests {
        let found = match d.trim().parse::<IpAddr>() {
            Ok(IpAddr::V4(ip)) => vec![ip],
            Ok(IpAddr::V6(_)) => Vec::new(),
            Err(_) => resolver.resolve(d.trim()),
        };
        for ip in found {
            if !out.contains(&ip) {
                out.push(ip);
            }
        }
    }
    out
}
