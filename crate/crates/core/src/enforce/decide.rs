use std::fmt;
use std::io::Read;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use super::{overlay_of, IsolationLevel, Overlay, RuleCache};
use crate::mac::MacAddr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Destination {
    Device { mac: MacAddr, overlay: Overlay },
    Internet { ip: Ipv4Addr },
}

/// A flow to be filtered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FlowKey {
    pub src_mac: MacAddr,
    pub dst: Destination,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Permit,
    Deny,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    /// No rule cached for the source; the device still needs identifying.
    UnidentifiedSource,
    SameOverlayPeer,
    CrossOverlayPeer,
    NoInternetAccess,
    PermittedDestination,
    DestinationNotPermitted,
    UnrestrictedInternet,
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Reason::UnidentifiedSource => "source has no enforcement rule; flagged for identification",
            Reason::SameOverlayPeer => "peer is in the same overlay",
            Reason::CrossOverlayPeer => "peer is in the other overlay",
            Reason::NoInternetAccess => "strict isolation has no Internet access",
            Reason::PermittedDestination => "destination is on the permitted list",
            Reason::DestinationNotPermitted => "destination is not on the permitted list",
            Reason::UnrestrictedInternet => "trusted device has unrestricted Internet access",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub decision: Decision,
    pub reason: Reason,
}

impl Verdict {
    fn permit(reason: Reason) -> Self {
        Verdict { decision: Decision::Permit, reason }
    }

    fn deny(reason: Reason) -> Self {
        Verdict { decision: Decision::Deny, reason }
    }
}

/// Permit/deny for one flow under the source device's cached rule.
pub fn decide(flow: &FlowKey, cache: &RuleCache) -> Verdict {
    let Some(rule) = cache.lookup(&flow.src_mac) else {
        return Verdict::deny(Reason::UnidentifiedSource);
    };
    match flow.dst {
        Destination::Device { overlay, .. } => {
            if overlay == overlay_of(rule.level) {
                Verdict::permit(Reason::SameOverlayPeer)
            } else {
                Verdict::deny(Reason::CrossOverlayPeer)
            }
        }
        Destination::Internet { ip } => match rule.level {
            IsolationLevel::Strict => Verdict::deny(Reason::NoInternetAccess),
            IsolationLevel::Restricted if rule.permits_ip(ip) => Verdict::permit(Reason::PermittedDestination),
            IsolationLevel::Restricted => Verdict::deny(Reason::DestinationNotPermitted),
            IsolationLevel::Trusted => Verdict::permit(Reason::UnrestrictedInternet),
        },
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FlowError {
    #[error("flow row {row}: {msg}")]
    Row { row: usize, msg: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Reads flows from CSV with columns `src_mac,dst_kind,dst_value,dst_overlay`.
/// `dst_kind` is `device` or `internet`; the overlay column is ignored for
/// Internet destinations.
pub fn parse_flows_csv<R: Read>(input: R) -> Result<Vec<FlowKey>, FlowError> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(input);
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let err = |msg: String| FlowError::Row { row, msg };
        let field = |k: usize| rec.get(k).unwrap_or("");
        let src_mac: MacAddr = field(0).parse().map_err(|e| err(format!("{e}")))?;
        let dst = match field(1).to_ascii_lowercase().as_str() {
            "device" => Destination::Device {
                mac: field(2).parse().map_err(|e| err(format!("{e}")))?,
                overlay: field(3).parse().map_err(|e| err(format!("{e}")))?,
            },
            "internet" => Destination::Internet {
                ip: field(2).parse().map_err(|_| err(format!("bad IPv4 address {:?}", field(2))))?,
            },
            other => return Err(err(format!("unknown destination kind {other:?}"))),
        };
        out.push(FlowKey { src_mac, dst });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enforce::make_rule;

    #[test]
    fn unknown_source_denied() {
        let flow = FlowKey { src_mac: MacAddr([1; 6]), dst: Destination::Internet { ip: Ipv4Addr::new(8, 8, 8, 8) } };
        let v = decide(&flow, &RuleCache::new());
        assert_eq!(v, Verdict { decision: Decision::Deny, reason: Reason::UnidentifiedSource });
    }

    #[test]
    fn strict_has_no_internet() {
        let mut c = RuleCache::new();
        let m = MacAddr([1; 6]);
        c.update(make_rule(m, IsolationLevel::Strict, vec![], 1, 0).unwrap()).unwrap();
        let flow = FlowKey { src_mac: m, dst: Destination::Internet { ip: Ipv4Addr::new(8, 8, 8, 8) } };
        assert_eq!(decide(&flow, &c).decision, Decision::Deny);
    }

    #[test]
    fn parses_flow_csv() {
        let text = "src_mac,dst_kind,dst_value,dst_overlay\n\
                    13-73-74-7E-A9-C2,internet,8.8.8.8,\n\
                    13-73-74-7E-A9-C2,device,02-00-00-00-00-01,untrusted\n";
        let flows = parse_flows_csv(text.as_bytes()).unwrap();
        assert_eq!(flows.len(), 2);
        assert!(matches!(flows[1].dst, Destination::Device { overlay: Overlay::Untrusted, .. }));
        assert!(parse_flows_csv("h,h,h,h\nzz,internet,1.1.1.1,\n".as_bytes()).is_err());
        assert!(parse_flows_csv("h,h,h,h\n13-73-74-7E-A9-C2,lan,1.1.1.1,\n".as_bytes()).is_err());
    }
}
