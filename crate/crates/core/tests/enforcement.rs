use std::collections::BTreeSet;
use std::net::Ipv4Addr;

use devtype::enforce::{
    decide, load_rules, make_rule, overlay_of, parse_rules, rules_to_json, save_rules, CacheError, Decision,
    Destination, FlowKey, IsolationLevel, Overlay, Reason, RuleCache, RuleError,
};
use devtype::MacAddr;
use proptest::prelude::*;

const PERMITTED: Ipv4Addr = Ipv4Addr::new(34, 192, 121, 32);
const OTHER: Ipv4Addr = Ipv4Addr::new(8, 8, 8, 8);

fn mac(last: u8) -> MacAddr {
    MacAddr([0x13, 0x73, 0x74, 0x7e, 0xa9, last])
}

#[derive(Debug, Clone, Copy)]
enum Category {
    UntrustedPeer,
    TrustedPeer,
    PermittedInternet,
    OtherInternet,
}

fn destination(c: Category) -> Destination {
    match c {
        Category::UntrustedPeer => Destination::Device { mac: mac(0x50), overlay: Overlay::Untrusted },
        Category::TrustedPeer => Destination::Device { mac: mac(0x51), overlay: Overlay::Trusted },
        Category::PermittedInternet => Destination::Internet { ip: PERMITTED },
        Category::OtherInternet => Destination::Internet { ip: OTHER },
    }
}

fn cache_with(level: IsolationLevel) -> RuleCache {
    let ips = if level == IsolationLevel::Restricted { vec![PERMITTED, Ipv4Addr::new(23, 20, 121, 29)] } else { vec![] };
    let mut c = RuleCache::new();
    c.update(make_rule(mac(0xc2), level, ips, 1, 10).unwrap()).unwrap();
    c
}

#[test]
fn twelve_entry_truth_table() {
    use Category::*;
    use Decision::*;
    use IsolationLevel::*;
    let table = [
        (Strict, UntrustedPeer, Permit),
        (Strict, TrustedPeer, Deny),
        (Strict, PermittedInternet, Deny),
        (Strict, OtherInternet, Deny),
        (Restricted, UntrustedPeer, Permit),
        (Restricted, TrustedPeer, Deny),
        (Restricted, PermittedInternet, Permit),
        (Restricted, OtherInternet, Deny),
        (Trusted, UntrustedPeer, Deny),
        (Trusted, TrustedPeer, Permit),
        (Trusted, PermittedInternet, Permit),
        (Trusted, OtherInternet, Permit),
    ];
    for (level, cat, want) in table {
        let v = decide(&FlowKey { src_mac: mac(0xc2), dst: destination(cat) }, &cache_with(level));
        assert_eq!(v.decision, want, "{level} -> {cat:?}: {}", v.reason);
    }
}

#[test]
fn reasons_name_the_rule_that_fired() {
    let flow = |c| FlowKey { src_mac: mac(0xc2), dst: destination(c) };
    assert_eq!(decide(&flow(Category::OtherInternet), &cache_with(IsolationLevel::Strict)).reason, Reason::NoInternetAccess);
    assert_eq!(
        decide(&flow(Category::PermittedInternet), &cache_with(IsolationLevel::Restricted)).reason,
        Reason::PermittedDestination
    );
    assert_eq!(decide(&flow(Category::UntrustedPeer), &cache_with(IsolationLevel::Trusted)).reason, Reason::CrossOverlayPeer);
    let v = decide(&FlowKey { src_mac: mac(0x01), dst: destination(Category::UntrustedPeer) }, &cache_with(IsolationLevel::Trusted));
    assert_eq!((v.decision, v.reason), (Decision::Deny, Reason::UnidentifiedSource));
}

#[test]
fn strict_permits_imply_restricted_permits() {
    for c in [Category::UntrustedPeer, Category::TrustedPeer, Category::PermittedInternet, Category::OtherInternet] {
        let flow = FlowKey { src_mac: mac(0xc2), dst: destination(c) };
        if decide(&flow, &cache_with(IsolationLevel::Strict)).decision == Decision::Permit {
            assert_eq!(decide(&flow, &cache_with(IsolationLevel::Restricted)).decision, Decision::Permit);
        }
    }
    assert_eq!(overlay_of(IsolationLevel::Strict), overlay_of(IsolationLevel::Restricted));
}

#[test]
fn sample_rule_has_the_controller_field_set() {
    let rule = make_rule(
        "13-73-74-7E-A9-C2".parse().unwrap(),
        IsolationLevel::Restricted,
        vec![PERMITTED, Ipv4Addr::new(23, 20, 121, 29)],
        12345,
        1234,
    )
    .unwrap();
    let v: serde_json::Value = serde_json::from_str(&rules_to_json(&[rule.clone()])).unwrap();
    let obj = v[0].as_object().unwrap();
    let keys: BTreeSet<&str> = obj.keys().map(String::as_str).collect();
    let want: BTreeSet<&str> = ["id", "name", "source_mac", "permitted_ip", "priority", "hash", "isolation"].into();
    assert_eq!(keys, want);
    assert_eq!(obj["id"], 12345);
    assert_eq!(obj["priority"], 1234);
    assert_eq!(obj["source_mac"], serde_json::json!(["13-73-74-7E-A9-C2"]));
    assert_eq!(obj["permitted_ip"], serde_json::json!(["34.192.121.32", "23.20.121.29"]));
    assert_eq!(obj["isolation"], "restricted");
    assert_eq!(parse_rules(&rules_to_json(&[rule.clone()])).unwrap(), vec![rule]);
}

#[test]
fn level_and_ip_list_must_agree() {
    assert!(matches!(
        make_rule(mac(1), IsolationLevel::Restricted, vec![], 1, 0),
        Err(RuleError::RestrictedWithoutPermittedIps)
    ));
    assert!(make_rule(mac(1), IsolationLevel::Trusted, vec![], 1, 0).unwrap().permitted_ip.is_empty());
    assert!(make_rule(mac(1), IsolationLevel::Strict, vec![OTHER], 1, 0).is_err());
}

#[test]
fn rules_file_round_trip() {
    let rules: Vec<_> = IsolationLevel::ALL
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let ips = if l == IsolationLevel::Restricted { vec![PERMITTED] } else { vec![] };
            make_rule(mac(i as u8), l, ips, i as u64, -(i as i64)).unwrap()
        })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("rules.json");
    save_rules(&rules, &p).unwrap();
    assert_eq!(load_rules(&p).unwrap(), rules);
}

#[test]
fn bounded_cache_evicts_only_absent_devices() {
    let mut c = RuleCache::with_capacity_bound(2);
    for i in 0..2 {
        c.update(make_rule(mac(i), IsolationLevel::Trusted, vec![], i as u64, 0).unwrap()).unwrap();
    }
    let third = make_rule(mac(2), IsolationLevel::Strict, vec![], 2, 0).unwrap();
    assert!(matches!(c.update(third.clone()), Err(CacheError::CapacityExceeded(2))));
    c.mark_absent(mac(0));
    c.update(third).unwrap();
    assert!(c.lookup(&mac(0)).is_none());
    assert!(c.lookup(&mac(1)).is_some() && c.lookup(&mac(2)).is_some());
}

fn level() -> impl Strategy<Value = IsolationLevel> {
    prop_oneof![Just(IsolationLevel::Strict), Just(IsolationLevel::Restricted), Just(IsolationLevel::Trusted)]
}

proptest! {
    /// Whatever the update order, each MAC ends up with exactly its last rule.
    #[test]
    fn one_rule_per_mac(updates in proptest::collection::vec((0u8..6, level(), any::<u32>()), 1..40)) {
        let mut cache = RuleCache::new();
        let mut last = std::collections::HashMap::new();
        for (i, (m, l, ip)) in updates.iter().enumerate() {
            let ips = if *l == IsolationLevel::Restricted { vec![Ipv4Addr::from(*ip)] } else { vec![] };
            let rule = make_rule(mac(*m), *l, ips, i as u64, 0).unwrap();
            last.insert(*m, rule.clone());
            cache.update(rule).unwrap();
        }
        prop_assert_eq!(cache.len(), last.len());
        for (m, rule) in &last {
            prop_assert_eq!(cache.lookup(&mac(*m)), Some(rule));
        }
    }

    #[test]
    fn hash_ignores_ip_order(ips in proptest::collection::vec(any::<u32>(), 1..6), l in 0u8..6) {
        let ips: Vec<Ipv4Addr> = ips.into_iter().map(Ipv4Addr::from).collect();
        let mut rev = ips.clone();
        rev.reverse();
        let a = make_rule(mac(l), IsolationLevel::Restricted, ips, 1, 0).unwrap();
        let b = make_rule(mac(l), IsolationLevel::Restricted, rev, 1, 0).unwrap();
        prop_assert_eq!(a.hash, b.hash);
    }
}
