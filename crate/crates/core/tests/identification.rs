use std::net::Ipv4Addr;

use devtype::discriminate::normalized_distance;
use devtype::enforce::{decide, make_rule, Decision, Destination, FlowKey, IsolationLevel, Overlay, RuleCache};
use devtype::fingerprint::{DeviceTypeId, Fingerprint, FingerprintDb};
use devtype::harness::{generate_corpus, synthetic_type_id, train_registry, NoiseSpec, SyntheticCorpusSpec};
use devtype::identify::{assign_isolation, identify, IdentificationResult, Identifier, Outcome, ReferencePolicy, VulnerabilityRegistry};
use devtype::typemodel::{ClassifierRegistry, ForestParams};

fn corpus(n_types: usize, drop_prob: f64, pairs: Vec<(usize, usize)>, seed: u64) -> FingerprintDb {
    let spec = SyntheticCorpusSpec {
        n_types,
        noise: NoiseSpec { drop_prob, ..Default::default() },
        duplicated_type_pairs: pairs,
        ..Default::default()
    };
    generate_corpus(&spec, seed).unwrap()
}

fn registry(db: &FingerprintDb) -> ClassifierRegistry {
    let params = ForestParams { allow_short_pool: true, ..Default::default() };
    train_registry(db, &params, 3).unwrap()
}

fn check_invariants(r: &IdentificationResult) {
    let matches = r.match_count();
    assert_eq!(r.discrimination_used, matches >= 2);
    assert_eq!(r.outcome == Outcome::Unknown, matches == 0);
    let e = r.elapsed;
    assert!(e.classify_ms >= 0.0 && e.discriminate_ms >= 0.0);
    assert!(e.total_ms >= e.classify_ms.max(e.discriminate_ms));
    if !r.discrimination_used {
        assert!(r.dissimilarity.is_empty());
        assert_eq!(e.discriminate_ms, 0.0);
    }
}

#[test]
fn well_separated_type_needs_no_discrimination() {
    let db = corpus(10, 0.0, vec![], 5);
    let reg = registry(&db);
    let ident = Identifier::new(&reg, &db, ReferencePolicy::MostRecent, 5).unwrap();
    for e in db.entries.iter().step_by(7) {
        let r = ident.identify(&e.fixed, &e.full).unwrap();
        check_invariants(&r);
        assert_eq!(r.outcome, Outcome::Identified(e.label().unwrap().clone()));
        assert!(!r.discrimination_used);
        assert_eq!(r.matched_types.len(), 10);
    }
}

/// Score of one type recomputed straight from the references.
fn oracle_score(query: &Fingerprint, refs: &[&Fingerprint]) -> f64 {
    let raw: f64 = refs.iter().map(|r| normalized_distance(&query.columns, &r.columns).unwrap()).sum();
    raw * 5.0 / refs.len() as f64
}

#[test]
fn sibling_types_are_settled_by_edit_distance() {
    let db = corpus(27, 0.05, vec![(0, 1)], 8);
    let reg = registry(&db);
    let ident = Identifier::new(&reg, &db, ReferencePolicy::Random { seed: 4 }, 5).unwrap();
    let (a, b) = (synthetic_type_id(0), synthetic_type_id(1));
    let mut discriminated = 0;
    for e in db.entries.iter().filter(|e| e.label() == Some(&a) || e.label() == Some(&b)) {
        let r = ident.identify(&e.fixed, &e.full).unwrap();
        check_invariants(&r);
        if !r.discrimination_used {
            continue;
        }
        discriminated += 1;
        let mut expected: Vec<(f64, DeviceTypeId)> = r
            .dissimilarity
            .iter()
            .map(|d| {
                let refs = ident.references(&d.device_type).unwrap();
                let s = oracle_score(&e.full, refs);
                assert!((s - d.score).abs() < 1e-12);
                assert!((0.0..=5.0).contains(&s));
                (s, d.device_type.clone())
            })
            .collect();
        expected.sort_by(|x, y| x.0.total_cmp(&y.0).then_with(|| x.1.cmp(&y.1)));
        assert_eq!(r.outcome, Outcome::Identified(expected[0].1.clone()));
        let winner = r.identified().unwrap();
        assert!(winner == &a || winner == &b);
    }
    assert!(discriminated >= 20, "only {discriminated} of 40 needed discrimination");
}

#[test]
fn exact_duplicates_tie_and_break_lexicographically() {
    let db = corpus(27, 0.0, vec![(2, 3)], 9);
    let reg = registry(&db);
    let e = db.entries.iter().find(|e| e.label() == Some(&synthetic_type_id(3))).unwrap();
    let r = identify(&e.fixed, &e.full, &reg, &db, 1).unwrap();
    assert!(r.discrimination_used);
    assert!(r.dissimilarity.iter().all(|d| d.score == 0.0));
    assert_eq!(r.outcome, Outcome::Identified(synthetic_type_id(2)));
}

#[test]
fn held_out_type_is_unknown_and_strictly_isolated() {
    let db = corpus(12, 0.0, vec![], 10);
    let held = synthetic_type_id(11);
    let mut train = FingerprintDb::new();
    train.entries = db.entries.iter().filter(|e| e.label() != Some(&held)).cloned().collect();
    let reg = registry(&train);
    let vulns = VulnerabilityRegistry::from_json(r#"{"synthetic-00": {"isolation": "trusted"}}"#).unwrap();
    let q = db.entries.iter().find(|e| e.label() == Some(&held)).unwrap();
    let r = identify(&q.fixed, &q.full, &reg, &train, 0).unwrap();
    check_invariants(&r);
    assert_eq!(r.outcome, Outcome::Unknown);
    assert_eq!(r, identify(&q.fixed, &q.full, &reg, &train, 0).map(|mut x| {
        x.elapsed = r.elapsed;
        x
    }).unwrap());

    let iso = assign_isolation(&r, &vulns);
    assert_eq!(iso.level, IsolationLevel::Strict);
    assert!(iso.permitted.is_empty());

    let mut cache = RuleCache::new();
    cache.update(make_rule(r.device_mac, iso.level, vec![], 1, 0).unwrap()).unwrap();
    let to = |dst| decide(&FlowKey { src_mac: r.device_mac, dst }, &cache).decision;
    assert_eq!(to(Destination::Internet { ip: Ipv4Addr::new(8, 8, 8, 8) }), Decision::Deny);
    assert_eq!(to(Destination::Device { mac: db.entries[0].full.device_mac, overlay: Overlay::Trusted }), Decision::Deny);
    assert_eq!(to(Destination::Device { mac: db.entries[0].full.device_mac, overlay: Overlay::Untrusted }), Decision::Permit);
}

#[test]
fn registry_without_references_is_rejected() {
    let db = corpus(3, 0.0, vec![], 2);
    let reg = registry(&db);
    let mut partial = FingerprintDb::new();
    partial.entries = db.entries.iter().filter(|e| e.label() != Some(&synthetic_type_id(1))).cloned().collect();
    assert!(Identifier::new(&reg, &partial, ReferencePolicy::MostRecent, 5).is_err());
}
