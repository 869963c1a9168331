use std::fs::{self, File};
use std::net::Ipv4Addr;
use std::path::Path;
use std::process::{Command, Output};

use devtype::pcap::{FrameBuilder, PcapWriter, Timestamp};
use devtype::MacAddr;
use serde_json::Value;

fn devtype(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_devtype"))
        .args(args)
        .env_remove("DEVTYPE_SEED")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let o = devtype(&["frobnicate"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn missing_required_flag_is_a_usage_error() {
    assert_eq!(code(&devtype(&["train", "--out", "m.json"])), 1);
}

#[test]
fn help_and_version_succeed() {
    let o = devtype(&["--help"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    for sub in ["extract", "train", "identify", "evaluate", "gen-corpus", "enforce"] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
    assert_eq!(code(&devtype(&["--version"])), 0);
}

#[test]
fn missing_input_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = devtype(&["train", "--fingerprints", "/nonexistent/db.csv", "--out", s(&dir.path().join("m.json"))]);
    assert_eq!(code(&o), 2);
}

fn small_corpus(dir: &Path) -> std::path::PathBuf {
    let spec = dir.join("spec.json");
    fs::write(&spec, r#"{"n_types":4,"fingerprints_per_type":6,"noise":{"drop_prob":0.05}}"#).unwrap();
    let db = dir.join("db.csv");
    let o = devtype(&["gen-corpus", "--spec", s(&spec), "--out", s(&db), "--seed", "11"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    db
}

#[test]
fn evaluate_emits_report_json() {
    let dir = tempfile::tempdir().unwrap();
    let db = small_corpus(dir.path());
    let args = ["--json", "evaluate", "--fingerprints", s(&db), "--folds", "3", "--repeats", "2", "--seed", "7", "--trees", "15"];
    let o = devtype(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["schema"], "devtype-report/1");
    assert_eq!(report["types"].as_array().unwrap().len(), 4);
    assert_eq!(report["confusion"][0].as_array().unwrap().len(), 5);
    assert!(report.get("timing").is_none());
    assert_eq!(devtype(&args).stdout, o.stdout);
}

#[test]
fn seed_defaults_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let db = small_corpus(dir.path());
    let base = ["evaluate", "--fingerprints", s(&db), "--folds", "3", "--repeats", "1", "--trees", "9"];
    let explicit = devtype(&[&base[..], &["--seed", "23"]].concat());
    let from_env = Command::new(env!("CARGO_BIN_EXE_devtype")).args(base).env("DEVTYPE_SEED", "23").output().unwrap();
    assert_eq!(code(&from_env), 0);
    assert_eq!(explicit.stdout, from_env.stdout);
}

fn two_device_capture(path: &Path) {
    let a = MacAddr([0x02, 0, 0, 0, 0, 0x0a]);
    let b = MacAddr([0x02, 0, 0, 0, 0, 0x0b]);
    let mut w = PcapWriter::new(File::create(path).unwrap()).unwrap();
    let frames = [
        FrameBuilder::new(a, MacAddr::BROADCAST).arp_request(Ipv4Addr::new(0, 0, 0, 0), Ipv4Addr::new(192, 168, 1, 20)).build(),
        FrameBuilder::new(b, MacAddr::BROADCAST)
            .ipv4(Ipv4Addr::UNSPECIFIED, Ipv4Addr::BROADCAST)
            .udp(68, 67)
            .payload(&[0u8; 300])
            .build(),
        FrameBuilder::new(a, MacAddr([0x02, 0, 0, 0, 0, 1]))
            .ipv4(Ipv4Addr::new(192, 168, 1, 20), Ipv4Addr::new(192, 168, 1, 1))
            .udp(50000, 53)
            .payload(&[1u8; 40])
            .build(),
        FrameBuilder::new(b, MacAddr([0x02, 0, 0, 0, 0, 1]))
            .ipv4(Ipv4Addr::new(192, 168, 1, 21), Ipv4Addr::new(52, 1, 2, 3))
            .tcp(51000, 443, 0x02)
            .build(),
    ];
    for (i, f) in frames.iter().enumerate() {
        w.write_frame(Timestamp { secs: 100 + i as u32, micros: 0 }, f).unwrap();
    }
    w.into_inner().unwrap();
}

#[test]
fn identify_reports_every_mac_and_rules_follow() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    let db = small_corpus(dir.path());
    let o = devtype(&["train", "--fingerprints", s(&db), "--out", s(&p("model.json")), "--seed", "1", "--trees", "15", "--allow-short-pool"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    two_device_capture(&p("two.pcap"));
    fs::write(p("vulns.json"), r#"{"synthetic-00":{"isolation":"trusted","permitted_ip":[]}}"#).unwrap();
    let o = devtype(&[
        "identify", "--pcap", s(&p("two.pcap")), "--model", s(&p("model.json")), "--fingerprints", s(&db),
        "--vulns", s(&p("vulns.json")), "--out", s(&p("results.json")),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let results: Value = serde_json::from_str(&fs::read_to_string(p("results.json")).unwrap()).unwrap();
    let results = results.as_array().unwrap();
    assert_eq!(results.len(), 2);
    let macs: Vec<&str> = results.iter().map(|r| r["device_mac"].as_str().unwrap()).collect();
    assert_eq!(macs, ["02-00-00-00-00-0A", "02-00-00-00-00-0B"]);
    for r in results {
        assert_eq!(r["matched_types"].as_array().unwrap().len(), 4);
        if r["outcome"] == "unknown" {
            assert_eq!(r["isolation"]["level"], "strict");
        }
    }

    let o = devtype(&["enforce", "make-rules", "--results", s(&p("results.json")), "--out", s(&p("rules.json")), "--no-resolve"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    fs::write(
        p("flows.csv"),
        "src_mac,dst_kind,dst_value,dst_overlay\n02-00-00-00-00-0A,internet,8.8.8.8,\n02-00-00-00-00-FF,internet,8.8.8.8,\n",
    )
    .unwrap();
    let o = devtype(&["--json", "enforce", "simulate", "--rules", s(&p("rules.json")), "--flows", s(&p("flows.csv"))]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let verdicts: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(verdicts.as_array().unwrap().len(), 2);
    assert_eq!(verdicts[1]["decision"], "deny");
    assert_eq!(verdicts[1]["reason"], "unidentified_source");
}

#[test]
fn simulate_prints_one_line_per_flow() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    fs::write(
        p("rules.json"),
        r#"[{"id":1,"name":"cam","source_mac":["AA-BB-CC-DD-EE-01"],"permitted_ip":["10.0.0.5"],"priority":100,
            "hash":"02e3044c67ce79cd","isolation":"restricted"}]"#
            .replace("AA-BB-CC-DD-EE-01", "AA-BB-CC-00-00-01"),
    )
    .unwrap();
    fs::write(
        p("flows.csv"),
        "src_mac,dst_kind,dst_value,dst_overlay\nAA-BB-CC-00-00-01,internet,10.0.0.5,\nAA-BB-CC-00-00-01,internet,10.0.0.6,\n",
    )
    .unwrap();
    let o = devtype(&["enforce", "simulate", "--rules", s(&p("rules.json")), "--flows", s(&p("flows.csv"))]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("1\tpermit\t"));
    assert!(lines[1].starts_with("2\tdeny\t"));
}

#[test]
fn tampered_rule_hash_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    fs::write(
        p("rules.json"),
        r#"[{"id":1,"name":"cam","source_mac":["AA-BB-CC-00-00-01"],"permitted_ip":["10.0.0.5"],"priority":100,
            "hash":"0000000000000000","isolation":"restricted"}]"#,
    )
    .unwrap();
    fs::write(p("flows.csv"), "src_mac,dst_kind,dst_value,dst_overlay\n").unwrap();
    assert_eq!(code(&devtype(&["enforce", "simulate", "--rules", s(&p("rules.json")), "--flows", s(&p("flows.csv"))])), 2);
}
