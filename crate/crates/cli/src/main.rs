//! `devtype`: fingerprint IoT devices from setup traffic, identify their
//! type, and derive isolation rules.

use std::collections::HashMap;
use std::error::Error;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use devtype::enforce::{
    decide, load_rules, make_rule, parse_flows_csv, resolve_destinations, rules_to_json, Decision, Destination,
    EnforcementRule, FlowKey, IsolationLevel, NoResolver, Resolver, RuleCache, StaticResolver, SystemResolver, Verdict,
};
use devtype::fingerprint::{
    build_fingerprint, load_fingerprints, save_fingerprints, segment_setup, to_fixed, DeviceTypeId, FingerprintDb,
    SetupSessionConfig,
};
use devtype::harness::{
    cross_validate, generate_corpus, load_capture_dir, shuffle_labels, timing_report, train_registry, CvConfig,
    SyntheticCorpusSpec,
};
use devtype::identify::{assign_isolation, IdentificationResult, Identifier, IsolationAssignment, ReferencePolicy, VulnerabilityRegistry};
use devtype::pcap::{read_pcap, write_feature_csv, SessionSet};
use devtype::typemodel::{ClassifierRegistry, ForestParams};
use devtype::MacAddr;

#[derive(Parser, Debug)]
#[command(name = "devtype", version, about = "IoT device-type identification and isolation")]
struct Cli {
    /// Print machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build setup fingerprints from pcap captures.
    Extract(ExtractArgs),
    /// Train one classifier per labeled device type.
    Train(TrainArgs),
    /// Identify every device seen in a capture.
    Identify(IdentifyArgs),
    /// Stratified repeated cross-validation of the full pipeline.
    Evaluate(EvaluateArgs),
    /// Per-stage identification timings for a fingerprint database.
    Timing(TimingArgs),
    /// Generate a synthetic labeled fingerprint database.
    GenCorpus(GenCorpusArgs),
    /// Isolation rules and flow filtering.
    #[command(subcommand)]
    Enforce(EnforceCommand),
}

#[derive(Args, Debug)]
struct SeedArg {
    /// Random seed.
    #[arg(long, env = "DEVTYPE_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct ExtractArgs {
    /// Capture files (classic pcap, Ethernet).
    #[arg(long, required = true, num_args = 1..)]
    pcap: Vec<PathBuf>,
    /// Device-type label for every extracted fingerprint.
    #[arg(long)]
    label: Option<String>,
    /// Keep only the source MAC with the most frames in each capture.
    #[arg(long)]
    busiest: bool,
    /// Fingerprint database to write.
    #[arg(long)]
    out: PathBuf,
    /// Add to an existing database instead of replacing it.
    #[arg(long)]
    append: bool,
    /// Setup-phase segmentation overrides (key=value lines).
    #[arg(long)]
    session_config: Option<PathBuf>,
    /// Also write the per-packet feature table.
    #[arg(long)]
    features_csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    fingerprints: PathBuf,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long, default_value_t = 100)]
    trees: usize,
    /// Train with fewer negatives when the pool is smaller than ten per positive.
    #[arg(long)]
    allow_short_pool: bool,
}

#[derive(Args, Debug)]
struct IdentifyArgs {
    #[arg(long)]
    pcap: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Labeled database supplying discrimination references.
    #[arg(long)]
    fingerprints: PathBuf,
    /// Vulnerability registry (type id -> isolation, permitted_ip).
    #[arg(long)]
    vulns: Option<PathBuf>,
    /// Results file (JSON array, one object per MAC).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    refs_per_type: usize,
    #[arg(long)]
    session_config: Option<PathBuf>,
    /// Pick references at random with this seed instead of the most recent ones.
    #[arg(long)]
    random_refs: Option<u64>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long, conflicts_with = "capture_dir", required_unless_present = "capture_dir")]
    fingerprints: Option<PathBuf>,
    /// Directory of `<type>/<capture>.pcap` files.
    #[arg(long)]
    capture_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long, default_value_t = 100)]
    trees: usize,
    #[arg(long, default_value_t = 5)]
    refs_per_type: usize,
    /// Permute labels before evaluating (random baseline).
    #[arg(long)]
    shuffle_labels: bool,
    /// Include stage timings (makes the report run-dependent).
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    session_config: Option<PathBuf>,
    /// Report file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TimingArgs {
    #[arg(long)]
    fingerprints: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Args, Debug)]
struct GenCorpusArgs {
    /// Corpus spec (JSON, or TOML with a .toml extension); defaults otherwise.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Subcommand, Debug)]
enum EnforceCommand {
    /// Filter flows against a rule file.
    Simulate {
        #[arg(long)]
        rules: PathBuf,
        /// CSV with columns src_mac, dst_kind, dst_value, dst_overlay.
        #[arg(long)]
        flows: PathBuf,
    },
    /// Turn identification results into enforcement rules.
    MakeRules {
        /// Output of `identify`.
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Name table (JSON map name -> [ipv4]) used instead of DNS.
        #[arg(long)]
        hosts: Option<PathBuf>,
        /// Keep only IP literals from permitted destinations.
        #[arg(long, conflicts_with = "hosts")]
        no_resolve: bool,
        #[arg(long, default_value_t = 1)]
        first_id: u64,
        #[arg(long, default_value_t = 100)]
        priority: i64,
    },
}

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

type Result<T> = std::result::Result<T, Box<dyn Error>>;

/// One `identify` output object.
#[derive(Debug, Serialize, Deserialize)]
struct DeviceReport {
    #[serde(flatten)]
    result: IdentificationResult,
    isolation: IsolationAssignment,
}

fn session_config(path: Option<&Path>) -> Result<SetupSessionConfig> {
    Ok(match path {
        Some(p) => SetupSessionConfig::load(p)?,
        None => SetupSessionConfig::default(),
    })
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>, stdout: bool) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    if let Some(p) = out {
        fs::write(p, format!("{text}\n"))?;
    }
    if stdout || out.is_none() {
        match writeln!(io::stdout().lock(), "{text}") {
            Err(e) if e.kind() == io::ErrorKind::BrokenPipe => {}
            r => r?,
        }
    }
    Ok(())
}

fn extract(a: &ExtractArgs, json: bool) -> Result<()> {
    let cfg = session_config(a.session_config.as_deref())?;
    let label = a.label.as_deref().map(DeviceTypeId::new).transpose().map_err(|e| UsageError(e.to_string()))?;
    let mut db: FingerprintDb = if a.append && a.out.exists() { load_fingerprints(&a.out)? } else { FingerprintDb::new() };
    let before = db.len();
    let mut feature_rows = Vec::new();
    let mut malformed = 0;
    for path in &a.pcap {
        let capture = read_pcap(path)?;
        let sessions = SessionSet::from_capture(&capture);
        malformed += sessions.malformed;
        let busiest = sessions.sessions.values().max_by_key(|s| s.packets.len()).map(|s| s.mac);
        for s in sessions.sessions.values() {
            if a.busiest && Some(s.mac) != busiest {
                continue;
            }
            let setup = segment_setup(&s.packets, &cfg)?;
            feature_rows.extend(setup.iter().enumerate().map(|(i, f)| (s.mac, i, *f)));
            let mut fp = build_fingerprint(s.mac, setup)?;
            fp.label = label.clone();
            db.push(fp);
        }
    }
    save_fingerprints(&db, &a.out)?;
    if let Some(p) = &a.features_csv {
        write_feature_csv(BufWriter::new(File::create(p)?), feature_rows)?;
    }
    let added = db.len() - before;
    if json {
        println!("{}", serde_json::json!({ "added": added, "total": db.len(), "malformed_frames": malformed }));
    } else {
        println!("extracted {added} fingerprints ({} in database, {malformed} malformed frames skipped)", db.len());
    }
    Ok(())
}

fn train(a: &TrainArgs, json: bool) -> Result<()> {
    let db: FingerprintDb = load_fingerprints(&a.fingerprints)?;
    let params = ForestParams { n_trees: a.trees, allow_short_pool: a.allow_short_pool, ..ForestParams::default() };
    let registry = train_registry(&db, &params, a.seed.seed)?;
    registry.save(&a.out)?;
    if json {
        let types: Vec<_> = registry.types().collect();
        println!("{}", serde_json::json!({ "types": types, "trees": a.trees, "seed": a.seed.seed }));
    } else {
        println!("trained {} classifiers with {} trees each", registry.len(), a.trees);
    }
    Ok(())
}

fn identify(a: &IdentifyArgs, json: bool) -> Result<()> {
    let cfg = session_config(a.session_config.as_deref())?;
    let registry: ClassifierRegistry = ClassifierRegistry::load(&a.model)?;
    let db: FingerprintDb = load_fingerprints(&a.fingerprints)?;
    let vulns = match &a.vulns {
        Some(p) => VulnerabilityRegistry::load(p)?,
        None => VulnerabilityRegistry::default(),
    };
    let policy = match a.random_refs {
        Some(seed) => ReferencePolicy::Random { seed },
        None => ReferencePolicy::MostRecent,
    };
    let identifier = Identifier::new(&registry, &db, policy, a.refs_per_type)?;
    let sessions = SessionSet::from_capture(&read_pcap(&a.pcap)?);
    let mut reports = Vec::new();
    for s in sessions.sessions.values() {
        let full = build_fingerprint(s.mac, segment_setup(&s.packets, &cfg)?)?;
        let result = identifier.identify(&to_fixed(&full), &full)?;
        let isolation = assign_isolation(&result, &vulns);
        reports.push(DeviceReport { result, isolation });
    }
    if json || a.out.is_none() {
        emit_json(&reports, a.out.as_deref(), true)?;
    } else {
        emit_json(&reports, a.out.as_deref(), false)?;
        for r in &reports {
            let outcome = r.result.identified().map_or("unknown", DeviceTypeId::as_str);
            println!("{}\t{outcome}\t{}", r.result.device_mac, r.isolation.level);
        }
    }
    Ok(())
}

fn evaluate(a: &EvaluateArgs, json: bool) -> Result<()> {
    if a.folds < 2 {
        return Err(UsageError("--folds must be at least 2".into()).into());
    }
    let mut db: FingerprintDb = match (&a.fingerprints, &a.capture_dir) {
        (Some(p), _) => load_fingerprints(p)?,
        (None, Some(dir)) => load_capture_dir(dir, &session_config(a.session_config.as_deref())?)?,
        (None, None) => unreachable!("clap requires one source"),
    };
    if a.shuffle_labels {
        db = shuffle_labels(&db, a.seed.seed ^ 0x5348_5546);
    }
    let cfg = CvConfig {
        folds: a.folds,
        repeats: a.repeats,
        seed: a.seed.seed,
        refs_per_type: a.refs_per_type,
        forest: ForestParams { n_trees: a.trees, allow_short_pool: true, ..ForestParams::default() },
        collect_timing: a.timing,
    };
    let report = cross_validate(&db, &cfg)?;
    if json || a.out.is_none() {
        emit_json(&report, a.out.as_deref(), true)?;
    } else {
        emit_json(&report, a.out.as_deref(), false)?;
        println!(
            "global accuracy {:.4} over {} identifications ({} types, unknown {:.4}, multi-match {:.4})",
            report.global_accuracy,
            report.total(),
            report.types.len(),
            report.unknown_rate,
            report.multi_match_rate
        );
    }
    Ok(())
}

fn timing(a: &TimingArgs) -> Result<()> {
    let registry: ClassifierRegistry = ClassifierRegistry::load(&a.model)?;
    let db: FingerprintDb = load_fingerprints(&a.fingerprints)?;
    let report = timing_report(&db, &registry, a.seed.seed)?;
    emit_json(&report, None, true)
}

fn gen_corpus(a: &GenCorpusArgs, json: bool) -> Result<()> {
    let spec = match &a.spec {
        Some(p) => SyntheticCorpusSpec::load(p)?,
        None => SyntheticCorpusSpec::default(),
    };
    let db: FingerprintDb = generate_corpus(&spec, a.seed.seed)?;
    save_fingerprints(&db, &a.out)?;
    if json {
        println!("{}", serde_json::json!({ "fingerprints": db.len(), "types": spec.n_types, "seed": a.seed.seed }));
    } else {
        println!("wrote {} fingerprints of {} types", db.len(), spec.n_types);
    }
    Ok(())
}

#[derive(Serialize)]
struct FlowVerdict {
    row: usize,
    src_mac: MacAddr,
    dst: Destination,
    #[serde(flatten)]
    verdict: Verdict,
}

fn simulate(rules: &Path, flows: &Path, json: bool) -> Result<()> {
    let mut cache = RuleCache::new();
    for r in load_rules(rules)? {
        cache.update(r)?;
    }
    let flows: Vec<FlowKey> = parse_flows_csv(File::open(flows)?)?;
    let verdicts: Vec<FlowVerdict> = flows
        .iter()
        .enumerate()
        .map(|(i, f)| FlowVerdict { row: i + 1, src_mac: f.src_mac, dst: f.dst, verdict: decide(f, &cache) })
        .collect();
    if json {
        return emit_json(&verdicts, None, true);
    }
    let mut out = io::stdout().lock();
    for v in &verdicts {
        let word = match v.verdict.decision {
            Decision::Permit => "permit",
            Decision::Deny => "deny",
        };
        writeln!(out, "{}\t{word}\t{}", v.row, v.verdict.reason)?;
    }
    Ok(())
}

fn make_rules(results: &Path, out: &Path, resolver: &dyn Resolver, first_id: u64, priority: i64, json: bool) -> Result<()> {
    let reports: Vec<DeviceReport> = serde_json::from_str(&fs::read_to_string(results)?)?;
    let mut rules: Vec<EnforcementRule> = Vec::new();
    for (i, r) in reports.iter().enumerate() {
        let mac = r.result.device_mac;
        let mut level = r.isolation.level;
        let mut ips: Vec<Ipv4Addr> = Vec::new();
        if level == IsolationLevel::Restricted {
            ips = resolve_destinations(&r.isolation.permitted, resolver);
            if ips.is_empty() {
                eprintln!("warning: {mac}: no permitted destination resolved; using strict");
                level = IsolationLevel::Strict;
            }
        }
        rules.push(make_rule(mac, level, ips, first_id + i as u64, priority)?);
    }
    fs::write(out, rules_to_json(&rules) + "\n")?;
    if json {
        println!("{}", rules_to_json(&rules));
    } else {
        println!("wrote {} rules", rules.len());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Extract(a) => extract(a, cli.json),
        Command::Train(a) => train(a, cli.json),
        Command::Identify(a) => identify(a, cli.json),
        Command::Evaluate(a) => evaluate(a, cli.json),
        Command::Timing(a) => timing(a),
        Command::GenCorpus(a) => gen_corpus(a, cli.json),
        Command::Enforce(EnforceCommand::Simulate { rules, flows }) => simulate(rules, flows, cli.json),
        Command::Enforce(EnforceCommand::MakeRules { results, out, hosts, no_resolve, first_id, priority }) => {
            let resolver: Box<dyn Resolver> = match (hosts, no_resolve) {
                (Some(p), _) => {
                    let table: HashMap<String, Vec<Ipv4Addr>> = serde_json::from_str(&fs::read_to_string(p)?)?;
                    Box::new(StaticResolver(table.into_iter().map(|(k, v)| (k.to_ascii_lowercase(), v)).collect()))
                }
                (None, true) => Box::new(NoResolver),
                (None, false) => Box::new(SystemResolver),
            };
            make_rules(results, out, resolver.as_ref(), *first_id, *priority, cli.json)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
