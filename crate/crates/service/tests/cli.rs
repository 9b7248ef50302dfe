use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

use mlaudit_core::canonical::Digest;
use mlaudit_core::fixtures::{fixtures_dir, load_pilot, read_pilot};
use mlaudit_core::risk_assessment::{export_csv, RiskQuestion};

struct Cli {
    dir: tempfile::TempDir,
}

impl Cli {
    fn new() -> Self {
        Self { dir: tempfile::tempdir().unwrap() }
    }

    fn store(&self) -> PathBuf {
        self.dir.path().join("store")
    }

    fn file(&self, name: &str, bytes: &[u8]) -> PathBuf {
        let p = self.dir.path().join(name);
        std::fs::write(&p, bytes).unwrap();
        p
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_mlaudit"))
            .arg("--store")
            .arg(self.store())
            .args(args)
            .env_remove("MLAUDIT_CONFIG")
            .env_remove("MLAUDIT_STORE")
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    }

    fn json(&self, args: &[&str]) -> Value {
        let mut full = vec!["--format", "canonical"];
        full.extend_from_slice(args);
        serde_json::from_str(&self.ok(&full)).unwrap()
    }
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn planning_to_fieldwork_with_evidence_and_monitoring() {
    let cli = Cli::new();
    let created = cli.json(&["audit", "new", "loan", "--title", "Loan scoring", "--kind", "first-party", "--target", "scorer"]);
    assert_eq!(created["revision"], 1);
    assert_eq!(created["phase"], "Planning");

    cli.ok(&["audit", "scope", "loan", "data.curation", "in-scope", "--rationale", "training data is curated in house"]);
    let stale = cli.run(&["--expected-revision", "1", "audit", "scope", "loan", "data.curation", "not-relevant", "--rationale", "x"]);
    assert_eq!(code(&stale), 4, "{}", String::from_utf8_lossy(&stale.stderr));
    assert!(String::from_utf8_lossy(&stale.stderr).contains("stale revision"));
    let missing = cli.run(&["audit", "scope", "loan", "data.curation", "in-scope"]);
    assert_eq!(code(&missing), 5);
    assert_eq!(code(&cli.run(&["audit", "gate", "nobody"])), 3);
    assert_eq!(code(&cli.run(&["audit", "scope", "loan", "data.curation", "maybe"])), 2);

    // questions come from a file; the live filter follows the scope
    let db = load_pilot("calibration").unwrap().question_db;
    let questions: Vec<RiskQuestion> = db.questions().cloned().collect();
    let csv = cli.file("questions.csv", &export_csv(&questions));
    cli.ok(&["questions", "import", "loan", p(&csv)]);
    let retained = cli.json(&["questions", "filter", "loan"]);
    let expected: Vec<&RiskQuestion> = questions.iter().filter(|q| q.step_tags.contains(&mlaudit_core::ids::StepId::new("data.curation"))).collect();
    assert_eq!(retained.as_array().unwrap().len(), expected.len());
    assert!(!expected.is_empty());

    // not auditable until the step has an owner and a source
    let gate = cli.run(&["--format", "canonical", "audit", "gate", "loan"]);
    assert_eq!(code(&gate), 1);
    let gate: Value = serde_json::from_slice(&gate.stdout).unwrap();
    assert_eq!(gate["may_advance"], false);
    cli.ok(&["audit", "owner", "loan", "data.curation", "data steward"]);
    cli.ok(&["audit", "source", "loan", "data.curation", "curation notebooks", "--access", "disclosed"]);
    assert!(cli.ok(&["audit", "gate", "loan"]).contains("may advance"));
    assert_eq!(cli.json(&["audit", "advance", "loan"])["phase"], "Fieldwork");

    let sheet = cli.file("datasheet.md", b"# Datasheet\ncollected 2023\n");
    cli.ok(&[
        "evidence", "add", "loan", p(&sheet), "--evidence-id", "ev-1", "--kind", "transparency", "--artifact-type", "datasheet",
        "--step", "data.curation", "--access", "disclosed",
    ]);
    let illegal = cli.run(&[
        "evidence", "add", "loan", p(&sheet), "--evidence-id", "ev-2", "--kind", "transparency", "--step", "data.curation", "--access",
        "public-interface",
    ]);
    assert_eq!(code(&illegal), 5);
    let checks = cli.json(&["evidence", "verify", "loan"]);
    assert_eq!(checks[0]["ok"], true);

    // a tampered blob fails replay, so the audit no longer even loads
    let digest = Digest::of_bytes(b"# Datasheet\ncollected 2023\n");
    let blob = walk(&cli.store()).into_iter().find(|f| f.file_name().unwrap() == digest.as_str()).expect("blob file");
    std::fs::write(&blob, b"# Datasheet\ncollected 2024\n").unwrap();
    let verify = cli.run(&["evidence", "verify", "loan"]);
    assert_ne!(code(&verify), 0);
    let err = String::from_utf8_lossy(&verify.stderr);
    assert!(err.contains("digest mismatch for evidence `ev-1`"), "{err}");
    std::fs::write(&blob, b"# Datasheet\ncollected 2023\n").unwrap();
    assert_eq!(cli.json(&["evidence", "verify", "loan", "--evidence-id", "ev-1"])[0]["ok"], true);

    let log: String = (0..40)
        .map(|i| format!("{{\"record_id\":\"r{i}\",\"timestamp\":\"2024-01-01T00:00:00Z\",\"outcome\":{},\"protected\":\"{}\"}}\n", i % 2, ["a", "b"][i / 20]))
        .collect();
    let log = cli.file("predictions.ndjson", log.as_bytes());
    let run = cli.json(&["monitor", "run", "loan", p(&log), "--monitor-id", "parity", "--batch-size", "20", "--min-group-size", "5"]);
    // each batch holds one group only, so no ratio can be computed
    assert_eq!(run["counters"]["batches"], 2);
    assert_eq!(run["counters"]["indeterminate"], 2);
    assert!(cli.ok(&["monitor", "run", "loan", p(&log), "--monitor-id", "err", "--batch-size", "20", "--metric", "error-rate"]).contains("2 batches"));
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let path = e.unwrap().path();
        if path.is_dir() {
            out.extend(walk(&path));
        } else {
            out.push(path);
        }
    }
    out
}

#[test]
fn bundles_reports_and_register() {
    let cli = Cli::new();
    let fx = read_pilot(&fixtures_dir(), "calibration").unwrap();
    let bundle = cli.file("in.json", &fx.bundle_bytes);
    let imported = cli.json(&["bundle", "import", p(&bundle)]);
    let id = imported["audit"].as_str().unwrap().to_owned();
    assert_eq!(code(&cli.run(&["bundle", "import", p(&bundle)])), 4);

    let out = cli.dir.path().join("out.json");
    cli.ok(&["bundle", "export", &id, "--out", p(&out)]);
    assert_eq!(std::fs::read(&out).unwrap(), fx.bundle_bytes);
    cli.ok(&["bundle", "import", p(&out), "--rename", "calibration-2"]);
    assert_eq!(cli.json(&["audit", "list"]).as_array().unwrap().len(), 2);

    let md = cli.ok(&["report", "render", &id]);
    assert!(md.contains("Recommendations"));
    let canonical = cli.ok(&["report", "render", &id, "--as", "canonical"]);
    let report = mlaudit_core::reporting::parse_canonical(canonical.as_bytes()).unwrap();
    assert_eq!(report, *fx.bundle.state.current_iteration().report.as_ref().unwrap());
    assert_eq!(code(&cli.run(&["report", "render", &id, "--as", "pdf"])), 2);

    let entry = &fx.bundle.register[0];
    let steps: Vec<String> = entry.conditions.steps.iter().map(|s| format!("--step={s}")).collect();
    let mut args = vec!["register", "query"];
    args.extend(steps.iter().map(String::as_str));
    let view = cli.json(&args);
    assert!(view["entries"].as_array().unwrap().iter().any(|e| e["id"] == entry.id.as_str()));

    let mut fresh = entry.clone();
    fresh.id = "reg-cli".into();
    let file = cli.file("entry.json", &serde_json::to_vec(&fresh).unwrap());
    let rev = view["revision"].as_u64().unwrap();
    let stale = cli.run(&["--expected-revision", &(rev + 5).to_string(), "register", "add", p(&file)]);
    assert_eq!(code(&stale), 4);
    assert_eq!(cli.json(&["--expected-revision", &rev.to_string(), "register", "add", p(&file)])["revision"], rev + 1);
}
