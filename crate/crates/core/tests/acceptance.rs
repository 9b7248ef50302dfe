//! Acceptance suite: one PASS/FAIL line per primary criterion, each under
//! its time limit. Runs with a plain `main` so the lines always print.

mod common;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mlaudit_core::bundle::{self, export_bundle, import_bundle, BundleError};
use mlaudit_core::canonical::Digest;
use mlaudit_core::fieldwork::{AccessBasis, ArtifactType, EvidenceError, EvidenceItem, EvidenceKind};
use mlaudit_core::fixtures::{load_pilot, read_pilot, fixtures_dir, PILOTS};
use mlaudit_core::ids::{EvidenceId, StepId};
use mlaudit_core::lifecycle::{instantiate_template, Coverage, StepStatus};
use mlaudit_core::monitoring::{
    conditional_independence_ratio, run_monitor, BatchVerdict, MetricValue, MonitorSpec, MonitorStream,
};
use mlaudit_core::reporting::{compile_report, render, ReportFormat};
use mlaudit_core::risk_assessment::{derive_concerns, filter_questions, Requirement};
use mlaudit_core::store::Store;
use mlaudit_core::workflow::{AuditKind, Command, CommandEnvelope, CreateAudit, TemplateChoice, WorkflowError};

type Outcome = Result<(), String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Outcome {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

const TEMPLATE_STEPS: [(&str, &[&str]); 4] = [
    (
        "formulation",
        &[
            "goals",
            "legacy_systems",
            "evaluation_metrics",
            "system_subjects",
            "system_users",
            "societal_context",
            "user_experience",
            "security_assessment",
            "impact_assessment",
        ],
    ),
    ("data", &["specification", "collection", "curation", "processing", "extraction", "quality_assessment"]),
    ("model", &["specification", "feature_engineering", "training_optimisation", "validation_interpretation", "quality_assessment"]),
    (
        "deployment",
        &["sandboxing", "operational_logging", "continuous_testing", "reliability_assessment", "black_box_auditing", "post_market_analysis"],
    ),
];

fn lifecycle_template() -> Outcome {
    let m = instantiate_template();
    ensure(m.phases.len() == 4, || format!("{} phases", m.phases.len()))?;
    ensure(m.step_count() == 26, || format!("{} steps", m.step_count()))?;
    for (phase, (pid, steps)) in m.phases.iter().zip(TEMPLATE_STEPS) {
        ensure(phase.id.as_str() == pid, || format!("phase {} != {pid}", phase.id))?;
        let got: Vec<String> = phase.steps.iter().map(|s| s.id.to_string()).collect();
        let want: Vec<String> = steps.iter().map(|s| format!("{pid}.{s}")).collect();
        ensure(got == want, || format!("{pid}: {got:?}"))?;
    }
    let pending = m.steps().all(|s| m.status(&s.id) == StepStatus::Pending);
    ensure(pending, || "template steps not Pending".into())
}

const HIGHLIGHTED: [&str; 3] = [
    "Did you explain the decision(s) of the AI system to the users?",
    "Do you continuously survey the users to assess whether they understand the decision(s) of the AI system?",
    "Did you provide appropriate training material and disclaimers to users on how to adequately use the AI system?",
];

fn pilot_one() -> Outcome {
    let audit = load_pilot("calibration").map_err(|e| e.to_string())?;
    let retained = filter_questions(&audit.question_db, &audit.lifecycle.in_scope_steps(), None).map_err(|e| e.to_string())?;
    for text in HIGHLIGHTED {
        ensure(retained.iter().any(|q| q.text == text), || format!("missing question `{text}`"))?;
    }
    let it = audit.current_iteration();
    let concerns = derive_concerns(it.retained(), &it.responses, &it.recommendations, &it.severity_overrides).map_err(|e| e.to_string())?;
    let got: BTreeSet<Requirement> = concerns.iter().map(|c| c.requirement).collect();
    let want: BTreeSet<Requirement> =
        [Requirement::PrivacyDataGovernance, Requirement::Transparency, Requirement::TechnicalRobustnessSafety].into_iter().collect();
    ensure(got == want, || format!("concerns {got:?}"))?;
    let report = compile_report(&audit, it.index, common::t0()).map_err(|e| e.to_string())?;
    let recs: Vec<&str> = report.body.recommendations.recommendations.iter().map(|r| r.text.as_str()).collect();
    let md = String::from_utf8(render(&report, ReportFormat::Markdown)).unwrap();
    for needle in ["Log the parametrisation the operator selects", "displayed parametrisations are randomly permuted"] {
        ensure(recs.iter().any(|r| r.contains(needle)), || format!("report recommendations lack `{needle}`"))?;
        ensure(md.contains(needle), || format!("rendered report lacks `{needle}`"))?;
    }
    Ok(())
}

fn coverage() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FE);
    let mut undefined_seen = 0;
    for n in 0..1000 {
        let model = common::random_assessed_model(&mut rng);
        let report = model.coverage();
        let (phases, overall) = common::coverage_oracle(&model);
        let pairs = report.per_phase.iter().map(|p| p.coverage).zip(phases).chain([(report.overall, overall)]);
        for (got, (blue, assessable)) in pairs {
            match got {
                Coverage::Undefined => {
                    undefined_seen += 1;
                    ensure(assessable == 0, || format!("state {n}: undefined with {assessable} assessable"))?
                }
                Coverage::Defined(f) => ensure(assessable > 0 && f.covered == blue && f.assessable == assessable, || {
                    format!("state {n}: {}/{} vs oracle {blue}/{assessable}", f.covered, f.assessable)
                })?,
            }
        }
    }
    ensure(undefined_seen > 0, || "generator never produced an undefined phase".into())
}

fn fairness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xFA1E);
    let mut evaluated = 0;
    for n in 0..500 {
        let groups = rng.gen_range(2..=5);
        let strata = rng.gen_range(0..=4);
        let len = rng.gen_range(10..=5000);
        let (window, spec) = common::random_window(&mut rng, groups, strata, len);
        let got = conditional_independence_ratio(&window, &spec).value.value();
        let want = common::ci_oracle(&window, &spec);
        match (got, want) {
            (None, None) => {}
            (Some(g), Some(w)) if (g - w).abs() <= 1e-12 => evaluated += 1,
            _ => return Err(format!("window {n}: engine {got:?}, oracle {want:?}")),
        }
    }
    ensure(evaluated > 400, || format!("only {evaluated} windows were determinate"))?;

    let planted = common::planted_window();
    let spec = MonitorSpec::fairness("planted", planted.len());
    let v = conditional_independence_ratio(&planted, &spec).value;
    ensure(matches!(v, MetricValue::Value(x) if (x - 5.0 / 6.0).abs() < 1e-12), || format!("planted ratio {v:?}"))?;
    ensure(spec.verdict(v) == BatchVerdict::Fail, || "planted passes at 0.95".into())?;
    let mut lenient = spec.clone();
    lenient.threshold = 0.80;
    ensure(lenient.verdict(v) == BatchVerdict::Pass, || "planted fails at 0.80".into())
}

fn stream_batch() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
    let batch = 997;
    let mut log = common::batch_log(100, 1000, &[7, 42, 77], &mut rng);
    log.truncate(100_000);
    let spec = MonitorSpec::fairness("stream", batch);
    let run = run_monitor(&spec, &log).map_err(|e| e.to_string())?;
    let slices: Vec<_> = log.chunks(batch).collect();
    ensure(run.results.len() == slices.len(), || format!("{} results for {} slices", run.results.len(), slices.len()))?;
    for (i, (r, slice)) in run.results.iter().zip(&slices).enumerate() {
        let partial = slice.len() < batch;
        let want = if partial { MetricValue::Indeterminate } else { conditional_independence_ratio(slice, &spec).value };
        ensure(r.batch_index == i as u64 && r.window.count == slice.len() && r.value == want && r.verdict == spec.verdict(want), || {
            format!("batch {i}: {:?} vs {want:?}", r.value)
        })?;
        ensure(r.window.first_record_id == slice[0].record_id && r.window.last_record_id == slice[slice.len() - 1].record_id, || {
            format!("batch {i}: window bounds")
        })?;
    }
    let mut stream = MonitorStream::new(spec.clone()).unwrap();
    for r in log.iter().cloned() {
        stream.push(r);
    }
    ensure(stream.finish() == run, || "incremental run differs".into())?;

    let quiet = run_monitor(&spec.clone().failures_only(true), &log).map_err(|e| e.to_string())?;
    let loud: Vec<_> = run.results.iter().filter(|r| r.verdict != BatchVerdict::Pass).cloned().collect();
    ensure(quiet.results == loud, || "failure-only results differ from the non-passing batches".into())?;
    ensure(quiet.results.iter().all(|r| r.verdict != BatchVerdict::Pass), || "a passing batch was documented".into())?;
    ensure(quiet.counters.pass == run.counters.pass && quiet.counters.suppressed_passes == run.counters.pass, || {
        "suppressed passes not counted".into()
    })?;
    ensure(run.counters.fail > 0 && run.counters.pass > 0, || "log has no mix of verdicts".into())
}

fn workflow_gates() -> Outcome {
    let mut stats = Vec::new();
    for seed in 0..400u64 {
        let kind = if seed % 4 == 3 { AuditKind::BlackBox } else { AuditKind::ThirdParty };
        stats.push(common::check_workflow_sequence(seed, 250, kind)?);
    }
    let s = common::summary(&stats);
    ensure(s["fieldwork_entries"] > 100 && s["reported"] > 20 && s["multi_iteration_runs"] > 10, || {
        format!("sequences too shallow to exercise the gates: {s:?}")
    })
}

fn determinism() -> Outcome {
    let audit = load_pilot("calibration").map_err(|e| e.to_string())?;
    let idx = audit.current_iteration().index;
    for format in [ReportFormat::Canonical, ReportFormat::Markdown] {
        let a = render(&compile_report(&audit, idx, common::t0()).unwrap(), format);
        let b = render(&compile_report(&audit, idx, common::t0()).unwrap(), format);
        ensure(a == b, || format!("{format:?} rendering differs"))?;
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = Store::open(dir.path()).map_err(|e| e.to_string())?;
    for name in PILOTS {
        let fx = read_pilot(&fixtures_dir(), name).map_err(|e| e.to_string())?;
        let id = import_bundle(&store, &fx.bundle_bytes, None).map_err(|e| e.to_string())?;
        let first = export_bundle(&store, &id).map_err(|e| e.to_string())?;
        let other = Store::open(dir.path().join("second")).map_err(|e| e.to_string())?;
        let id2 = import_bundle(&other, &first, None).map_err(|e| e.to_string())?;
        let second = export_bundle(&other, &id2).map_err(|e| e.to_string())?;
        ensure(first == second && first == fx.bundle_bytes, || format!("{name}: round trip changed bytes"))?;
    }

    let fx = read_pilot(&fixtures_dir(), "calibration").map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(0xB10B);
    for (digest, text) in &fx.bundle.blobs {
        let content = B64.decode(text).unwrap();
        for _ in 0..100 {
            let mut corrupted = content.clone();
            let at = rng.gen_range(0..corrupted.len());
            corrupted[at] ^= rng.gen_range(1..=255u8);
            let mut b = fx.bundle.clone();
            b.blobs.insert(digest.clone(), B64.encode(&corrupted));
            match bundle::decode(&bundle::encode(&b)) {
                Err(BundleError::BlobDigestMismatch(d)) if &d == digest => {}
                other => return Err(format!("blob {} byte {at}: {:?}", digest.short(), other.map(|_| ()))),
            }
        }
    }
    for _ in 0..1500 {
        let mut bytes = fx.bundle_bytes.clone();
        let at = rng.gen_range(0..bytes.len());
        bytes[at] ^= rng.gen_range(1..=255u8);
        ensure(bundle::decode(&bytes).is_err(), || format!("flipping bundle byte {at} went unnoticed"))?;
    }
    Ok(())
}

fn black_box() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = Store::open(dir.path()).map_err(|e| e.to_string())?;
    let id = "bb".into();
    let create = CreateAudit { id: "bb".into(), title: "bb".into(), kind: AuditKind::BlackBox, target: "t".into(), template: TemplateChoice::Default };
    store.create(&CommandEnvelope::new(0, "auditor", common::t0(), Command::Create(create))).map_err(|e| e.to_string())?;
    let steps: Vec<StepId> = instantiate_template().step_ids().into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0xB1AC);
    let mut granted = 0;
    for n in 0..1500 {
        let content: Vec<u8> = (0..rng.gen_range(0..64)).map(|_| rng.gen()).collect();
        let digest = if rng.gen_bool(0.9) { store.put_blob(&content).unwrap() } else { Digest::of_bytes(&content) };
        let item = EvidenceItem {
            id: EvidenceId::new(format!("e{}", rng.gen_range(0..2000))),
            kind: if rng.gen_bool(0.5) { EvidenceKind::Transparency } else { EvidenceKind::Examinability },
            artifact_type: ArtifactType::Other,
            step_tags: (0..rng.gen_range(0..3)).map(|_| steps[rng.gen_range(0..steps.len())].clone()).collect(),
            locator: None,
            content_digest: digest,
            collected_by: "x".into(),
            timestamp: common::t0(),
            access_basis: AccessBasis::ALL[rng.gen_range(0..3)],
            supersedes: None,
        };
        let is_granted = item.access_basis == AccessBasis::GrantedAccess;
        let rev = store.load(&id).unwrap().revision;
        let result = store.apply(&id, &CommandEnvelope::new(rev, "auditor", common::t0(), Command::RegisterEvidence { item }));
        if is_granted {
            granted += 1;
            match result {
                Err(mlaudit_core::store::StoreError::Workflow(WorkflowError::Evidence(
                    EvidenceError::ForbiddenForAuditKind { .. } | EvidenceError::IllegalAccessBasis { .. },
                ))) => {}
                other => return Err(format!("attempt {n}: granted-access item gave {:?}", other.map(|a| a.revision))),
            }
        }
    }
    let reopened = Store::open(dir.path()).map_err(|e| e.to_string())?;
    let audit = reopened.load(&id).map_err(|e| e.to_string())?;
    let persisted = audit.iterations.iter().flat_map(|it| it.evidence.items()).filter(|e| e.access_basis == AccessBasis::GrantedAccess).count();
    let logged = reopened
        .log(&id)
        .map_err(|e| e.to_string())?
        .iter()
        .filter(|r| matches!(&r.payload.command, Command::RegisterEvidence { item } if item.access_basis == AccessBasis::GrantedAccess))
        .count();
    ensure(granted > 300 && persisted == 0 && logged == 0, || format!("granted {granted}, persisted {persisted}, logged {logged}"))
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Outcome); 8] = [
        ("lifecycle template fidelity", Duration::from_secs(1), lifecycle_template),
        ("pilot-1 reproduction", Duration::from_secs(5), pilot_one),
        ("coverage correctness", Duration::from_secs(10), coverage),
        ("fairness metric oracle equivalence", Duration::from_secs(30), fairness),
        ("stream/batch equivalence", Duration::from_secs(30), stream_batch),
        ("workflow gates", Duration::from_secs(20), workflow_gates),
        ("determinism and round trips", Duration::from_secs(20), determinism),
        ("black-box constraint", Duration::from_secs(10), black_box),
    ];
    let mut failed = 0;
    for (name, limit, check) in criteria {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        let result = result.and_then(|()| ensure(took <= limit, || format!("took {took:.2?}, limit {limit:?}")));
        match result {
            Ok(()) => println!("PASS {name} ({took:.2?}, limit {limit:?})"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name} ({took:.2?}, limit {limit:?}): {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
