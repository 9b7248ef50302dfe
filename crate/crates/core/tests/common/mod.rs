//! Oracles and generators shared by the integration tests and the
//! acceptance suite. Oracles work from definitions, never by calling the
//! function under test.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::Rng;

use mlaudit_core::blobs::{BlobStore, MemoryBlobStore};
use mlaudit_core::fieldwork::AccessBasis;
use mlaudit_core::ids::{ActorId, MitigationId, QuestionId, StepId, TriggerId};
use mlaudit_core::lifecycle::{LifecycleModel, Phase, Step, StepAssessment, StepStatus};
use mlaudit_core::monitoring::{MonitorSpec, PredictionRecord};
use mlaudit_core::risk_assessment::{Answer, MitigationRecommendation, MitigationStatus, Requirement};
use mlaudit_core::workflow::{
    Audit, AuditEvent, AuditKind, BlockerReason, Command, CommandEnvelope, CreateAudit, EvidenceSource, IterationPhase, QuestionFormat,
    TemplateChoice, TriggerKind,
};

pub fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap()
}

// ---------------------------------------------------------------- coverage

/// Per-phase `(blue, blue + white + pending)` and the overall pair, counted
/// straight from step statuses.
pub fn coverage_oracle(model: &LifecycleModel) -> (Vec<(u32, u32)>, (u32, u32)) {
    let mut phases = Vec::new();
    let (mut tb, mut ta) = (0, 0);
    for phase in &model.phases {
        let (mut b, mut a) = (0, 0);
        for step in &phase.steps {
            match model.status(&step.id) {
                StepStatus::InScope => {
                    b += 1;
                    a += 1;
                }
                StepStatus::NotAuditable | StepStatus::Pending => a += 1,
                StepStatus::NotRelevant => {}
            }
        }
        tb += b;
        ta += a;
        phases.push((b, a));
    }
    (phases, (tb, ta))
}

/// A random custom model with random statuses. Phases are small so that
/// all-yellow phases (undefined coverage) come up often.
pub fn random_assessed_model(rng: &mut impl Rng) -> LifecycleModel {
    let phases: Vec<Phase> = (0..rng.gen_range(1..=5))
        .map(|p| Phase {
            id: format!("p{p}").into(),
            title: format!("Phase {p}"),
            steps: (0..rng.gen_range(1..=6)).map(|s| Step::new(format!("p{p}.s{s}"), format!("Step {s}"), &[])).collect(),
        })
        .collect();
    let mut model = LifecycleModel::custom("random", phases).unwrap();
    let ids: Vec<StepId> = model.step_ids().into_iter().collect();
    for _ in 0..rng.gen_range(0..ids.len() * 2) {
        let id = ids.choose(rng).unwrap().clone();
        let status = StepStatus::ALL[rng.gen_range(0..4)];
        let a = StepAssessment { step_id: id, status, rationale: "r".into(), assessed_by: ActorId::new("t"), timestamp: t0() };
        model = model.assess_step(model.revision, a).unwrap();
    }
    model
}

// -------------------------------------------------------------- fairness

/// Worst-stratum min/max positive-rate ratio by plain counting. Rates are
/// divided out as floats here, unlike the implementation.
pub fn ci_oracle(window: &[PredictionRecord], spec: &MonitorSpec) -> Option<f64> {
    let key = |r: &PredictionRecord| -> Option<(String, String)> {
        let g = r.attribute(&spec.protected_attr)?;
        let s = match &spec.stratum_attr {
            Some(f) => r.attribute(f)?,
            None => String::new(),
        };
        Some((s, g))
    };
    let strata: BTreeSet<String> = window.iter().filter_map(key).map(|(s, _)| s).collect();
    let mut worst: Option<f64> = None;
    for s in &strata {
        let groups: BTreeSet<String> = window.iter().filter_map(key).filter(|(ks, _)| ks == s).map(|(_, g)| g).collect();
        let mut rates = Vec::new();
        for g in &groups {
            let mut n = 0u64;
            let mut p = 0u64;
            for r in window {
                if key(r).as_ref() == Some(&(s.clone(), g.clone())) {
                    n += 1;
                    if r.outcome.is_one() {
                        p += 1;
                    }
                }
            }
            if n >= u64::from(spec.min_group_size) {
                rates.push(p as f64 / n as f64);
            }
        }
        if rates.len() < 2 {
            continue;
        }
        let max = rates.iter().cloned().fold(f64::MIN, f64::max);
        let min = rates.iter().cloned().fold(f64::MAX, f64::min);
        let ratio = if max == 0.0 { 1.0 } else { min / max };
        worst = Some(worst.map_or(ratio, |w| w.min(ratio)));
    }
    worst
}

/// A window with `groups` protected groups and `strata` strata (0 = no
/// stratum selector), each group with its own positive rate.
pub fn random_window(rng: &mut impl Rng, groups: usize, strata: usize, n: usize) -> (Vec<PredictionRecord>, MonitorSpec) {
    let rates: Vec<f64> = (0..groups * strata.max(1)).map(|_| rng.gen_range(0.0..1.0)).collect();
    let window = (0..n)
        .map(|i| {
            let g = rng.gen_range(0..groups);
            let s = if strata == 0 { 0 } else { rng.gen_range(0..strata) };
            let outcome = rng.gen_bool(rates[s * groups + g]);
            let r = PredictionRecord::new(format!("r{i}"), t0() + Duration::seconds(i as i64), outcome).with_protected(format!("g{g}"));
            if strata == 0 {
                r
            } else {
                r.with_stratum(format!("s{s}"))
            }
        })
        .collect();
    let mut spec = MonitorSpec::fairness("w", n.max(1));
    spec.min_group_size = rng.gen_range(1..=10);
    if strata > 0 {
        spec = spec.with_stratum("stratum");
    }
    (window, spec)
}

/// Two groups of 100: A at 60% positive, B at 50%. Ratio 0.5/0.6 = 5/6.
pub fn planted_window() -> Vec<PredictionRecord> {
    let mut out = Vec::new();
    for (group, positives) in [("A", 60), ("B", 50)] {
        for i in 0..100 {
            let id = format!("{group}{i:03}");
            out.push(PredictionRecord::new(id, t0() + Duration::seconds(out.len() as i64), i < positives).with_protected(group));
        }
    }
    out
}

/// `batches` full batches of `batch` records. Two groups per batch with
/// equal rates, except batches listed in `failing`, where group B drops
/// to half of A's rate.
pub fn batch_log(batches: usize, batch: usize, failing: &[usize], rng: &mut impl Rng) -> Vec<PredictionRecord> {
    let mut out = Vec::with_capacity(batches * batch);
    for b in 0..batches {
        let fail = failing.contains(&b);
        for i in 0..batch {
            let group = if i % 2 == 0 { "A" } else { "B" };
            // deterministic counts keep each batch's verdict fixed
            let k = i / 2;
            let positive = match (group, fail) {
                ("A", _) => k % 2 == 0,
                ("B", false) => k % 2 == 0,
                _ => k % 4 == 0,
            };
            let mut r = PredictionRecord::new(format!("b{b}r{i}"), t0() + Duration::seconds((b * batch + i) as i64), positive)
                .with_protected(group);
            if rng.gen_bool(0.5) {
                r = r.with_label(rng.gen_bool(0.5));
            }
            out.push(r);
        }
    }
    out
}

// -------------------------------------------------------------- workflow

pub const WF_STEPS: [&str; 4] = ["p.a", "p.b", "q.c", "q.d"];

pub fn small_template() -> TemplateChoice {
    TemplateChoice::Custom {
        name: "small".into(),
        phases: vec![
            Phase { id: "p".into(), title: "P".into(), steps: vec![Step::new("p.a", "A", &[]), Step::new("p.b", "B", &[])] },
            Phase { id: "q".into(), title: "Q".into(), steps: vec![Step::new("q.c", "C", &[]), Step::new("q.d", "D", &[])] },
        ],
    }
}

pub const WF_QUESTIONS: &str = "id,text,requirement,step_tags,source,mandatory\n\
w1,First?,Transparency,p.a,t,true\n\
w2,Second?,Accountability,p.b;q.c,t,false\n\
w3,Third?,PrivacyDataGovernance,q.d,t,false\n";

/// Expected reasons a scoped step blocks auditability, from the definition:
/// an owner and at least one available source the audit kind may use.
pub fn blocker_oracle(audit: &Audit) -> Option<BTreeSet<(StepId, BlockerReason)>> {
    let it = audit.open_iteration()?;
    let mut out = BTreeSet::new();
    let mut any = false;
    for phase in &audit.lifecycle.phases {
        for step in &phase.steps {
            if audit.lifecycle.status(&step.id) != StepStatus::InScope {
                continue;
            }
            any = true;
            if step.owner.as_deref().is_none_or(|o| o.trim().is_empty()) {
                out.insert((step.id.clone(), BlockerReason::NoOwner));
            }
            let sources = it.preparation.get(&step.id).cloned().unwrap_or_default();
            if sources.is_empty() {
                out.insert((step.id.clone(), BlockerReason::NoEvidenceSource));
            } else if !sources.iter().any(|s| s.available) {
                out.insert((step.id.clone(), BlockerReason::SourcesUnavailable));
            } else if !sources.iter().any(|s| s.available && (audit.kind != AuditKind::BlackBox || s.access != AccessBasis::GrantedAccess)) {
                out.insert((step.id.clone(), BlockerReason::InternalOnly));
            }
        }
    }
    any.then_some(out)
}

/// Transition table: may the open iteration leave its current phase?
pub fn may_advance(audit: &Audit) -> bool {
    let Some(it) = audit.open_iteration() else { return false };
    match it.phase {
        IterationPhase::Planning => match blocker_oracle(audit) {
            None => false,
            Some(blockers) => {
                let waived: BTreeSet<(StepId, BlockerReason)> =
                    it.waiver.iter().flat_map(|w| w.blockers.iter().map(|b| (b.step.clone(), b.reason))).collect();
                blockers.is_subset(&waived)
            }
        },
        IterationPhase::Fieldwork => it
            .scope
            .as_ref()
            .expect("scope frozen")
            .retained
            .iter()
            .all(|q| it.responses.response(&q.id).is_some() || it.responses.deferral(&q.id).is_some()),
        IterationPhase::Reporting => {
            it.report.is_some()
                && !audit
                    .carried_mitigations
                    .iter()
                    .any(|c| c.from_iteration < it.index && c.recommendation.mandatory && c.recommendation.status == MitigationStatus::Open)
        }
        IterationPhase::Reported => false,
    }
}

/// Phases in which a command is accepted at all (table from the workflow
/// rules). `None` means the command does not need an open iteration.
pub fn allowed_phases(cmd: &Command) -> Option<&'static [IterationPhase]> {
    use IterationPhase::*;
    Some(match cmd {
        Command::DeclareEvidenceSource { .. } | Command::ClearEvidenceSources { .. } | Command::WaiveAuditability { .. } => &[Planning],
        Command::RecordResponse { .. } | Command::DeferQuestion { .. } | Command::RecordTest { .. } | Command::AddAssuranceArgument { .. } => {
            &[Fieldwork]
        }
        Command::RegisterSpecItem { .. } | Command::RegisterEvidence { .. } => &[Planning, Fieldwork],
        Command::RunMonitor { .. }
        | Command::AddRecommendation { .. }
        | Command::SetRecommendationStatus { .. }
        | Command::OverrideSeverity { .. }
        | Command::DeriveConcerns => &[Fieldwork, Reporting],
        Command::CompileReport => &[Reporting],
        Command::AdvancePhase => &[Planning, Fieldwork, Reporting],
        _ => return None,
    })
}

pub struct WorkflowSim {
    pub audit: Audit,
    pub blobs: MemoryBlobStore,
    pub clock: DateTime<Utc>,
    pub next_rec: u32,
}

impl WorkflowSim {
    pub fn new(kind: AuditKind) -> Self {
        let mut blobs = MemoryBlobStore::new();
        let create = CommandEnvelope::new(
            0,
            "auditor",
            t0(),
            Command::Create(CreateAudit { id: "sim".into(), title: "sim".into(), kind, target: "t".into(), template: small_template() }),
        );
        let mut audit = Audit::create(&create).unwrap();
        let source = blobs.put(WF_QUESTIONS.as_bytes()).unwrap();
        let env = CommandEnvelope::new(audit.revision, "auditor", t0(), Command::ImportQuestions { format: QuestionFormat::Csv, source });
        audit = audit.apply(&env, &blobs).unwrap();
        let env = CommandEnvelope::new(
            audit.revision,
            "auditor",
            t0(),
            Command::AddTrigger { id: TriggerId::new("ctx"), kind: TriggerKind::NewDeploymentContext },
        );
        audit = audit.apply(&env, &blobs).unwrap();
        Self { audit, blobs, clock: t0(), next_rec: 0 }
    }

    pub fn apply(&mut self, cmd: Command) -> Result<(), mlaudit_core::workflow::WorkflowError> {
        self.clock += Duration::minutes(1);
        let env = CommandEnvelope::new(self.audit.revision, "auditor", self.clock, cmd);
        self.audit = self.audit.apply(&env, &self.blobs)?;
        Ok(())
    }

    /// A random command, biased towards ones that can make progress.
    pub fn random_command(&mut self, rng: &mut impl Rng) -> Command {
        let step = StepId::new(*WF_STEPS.choose(rng).unwrap());
        let retained: Vec<QuestionId> =
            self.audit.open_iteration().map(|it| it.retained().iter().map(|q| q.id.clone()).collect()).unwrap_or_default();
        let recs: Vec<MitigationId> =
            self.audit.open_iteration().map(|it| it.recommendations.iter().map(|r| r.id.clone()).collect()).unwrap_or_default();
        match rng.gen_range(0..15) {
            0 | 1 => Command::AssessStep {
                step,
                status: [StepStatus::InScope, StepStatus::InScope, StepStatus::NotRelevant, StepStatus::NotAuditable][rng.gen_range(0..4)],
                rationale: "r".into(),
            },
            2 => Command::SetStepOwner { step, owner: if rng.gen_bool(0.85) { Some("owner".into()) } else { None } },
            3 => Command::DeclareEvidenceSource {
                step,
                source: EvidenceSource {
                    description: "docs".into(),
                    access: AccessBasis::ALL[rng.gen_range(0..3)],
                    available: rng.gen_bool(0.8),
                },
            },
            4 => Command::WaiveAuditability { rationale: "accepted".into() },
            5 | 6 => Command::AdvancePhase,
            7 | 8 => match retained.choose(rng) {
                Some(q) => Command::RecordResponse {
                    question: q.clone(),
                    answer: Answer::ALL[rng.gen_range(0..5)],
                    justification: "j".into(),
                    evidence_refs: vec![],
                },
                None => Command::AdvancePhase,
            },
            9 => {
                self.next_rec += 1;
                Command::AddRecommendation {
                    recommendation: MitigationRecommendation {
                        id: MitigationId::new(format!("m{}", self.next_rec)),
                        text: "do it".into(),
                        mandatory: rng.gen_bool(0.6),
                        status: MitigationStatus::Open,
                        waiver_rationale: None,
                        addresses: Some(Requirement::ALL[rng.gen_range(0..7)]),
                        note: None,
                    },
                }
            }
            10 => Command::DeriveConcerns,
            11 => Command::CompileReport,
            12 => match recs.choose(rng) {
                Some(id) => Command::SetRecommendationStatus { id: id.clone(), status: MitigationStatus::Implemented, rationale: None },
                None => Command::DeriveConcerns,
            },
            13 => match self.audit.carried_mitigations.choose(rng) {
                Some(c) => Command::UpdateCarriedMitigation {
                    from_iteration: c.from_iteration,
                    id: c.recommendation.id.clone(),
                    status: if rng.gen_bool(0.5) { MitigationStatus::Implemented } else { MitigationStatus::Waived },
                    rationale: Some("handled".into()),
                },
                None => Command::AdvancePhase,
            },
            _ => {
                if rng.gen_bool(0.5) {
                    Command::RecordEvent { event: AuditEvent::DeploymentContextChange { description: "new site".into() } }
                } else {
                    Command::OpenIteration { reason: "manual".into() }
                }
            }
        }
    }
}

/// Runs one random sequence and checks the three gate properties plus
/// agreement with the transition table. Returns the first violation.
pub fn check_workflow_sequence(seed: u64, len: usize, kind: AuditKind) -> Result<WorkflowStats, String> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut sim = WorkflowSim::new(kind);
    let mut stats = WorkflowStats::default();
    for n in 0..len {
        let cmd = sim.random_command(&mut rng);
        let before = sim.audit.clone();
        let from = before.open_iteration().map(|i| (i.index, i.phase));
        let expected_advance = may_advance(&before);
        let result = sim.apply(cmd.clone());
        let ctx = || format!("seed {seed} step {n}: {} from {from:?}", cmd.name());

        if let (Some(allowed), Some((_, phase))) = (allowed_phases(&cmd), from) {
            if result.is_ok() && !allowed.contains(&phase) {
                return Err(format!("{}: accepted outside its phases", ctx()));
            }
        }
        if matches!(cmd, Command::AdvancePhase) {
            if result.is_ok() != expected_advance {
                return Err(format!("{}: engine {:?}, table says {expected_advance}", ctx(), result.as_ref().err()));
            }
            if result.is_ok() {
                stats.advances += 1;
                let (_, phase) = from.unwrap();
                match phase {
                    IterationPhase::Planning => stats.fieldwork_entries += 1,
                    IterationPhase::Reporting => stats.reported += 1,
                    _ => {}
                }
            }
        }
        let open = sim.audit.iterations.iter().filter(|i| i.is_open()).count();
        if open > 1 {
            return Err(format!("{}: {open} open iterations", ctx()));
        }
        // (b) every iteration past Planning entered Fieldwork through the gate
        for it in &sim.audit.iterations {
            if it.phase != IterationPhase::Planning && before.iteration(it.index).is_some_and(|b| b.phase == IterationPhase::Planning) {
                if !expected_advance {
                    return Err(format!("{}: iteration {} left Planning without being auditable or waived", ctx(), it.index));
                }
            }
            // (c) no fresh Reported state while an older mandatory mitigation is open
            if it.phase == IterationPhase::Reported && before.iteration(it.index).is_some_and(|b| b.phase != IterationPhase::Reported) {
                let blocked = before
                    .carried_mitigations
                    .iter()
                    .any(|c| c.from_iteration < it.index && c.recommendation.mandatory && c.recommendation.status == MitigationStatus::Open);
                if blocked {
                    return Err(format!("{}: iteration {} reported over an open carried mitigation", ctx(), it.index));
                }
            }
        }
        if result.is_ok() {
            stats.accepted += 1;
        }
    }
    stats.iterations = sim.audit.iterations.len();
    Ok(stats)
}

#[derive(Debug, Default, Clone, Copy)]
pub struct WorkflowStats {
    pub accepted: usize,
    pub advances: usize,
    pub fieldwork_entries: usize,
    pub reported: usize,
    pub iterations: usize,
}

pub fn summary(stats: &[WorkflowStats]) -> BTreeMap<&'static str, usize> {
    let mut m = BTreeMap::new();
    m.insert("fieldwork_entries", stats.iter().map(|s| s.fieldwork_entries).sum());
    m.insert("reported", stats.iter().map(|s| s.reported).sum());
    m.insert("multi_iteration_runs", stats.iter().filter(|s| s.iterations > 1).count());
    m
}
