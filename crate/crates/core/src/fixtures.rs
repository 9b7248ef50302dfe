//! The two pilot audits as executable example data.
//!
//! Each pilot is a command script. `build_pilot` runs it in memory and
//! packs the result as a bundle; the committed `fixtures/<name>/bundle.json`
//! must equal that output byte for byte. Golden values live beside each
//! bundle in `expected.json` and are written by hand.
//!
//! All log data and evidence content in the fixtures is synthetic.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::blobs::{BlobStore, MemoryBlobStore};
use crate::bundle::{self, AuditBundle, BundleError};
use crate::canonical::Digest;
use crate::fieldwork::{AccessBasis, ArtifactType, AssuranceNode, EvidenceItem, EvidenceKind, NodeKind, SpecItem, TestCategory, TestRecord, Verdict};
use crate::ids::{ActorId, AuditId, EntryId, EvidenceId, MitigationId, NodeId, QuestionId, SpecItemId, StepId, TestId, TriggerId};
use crate::lifecycle::{StepStatus, DEFAULT_TEMPLATE};
use crate::risk_assessment::{Answer, MitigationRecommendation, MitigationStatus, Requirement, Severity};
use crate::risk_register::{default_templates, Conditions, EntrySource, RiskRegister, RiskRegisterEntry};
use crate::store::StoredRevision;
use crate::workflow::{
    Audit, AuditKind, Command, CommandEnvelope, CreateAudit, EvidenceSource, IterationPhase, QuestionFormat, TemplateChoice, TriggerKind,
    WorkflowError,
};

pub const PILOTS: [&str; 2] = ["calibration", "garmi"];

/// The sample question database both pilots import.
pub const SAMPLE_QUESTIONS_CSV: &[u8] = include_bytes!("../data/altai_sample.csv");

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("unknown pilot `{0}`")]
    UnknownPilot(String),
    #[error("fixture file {path}: {message}")]
    Missing { path: PathBuf, message: String },
    #[error("corrupt fixture `{name}`: {source}")]
    Corrupt { name: String, source: BundleError },
    #[error("malformed expected values for `{name}`: {message}")]
    Expected { name: String, message: String },
    #[error("fixture script failed at step {step}: {source}")]
    Script { step: usize, source: WorkflowError },
}

/// Runs commands against an in-memory audit, keeping the stored log.
pub struct Script {
    audit: Option<Audit>,
    log: Vec<StoredRevision<CommandEnvelope>>,
    blobs: MemoryBlobStore,
    clock: DateTime<Utc>,
    tick: Duration,
}

impl Script {
    pub fn new(start: DateTime<Utc>) -> Self {
        Self { audit: None, log: Vec::new(), blobs: MemoryBlobStore::new(), clock: start, tick: Duration::minutes(5) }
    }

    pub fn audit(&self) -> &Audit {
        self.audit.as_ref().expect("script has created its audit")
    }

    pub fn blobs(&self) -> &MemoryBlobStore {
        &self.blobs
    }

    pub fn log(&self) -> &[StoredRevision<CommandEnvelope>] {
        &self.log
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.clock
    }

    pub fn put_blob(&mut self, bytes: &[u8]) -> Digest {
        self.blobs.put(bytes).expect("memory store")
    }

    /// Applies one command at the next clock tick.
    pub fn run(&mut self, actor: &str, command: Command) -> Result<&Audit, FixtureError> {
        self.clock += self.tick;
        let step = self.log.len() + 1;
        let rev = self.audit.as_ref().map_or(0, |a| a.revision);
        let env = CommandEnvelope::new(rev, actor, self.clock, command);
        let next = match &self.audit {
            None => Audit::create(&env),
            Some(a) => a.apply(&env, &self.blobs),
        }
        .map_err(|source| FixtureError::Script { step, source })?;
        self.log.push(StoredRevision {
            entity: next.id.to_string(),
            revision: next.revision,
            payload: env.clone(),
            written_at: env.at,
            actor: env.actor,
        });
        Ok(self.audit.insert(next))
    }

    pub fn into_parts(self) -> (Vec<StoredRevision<CommandEnvelope>>, MemoryBlobStore) {
        (self.log, self.blobs)
    }
}

/// Golden values stored in `expected.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedValues {
    pub audit_id: AuditId,
    pub phase: IterationPhase,
    /// Per phase `[covered, assessable]`; `null` when nothing is assessable.
    pub phase_coverage: BTreeMap<String, Option<[u32; 2]>>,
    pub overall_coverage: Option<[u32; 2]>,
    pub step_status: BTreeMap<StepStatus, Vec<StepId>>,
    pub retained_questions: Vec<QuestionId>,
    pub highlighted_questions: Vec<String>,
    pub concerns: Vec<Requirement>,
    pub recommendations: Vec<String>,
    pub register_entries: Vec<EntryId>,
    #[serde(default)]
    pub blocked_steps: Vec<StepId>,
}

pub struct PilotFixture {
    pub name: String,
    pub bundle_bytes: Vec<u8>,
    pub bundle: AuditBundle,
    pub expected: ExpectedValues,
    pub notes: String,
}

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn check_name(name: &str) -> Result<(), FixtureError> {
    if PILOTS.contains(&name) {
        Ok(())
    } else {
        Err(FixtureError::UnknownPilot(name.to_owned()))
    }
}

fn read(path: PathBuf) -> Result<Vec<u8>, FixtureError> {
    std::fs::read(&path).map_err(|e| FixtureError::Missing { path, message: e.to_string() })
}

pub fn read_pilot(dir: &Path, name: &str) -> Result<PilotFixture, FixtureError> {
    check_name(name)?;
    let base = dir.join(name);
    let bundle_bytes = read(base.join("bundle.json"))?;
    let bundle = bundle::decode(&bundle_bytes).map_err(|source| FixtureError::Corrupt { name: name.to_owned(), source })?;
    let expected = serde_json::from_slice(&read(base.join("expected.json"))?)
        .map_err(|e| FixtureError::Expected { name: name.to_owned(), message: e.to_string() })?;
    let notes = String::from_utf8_lossy(&read(base.join("NOTES.md"))?).into_owned();
    Ok(PilotFixture { name: name.to_owned(), bundle_bytes, bundle, expected, notes })
}

/// Materialises a shipped pilot at its documented phase.
pub fn load_pilot(name: &str) -> Result<Audit, FixtureError> {
    Ok(read_pilot(&fixtures_dir(), name)?.bundle.state)
}

/// Runs a pilot script and packs it. Deterministic.
pub fn build_pilot(name: &str) -> Result<AuditBundle, FixtureError> {
    check_name(name)?;
    let (script, register) = if name == "calibration" { calibration()? } else { garmi()? };
    let (log, blobs) = script.into_parts();
    bundle::assemble(log, &blobs, &register).map_err(|source| FixtureError::Corrupt { name: name.to_owned(), source })
}

fn step(id: &str) -> StepId {
    StepId::new(id)
}

fn start(day: u32) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2021, 3, day, 9, 0, 0).single().expect("valid date")
}

fn assess(s: &mut Script, actor: &str, id: &str, status: StepStatus, rationale: &str) -> Result<(), FixtureError> {
    s.run(actor, Command::AssessStep { step: step(id), status, rationale: rationale.to_owned() })?;
    Ok(())
}

fn owner(s: &mut Script, actor: &str, id: &str, who: &str) -> Result<(), FixtureError> {
    s.run(actor, Command::SetStepOwner { step: step(id), owner: Some(who.to_owned()) })?;
    Ok(())
}

fn source(s: &mut Script, actor: &str, id: &str, description: &str, available: bool) -> Result<(), FixtureError> {
    let source = EvidenceSource { description: description.to_owned(), access: AccessBasis::Disclosed, available };
    s.run(actor, Command::DeclareEvidenceSource { step: step(id), source })?;
    Ok(())
}

fn import_questions(s: &mut Script, actor: &str) -> Result<(), FixtureError> {
    let source = s.put_blob(SAMPLE_QUESTIONS_CSV);
    s.run(actor, Command::ImportQuestions { format: QuestionFormat::Csv, source })?;
    Ok(())
}

fn evidence(
    s: &mut Script,
    actor: &str,
    id: &str,
    kind: EvidenceKind,
    artifact_type: ArtifactType,
    steps: &[&str],
    access_basis: AccessBasis,
    content: &str,
) -> Result<(), FixtureError> {
    let content_digest = s.put_blob(content.as_bytes());
    let item = EvidenceItem {
        id: EvidenceId::new(id),
        kind,
        artifact_type,
        step_tags: steps.iter().map(|t| step(t)).collect(),
        locator: None,
        content_digest,
        collected_by: ActorId::new(actor),
        timestamp: s.now(),
        access_basis,
        supersedes: None,
    };
    s.run(actor, Command::RegisterEvidence { item })?;
    Ok(())
}

fn recommendation(id: &str, addresses: Requirement, text: &str) -> Command {
    Command::AddRecommendation {
        recommendation: MitigationRecommendation {
            id: MitigationId::new(id),
            text: text.to_owned(),
            mandatory: false,
            status: MitigationStatus::Open,
            waiver_rationale: None,
            addresses: Some(addresses),
            note: None,
        },
    }
}

fn node(id: &str, kind: NodeKind, text: &str, children: &[&str], evidence: Option<&str>, author: &str) -> AssuranceNode {
    AssuranceNode {
        id: NodeId::new(id),
        node_kind: kind,
        text: text.to_owned(),
        children: children.iter().map(|c| NodeId::new(*c)).collect(),
        evidence_ref: evidence.map(EvidenceId::new),
        author: ActorId::new(author),
    }
}

const AUDITOR: &str = "auditor";
const NOT_KNOWN: &str = "not known; the training artefacts are not accessible anymore";

fn over_reliance_entry() -> RiskRegisterEntry {
    RiskRegisterEntry {
        id: EntryId::new("reg-over-reliance"),
        title: "Operators over-rely on ranked recommendations".into(),
        description: "Engineers shown a ranked list of recommended parametrisations tend to apply the top entry without checking alternatives."
            .into(),
        failed_controls: vec!["No logging of the parametrisation the operator selected".into()],
        successful_controls: vec!["Final choice left to a trained engineer".into()],
        related_literature: vec![],
        actual_impact: "Operators (engineers) and the safety component being calibrated; no incident recorded, risk identified during an audit."
            .into(),
        estimated_cost: None,
        similar_occurrences: vec![],
        conditions: Conditions {
            template: DEFAULT_TEMPLATE.into(),
            steps: [step("formulation.user_experience"), step("deployment.reliability_assessment")].into_iter().collect(),
            text: "Recommendation engines whose output is applied by a human expert without an uncertainty display.".into(),
        },
        requirements: [Requirement::Transparency, Requirement::HumanAgencyOversight].into_iter().collect(),
        source: EntrySource::Internal,
        recorded_at: start(1),
        recorded_by: ActorId::new(AUDITOR),
        supersedes: None,
    }
}

fn calibration() -> Result<(Script, RiskRegister), FixtureError> {
    use StepStatus::*;
    let mut s = Script::new(start(1));
    s.run(
        AUDITOR,
        Command::Create(CreateAudit {
            id: AuditId::new("calibration"),
            title: "AI-assisted calibration of a safety component".into(),
            kind: AuditKind::ThirdParty,
            target: "Recommendation engine for calibration parameters (synthetic fixture)".into(),
            template: TemplateChoice::Default,
        }),
    )?;
    import_questions(&mut s, AUDITOR)?;

    let statuses: [(&str, StepStatus, &str); 26] = [
        ("formulation.goals", InScope, "calibration of a complex safety component; engineers stay in the loop"),
        ("formulation.legacy_systems", NotRelevant, "not applicable for this use case"),
        ("formulation.evaluation_metrics", NotAuditable, "not known"),
        ("formulation.system_subjects", InScope, "the safety component"),
        ("formulation.system_users", InScope, "domain experts"),
        ("formulation.societal_context", NotRelevant, "not relevant"),
        ("formulation.user_experience", InScope, "system used by domain experts"),
        ("formulation.security_assessment", NotRelevant, "not relevant for this use case"),
        ("formulation.impact_assessment", InScope, "privacy, transparency, explainability, human autonomy"),
        ("data.specification", NotRelevant, "part of the legacy infrastructure"),
        ("data.collection", NotRelevant, "part of the legacy infrastructure; no new data collected"),
        ("data.curation", NotRelevant, "part of the legacy infrastructure"),
        ("data.processing", NotRelevant, "part of the legacy infrastructure"),
        ("data.extraction", NotRelevant, "part of the legacy infrastructure"),
        ("data.quality_assessment", NotRelevant, "part of the legacy infrastructure"),
        ("model.specification", NotAuditable, NOT_KNOWN),
        ("model.feature_engineering", NotAuditable, NOT_KNOWN),
        ("model.training_optimisation", NotAuditable, NOT_KNOWN),
        ("model.validation_interpretation", NotAuditable, NOT_KNOWN),
        ("model.quality_assessment", NotAuditable, NOT_KNOWN),
        ("deployment.sandboxing", NotAuditable, "to be conducted to test mitigation measures"),
        ("deployment.operational_logging", NotAuditable, "missing"),
        ("deployment.continuous_testing", InScope, "conducted to assess the quality of the recommendations"),
        ("deployment.reliability_assessment", InScope, "over-reliance mitigation to be adopted"),
        ("deployment.black_box_auditing", InScope, "over-reliance concern to be checked by randomised display"),
        ("deployment.post_market_analysis", NotAuditable, "to be conducted once the system is on the market"),
    ];
    for (id, status, why) in statuses {
        assess(&mut s, AUDITOR, id, status, why)?;
    }

    let owners = [
        ("formulation.goals", "product owner", "requirements document"),
        ("formulation.system_subjects", "product owner", "component specification"),
        ("formulation.system_users", "product owner", "stakeholder list"),
        ("formulation.user_experience", "lead UX designer", "interface specification"),
        ("formulation.impact_assessment", "product owner", "impact notes"),
        ("deployment.continuous_testing", "lead ML developer", "recommendation quality test reports"),
        ("deployment.reliability_assessment", "lead ML developer", "reliability review notes"),
        ("deployment.black_box_auditing", "lead ML developer", "access to a staging interface"),
    ];
    for (id, who, what) in owners {
        owner(&mut s, AUDITOR, id, who)?;
        source(&mut s, AUDITOR, id, what, true)?;
    }
    s.run(
        AUDITOR,
        Command::RegisterSpecItem {
            item: SpecItem {
                id: SpecItemId::new("spec-ranked-output"),
                step: step("formulation.goals"),
                text: "Recommended parametrisations are shown as a list ranked by performance; the engineer applies one manually.".into(),
            },
        },
    )?;
    s.run(AUDITOR, Command::LinkRegisterEntry { entry: EntryId::new("reg-over-reliance") })?;
    s.run(AUDITOR, Command::AdvancePhase)?;

    evidence(
        &mut s,
        AUDITOR,
        "ev-ui-spec",
        EvidenceKind::Transparency,
        ArtifactType::Document,
        &["formulation.user_experience"],
        AccessBasis::Disclosed,
        "SYNTHETIC FIXTURE CONTENT\nInterface specification: ranked list of parametrisations, best first. No uncertainty display. No disclaimer on expert supervision.\n",
    )?;
    evidence(
        &mut s,
        AUDITOR,
        "ev-test-report",
        EvidenceKind::Transparency,
        ArtifactType::Document,
        &["deployment.continuous_testing"],
        AccessBasis::Disclosed,
        "SYNTHETIC FIXTURE CONTENT\nContinuous testing report: recommendation quality checked against expert calibrations on a held-out set.\n",
    )?;
    evidence(
        &mut s,
        AUDITOR,
        "ev-staging-session",
        EvidenceKind::Examinability,
        ArtifactType::QueryResult,
        &["deployment.black_box_auditing"],
        AccessBasis::GrantedAccess,
        "SYNTHETIC FIXTURE CONTENT\nStaging session: 12 requests, ranked output displayed, selected parametrisation not logged.\n",
    )?;
    s.run(
        AUDITOR,
        Command::RecordTest {
            record: TestRecord {
                id: TestId::new("t-ranked-output"),
                category: TestCategory::Compliance,
                spec_ref: Some(SpecItemId::new("spec-ranked-output")),
                rationale: None,
                procedure: "Request recommendations in staging and check that the list is ordered by the reported performance.".into(),
                verdict: Verdict::Pass,
                evidence_refs: vec![EvidenceId::new("ev-staging-session")],
                timestamp: s.now(),
                comparability_warning: None,
            },
        },
    )?;
    s.run(
        AUDITOR,
        Command::RecordTest {
            record: TestRecord {
                id: TestId::new("t-selection-logged"),
                category: TestCategory::Custom,
                spec_ref: None,
                rationale: Some("Over-reliance can only be assessed if operator choices are recorded.".into()),
                procedure: "Select a non-top recommendation in staging and look for a trace of the choice.".into(),
                verdict: Verdict::Fail,
                evidence_refs: vec![EvidenceId::new("ev-staging-session")],
                timestamp: s.now(),
                comparability_warning: None,
            },
        },
    )?;
    s.run(
        AUDITOR,
        Command::AddAssuranceArgument {
            nodes: vec![
                node("c-support", NodeKind::Claim, "The system supports and does not replace the engineer's decision.", &["a-ranked", "x-reliance"], None, AUDITOR),
                node("a-ranked", NodeKind::Argument, "Output is a ranked list the engineer applies manually.", &["e-ui", "e-test"], None, AUDITOR),
                node("e-ui", NodeKind::EvidenceLink, "Interface specification", &[], Some("ev-ui-spec"), AUDITOR),
                node("e-test", NodeKind::EvidenceLink, "Staging session", &[], Some("ev-staging-session"), AUDITOR),
                node("x-reliance", NodeKind::Challenge, "Operators may apply the top entry without review.", &[], None, AUDITOR),
            ],
        },
    )?;

    let answers: [(&str, Answer, &str); 21] = [
        ("q01", Answer::Yes, "recommendations feed a safety-relevant calibration"),
        ("q02", Answer::NotApplicable, "users are the engineers who requested the tool"),
        ("q03", Answer::Yes, "the engineer chooses and applies the parametrisation"),
        ("q05", Answer::Yes, "failure modes of the actuator are documented by the product owner"),
        ("q06", Answer::No, "no documented performance thresholds per operating circumstance"),
        ("q07", Answer::Yes, "continuous testing of recommendation quality"),
        ("q08", Answer::No, "edge cases and adversarial testing planned for the beta version"),
        ("q12", Answer::Partial, "legacy expert-rule data contains identifying records; no new data is collected"),
        ("q15", Answer::NotApplicable, "no user data is collected"),
        ("q16", Answer::Partial, "outputs are ranked by performance but not explained"),
        ("q17", Answer::No, "no user survey in place"),
        ("q18", Answer::Partial, "training exists; no disclaimer on expert supervision"),
        ("q20", Answer::No, "the selected parametrisation is not logged"),
        ("q21", Answer::No, "uncertainty of the outputs is not conveyed"),
        ("q23", Answer::NotApplicable, "small group of trained engineers"),
        ("q26", Answer::Yes, "used locally, not intended to scale"),
        ("q28", Answer::Yes, "engineers remain in the loop"),
        ("q30", Answer::Yes, "owners named for every scoped step"),
        ("q32", Answer::Yes, "risks discussed with product owner, lead developer and UX lead"),
        ("q33", Answer::Yes, "the calibrated component is safety relevant and treated as such"),
        ("q35", Answer::Yes, "UX lead involved from the start"),
    ];
    for (q, answer, why) in answers {
        let question = QuestionId::new(q);
        s.run(AUDITOR, Command::RecordResponse { question, answer, justification: why.into(), evidence_refs: vec![] })?;
    }
    s.run(AUDITOR, Command::AdvancePhase)?;

    for cmd in [
        recommendation(
            "rec-log-parameters",
            Requirement::Transparency,
            "Log the parametrisation the operator selects and analyse the choices offline, by rerunning the optimisation or by a second operator.",
        ),
        recommendation(
            "rec-randomised-display",
            Requirement::Transparency,
            "Run dry-run sessions where the displayed parametrisations are randomly permuted or slightly re-ordered to reveal over-reliance.",
        ),
        recommendation(
            "rec-performance-thresholds",
            Requirement::TechnicalRobustnessSafety,
            "Document thresholds of acceptable performance for each operating circumstance and which risks are acceptable.",
        ),
        recommendation(
            "rec-adversarial-testing",
            Requirement::TechnicalRobustnessSafety,
            "Once in beta, run adversarial tests on edge cases and record performance and failure modes.",
        ),
    ] {
        s.run(AUDITOR, cmd)?;
    }
    s.run(AUDITOR, Command::DeriveConcerns)?;
    s.run(
        AUDITOR,
        Command::OverrideSeverity {
            requirement: Requirement::PrivacyDataGovernance,
            severity: Severity::Info,
            rationale: "no further data is collected from users and the legacy data already complies with data-protection regulation".into(),
        },
    )?;
    s.run(AUDITOR, Command::CompileReport)?;

    let mut register = RiskRegister::new();
    register.add_entry(over_reliance_entry(), &default_templates()).expect("valid entry");
    Ok((s, register))
}

fn garmi() -> Result<(Script, RiskRegister), FixtureError> {
    use StepStatus::*;
    const NOT_YET: &str = "not applicable at this stage";
    let mut s = Script::new(start(15));
    s.run(
        AUDITOR,
        Command::Create(CreateAudit {
            id: AuditId::new("garmi"),
            title: "Vision module of an assistive service robot".into(),
            kind: AuditKind::ThirdParty,
            target: "Perception and facial-expression analysis module (synthetic fixture)".into(),
            template: TemplateChoice::Default,
        }),
    )?;
    import_questions(&mut s, AUDITOR)?;

    let mut statuses: Vec<(&str, StepStatus, &str)> = vec![
        (
            "formulation.goals",
            InScope,
            "recognising an elderly patient's facial expression, gestures and skeleton for coherent and safe human-robot interaction",
        ),
        ("formulation.legacy_systems", InScope, "checked: no legacy system is involved"),
        ("formulation.evaluation_metrics", InScope, "success rates recorded during testing and validation"),
        ("formulation.system_subjects", InScope, "elderly patients"),
        ("formulation.system_users", InScope, "health care professionals and elderly patients"),
        ("formulation.societal_context", InScope, "elderly person's home and professional healthcare environments"),
        ("formulation.user_experience", InScope, "user studies planned with stakeholders"),
        ("formulation.security_assessment", InScope, "platform security reviewed with security partners as the project progresses"),
        ("formulation.impact_assessment", InScope, "input from the project's ethics group"),
        ("data.specification", InScope, "specified after each learning, validation and test stage"),
        ("data.collection", InScope, "participants' facial expressions and skeleton"),
        ("data.curation", NotAuditable, "not yet applied"),
        ("data.processing", InScope, "offline and online processing depending on the use case"),
        ("data.extraction", NotAuditable, NOT_YET),
        ("data.quality_assessment", NotAuditable, NOT_YET),
    ];
    for id in [
        "model.specification",
        "model.feature_engineering",
        "model.training_optimisation",
        "model.validation_interpretation",
        "model.quality_assessment",
        "deployment.sandboxing",
        "deployment.operational_logging",
        "deployment.continuous_testing",
        "deployment.reliability_assessment",
        "deployment.black_box_auditing",
        "deployment.post_market_analysis",
    ] {
        statuses.push((id, NotAuditable, NOT_YET));
    }
    for (id, status, why) in statuses {
        assess(&mut s, AUDITOR, id, status, why)?;
    }
    for id in [
        "formulation.goals",
        "formulation.legacy_systems",
        "formulation.evaluation_metrics",
        "formulation.system_subjects",
        "formulation.system_users",
        "formulation.societal_context",
        "formulation.user_experience",
        "formulation.security_assessment",
        "formulation.impact_assessment",
    ] {
        owner(&mut s, AUDITOR, id, "project lead")?;
        source(&mut s, AUDITOR, id, "project design documents", true)?;
    }
    for id in ["data.specification", "data.collection", "data.processing"] {
        owner(&mut s, AUDITOR, id, "vision module lead")?;
        source(&mut s, AUDITOR, id, "datasheet for the recorded sessions (not yet written)", false)?;
    }
    s.run(AUDITOR, Command::AddTrigger { id: TriggerId::new("next-development-round"), kind: TriggerKind::NewDeploymentContext })?;
    Ok((s, RiskRegister::new()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripts_are_deterministic() {
        for name in PILOTS {
            let a = bundle::encode(&build_pilot(name).unwrap());
            let b = bundle::encode(&build_pilot(name).unwrap());
            assert_eq!(a, b, "{name}");
        }
    }

    #[test]
    fn unknown_pilot_is_rejected() {
        assert!(matches!(build_pilot("pilot-3"), Err(FixtureError::UnknownPilot(_))));
        assert!(matches!(load_pilot("nope"), Err(FixtureError::UnknownPilot(_))));
    }
}
