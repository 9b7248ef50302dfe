use std::collections::BTreeSet;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::*;
use crate::blobs::BlobStore;
use crate::fieldwork::{build_assurance_argument, AssuranceNode, EvidenceItem, TestRecord};
use crate::ids::{NodeId, PhaseId, TriggerId};
use crate::lifecycle::{instantiate_template, Phase, Step, StepAssessment, StepStatus};
use crate::monitoring::{read_prediction_log, run_monitor};
use crate::risk_assessment::{
    derive_concerns, filter_questions, import_questions_csv, import_questions_json, Answer, Deferral, QuestionResponse, Severity,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateChoice {
    Default,
    Custom { name: String, phases: Vec<Phase> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreateAudit {
    pub id: AuditId,
    pub title: String,
    pub kind: AuditKind,
    pub target: String,
    pub template: TemplateChoice,
}

/// Every state change an audit accepts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "command")]
pub enum Command {
    Create(CreateAudit),
    AssessStep { step: StepId, status: StepStatus, rationale: String },
    SetStepOwner { step: StepId, owner: Option<String> },
    AddStep { phase: PhaseId, step: Step },
    RemoveStep { step: StepId },
    /// Replaces the question database with the document stored as `source`.
    ImportQuestions { format: QuestionFormat, source: Digest },
    DeclareEvidenceSource { step: StepId, source: EvidenceSource },
    ClearEvidenceSources { step: StepId },
    WaiveAuditability { rationale: String },
    AdvancePhase,
    RecordResponse { question: QuestionId, answer: Answer, justification: String, evidence_refs: Vec<crate::ids::EvidenceId> },
    DeferQuestion { question: QuestionId, rationale: String },
    RegisterSpecItem { item: SpecItem },
    RegisterEvidence { item: EvidenceItem },
    RecordTest { record: TestRecord },
    AddAssuranceArgument { nodes: Vec<AssuranceNode> },
    RunMonitor { spec: MonitorSpec, log: Digest },
    AddRecommendation { recommendation: MitigationRecommendation },
    SetRecommendationStatus { id: MitigationId, status: MitigationStatus, rationale: Option<String> },
    OverrideSeverity { requirement: Requirement, severity: Severity, rationale: String },
    DeriveConcerns,
    LinkRegisterEntry { entry: EntryId },
    CompileReport,
    UpdateCarriedMitigation { from_iteration: u32, id: MitigationId, status: MitigationStatus, rationale: Option<String> },
    AddTrigger { id: TriggerId, kind: TriggerKind },
    RecordEvent { event: AuditEvent },
    /// Opens a new iteration by hand when none is open.
    OpenIteration { reason: String },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Create(_) => "create",
            Command::AssessStep { .. } => "assess_step",
            Command::SetStepOwner { .. } => "set_step_owner",
            Command::AddStep { .. } => "add_step",
            Command::RemoveStep { .. } => "remove_step",
            Command::ImportQuestions { .. } => "import_questions",
            Command::DeclareEvidenceSource { .. } => "declare_evidence_source",
            Command::ClearEvidenceSources { .. } => "clear_evidence_sources",
            Command::WaiveAuditability { .. } => "waive_auditability",
            Command::AdvancePhase => "advance_phase",
            Command::RecordResponse { .. } => "record_response",
            Command::DeferQuestion { .. } => "defer_question",
            Command::RegisterSpecItem { .. } => "register_spec_item",
            Command::RegisterEvidence { .. } => "register_evidence",
            Command::RecordTest { .. } => "record_test",
            Command::AddAssuranceArgument { .. } => "add_assurance_argument",
            Command::RunMonitor { .. } => "run_monitor",
            Command::AddRecommendation { .. } => "add_recommendation",
            Command::SetRecommendationStatus { .. } => "set_recommendation_status",
            Command::OverrideSeverity { .. } => "override_severity",
            Command::DeriveConcerns => "derive_concerns",
            Command::LinkRegisterEntry { .. } => "link_register_entry",
            Command::CompileReport => "compile_report",
            Command::UpdateCarriedMitigation { .. } => "update_carried_mitigation",
            Command::AddTrigger { .. } => "add_trigger",
            Command::RecordEvent { .. } => "record_event",
            Command::OpenIteration { .. } => "open_iteration",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandEnvelope {
    pub expected_revision: u64,
    pub actor: ActorId,
    pub at: DateTime<Utc>,
    pub command: Command,
}

impl CommandEnvelope {
    pub fn new(expected_revision: u64, actor: impl Into<ActorId>, at: DateTime<Utc>, command: Command) -> Self {
        Self { expected_revision, actor: actor.into(), at, command }
    }
}

fn require_text(text: &str, what: &'static str) -> Result<(), WorkflowError> {
    if text.trim().is_empty() {
        Err(WorkflowError::MissingRationale(what))
    } else {
        Ok(())
    }
}

fn read_blob(blobs: &dyn BlobStore, digest: &Digest) -> Result<Vec<u8>, WorkflowError> {
    blobs
        .get(digest)
        .map_err(|e| WorkflowError::Store(e.to_string()))?
        .ok_or_else(|| WorkflowError::MissingBlob(digest.clone()))
}

impl Audit {
    /// Builds a fresh audit from a `Create` envelope at revision 0.
    pub fn create(env: &CommandEnvelope) -> Result<Audit, WorkflowError> {
        let Command::Create(c) = &env.command else {
            return Err(WorkflowError::NotCreated);
        };
        if env.expected_revision != 0 {
            return Err(WorkflowError::StaleRevision { expected: env.expected_revision, actual: 0 });
        }
        let lifecycle = match &c.template {
            TemplateChoice::Default => instantiate_template(),
            TemplateChoice::Custom { name, phases } => LifecycleModel::custom(name.clone(), phases.clone())?,
        };
        Ok(Audit {
            id: c.id.clone(),
            title: c.title.clone(),
            kind: c.kind,
            target: c.target.clone(),
            revision: 1,
            lifecycle,
            question_db: QuestionDb::empty(),
            iterations: vec![AuditIteration::new(0, env.at, None)],
            triggers: Vec::new(),
            fired: Vec::new(),
            carried_mitigations: Vec::new(),
            transitions: vec![Transition { iteration: 0, from: None, to: IterationPhase::Planning, actor: env.actor.clone(), at: env.at }],
        })
    }

    /// Rebuilds an audit from its full command log.
    pub fn replay<'a>(log: impl IntoIterator<Item = &'a CommandEnvelope>, blobs: &dyn BlobStore) -> Result<Audit, WorkflowError> {
        let mut log = log.into_iter();
        let first = log.next().ok_or(WorkflowError::NotCreated)?;
        let mut audit = Audit::create(first)?;
        for env in log {
            audit = audit.apply(env, blobs)?;
        }
        Ok(audit)
    }

    /// Applies one command, returning the next state. The receiver is left
    /// untouched on error.
    pub fn apply(&self, env: &CommandEnvelope, blobs: &dyn BlobStore) -> Result<Audit, WorkflowError> {
        if env.expected_revision != self.revision {
            return Err(WorkflowError::StaleRevision { expected: env.expected_revision, actual: self.revision });
        }
        let mut next = self.clone();
        next.execute(env, blobs)?;
        next.revision += 1;
        Ok(next)
    }

    /// Applies a `RecordEvent` and returns the triggers it fired.
    pub fn record_event(&self, env: &CommandEnvelope, blobs: &dyn BlobStore) -> Result<(Audit, Vec<FiredTrigger>), WorkflowError> {
        let next = self.apply(env, blobs)?;
        let fired = next.fired[self.fired.len()..].to_vec();
        Ok((next, fired))
    }

    fn open_mut(&mut self, command: &'static str, allowed: &[IterationPhase]) -> Result<&mut AuditIteration, WorkflowError> {
        let it = self.iterations.last_mut().filter(|i| i.is_open()).ok_or(WorkflowError::NoOpenIteration)?;
        if !allowed.contains(&it.phase) {
            return Err(WorkflowError::WrongPhase { command, phase: it.phase });
        }
        // any change invalidates a compiled report
        it.report = None;
        Ok(it)
    }

    fn execute(&mut self, env: &CommandEnvelope, blobs: &dyn BlobStore) -> Result<(), WorkflowError> {
        use IterationPhase::*;
        let name = env.command.name();
        match &env.command {
            Command::Create(_) => return Err(WorkflowError::AlreadyCreated),
            Command::AssessStep { step, status, rationale } => {
                let assessment = StepAssessment {
                    step_id: step.clone(),
                    status: *status,
                    rationale: rationale.clone(),
                    assessed_by: env.actor.clone(),
                    timestamp: env.at,
                };
                self.lifecycle = self.lifecycle.assess_step(self.lifecycle.revision, assessment)?;
            }
            Command::SetStepOwner { step, owner } => {
                self.lifecycle = self.lifecycle.set_owner(self.lifecycle.revision, step, owner.clone())?;
            }
            Command::AddStep { phase, step } => {
                self.lifecycle = self.lifecycle.add_step(self.lifecycle.revision, phase, step.clone())?;
            }
            Command::RemoveStep { step } => {
                self.lifecycle = self.lifecycle.remove_step(self.lifecycle.revision, step)?;
                if let Some(it) = self.iterations.last_mut().filter(|i| i.phase == Planning) {
                    it.preparation.remove(step);
                }
            }
            Command::ImportQuestions { format, source } => {
                let bytes = read_blob(blobs, source)?;
                let steps = self.lifecycle.step_ids();
                self.question_db = match format {
                    QuestionFormat::Csv => import_questions_csv(&bytes, &steps)?,
                    QuestionFormat::Json => import_questions_json(&bytes, &steps)?,
                };
            }
            Command::DeclareEvidenceSource { step, source } => {
                if !self.lifecycle.contains_step(step) {
                    return Err(crate::lifecycle::LifecycleError::UnknownStep(step.clone()).into());
                }
                require_text(&source.description, "evidence source description")?;
                self.open_mut(name, &[Planning])?.preparation.entry(step.clone()).or_default().push(source.clone());
            }
            Command::ClearEvidenceSources { step } => {
                self.open_mut(name, &[Planning])?.preparation.remove(step);
            }
            Command::WaiveAuditability { rationale } => {
                require_text(rationale, "waiver")?;
                let report = self.check_auditability()?;
                if report.is_auditable() {
                    return Err(WorkflowError::NothingToWaive);
                }
                let waiver = Waiver { rationale: rationale.clone(), actor: env.actor.clone(), at: env.at, blockers: report.blockers() };
                self.open_mut(name, &[Planning])?.waiver = Some(waiver);
            }
            Command::AdvancePhase => self.advance(env)?,
            Command::RecordResponse { question, answer, justification, evidence_refs } => {
                let it = self.open_mut(name, &[Fieldwork])?;
                let retained = it.scope.as_ref().map(ScopeSnapshot::retained_ids).unwrap_or_default();
                let response = QuestionResponse {
                    question_id: question.clone(),
                    answer: *answer,
                    justification: justification.clone(),
                    evidence_refs: evidence_refs.clone(),
                    answered_by: env.actor.clone(),
                    timestamp: env.at,
                };
                let evidence = it.evidence.ids();
                it.responses.record(&retained, &evidence, response)?;
                it.concerns = None;
            }
            Command::DeferQuestion { question, rationale } => {
                let it = self.open_mut(name, &[Fieldwork])?;
                let retained = it.scope.as_ref().map(ScopeSnapshot::retained_ids).unwrap_or_default();
                let deferral = Deferral { question_id: question.clone(), rationale: rationale.clone(), deferred_by: env.actor.clone(), timestamp: env.at };
                it.responses.defer(&retained, deferral)?;
                it.concerns = None;
            }
            Command::RegisterSpecItem { item } => {
                let first_phase = self.lifecycle.phases.first().map(|p| p.id.clone());
                let in_first = self.lifecycle.phase_of(&item.step).map(|p| p.id.clone());
                if in_first.is_none() || in_first != first_phase {
                    return Err(WorkflowError::SpecItemOutsideFormulation(item.step.clone()));
                }
                let it = self.open_mut(name, &[Planning, Fieldwork])?;
                if it.spec_items.contains_key(&item.id) {
                    return Err(WorkflowError::DuplicateSpecItem(item.id.clone()));
                }
                it.spec_items.insert(item.id.clone(), item.clone());
            }
            Command::RegisterEvidence { item } => {
                let steps = self.iteration_steps();
                let kind = self.kind;
                let mut item = item.clone();
                item.collected_by = env.actor.clone();
                item.timestamp = env.at;
                self.open_mut(name, &[Planning, Fieldwork])?.evidence.register(item, kind, &steps, blobs)?;
            }
            Command::RecordTest { record } => {
                let mut record = record.clone();
                record.timestamp = env.at;
                let it = self.open_mut(name, &[Fieldwork])?;
                let evidence = it.evidence.ids();
                it.tests.record(record, &it.spec_items, &evidence)?;
            }
            Command::AddAssuranceArgument { nodes } => {
                let it = self.open_mut(name, &[Fieldwork])?;
                let arg = build_assurance_argument(nodes.clone(), &it.evidence.ids())?;
                let taken: BTreeSet<&NodeId> = it.assurance.iter().flat_map(|a| a.nodes.keys()).collect();
                if let Some(dup) = arg.nodes.keys().find(|k| taken.contains(k)) {
                    return Err(crate::fieldwork::AssuranceError::DuplicateNode(dup.clone()).into());
                }
                it.assurance.push(arg);
            }
            Command::RunMonitor { spec, log } => {
                spec.validate()?;
                let bytes = read_blob(blobs, log)?;
                let records = read_prediction_log(bytes.as_slice()).map_err(|e| WorkflowError::PredictionLog(e.to_string()))?;
                let run = run_monitor(spec, &records)?;
                let record = MonitorRecord { spec: spec.clone(), log: log.clone(), run, actor: env.actor.clone(), at: env.at };
                self.open_mut(name, &[Fieldwork, Reporting])?.monitors.push(record);
            }
            Command::AddRecommendation { recommendation } => {
                recommendation.validate()?;
                let it = self.open_mut(name, &[Fieldwork, Reporting])?;
                if it.recommendations.iter().any(|r| r.id == recommendation.id) {
                    return Err(crate::risk_assessment::RiskError::DuplicateRecommendation(recommendation.id.clone()).into());
                }
                it.recommendations.push(recommendation.clone());
                rederive(it)?;
            }
            Command::SetRecommendationStatus { id, status, rationale } => {
                let it = self.open_mut(name, &[Fieldwork, Reporting])?;
                let rec = it
                    .recommendations
                    .iter_mut()
                    .find(|r| &r.id == id)
                    .ok_or_else(|| crate::risk_assessment::RiskError::UnknownRecommendation(id.clone()))?;
                rec.set_status(*status, rationale.clone())?;
                rederive(it)?;
            }
            Command::OverrideSeverity { requirement, severity, rationale } => {
                if rationale.trim().is_empty() {
                    return Err(crate::risk_assessment::RiskError::MissingOverrideRationale(*requirement).into());
                }
                let it = self.open_mut(name, &[Fieldwork, Reporting])?;
                it.severity_overrides
                    .insert(*requirement, SeverityOverride { severity: *severity, rationale: rationale.clone(), actor: env.actor.clone() });
                rederive(it)?;
            }
            Command::DeriveConcerns => {
                let it = self.open_mut(name, &[Fieldwork, Reporting])?;
                it.concerns = Some(derive_concerns(it.retained(), &it.responses, &it.recommendations, &it.severity_overrides)?);
            }
            Command::LinkRegisterEntry { entry } => {
                self.open_mut(name, &[Planning, Fieldwork, Reporting])?.register_refs.insert(entry.clone());
            }
            Command::CompileReport => {
                let index = self.open_mut(name, &[Reporting])?.index;
                let report = crate::reporting::compile_report(self, index, env.at)?;
                self.iterations.last_mut().expect("open").report = Some(report);
            }
            Command::UpdateCarriedMitigation { from_iteration, id, status, rationale } => {
                let carried = self
                    .carried_mitigations
                    .iter_mut()
                    .find(|c| c.from_iteration == *from_iteration && &c.recommendation.id == id)
                    .ok_or_else(|| WorkflowError::UnknownCarriedMitigation { from_iteration: *from_iteration, id: id.clone() })?;
                carried.recommendation.set_status(*status, rationale.clone())?;
                if let Some(it) = self.iterations.last_mut().filter(|i| i.is_open()) {
                    it.report = None;
                }
            }
            Command::AddTrigger { id, kind } => {
                let valid = match kind {
                    TriggerKind::Periodic { interval_secs } => *interval_secs > 0,
                    TriggerKind::NegativeFeedbackThreshold { count } => *count > 0,
                    TriggerKind::NewDeploymentContext => true,
                };
                if !valid {
                    return Err(WorkflowError::InvalidTrigger);
                }
                if self.triggers.iter().any(|t| &t.id == id) {
                    return Err(WorkflowError::DuplicateTrigger(id.clone()));
                }
                self.triggers.push(ReauditTrigger { id: id.clone(), kind: kind.clone(), counters: TriggerCounters::default() });
            }
            Command::RecordEvent { event } => self.observe(event, env),
            Command::OpenIteration { reason } => {
                require_text(reason, "new iteration")?;
                if self.open_iteration().is_some() {
                    return Err(WorkflowError::IterationOpen);
                }
                self.open_next(Some(reason.clone()), env);
            }
        }
        Ok(())
    }

    fn advance(&mut self, env: &CommandEnvelope) -> Result<(), WorkflowError> {
        let unmet = self.gate_conditions();
        if !unmet.is_empty() {
            return Err(WorkflowError::Gate(GateViolation(unmet)));
        }
        let lifecycle = self.lifecycle.clone();
        let db = self.question_db.clone();
        let it = self.iterations.last_mut().expect("gate checked an open iteration");
        let from = it.phase;
        let to = from.next().expect("open iteration");
        if from == IterationPhase::Planning {
            let retained = filter_questions(&db, &lifecycle.in_scope_steps(), None)?;
            it.scope = Some(ScopeSnapshot { coverage: lifecycle.coverage(), lifecycle, retained, question_db_digest: db.digest().clone() });
        }
        it.phase = to;
        let index = it.index;
        let recommendations = it.recommendations.clone();
        self.transitions.push(Transition { iteration: index, from: Some(from), to, actor: env.actor.clone(), at: env.at });
        if to == IterationPhase::Reported {
            self.carry_over_from(index, &recommendations);
        }
        Ok(())
    }

    fn open_next(&mut self, cause: Option<String>, env: &CommandEnvelope) -> u32 {
        let index = self.iterations.len() as u32;
        self.iterations.push(AuditIteration::new(index, env.at, cause));
        self.transitions.push(Transition { iteration: index, from: None, to: IterationPhase::Planning, actor: env.actor.clone(), at: env.at });
        index
    }

    fn observe(&mut self, event: &AuditEvent, env: &CommandEnvelope) {
        let armed = self.reported_count() > 0;
        let anchor = self.last_reported_at();
        let mut fired = Vec::new();
        for t in &mut self.triggers {
            if let Some(cause) = t.observe(event, env.at, anchor, armed) {
                fired.push((t.id.clone(), cause));
            }
        }
        for (trigger, cause) in fired {
            let opened_iteration = if self.open_iteration().is_none() { Some(self.open_next(Some(cause.clone()), env)) } else { None };
            self.fired.push(FiredTrigger { trigger, at: env.at, cause, opened_iteration });
        }
    }
}

/// Keeps derived concerns in step with recommendation and override edits.
fn rederive(it: &mut AuditIteration) -> Result<(), WorkflowError> {
    if it.concerns.is_some() {
        it.concerns = Some(derive_concerns(it.retained(), &it.responses, &it.recommendations, &it.severity_overrides)?);
    }
    Ok(())
}
