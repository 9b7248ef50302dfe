//! The audit aggregate: kinds and access, iterations moving through
//! Planning → Fieldwork → Reporting → Reported, the auditability gate and
//! re-audit triggers.
//!
//! All mutation goes through [`Audit::apply`] with a [`CommandEnvelope`]
//! carrying the caller's expected revision, so an audit is fully described
//! by its command log and can be rebuilt with [`Audit::replay`].

mod auditability;
mod command;
mod triggers;

pub use auditability::{assess_readiness, AuditabilityReport, AuditabilityVerdict, Blocker, BlockerReason, EvidenceSource, StepReadiness};
pub use command::{Command, CommandEnvelope, CreateAudit, QuestionFormat, TemplateChoice};
pub use triggers::{AuditEvent, FiredTrigger, ReauditTrigger, TriggerCounters, TriggerKind};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::canonical::Digest;
use crate::fieldwork::{AccessBasis, AssuranceArgument, EvidenceLedger, SpecItem, TestLog};
use crate::ids::{ActorId, AuditId, EntryId, MitigationId, QuestionId, SpecItemId, StepId};
use crate::lifecycle::{CoverageReport, LifecycleModel};
use crate::monitoring::{MonitorRun, MonitorSpec};
use crate::reporting::AuditReport;
use crate::risk_assessment::{
    EthicalConcern, MitigationRecommendation, MitigationStatus, QuestionDb, Requirement, ResponseSheet, RiskQuestion, SeverityOverride,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AuditKind {
    /// Self-assessment by the developing team.
    FirstParty,
    /// A related team or customer with internal access.
    SecondParty,
    /// Independent external auditor; internal access by grant.
    ThirdParty,
    /// Regular-user access only.
    BlackBox,
}

impl AuditKind {
    pub const ALL: [AuditKind; 4] = [Self::FirstParty, Self::SecondParty, Self::ThirdParty, Self::BlackBox];

    pub fn has_internal_access(self) -> bool {
        self != AuditKind::BlackBox
    }

    pub fn permits(self, basis: AccessBasis) -> bool {
        self.has_internal_access() || basis != AccessBasis::GrantedAccess
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IterationPhase {
    Planning,
    Fieldwork,
    Reporting,
    Reported,
}

impl IterationPhase {
    pub fn next(self) -> Option<IterationPhase> {
        match self {
            Self::Planning => Some(Self::Fieldwork),
            Self::Fieldwork => Some(Self::Reporting),
            Self::Reporting => Some(Self::Reported),
            Self::Reported => None,
        }
    }
}

impl fmt::Display for IterationPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Scope frozen when an iteration leaves Planning.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScopeSnapshot {
    pub lifecycle: LifecycleModel,
    pub coverage: CoverageReport,
    pub retained: Vec<RiskQuestion>,
    pub question_db_digest: Digest,
}

impl ScopeSnapshot {
    pub fn retained_ids(&self) -> BTreeSet<QuestionId> {
        self.retained.iter().map(|q| q.id.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Waiver {
    pub rationale: String,
    pub actor: ActorId,
    pub at: DateTime<Utc>,
    /// Blockers outstanding when the waiver was granted.
    pub blockers: Vec<Blocker>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorRecord {
    pub spec: MonitorSpec,
    /// Blob holding the NDJSON prediction log.
    pub log: Digest,
    pub run: MonitorRun,
    pub actor: ActorId,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditIteration {
    pub index: u32,
    pub phase: IterationPhase,
    pub opened_at: DateTime<Utc>,
    /// Trigger cause when opened by a re-audit trigger.
    pub opened_by: Option<String>,
    pub preparation: BTreeMap<StepId, Vec<EvidenceSource>>,
    pub waiver: Option<Waiver>,
    pub scope: Option<ScopeSnapshot>,
    pub responses: ResponseSheet,
    pub spec_items: BTreeMap<SpecItemId, SpecItem>,
    pub evidence: EvidenceLedger,
    pub tests: TestLog,
    pub assurance: Vec<AssuranceArgument>,
    pub monitors: Vec<MonitorRecord>,
    pub recommendations: Vec<MitigationRecommendation>,
    pub severity_overrides: BTreeMap<Requirement, SeverityOverride>,
    /// Derived on request; cleared when the answers change.
    pub concerns: Option<Vec<EthicalConcern>>,
    pub register_refs: BTreeSet<EntryId>,
    /// Compiled report; cleared by any later change to the iteration.
    pub report: Option<AuditReport>,
}

impl AuditIteration {
    fn new(index: u32, opened_at: DateTime<Utc>, opened_by: Option<String>) -> Self {
        Self {
            index,
            phase: IterationPhase::Planning,
            opened_at,
            opened_by,
            preparation: BTreeMap::new(),
            waiver: None,
            scope: None,
            responses: ResponseSheet::default(),
            spec_items: BTreeMap::new(),
            evidence: EvidenceLedger::default(),
            tests: TestLog::default(),
            assurance: Vec::new(),
            monitors: Vec::new(),
            recommendations: Vec::new(),
            severity_overrides: BTreeMap::new(),
            concerns: None,
            register_refs: BTreeSet::new(),
            report: None,
        }
    }

    pub fn is_open(&self) -> bool {
        self.phase != IterationPhase::Reported
    }

    pub fn retained(&self) -> &[RiskQuestion] {
        self.scope.as_ref().map(|s| s.retained.as_slice()).unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CarriedMitigation {
    pub from_iteration: u32,
    pub recommendation: MitigationRecommendation,
}

impl CarriedMitigation {
    pub fn is_open(&self) -> bool {
        self.recommendation.status == MitigationStatus::Open
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub iteration: u32,
    /// `None` when the iteration was opened.
    pub from: Option<IterationPhase>,
    pub to: IterationPhase,
    pub actor: ActorId,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Audit {
    pub id: AuditId,
    pub title: String,
    pub kind: AuditKind,
    pub target: String,
    pub revision: u64,
    pub lifecycle: LifecycleModel,
    pub question_db: QuestionDb,
    pub iterations: Vec<AuditIteration>,
    pub triggers: Vec<ReauditTrigger>,
    pub fired: Vec<FiredTrigger>,
    pub carried_mitigations: Vec<CarriedMitigation>,
    pub transitions: Vec<Transition>,
}

/// One reason a phase transition is refused.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnmetCondition {
    NoOpenIteration,
    EmptyScope,
    /// Auditability blockers not covered by a waiver.
    NotAuditable(Vec<Blocker>),
    Unanswered(Vec<QuestionId>),
    ReportNotCompiled,
    OpenCarriedMitigation { from_iteration: u32, id: MitigationId },
}

impl fmt::Display for UnmetCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NoOpenIteration => f.write_str("no open iteration"),
            Self::EmptyScope => f.write_str("empty scope: no lifecycle step is in scope"),
            Self::NotAuditable(bs) => {
                let list: Vec<String> = bs.iter().map(|b| b.to_string()).collect();
                write!(f, "not auditable and not waived: {}", list.join("; "))
            }
            Self::Unanswered(qs) => {
                let list: Vec<&str> = qs.iter().map(|q| q.as_str()).collect();
                write!(f, "questions neither answered nor deferred: {}", list.join(", "))
            }
            Self::ReportNotCompiled => f.write_str("report not compiled"),
            Self::OpenCarriedMitigation { from_iteration, id } => {
                write!(f, "mandatory mitigation `{id}` from iteration {from_iteration} is still open")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GateViolation(pub Vec<UnmetCondition>);

impl fmt::Display for GateViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list: Vec<String> = self.0.iter().map(|c| c.to_string()).collect();
        write!(f, "phase gate not met: {}", list.join(" | "))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WorkflowError {
    #[error("stale revision: expected {expected}, audit is at {actual}")]
    StaleRevision { expected: u64, actual: u64 },
    #[error("the first command of an audit log must create it")]
    NotCreated,
    #[error("audit already exists")]
    AlreadyCreated,
    #[error("{0}")]
    Gate(GateViolation),
    #[error("no open iteration")]
    NoOpenIteration,
    #[error("an iteration is already open")]
    IterationOpen,
    #[error("{command} is not allowed in {phase}")]
    WrongPhase { command: &'static str, phase: IterationPhase },
    #[error("no lifecycle step is in scope")]
    NothingInScope,
    #[error("nothing to waive: the audit is auditable")]
    NothingToWaive,
    #[error("a {0} needs a rationale")]
    MissingRationale(&'static str),
    #[error("specification item `{0}` already registered")]
    DuplicateSpecItem(SpecItemId),
    #[error("specification item on `{0}`, which is not a formalisation step")]
    SpecItemOutsideFormulation(StepId),
    #[error(transparent)]
    Report(#[from] crate::reporting::ReportError),
    #[error("no carried mitigation `{id}` from iteration {from_iteration}")]
    UnknownCarriedMitigation { from_iteration: u32, id: MitigationId },
    #[error("duplicate trigger id `{0}`")]
    DuplicateTrigger(crate::ids::TriggerId),
    #[error("trigger parameters must be positive")]
    InvalidTrigger,
    #[error("no blob with digest {0}")]
    MissingBlob(Digest),
    #[error("prediction log: {0}")]
    PredictionLog(String),
    #[error("blob store: {0}")]
    Store(String),
    #[error(transparent)]
    Lifecycle(#[from] crate::lifecycle::LifecycleError),
    #[error(transparent)]
    Risk(#[from] crate::risk_assessment::RiskError),
    #[error("question import: {0}")]
    Import(#[from] crate::risk_assessment::ImportError),
    #[error(transparent)]
    Evidence(#[from] crate::fieldwork::EvidenceError),
    #[error(transparent)]
    Test(#[from] crate::fieldwork::TestError),
    #[error(transparent)]
    Assurance(#[from] crate::fieldwork::AssuranceError),
    #[error(transparent)]
    Monitor(#[from] crate::monitoring::MonitorError),
}

impl Audit {
    pub fn open_iteration(&self) -> Option<&AuditIteration> {
        self.iterations.last().filter(|i| i.is_open())
    }

    pub fn current_iteration(&self) -> &AuditIteration {
        self.iterations.last().expect("an audit always has an iteration")
    }

    pub fn iteration(&self, index: u32) -> Option<&AuditIteration> {
        self.iterations.get(index as usize)
    }

    pub fn phase(&self) -> IterationPhase {
        self.current_iteration().phase
    }

    pub fn reported_count(&self) -> usize {
        self.iterations.iter().filter(|i| !i.is_open()).count()
    }

    pub fn last_reported_at(&self) -> Option<DateTime<Utc>> {
        self.transitions.iter().filter(|t| t.to == IterationPhase::Reported).map(|t| t.at).max()
    }

    /// Auditability of the open iteration against the live lifecycle model
    /// (Planning) or its frozen scope.
    pub fn check_auditability(&self) -> Result<AuditabilityReport, WorkflowError> {
        let it = self.open_iteration().ok_or(WorkflowError::NoOpenIteration)?;
        let model = it.scope.as_ref().map_or(&self.lifecycle, |s| &s.lifecycle);
        assess_readiness(self.kind, model, &it.preparation).ok_or(WorkflowError::NothingInScope)
    }

    /// Every condition blocking the open iteration's next transition.
    pub fn gate_conditions(&self) -> Vec<UnmetCondition> {
        let Some(it) = self.open_iteration() else {
            return vec![UnmetCondition::NoOpenIteration];
        };
        let mut unmet = Vec::new();
        match it.phase {
            IterationPhase::Planning => match assess_readiness(self.kind, &self.lifecycle, &it.preparation) {
                None => unmet.push(UnmetCondition::EmptyScope),
                Some(report) => {
                    let waived: BTreeSet<&Blocker> = it.waiver.iter().flat_map(|w| w.blockers.iter()).collect();
                    let open: Vec<Blocker> = report.blockers().into_iter().filter(|b| !waived.contains(b)).collect();
                    if !open.is_empty() {
                        unmet.push(UnmetCondition::NotAuditable(open));
                    }
                }
            },
            IterationPhase::Fieldwork => {
                let outstanding = it.responses.outstanding(it.retained().iter().map(|q| &q.id));
                if !outstanding.is_empty() {
                    unmet.push(UnmetCondition::Unanswered(outstanding));
                }
            }
            IterationPhase::Reporting => {
                if it.report.is_none() {
                    unmet.push(UnmetCondition::ReportNotCompiled);
                }
                for c in self.carried_mitigations.iter().filter(|c| c.from_iteration < it.index && c.is_open()) {
                    unmet.push(UnmetCondition::OpenCarriedMitigation { from_iteration: c.from_iteration, id: c.recommendation.id.clone() });
                }
            }
            IterationPhase::Reported => unreachable!("open iteration"),
        }
        unmet
    }

    /// Steps evidence and specification items may refer to.
    fn iteration_steps(&self) -> BTreeSet<StepId> {
        match self.open_iteration().and_then(|i| i.scope.as_ref()) {
            Some(s) => s.lifecycle.step_ids(),
            None => self.lifecycle.step_ids(),
        }
    }

    /// Open mandatory recommendations of a reported iteration, copied into
    /// `carried_mitigations` unless already there.
    pub(crate) fn carry_over_from(&mut self, iteration: u32, recommendations: &[MitigationRecommendation]) -> usize {
        let mut added = 0;
        for rec in recommendations.iter().filter(|r| r.is_open_mandatory()) {
            let known = self.carried_mitigations.iter().any(|c| c.from_iteration == iteration && c.recommendation.id == rec.id);
            if !known {
                self.carried_mitigations.push(CarriedMitigation { from_iteration: iteration, recommendation: rec.clone() });
                added += 1;
            }
        }
        added
    }
}
