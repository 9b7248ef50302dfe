//! Operations shared by the HTTP API and the CLI. Each one is a thin
//! projection of store state or a single command applied through the
//! revision protocol.

use std::collections::BTreeSet;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use mlaudit_core::bundle::{self, BundleError};
use mlaudit_core::canonical::Digest;
use mlaudit_core::fieldwork::{AccessBasis, ArtifactType, EvidenceItem, EvidenceKind};
use mlaudit_core::ids::{ActorId, AuditId, EntryId, EvidenceId, StepId};
use mlaudit_core::lifecycle::CoverageReport;
use mlaudit_core::monitoring::{MetricKind, MonitorSpec};
use mlaudit_core::reporting::{AuditReport, ReportError};
use mlaudit_core::risk_assessment::{filter_questions, Requirement, RiskError, RiskQuestion};
use mlaudit_core::risk_register::{default_templates, ingest_feed_csv, RegisterError, RiskRegisterEntry, TemplateSteps};
use mlaudit_core::store::{Store, StoreError};
use mlaudit_core::workflow::{
    Audit, AuditabilityReport, Command, CommandEnvelope, CreateAudit, IterationPhase, QuestionFormat, WorkflowError,
};

use crate::config::Thresholds;

/// How a failure maps onto HTTP statuses and CLI exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    NotFound,
    /// Stale revision or an id that is already taken.
    Conflict,
    /// Well-formed request the audit rules refuse.
    Rejected,
    BadRequest,
    Internal,
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Register(#[from] RegisterError),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    BadRequest(String),
}

impl From<WorkflowError> for ServiceError {
    fn from(e: WorkflowError) -> Self {
        ServiceError::Store(StoreError::Workflow(e))
    }
}

fn store_kind(e: &StoreError) -> ErrorKind {
    match e {
        e if e.is_conflict() => ErrorKind::Conflict,
        StoreError::AuditExists(_) => ErrorKind::Conflict,
        StoreError::UnknownAudit(_) => ErrorKind::NotFound,
        StoreError::Io(_) | StoreError::CorruptLog { .. } => ErrorKind::Internal,
        StoreError::Workflow(WorkflowError::Store(_)) => ErrorKind::Internal,
        StoreError::InvalidId(_) => ErrorKind::BadRequest,
        _ => ErrorKind::Rejected,
    }
}

impl ServiceError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            ServiceError::Store(e) => store_kind(e),
            ServiceError::Bundle(BundleError::Collision(_) | BundleError::RegisterConflict(_)) => ErrorKind::Conflict,
            ServiceError::Bundle(BundleError::Store(e)) => store_kind(e),
            ServiceError::Bundle(_) => ErrorKind::Rejected,
            ServiceError::Report(ReportError::UnknownIteration(_)) => ErrorKind::NotFound,
            ServiceError::Report(ReportError::UnknownFormat(_)) => ErrorKind::BadRequest,
            ServiceError::Report(_) | ServiceError::Register(_) | ServiceError::Risk(_) => ErrorKind::Rejected,
            ServiceError::NotFound(_) => ErrorKind::NotFound,
            ServiceError::BadRequest(_) => ErrorKind::BadRequest,
        }
    }
}

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

/// Monitor parameters as callers send them; omitted thresholds come from
/// the configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorRequest {
    pub id: String,
    pub metric: Option<MetricKind>,
    pub batch_size: usize,
    pub threshold: Option<f64>,
    pub min_group_size: Option<u32>,
    pub protected_attr: Option<String>,
    pub stratum_attr: Option<String>,
    pub failures_only: bool,
}

/// Evidence metadata plus its content; the service stores the content and
/// fills in the digest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceUpload {
    pub id: EvidenceId,
    pub kind: EvidenceKind,
    pub artifact_type: ArtifactType,
    #[serde(default)]
    pub step_tags: BTreeSet<StepId>,
    #[serde(default)]
    pub locator: Option<String>,
    pub access_basis: AccessBasis,
    #[serde(default)]
    pub supersedes: Option<EvidenceId>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvidenceCheck {
    pub iteration: u32,
    pub id: EvidenceId,
    pub digest: Digest,
    pub ok: bool,
    pub problem: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GateView {
    pub audit: AuditId,
    pub revision: u64,
    pub iteration: Option<u32>,
    pub phase: IterationPhase,
    pub coverage: CoverageReport,
    pub auditability: Option<AuditabilityReport>,
    /// Human-readable unmet conditions for the next transition.
    pub unmet: Vec<String>,
    pub may_advance: bool,
}

/// Query result plus the revision a writer must quote.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegisterView {
    pub revision: u64,
    pub entries: Vec<RiskRegisterEntry>,
}

#[derive(Clone)]
pub struct Service {
    store: Arc<Store>,
    thresholds: Thresholds,
}

impl Service {
    pub fn new(store: Arc<Store>, thresholds: Thresholds) -> Self {
        Self { store, thresholds }
    }

    pub fn open(path: &std::path::Path, thresholds: Thresholds) -> Result<Self> {
        Ok(Self::new(Arc::new(Store::open(path)?), thresholds))
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    fn now() -> DateTime<Utc> {
        Utc::now()
    }

    pub fn list(&self) -> Result<Vec<AuditId>> {
        Ok(self.store.list_audits()?)
    }

    pub fn load(&self, id: &AuditId) -> Result<Arc<Audit>> {
        Ok(self.store.load(id)?)
    }

    pub fn create(&self, actor: &ActorId, create: CreateAudit) -> Result<Arc<Audit>> {
        Ok(self.store.create(&CommandEnvelope::new(0, actor.clone(), Self::now(), Command::Create(create)))?)
    }

    /// Applies `command` at `expected` or, when that is `None`, at the
    /// current revision.
    pub fn execute(&self, id: &AuditId, expected: Option<u64>, actor: &ActorId, command: Command) -> Result<Arc<Audit>> {
        let expected = match expected {
            Some(r) => r,
            None => self.store.load(id)?.revision,
        };
        Ok(self.store.apply(id, &CommandEnvelope::new(expected, actor.clone(), Self::now(), command))?)
    }

    pub fn put_blob(&self, bytes: &[u8]) -> Result<Digest> {
        Ok(self.store.put_blob(bytes)?)
    }

    pub fn get_blob(&self, digest: &Digest) -> Result<Vec<u8>> {
        self.store.blobs().read(digest).map_err(StoreError::from)?.ok_or_else(|| ServiceError::NotFound(format!("no blob {digest}")))
    }

    pub fn import_questions(&self, id: &AuditId, expected: Option<u64>, actor: &ActorId, format: QuestionFormat, bytes: &[u8]) -> Result<Arc<Audit>> {
        let source = self.put_blob(bytes)?;
        self.execute(id, expected, actor, Command::ImportQuestions { format, source })
    }

    /// The frozen list once Planning is over; the live filter before.
    pub fn questions(&self, id: &AuditId, requirements: Option<&BTreeSet<Requirement>>) -> Result<Vec<RiskQuestion>> {
        let audit = self.load(id)?;
        if let Some(scope) = audit.open_iteration().and_then(|it| it.scope.as_ref()) {
            return Ok(scope.retained.iter().filter(|q| requirements.is_none_or(|r| r.contains(&q.requirement))).cloned().collect());
        }
        Ok(filter_questions(&audit.question_db, &audit.lifecycle.in_scope_steps(), requirements)?)
    }

    pub fn gate(&self, id: &AuditId) -> Result<GateView> {
        let audit = self.load(id)?;
        let open = audit.open_iteration();
        let auditability = match open {
            Some(it) if it.phase == IterationPhase::Planning => audit.check_auditability().ok(),
            _ => None,
        };
        let unmet: Vec<String> = audit.gate_conditions().iter().map(|c| c.to_string()).collect();
        Ok(GateView {
            audit: audit.id.clone(),
            revision: audit.revision,
            iteration: open.map(|it| it.index),
            phase: audit.phase(),
            coverage: audit.lifecycle.coverage(),
            auditability,
            may_advance: unmet.is_empty(),
            unmet,
        })
    }

    pub fn add_evidence(&self, id: &AuditId, expected: Option<u64>, actor: &ActorId, upload: EvidenceUpload, content: &[u8]) -> Result<Arc<Audit>> {
        let content_digest = self.put_blob(content)?;
        let item = EvidenceItem {
            id: upload.id,
            kind: upload.kind,
            artifact_type: upload.artifact_type,
            step_tags: upload.step_tags,
            locator: upload.locator,
            content_digest,
            // overwritten from the envelope when applied
            collected_by: actor.clone(),
            timestamp: Self::now(),
            access_basis: upload.access_basis,
            supersedes: upload.supersedes,
        };
        self.execute(id, expected, actor, Command::RegisterEvidence { item })
    }

    /// Re-hashes evidence blobs in every iteration, or just `only`.
    pub fn verify_evidence(&self, id: &AuditId, only: Option<&EvidenceId>) -> Result<Vec<EvidenceCheck>> {
        let audit = self.load(id)?;
        let mut out = Vec::new();
        for it in &audit.iterations {
            for item in it.evidence.items().filter(|i| only.is_none_or(|o| o == &i.id)) {
                let problem = it.evidence.verify(&item.id, self.store.blobs()).err().map(|e| e.to_string());
                out.push(EvidenceCheck { iteration: it.index, id: item.id.clone(), digest: item.content_digest.clone(), ok: problem.is_none(), problem });
            }
        }
        if let (Some(o), true) = (only, out.is_empty()) {
            return Err(ServiceError::NotFound(format!("no evidence `{o}`")));
        }
        Ok(out)
    }

    pub fn monitor_spec(&self, req: &MonitorRequest) -> Result<MonitorSpec> {
        if req.id.trim().is_empty() {
            return Err(ServiceError::BadRequest("monitor id is required".into()));
        }
        let mut spec = match req.metric.unwrap_or(MetricKind::ConditionalIndependenceRatio) {
            MetricKind::ConditionalIndependenceRatio => {
                let mut s = MonitorSpec::fairness(req.id.clone(), req.batch_size);
                s.threshold = self.thresholds.fairness;
                s.min_group_size = self.thresholds.min_group_size;
                s
            }
            MetricKind::ErrorRate => MonitorSpec::error_rate(req.id.clone(), req.batch_size, self.thresholds.error_rate),
        };
        if let Some(t) = req.threshold {
            spec.threshold = t;
        }
        if let Some(m) = req.min_group_size {
            spec.min_group_size = m;
        }
        if let Some(p) = &req.protected_attr {
            spec.protected_attr = p.clone();
        }
        spec.stratum_attr = req.stratum_attr.clone();
        spec.document_failures_only = req.failures_only;
        spec.validate().map_err(|e| ServiceError::BadRequest(e.to_string()))?;
        Ok(spec)
    }

    pub fn run_monitor(&self, id: &AuditId, expected: Option<u64>, actor: &ActorId, spec: MonitorSpec, log: Digest) -> Result<Arc<Audit>> {
        if !self.store.blobs().read(&log).map_err(StoreError::from)?.is_some() {
            return Err(ServiceError::NotFound(format!("no blob {log}")));
        }
        self.execute(id, expected, actor, Command::RunMonitor { spec, log })
    }

    pub fn compile_report(&self, id: &AuditId, expected: Option<u64>, actor: &ActorId) -> Result<AuditReport> {
        let audit = self.execute(id, expected, actor, Command::CompileReport)?;
        Ok(audit.current_iteration().report.clone().expect("compile stores the report"))
    }

    /// The stored report of `iteration`, or of the latest iteration that has one.
    pub fn report(&self, id: &AuditId, iteration: Option<u32>) -> Result<AuditReport> {
        let audit = self.load(id)?;
        let found = match iteration {
            Some(i) => audit.iteration(i).ok_or(ReportError::UnknownIteration(i))?.report.clone(),
            None => audit.iterations.iter().rev().find_map(|it| it.report.clone()),
        };
        found.ok_or_else(|| ServiceError::NotFound("no compiled report".into()))
    }

    pub fn export_bundle(&self, id: &AuditId) -> Result<Vec<u8>> {
        Ok(bundle::export_bundle(&self.store, id)?)
    }

    pub fn import_bundle(&self, bytes: &[u8], rename: Option<AuditId>) -> Result<AuditId> {
        Ok(bundle::import_bundle(&self.store, bytes, rename)?)
    }

    /// Step sets entries may refer to: the default template plus every
    /// stored audit's own.
    fn templates(&self) -> Result<TemplateSteps> {
        let mut t = default_templates();
        for id in self.store.list_audits()? {
            let audit = self.store.load(&id)?;
            t.entry(audit.lifecycle.template.clone()).or_default().extend(audit.lifecycle.step_ids());
        }
        Ok(t)
    }

    pub fn register_add(&self, entry: RiskRegisterEntry, expected: Option<u64>) -> Result<u64> {
        let templates = self.templates()?;
        Ok(self.store.add_register_entry(entry, expected, &templates)?)
    }

    /// Ingests an external feed; returns the ids added. Nothing is written
    /// if any row is invalid.
    pub fn register_feed(&self, csv: &[u8], feed: &str, actor: &ActorId, expected: Option<u64>) -> Result<Vec<EntryId>> {
        let entries = ingest_feed_csv(csv, feed, actor, Self::now())?;
        let templates = self.templates()?;
        let mut staged = self.store.register()?;
        for e in &entries {
            staged.add_entry(e.clone(), &templates)?;
        }
        let mut expected = expected;
        let mut ids = Vec::new();
        for e in entries {
            ids.push(e.id.clone());
            let rev = self.store.add_register_entry(e, expected, &templates)?;
            expected = expected.map(|_| rev);
        }
        Ok(ids)
    }

    pub fn register_query(&self, steps: &BTreeSet<StepId>, requirement: Option<Requirement>) -> Result<RegisterView> {
        let reg = self.store.register()?;
        // no step filter lists everything, newest first
        let entries = if steps.is_empty() {
            reg.entries().iter().rev().filter(|e| requirement.is_none_or(|r| e.requirements.contains(&r))).cloned().collect()
        } else {
            reg.query_entries(steps, requirement)?.into_iter().cloned().collect()
        };
        Ok(RegisterView { revision: reg.revision(), entries })
    }
}
