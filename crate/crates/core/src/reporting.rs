//! Audit reports: a deterministic compilation of one iteration's state,
//! a content digest over its canonical form, and two renderings.
//!
//! Sections always appear in this order: metadata, scope and coverage,
//! auditability and waivers, risk assessment, fieldwork, monitoring,
//! recommendations, next-round criteria.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::canonical::{self, Digest};
use crate::fieldwork::{AccessBasis, ArtifactType, EvidenceKind, TestRecord, TestSummary, ValidationReport};
use crate::ids::{AuditId, EntryId, EvidenceId, NodeId, QuestionId, StepId};
use crate::lifecycle::{Color, Coverage, CoverageReport, StepStatus};
use crate::monitoring::{MetricKind, MonitorBatchResult, RunCounters};
use crate::risk_assessment::{question_summary, AnswerCounts, Deferral, EthicalConcern, MitigationRecommendation, Requirement};
use crate::workflow::{assess_readiness, Audit, AuditKind, AuditabilityVerdict, Blocker, CarriedMitigation, IterationPhase, Waiver};

pub const SECTION_TITLES: [&str; 8] = [
    "Metadata",
    "Scope and coverage",
    "Auditability and waivers",
    "Risk assessment",
    "Fieldwork",
    "Monitoring",
    "Recommendations",
    "Next-round criteria",
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReportError {
    #[error("audit has no iteration {0}")]
    UnknownIteration(u32),
    #[error("iteration is in {0}, reports compile in Reporting")]
    NotInReporting(IterationPhase),
    #[error("concerns must be derived before the report can be compiled")]
    ConcernsNotDerived,
    #[error("recommendation `{0}` addresses no derived concern and has no auditor note")]
    UntracedRecommendation(crate::ids::MitigationId),
    #[error("unknown report format `{0}` (expected `canonical` or `markdown`)")]
    UnknownFormat(String),
    #[error("report digest mismatch: recorded {recorded}, content hashes to {actual}")]
    DigestMismatch { recorded: Digest, actual: Digest },
    #[error("malformed report document: {0}")]
    Malformed(String),
    #[error("report is not the latest reported iteration's report")]
    NotLatest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metadata {
    pub audit_id: AuditId,
    pub title: String,
    pub kind: AuditKind,
    pub target: String,
    pub iteration: u32,
    pub generated_at: DateTime<Utc>,
    pub lifecycle_template: String,
    pub question_db_digest: Digest,
    #[serde(default)]
    pub opened_by: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepLine {
    pub step: StepId,
    pub title: String,
    pub status: StepStatus,
    pub color: Color,
    pub rationale: String,
    #[serde(default)]
    pub owner: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScopeSection {
    pub coverage: CoverageReport,
    pub steps: Vec<StepLine>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditabilitySection {
    pub auditable: bool,
    pub blockers: Vec<Blocker>,
    #[serde(default)]
    pub waiver: Option<Waiver>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskSection {
    pub retained: Vec<QuestionId>,
    pub summary: BTreeMap<Requirement, AnswerCounts>,
    pub concerns: Vec<EthicalConcern>,
    pub deferrals: Vec<Deferral>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceLine {
    pub id: EvidenceId,
    pub kind: EvidenceKind,
    pub artifact_type: ArtifactType,
    pub access_basis: AccessBasis,
    pub content_digest: Digest,
    #[serde(default)]
    pub supersedes: Option<EvidenceId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssuranceLine {
    pub root: NodeId,
    pub nodes: usize,
    pub validation: ValidationReport,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldworkSection {
    pub evidence: Vec<EvidenceLine>,
    pub tests: TestSummary,
    /// Every failing test, in full.
    pub failed_tests: Vec<TestRecord>,
    pub assurance: Vec<AssuranceLine>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorLine {
    pub spec_id: String,
    pub metric: MetricKind,
    pub threshold: f64,
    pub batch_size: usize,
    pub log: Digest,
    pub counters: RunCounters,
    /// Fail and Indeterminate batches, in full.
    pub flagged: Vec<MonitorBatchResult>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecommendationSection {
    pub recommendations: Vec<MitigationRecommendation>,
    /// Mandatory mitigations carried from earlier iterations.
    pub carried: Vec<CarriedMitigation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NextRound {
    pub triggers: Vec<String>,
    /// Mandatory recommendations to implement before the next iteration.
    pub required_before_next: Vec<crate::ids::MitigationId>,
    pub register_refs: BTreeSet<EntryId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBody {
    pub metadata: Metadata,
    pub scope: ScopeSection,
    pub auditability: AuditabilitySection,
    pub risk_assessment: RiskSection,
    pub fieldwork: FieldworkSection,
    pub monitoring: Vec<MonitorLine>,
    pub recommendations: RecommendationSection,
    pub next_round: NextRound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub body: ReportBody,
    /// SHA-256 over the canonical bytes of `body`.
    pub content_digest: Digest,
}

impl AuditReport {
    pub fn seal(body: ReportBody) -> Self {
        let content_digest = canonical::digest_of(&body).expect("report bodies serialize");
        Self { body, content_digest }
    }

    pub fn verify(&self) -> Result<(), ReportError> {
        let actual = canonical::digest_of(&self.body).map_err(|e| ReportError::Malformed(e.to_string()))?;
        if actual != self.content_digest {
            return Err(ReportError::DigestMismatch { recorded: self.content_digest.clone(), actual });
        }
        Ok(())
    }
}

/// Assembles the report for `iteration` from audit state and the supplied
/// clock alone.
pub fn compile_report(audit: &Audit, iteration: u32, clock: DateTime<Utc>) -> Result<AuditReport, ReportError> {
    let it = audit.iteration(iteration).ok_or(ReportError::UnknownIteration(iteration))?;
    if it.phase != IterationPhase::Reporting {
        return Err(ReportError::NotInReporting(it.phase));
    }
    let concerns = it.concerns.clone().ok_or(ReportError::ConcernsNotDerived)?;
    let concerned: BTreeSet<Requirement> = concerns.iter().map(|c| c.requirement).collect();
    for rec in &it.recommendations {
        let noted = rec.note.as_deref().is_some_and(|n| !n.trim().is_empty());
        if !noted && !rec.addresses.is_some_and(|r| concerned.contains(&r)) {
            return Err(ReportError::UntracedRecommendation(rec.id.clone()));
        }
    }
    let scope = it.scope.as_ref().expect("scope is frozen once Planning is left");

    let metadata = Metadata {
        audit_id: audit.id.clone(),
        title: audit.title.clone(),
        kind: audit.kind,
        target: audit.target.clone(),
        iteration,
        generated_at: clock,
        lifecycle_template: scope.lifecycle.template.clone(),
        question_db_digest: scope.question_db_digest.clone(),
        opened_by: it.opened_by.clone(),
    };

    let steps = scope
        .lifecycle
        .steps()
        .map(|s| {
            let status = scope.lifecycle.status(&s.id);
            StepLine {
                step: s.id.clone(),
                title: s.title.clone(),
                status,
                color: status.color(),
                rationale: scope.lifecycle.assessment(&s.id).map(|a| a.rationale.clone()).unwrap_or_default(),
                owner: s.owner.clone(),
            }
        })
        .collect();

    let readiness = assess_readiness(audit.kind, &scope.lifecycle, &it.preparation);
    let auditability = AuditabilitySection {
        auditable: readiness.as_ref().is_some_and(|r| r.verdict == AuditabilityVerdict::Auditable),
        blockers: readiness.map(|r| r.blockers()).unwrap_or_default(),
        waiver: it.waiver.clone(),
    };

    let deferrals: Vec<Deferral> = scope.retained.iter().filter_map(|q| it.responses.deferral(&q.id).cloned()).collect();
    let risk_assessment = RiskSection {
        retained: scope.retained.iter().map(|q| q.id.clone()).collect(),
        summary: question_summary(&scope.retained, &it.responses),
        concerns,
        deferrals,
    };

    let fieldwork = FieldworkSection {
        evidence: it
            .evidence
            .items()
            .map(|e| EvidenceLine {
                id: e.id.clone(),
                kind: e.kind,
                artifact_type: e.artifact_type,
                access_basis: e.access_basis,
                content_digest: e.content_digest.clone(),
                supersedes: e.supersedes.clone(),
            })
            .collect(),
        tests: it.tests.summary(),
        failed_tests: it.tests.failures().cloned().collect(),
        assurance: it
            .assurance
            .iter()
            .map(|a| AssuranceLine { root: a.root.clone(), nodes: a.nodes.len(), validation: a.report.clone() })
            .collect(),
    };

    let monitoring = it
        .monitors
        .iter()
        .map(|m| MonitorLine {
            spec_id: m.spec.id.clone(),
            metric: m.spec.metric,
            threshold: m.spec.threshold,
            batch_size: m.spec.batch_size,
            log: m.log.clone(),
            counters: m.run.counters,
            flagged: m.run.results.iter().filter(|r| r.verdict != crate::monitoring::BatchVerdict::Pass).cloned().collect(),
        })
        .collect();

    let carried: Vec<CarriedMitigation> = audit.carried_mitigations.iter().filter(|c| c.from_iteration < iteration).cloned().collect();
    let recommendations = RecommendationSection { recommendations: it.recommendations.clone(), carried };

    let next_round = NextRound {
        triggers: audit.triggers.iter().map(|t| format!("{}: {}", t.id, t.kind.describe())).collect(),
        required_before_next: it.recommendations.iter().filter(|r| r.is_open_mandatory()).map(|r| r.id.clone()).collect(),
        register_refs: it.register_refs.clone(),
    };

    Ok(AuditReport::seal(ReportBody {
        metadata,
        scope: ScopeSection { coverage: scope.coverage.clone(), steps },
        auditability,
        risk_assessment,
        fieldwork,
        monitoring,
        recommendations,
        next_round,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Canonical,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "canonical" => Ok(Self::Canonical),
            "markdown" | "md" => Ok(Self::Markdown),
            other => Err(ReportError::UnknownFormat(other.to_owned())),
        }
    }
}

pub fn render(report: &AuditReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Canonical => canonical::to_canonical_bytes(report).expect("reports serialize"),
        ReportFormat::Markdown => render_markdown(report).into_bytes(),
    }
}

/// Renders by format tag; unknown tags are an error.
pub fn render_tagged(report: &AuditReport, tag: &str) -> Result<Vec<u8>, ReportError> {
    Ok(render(report, tag.parse()?))
}

/// Parses a canonical rendering and checks its digest.
pub fn parse_canonical(bytes: &[u8]) -> Result<AuditReport, ReportError> {
    let report: AuditReport = canonical::from_canonical_bytes(bytes).map_err(|e| ReportError::Malformed(e.to_string()))?;
    report.verify()?;
    Ok(report)
}

/// Copies the open mandatory recommendations of `report` into the audit's
/// carried mitigations. `report` must belong to the latest reported
/// iteration. Already-carried items are left alone.
pub fn carry_over_mitigations(audit: &Audit, report: &AuditReport) -> Result<Audit, ReportError> {
    let latest = audit.iterations.iter().rev().find(|i| !i.is_open()).ok_or(ReportError::NotLatest)?;
    match &latest.report {
        Some(r) if r.content_digest == report.content_digest && latest.index == report.body.metadata.iteration => {}
        _ => return Err(ReportError::NotLatest),
    }
    let mut next = audit.clone();
    next.carry_over_from(latest.index, &report.body.recommendations.recommendations);
    Ok(next)
}

fn coverage_text(c: Coverage) -> String {
    match c {
        Coverage::Defined(f) => format!("{}/{} ({:.1}%)", f.covered, f.assessable, f.value() * 100.0),
        Coverage::Undefined => "undefined".to_owned(),
    }
}

fn render_markdown(report: &AuditReport) -> String {
    let b = &report.body;
    let m = &b.metadata;
    let mut out = String::new();
    let section = |out: &mut String, n: usize| {
        let _ = writeln!(out, "\n## {}. {}\n", n + 1, SECTION_TITLES[n]);
    };
    let _ = writeln!(out, "# Audit report: {}", m.title);

    section(&mut out, 0);
    let _ = writeln!(out, "- Audit: `{}` ({:?}), iteration {}", m.audit_id, m.kind, m.iteration);
    let _ = writeln!(out, "- Target: {}", m.target);
    let _ = writeln!(out, "- Generated: {}", m.generated_at.to_rfc3339_opts(SecondsFormat::Secs, true));
    let _ = writeln!(out, "- Lifecycle template: {}", m.lifecycle_template);
    let _ = writeln!(out, "- Question database: `{}`", m.question_db_digest.short());
    if let Some(cause) = &m.opened_by {
        let _ = writeln!(out, "- Opened by: {cause}");
    }
    let _ = writeln!(out, "- Content digest: `{}`", report.content_digest);

    section(&mut out, 1);
    let _ = writeln!(out, "Overall coverage: {}\n", coverage_text(b.scope.coverage.overall));
    let _ = writeln!(out, "| Phase | Blue | Yellow | White | Grey | Coverage |\n|---|---|---|---|---|---|");
    for p in &b.scope.coverage.per_phase {
        let c = p.counts;
        let _ = writeln!(out, "| {} | {} | {} | {} | {} | {} |", p.phase, c.blue, c.yellow, c.white, c.grey, coverage_text(p.coverage));
    }
    let _ = writeln!(out, "\n| Step | Status | Rationale |\n|---|---|---|");
    for s in &b.scope.steps {
        let _ = writeln!(out, "| {} | {:?} ({}) | {} |", s.step, s.status, s.color.as_str(), s.rationale);
    }

    section(&mut out, 2);
    if b.auditability.auditable {
        let _ = writeln!(out, "All in-scope steps are auditable.");
    } else {
        for bl in &b.auditability.blockers {
            let _ = writeln!(out, "- {bl}");
        }
    }
    if let Some(w) = &b.auditability.waiver {
        let _ = writeln!(out, "\nWaiver by {}: {}", w.actor, w.rationale);
    }

    section(&mut out, 3);
    let _ = writeln!(out, "Retained questions: {}\n", b.risk_assessment.retained.len());
    let _ = writeln!(out, "| Requirement | Yes | No | Partial | N/A | Unknown | Deferred |\n|---|---|---|---|---|---|---|");
    for (r, c) in &b.risk_assessment.summary {
        let _ = writeln!(out, "| {} | {} | {} | {} | {} | {} | {} |", r.title(), c.yes, c.no, c.partial, c.not_applicable, c.unknown, c.deferred);
    }
    let _ = writeln!(out);
    if b.risk_assessment.concerns.is_empty() {
        let _ = writeln!(out, "No ethical concerns.");
    }
    for c in &b.risk_assessment.concerns {
        let ids: Vec<&str> = c.triggering_responses.iter().map(|q| q.as_str()).collect();
        let _ = writeln!(out, "- **{}** ({:?}): {}", c.requirement.title(), c.severity, ids.join(", "));
    }
    for d in &b.risk_assessment.deferrals {
        let _ = writeln!(out, "- deferred `{}`: {}", d.question_id, d.rationale);
    }

    section(&mut out, 4);
    let _ = writeln!(out, "Evidence items: {}", b.fieldwork.evidence.len());
    let t = &b.fieldwork.tests;
    let _ = writeln!(out, "Compliance tests: {} pass, {} fail, {} inconclusive", t.compliance.pass, t.compliance.fail, t.compliance.inconclusive);
    let _ = writeln!(out, "Custom tests: {} pass, {} fail, {} inconclusive", t.custom.pass, t.custom.fail, t.custom.inconclusive);
    for f in &b.fieldwork.failed_tests {
        let _ = writeln!(out, "- FAIL `{}` ({:?}): {}", f.id, f.category, f.procedure);
    }
    for a in &b.fieldwork.assurance {
        let _ = writeln!(
            out,
            "- argument `{}`: {} nodes, {} unsupported, {} open challenges",
            a.root,
            a.nodes,
            a.validation.unsupported_leaves.len(),
            a.validation.open_challenges.len()
        );
    }

    section(&mut out, 5);
    if b.monitoring.is_empty() {
        let _ = writeln!(out, "No monitors were run.");
    }
    for mline in &b.monitoring {
        let c = mline.counters;
        let _ = writeln!(
            out,
            "- `{}` ({:?}, n={}, threshold {}): {} pass, {} fail, {} indeterminate",
            mline.spec_id, mline.metric, mline.batch_size, mline.threshold, c.pass, c.fail, c.indeterminate
        );
        for r in &mline.flagged {
            let v = r.value.value().map_or("indeterminate".to_owned(), |v| format!("{v:.4}"));
            let _ = writeln!(out, "  - batch {} ({} records): {:?}, value {v}", r.batch_index, r.window.count, r.verdict);
        }
    }

    section(&mut out, 6);
    for r in &b.recommendations.recommendations {
        let tag = if r.mandatory { "mandatory" } else { "optional" };
        let _ = writeln!(out, "- `{}` [{tag}, {:?}]: {}", r.id, r.status, r.text);
    }
    for c in &b.recommendations.carried {
        let _ = writeln!(out, "- carried from iteration {}: `{}` [{:?}]: {}", c.from_iteration, c.recommendation.id, c.recommendation.status, c.recommendation.text);
    }

    section(&mut out, 7);
    for t in &b.next_round.triggers {
        let _ = writeln!(out, "- trigger {t}");
    }
    for id in &b.next_round.required_before_next {
        let _ = writeln!(out, "- implement `{id}` before the next iteration");
    }
    for e in &b.next_round.register_refs {
        let _ = writeln!(out, "- see register entry `{e}`");
    }
    out
}
