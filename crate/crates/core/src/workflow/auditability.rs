use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::AuditKind;
use crate::fieldwork::AccessBasis;
use crate::ids::StepId;
use crate::lifecycle::LifecycleModel;

/// A place evidence for a step is expected to come from, declared during
/// planning.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceSource {
    pub description: String,
    pub access: AccessBasis,
    /// False for artifacts known to be lost or inaccessible.
    pub available: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BlockerReason {
    NoOwner,
    NoEvidenceSource,
    /// Sources were declared but none is reachable.
    SourcesUnavailable,
    /// Only internal access would reach the step, and the audit kind has none.
    InternalOnly,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Blocker {
    pub step: StepId,
    pub reason: BlockerReason,
}

impl fmt::Display for Blocker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.reason {
            BlockerReason::NoOwner => "no accountable owner",
            BlockerReason::NoEvidenceSource => "no evidence source or access grant declared",
            BlockerReason::SourcesUnavailable => "declared evidence sources are not accessible",
            BlockerReason::InternalOnly => "only internal access reaches this step",
        };
        write!(f, "{}: {what}", self.step)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepReadiness {
    pub step: StepId,
    pub owner: Option<String>,
    pub declared_sources: usize,
    pub usable_sources: usize,
    pub blockers: Vec<Blocker>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AuditabilityVerdict {
    Auditable,
    NotAuditable(Vec<Blocker>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditabilityReport {
    pub steps: Vec<StepReadiness>,
    pub verdict: AuditabilityVerdict,
}

impl AuditabilityReport {
    pub fn blockers(&self) -> Vec<Blocker> {
        self.steps.iter().flat_map(|s| s.blockers.iter().cloned()).collect()
    }

    pub fn is_auditable(&self) -> bool {
        self.verdict == AuditabilityVerdict::Auditable
    }
}

/// Checks every in-scope step for an owner and a usable evidence source.
/// Returns `None` when nothing is in scope.
pub fn assess_readiness(
    kind: AuditKind,
    model: &LifecycleModel,
    preparation: &BTreeMap<StepId, Vec<EvidenceSource>>,
) -> Option<AuditabilityReport> {
    let in_scope: BTreeSet<StepId> = model.in_scope_steps();
    if in_scope.is_empty() {
        return None;
    }
    let steps: Vec<StepReadiness> = in_scope
        .into_iter()
        .map(|id| {
            let owner = model.step(&id).and_then(|s| s.owner.clone()).filter(|o| !o.trim().is_empty());
            let sources = preparation.get(&id).map(Vec::as_slice).unwrap_or_default();
            let available = sources.iter().filter(|s| s.available).count();
            let usable = sources.iter().filter(|s| s.available && kind.permits(s.access)).count();
            let mut reasons = Vec::new();
            if owner.is_none() {
                reasons.push(BlockerReason::NoOwner);
            }
            if sources.is_empty() {
                reasons.push(BlockerReason::NoEvidenceSource);
            } else if available == 0 {
                reasons.push(BlockerReason::SourcesUnavailable);
            } else if usable == 0 {
                reasons.push(BlockerReason::InternalOnly);
            }
            StepReadiness {
                blockers: reasons.into_iter().map(|reason| Blocker { step: id.clone(), reason }).collect(),
                step: id,
                owner,
                declared_sources: sources.len(),
                usable_sources: usable,
            }
        })
        .collect();
    let blockers: Vec<Blocker> = steps.iter().flat_map(|s| s.blockers.iter().cloned()).collect();
    let verdict = if blockers.is_empty() { AuditabilityVerdict::Auditable } else { AuditabilityVerdict::NotAuditable(blockers) };
    Some(AuditabilityReport { steps, verdict })
}
