use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::ids::{EvidenceId, SpecItemId, StepId, TestId};

/// Attached to every custom test record.
pub const COMPARABILITY_WARNING: &str =
    "custom test defined by the auditor; results may not be comparable with audits that did not run it";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TestCategory {
    /// Implementation checked against formalisation-phase specifications.
    Compliance,
    /// Auditor-defined test beyond those specifications.
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// A referenceable fragment of formalisation-phase documentation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecItem {
    pub id: SpecItemId,
    pub step: StepId,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestRecord {
    pub id: TestId,
    pub category: TestCategory,
    #[serde(default)]
    pub spec_ref: Option<SpecItemId>,
    #[serde(default)]
    pub rationale: Option<String>,
    pub procedure: String,
    pub verdict: Verdict,
    #[serde(default)]
    pub evidence_refs: Vec<EvidenceId>,
    pub timestamp: DateTime<Utc>,
    /// Set on record for custom tests.
    #[serde(default)]
    pub comparability_warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TestError {
    #[error("test `{0}` already recorded")]
    Duplicate(TestId),
    #[error("compliance test `{0}` needs a spec_ref")]
    MissingSpecRef(TestId),
    #[error("compliance test `{test}` references unknown specification item `{spec}`")]
    UnknownSpecItem { test: TestId, spec: SpecItemId },
    #[error("custom test `{0}` needs an auditor rationale")]
    MissingRationale(TestId),
    #[error("test `{test}` references unregistered evidence `{evidence}`")]
    DanglingEvidence { test: TestId, evidence: EvidenceId },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictCounts {
    pub pass: u32,
    pub fail: u32,
    pub inconclusive: u32,
}

impl VerdictCounts {
    fn bump(&mut self, v: Verdict) {
        match v {
            Verdict::Pass => self.pass += 1,
            Verdict::Fail => self.fail += 1,
            Verdict::Inconclusive => self.inconclusive += 1,
        }
    }

    pub fn get(&self, v: Verdict) -> u32 {
        match v {
            Verdict::Pass => self.pass,
            Verdict::Fail => self.fail,
            Verdict::Inconclusive => self.inconclusive,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestSummary {
    pub compliance: VerdictCounts,
    pub custom: VerdictCounts,
}

impl TestSummary {
    pub fn get(&self, category: TestCategory, verdict: Verdict) -> u32 {
        match category {
            TestCategory::Compliance => self.compliance.get(verdict),
            TestCategory::Custom => self.custom.get(verdict),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestLog {
    records: Vec<TestRecord>,
    summary: TestSummary,
}

impl TestLog {
    pub fn record(
        &mut self,
        mut record: TestRecord,
        spec_items: &BTreeMap<SpecItemId, SpecItem>,
        evidence: &BTreeSet<EvidenceId>,
    ) -> Result<(), TestError> {
        if self.records.iter().any(|r| r.id == record.id) {
            return Err(TestError::Duplicate(record.id));
        }
        match record.category {
            TestCategory::Compliance => {
                let spec = record.spec_ref.clone().ok_or_else(|| TestError::MissingSpecRef(record.id.clone()))?;
                if !spec_items.contains_key(&spec) {
                    return Err(TestError::UnknownSpecItem { test: record.id, spec });
                }
                record.comparability_warning = None;
            }
            TestCategory::Custom => {
                if record.rationale.as_deref().is_none_or(|r| r.trim().is_empty()) {
                    return Err(TestError::MissingRationale(record.id));
                }
                record.comparability_warning = Some(COMPARABILITY_WARNING.to_owned());
            }
        }
        if let Some(e) = record.evidence_refs.iter().find(|e| !evidence.contains(*e)) {
            return Err(TestError::DanglingEvidence { test: record.id.clone(), evidence: e.clone() });
        }
        match record.category {
            TestCategory::Compliance => self.summary.compliance.bump(record.verdict),
            TestCategory::Custom => self.summary.custom.bump(record.verdict),
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[TestRecord] {
        &self.records
    }

    pub fn summary(&self) -> TestSummary {
        self.summary
    }

    pub fn failures(&self) -> impl Iterator<Item = &TestRecord> {
        self.records.iter().filter(|r| r.verdict == Verdict::Fail)
    }
}
