//! Fieldwork artifacts: evidence, compliance and custom tests, and
//! assurance arguments.

mod assurance;
mod evidence;
mod testing;

pub use assurance::{build_assurance_argument, AssuranceArgument, AssuranceError, AssuranceNode, NodeKind, ValidationReport};
pub use evidence::{access_is_legal, AccessBasis, ArtifactType, EvidenceError, EvidenceItem, EvidenceKind, EvidenceLedger};
pub use testing::{
    SpecItem, TestCategory, TestError, TestLog, TestRecord, TestSummary, Verdict, VerdictCounts, COMPARABILITY_WARNING,
};
