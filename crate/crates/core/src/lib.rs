//! Engine for lifecycle-scoped audits of machine-learning systems.
//!
//! An audit maps the system onto a four-phase lifecycle model, filters a
//! risk questionnaire by the steps in scope, collects evidence and test
//! results during fieldwork, monitors prediction logs in batches, and
//! compiles a deterministic report. Audits repeat: re-audit triggers open
//! new iterations and mandatory mitigations carry over between them.

pub mod blobs;
pub mod bundle;
pub mod canonical;
pub mod fieldwork;
pub mod fixtures;
pub mod ids;
pub mod lifecycle;
pub mod monitoring;
pub mod reporting;
pub mod risk_assessment;
pub mod risk_register;
pub mod store;
pub mod workflow;
