//! Cross-audit register of documented AI incidents, keyed to lifecycle
//! steps so that risks found in one project surface when scoping another.
//!
//! The register is append-only. A correction is a new entry that
//! supersedes the old one; superseded entries drop out of queries.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::canonical;
use crate::ids::{ActorId, EntryId, StepId};
use crate::risk_assessment::Requirement;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cost {
    /// Free-form decimal amount, no conversion is attempted.
    pub amount: String,
    pub currency: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Occurrence {
    Entry(EntryId),
    /// Reference outside this register (URL, feed id, citation).
    External(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conditions {
    /// Lifecycle template the step ids belong to.
    pub template: String,
    pub steps: BTreeSet<StepId>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntrySource {
    Internal,
    External { feed: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskRegisterEntry {
    pub id: EntryId,
    pub title: String,
    pub description: String,
    pub failed_controls: Vec<String>,
    pub successful_controls: Vec<String>,
    pub related_literature: Vec<String>,
    /// Actors and subjects involved.
    pub actual_impact: String,
    #[serde(default)]
    pub estimated_cost: Option<Cost>,
    #[serde(default)]
    pub similar_occurrences: Vec<Occurrence>,
    pub conditions: Conditions,
    #[serde(default)]
    pub requirements: BTreeSet<Requirement>,
    pub source: EntrySource,
    pub recorded_at: DateTime<Utc>,
    pub recorded_by: ActorId,
    #[serde(default)]
    pub supersedes: Option<EntryId>,
}

impl RiskRegisterEntry {
    /// External entries lacking the fields an audit needs.
    pub fn needs_enrichment(&self) -> bool {
        matches!(self.source, EntrySource::External { .. })
            && (self.description.trim().is_empty()
                || self.actual_impact.trim().is_empty()
                || (self.failed_controls.is_empty() && self.successful_controls.is_empty())
                || self.conditions.steps.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegisterError {
    #[error("entry `{0}` already exists")]
    Duplicate(EntryId),
    #[error("entry `{entry}`: step `{step}` does not resolve in template `{template}`")]
    UnresolvableStep { entry: EntryId, step: StepId, template: String },
    #[error("entry `{entry}`: similar occurrence `{target}` is not in the register")]
    DanglingOccurrence { entry: EntryId, target: EntryId },
    #[error("entry `{entry}` supersedes unknown entry `{target}`")]
    UnknownSuperseded { entry: EntryId, target: EntryId },
    #[error("entry `{0}` is already superseded")]
    AlreadySuperseded(EntryId),
    #[error("query needs at least one step")]
    EmptySteps,
    #[error("unknown lifecycle template `{0}`")]
    UnknownTemplate(String),
    #[error("row {row}, field `{field}`: {problem}")]
    Feed { row: usize, field: &'static str, problem: String },
    #[error("malformed register document: {0}")]
    Malformed(String),
}

/// Step sets of the lifecycle templates entries may refer to.
pub type TemplateSteps = BTreeMap<String, BTreeSet<StepId>>;

pub fn default_templates() -> TemplateSteps {
    let model = crate::lifecycle::instantiate_template();
    [(model.template.clone(), model.step_ids())].into_iter().collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskRegister {
    entries: Vec<RiskRegisterEntry>,
}

impl RiskRegister {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn revision(&self) -> u64 {
        self.entries.len() as u64
    }

    pub fn entries(&self) -> &[RiskRegisterEntry] {
        &self.entries
    }

    pub fn get(&self, id: &EntryId) -> Option<&RiskRegisterEntry> {
        self.entries.iter().find(|e| &e.id == id)
    }

    pub fn superseded_by(&self, id: &EntryId) -> Option<&EntryId> {
        self.entries.iter().find(|e| e.supersedes.as_ref() == Some(id)).map(|e| &e.id)
    }

    pub fn check(&self, entry: &RiskRegisterEntry, templates: &TemplateSteps) -> Result<(), RegisterError> {
        if self.get(&entry.id).is_some() {
            return Err(RegisterError::Duplicate(entry.id.clone()));
        }
        let steps = templates.get(&entry.conditions.template).ok_or_else(|| RegisterError::UnknownTemplate(entry.conditions.template.clone()))?;
        if let Some(bad) = entry.conditions.steps.iter().find(|s| !steps.contains(*s)) {
            return Err(RegisterError::UnresolvableStep {
                entry: entry.id.clone(),
                step: bad.clone(),
                template: entry.conditions.template.clone(),
            });
        }
        for occ in &entry.similar_occurrences {
            if let Occurrence::Entry(target) = occ {
                if self.get(target).is_none() {
                    return Err(RegisterError::DanglingOccurrence { entry: entry.id.clone(), target: target.clone() });
                }
            }
        }
        if let Some(old) = &entry.supersedes {
            if self.get(old).is_none() {
                return Err(RegisterError::UnknownSuperseded { entry: entry.id.clone(), target: old.clone() });
            }
            if self.superseded_by(old).is_some() {
                return Err(RegisterError::AlreadySuperseded(old.clone()));
            }
        }
        Ok(())
    }

    /// Appends a validated entry and returns the new register revision.
    pub fn add_entry(&mut self, entry: RiskRegisterEntry, templates: &TemplateSteps) -> Result<u64, RegisterError> {
        self.check(&entry, templates)?;
        self.entries.push(entry);
        Ok(self.revision())
    }

    pub(crate) fn restore(&mut self, entry: RiskRegisterEntry) {
        self.entries.push(entry);
    }

    /// Current (non-superseded) entries whose conditions of occurrence
    /// touch `steps`, newest first, then by id.
    pub fn query_entries(&self, steps: &BTreeSet<StepId>, requirement: Option<Requirement>) -> Result<Vec<&RiskRegisterEntry>, RegisterError> {
        if steps.is_empty() {
            return Err(RegisterError::EmptySteps);
        }
        let superseded: BTreeSet<&EntryId> = self.entries.iter().filter_map(|e| e.supersedes.as_ref()).collect();
        let mut hits: Vec<&RiskRegisterEntry> = self
            .entries
            .iter()
            .filter(|e| !superseded.contains(&e.id))
            .filter(|e| requirement.is_none_or(|r| e.requirements.contains(&r)))
            .filter(|e| !e.conditions.steps.is_disjoint(steps))
            .collect();
        hits.sort_by(|a, b| b.recorded_at.cmp(&a.recorded_at).then_with(|| a.id.cmp(&b.id)));
        Ok(hits)
    }

    pub fn export_json(&self) -> Vec<u8> {
        canonical::to_canonical_bytes(&self.entries).expect("entries serialize")
    }

    /// Appends every entry of a JSON array, all or nothing.
    pub fn import_json(&mut self, bytes: &[u8], templates: &TemplateSteps) -> Result<u64, RegisterError> {
        let entries: Vec<RiskRegisterEntry> = serde_json::from_slice(bytes).map_err(|e| RegisterError::Malformed(e.to_string()))?;
        let mut next = self.clone();
        for e in entries {
            next.add_entry(e, templates)?;
        }
        *self = next;
        Ok(self.revision())
    }
}

/// Columns of an external incident feed. List cells separate items with `;`.
pub const FEED_COLUMNS: [&str; 11] = [
    "id",
    "title",
    "date",
    "description",
    "actual_impact",
    "failed_controls",
    "successful_controls",
    "steps",
    "literature",
    "cost_amount",
    "cost_currency",
];

fn list(cell: &str) -> Vec<String> {
    cell.split(';').map(str::trim).filter(|s| !s.is_empty()).map(str::to_owned).collect()
}

/// Converts an external feed into partially filled entries tagged with the
/// feed name. Step ids are taken against the default template. The `date`
/// column (`YYYY-MM-DD`) becomes `recorded_at`; when empty, `now` is used.
pub fn ingest_feed_csv(bytes: &[u8], feed: &str, actor: &ActorId, now: DateTime<Utc>) -> Result<Vec<RiskRegisterEntry>, RegisterError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| RegisterError::Feed { row: 0, field: "header", problem: e.to_string() })?
        .iter()
        .map(|h| h.trim().to_owned())
        .collect();
    if header != FEED_COLUMNS {
        return Err(RegisterError::Feed { row: 0, field: "header", problem: format!("expected `{}`", FEED_COLUMNS.join(",")) });
    }
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| RegisterError::Feed { row, field: "*", problem: e.to_string() })?;
        let cell = |k: usize| rec.get(k).unwrap_or("").trim();
        if cell(0).is_empty() {
            return Err(RegisterError::Feed { row, field: "id", problem: "empty id".into() });
        }
        let recorded_at = match cell(2) {
            "" => now,
            d => NaiveDate::parse_from_str(d, "%Y-%m-%d")
                .map_err(|e| RegisterError::Feed { row, field: "date", problem: e.to_string() })?
                .and_hms_opt(0, 0, 0)
                .expect("midnight exists")
                .and_utc(),
        };
        let estimated_cost = match (cell(9), cell(10)) {
            ("", "") => None,
            (a, c) if !a.is_empty() && !c.is_empty() => Some(Cost { amount: a.to_owned(), currency: c.to_owned() }),
            _ => return Err(RegisterError::Feed { row, field: "cost_currency", problem: "amount and currency go together".into() }),
        };
        out.push(RiskRegisterEntry {
            id: EntryId::new(cell(0)),
            title: cell(1).to_owned(),
            description: cell(3).to_owned(),
            failed_controls: list(cell(5)),
            successful_controls: list(cell(6)),
            related_literature: list(cell(8)),
            actual_impact: cell(4).to_owned(),
            estimated_cost,
            similar_occurrences: Vec::new(),
            conditions: Conditions {
                template: crate::lifecycle::DEFAULT_TEMPLATE.to_owned(),
                steps: list(cell(7)).into_iter().map(StepId::from).collect(),
                text: String::new(),
            },
            requirements: BTreeSet::new(),
            source: EntrySource::External { feed: feed.to_owned() },
            recorded_at,
            recorded_by: actor.clone(),
            supersedes: None,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn entry(id: &str, steps: &[&str], day: u32) -> RiskRegisterEntry {
        RiskRegisterEntry {
            id: EntryId::new(id),
            title: id.into(),
            description: "d".into(),
            failed_controls: vec![],
            successful_controls: vec![],
            related_literature: vec![],
            actual_impact: "users".into(),
            estimated_cost: None,
            similar_occurrences: vec![],
            conditions: Conditions { template: "default".into(), steps: steps.iter().map(|s| StepId::new(*s)).collect(), text: String::new() },
            requirements: BTreeSet::new(),
            source: EntrySource::Internal,
            recorded_at: Utc.with_ymd_and_hms(2023, 1, day, 0, 0, 0).unwrap(),
            recorded_by: ActorId::new("auditor"),
            supersedes: None,
        }
    }

    fn scope(steps: &[&str]) -> BTreeSet<StepId> {
        steps.iter().map(|s| StepId::new(*s)).collect()
    }

    #[test]
    fn add_and_query() {
        let t = default_templates();
        let mut reg = RiskRegister::new();
        assert_eq!(reg.add_entry(entry("over-reliance", &["formulation.user_experience"], 1), &t), Ok(1));
        reg.add_entry(entry("drift", &["deployment.continuous_testing"], 2), &t).unwrap();
        let hits = reg.query_entries(&scope(&["formulation.user_experience", "deployment.continuous_testing"]), None).unwrap();
        assert_eq!(hits.iter().map(|e| e.id.as_str()).collect::<Vec<_>>(), ["drift", "over-reliance"]);
        assert!(reg.query_entries(&scope(&["data.curation"]), None).unwrap().is_empty());
        assert_eq!(reg.query_entries(&BTreeSet::new(), None), Err(RegisterError::EmptySteps));
    }

    #[test]
    fn validation_errors() {
        let t = default_templates();
        let mut reg = RiskRegister::new();
        assert!(matches!(reg.add_entry(entry("x", &["nowhere"], 1), &t), Err(RegisterError::UnresolvableStep { .. })));
        let mut e = entry("y", &["data.curation"], 1);
        e.similar_occurrences.push(Occurrence::Entry(EntryId::new("ghost")));
        assert!(matches!(reg.add_entry(e.clone(), &t), Err(RegisterError::DanglingOccurrence { .. })));
        e.similar_occurrences = vec![Occurrence::External("https://example.org/incident/1".into())];
        reg.add_entry(e, &t).unwrap();
        assert_eq!(reg.add_entry(entry("y", &["data.curation"], 1), &t), Err(RegisterError::Duplicate(EntryId::new("y"))));
    }

    #[test]
    fn supersession_hides_old_entry() {
        let t = default_templates();
        let mut reg = RiskRegister::new();
        reg.add_entry(entry("a", &["data.curation"], 1), &t).unwrap();
        let mut fix = entry("a2", &["data.curation"], 2);
        fix.supersedes = Some(EntryId::new("a"));
        reg.add_entry(fix.clone(), &t).unwrap();
        let ids: Vec<_> = reg.query_entries(&scope(&["data.curation"]), None).unwrap().iter().map(|e| e.id.clone()).collect();
        assert_eq!(ids, vec![EntryId::new("a2")]);
        fix.id = EntryId::new("a3");
        assert_eq!(reg.add_entry(fix, &t), Err(RegisterError::AlreadySuperseded(EntryId::new("a"))));
    }

    #[test]
    fn feed_ingestion_flags_incomplete_rows() {
        let csv = "id,title,date,description,actual_impact,failed_controls,successful_controls,steps,literature,cost_amount,cost_currency\n\
                   inc-1,Chatbot leak,2022-05-01,leaked data,customers,no output filter,,deployment.operational_logging,,1000,EUR\n\
                   inc-2,Unknown,,,,,,,,,\n";
        let now = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
        let entries = ingest_feed_csv(csv.as_bytes(), "aiaaic", &ActorId::new("bot"), now).unwrap();
        assert_eq!(entries.len(), 2);
        assert!(!entries[0].needs_enrichment());
        assert!(entries[1].needs_enrichment());
        assert_eq!(entries[1].recorded_at, now);
        assert_eq!(entries[0].estimated_cost.as_ref().unwrap().currency, "EUR");
    }

    #[test]
    fn json_round_trip() {
        let t = default_templates();
        let mut reg = RiskRegister::new();
        reg.add_entry(entry("a", &["data.curation"], 1), &t).unwrap();
        let bytes = reg.export_json();
        let mut other = RiskRegister::new();
        other.import_json(&bytes, &t).unwrap();
        assert_eq!(other, reg);
        assert_eq!(other.export_json(), bytes);
    }
}
