//! Question database import and export.
//!
//! CSV uses the header `id,text,requirement,step_tags,source,mandatory` with
//! `;`-separated step tags. The structured form is a JSON array of objects
//! with the same fields (`step_tags` as an array, `mandatory` a boolean).
//! Imports are all-or-nothing. Row numbers count data rows from 1.

use std::collections::{BTreeMap, BTreeSet};

use serde::Deserialize;

use super::{QuestionDb, Requirement, RiskQuestion};
use crate::canonical;
use crate::ids::{QuestionId, StepId};

pub const CSV_HEADER: [&str; 6] = ["id", "text", "requirement", "step_tags", "source", "mandatory"];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("row {row}, field `{field}`: {problem}")]
pub struct ImportError {
    pub row: usize,
    pub field: String,
    pub problem: ImportProblem,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ImportProblem {
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("unknown requirement `{0}`")]
    UnknownRequirement(String),
    #[error("step tag `{0}` does not resolve against the lifecycle template")]
    UnresolvableStepTag(String),
    #[error("duplicate question id `{0}`")]
    DuplicateId(String),
}

fn err(row: usize, field: &str, problem: ImportProblem) -> ImportError {
    ImportError { row, field: field.to_owned(), problem }
}

struct RawRow {
    id: String,
    text: String,
    requirement: String,
    step_tags: Vec<String>,
    source: String,
    mandatory: bool,
}

fn validate(rows: Vec<(usize, RawRow)>, steps: &BTreeSet<StepId>) -> Result<QuestionDb, ImportError> {
    let mut out = BTreeMap::new();
    for (row, raw) in rows {
        let id = raw.id.trim();
        if id.is_empty() {
            return Err(err(row, "id", ImportProblem::Schema("empty id".into())));
        }
        if raw.text.trim().is_empty() {
            return Err(err(row, "text", ImportProblem::Schema("empty question text".into())));
        }
        let requirement: Requirement = raw
            .requirement
            .parse()
            .map_err(|bad| err(row, "requirement", ImportProblem::UnknownRequirement(bad)))?;
        let mut tags = BTreeSet::new();
        for tag in raw.step_tags.iter().map(|t| t.trim()).filter(|t| !t.is_empty()) {
            let step = StepId::new(tag);
            if !steps.contains(&step) {
                return Err(err(row, "step_tags", ImportProblem::UnresolvableStepTag(tag.to_owned())));
            }
            tags.insert(step);
        }
        if tags.is_empty() {
            return Err(err(row, "step_tags", ImportProblem::Schema("at least one step tag is required".into())));
        }
        let question = RiskQuestion {
            id: QuestionId::new(id),
            text: raw.text.trim().to_owned(),
            requirement,
            step_tags: tags,
            source: raw.source.trim().to_owned(),
            mandatory: raw.mandatory,
        };
        if out.insert(question.id.clone(), question).is_some() {
            return Err(err(row, "id", ImportProblem::DuplicateId(id.to_owned())));
        }
    }
    Ok(QuestionDb::from_validated(out))
}

fn parse_bool(row: usize, s: &str) -> Result<bool, ImportError> {
    match s.trim().to_ascii_lowercase().as_str() {
        "" | "false" | "no" | "0" => Ok(false),
        "true" | "yes" | "1" => Ok(true),
        other => Err(err(row, "mandatory", ImportProblem::Schema(format!("`{other}` is not a boolean")))),
    }
}

/// Imports a CSV question database. An empty document yields an empty database.
pub fn import_questions_csv(bytes: &[u8], steps: &BTreeSet<StepId>) -> Result<QuestionDb, ImportError> {
    if bytes.iter().all(|b| b.is_ascii_whitespace()) {
        return Ok(QuestionDb::empty());
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| err(0, "header", ImportProblem::Schema(e.to_string())))?
        .clone();
    let header: Vec<&str> = headers.iter().map(str::trim).collect();
    if header != CSV_HEADER {
        return Err(err(0, "header", ImportProblem::Schema(format!("expected `{}`, got `{}`", CSV_HEADER.join(","), header.join(",")))));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| err(row, "*", ImportProblem::Schema(e.to_string())))?;
        if record.len() != CSV_HEADER.len() {
            return Err(err(row, "*", ImportProblem::Schema(format!("expected 6 fields, got {}", record.len()))));
        }
        rows.push((
            row,
            RawRow {
                id: record[0].to_owned(),
                text: record[1].to_owned(),
                requirement: record[2].to_owned(),
                step_tags: record[3].split(';').map(str::to_owned).collect(),
                source: record[4].to_owned(),
                mandatory: parse_bool(row, &record[5])?,
            },
        ));
    }
    validate(rows, steps)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonRow {
    id: String,
    text: String,
    requirement: String,
    step_tags: Vec<String>,
    #[serde(default)]
    source: String,
    #[serde(default)]
    mandatory: bool,
}

/// Imports the structured (JSON array) form.
pub fn import_questions_json(bytes: &[u8], steps: &BTreeSet<StepId>) -> Result<QuestionDb, ImportError> {
    if bytes.iter().all(|b| b.is_ascii_whitespace()) {
        return Ok(QuestionDb::empty());
    }
    let values: Vec<serde_json::Value> =
        serde_json::from_slice(bytes).map_err(|e| err(0, "document", ImportProblem::Schema(e.to_string())))?;
    let mut rows = Vec::with_capacity(values.len());
    for (i, value) in values.into_iter().enumerate() {
        let row = i + 1;
        let r: JsonRow = serde_json::from_value(value).map_err(|e| err(row, "*", ImportProblem::Schema(e.to_string())))?;
        rows.push((
            row,
            RawRow { id: r.id, text: r.text, requirement: r.requirement, step_tags: r.step_tags, source: r.source, mandatory: r.mandatory },
        ));
    }
    validate(rows, steps)
}

pub fn export_csv(questions: &[RiskQuestion]) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for q in questions {
        let tags: Vec<&str> = q.step_tags.iter().map(|s| s.as_str()).collect();
        w.write_record([
            q.id.as_str(),
            q.text.as_str(),
            q.requirement.as_str(),
            &tags.join(";"),
            q.source.as_str(),
            if q.mandatory { "true" } else { "false" },
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn export_json(questions: &[RiskQuestion]) -> Vec<u8> {
    canonical::to_canonical_bytes(&questions).expect("questions serialize")
}
