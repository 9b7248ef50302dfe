//! Step- and requirement-tagged risk questionnaire.
//!
//! Questions are tagged with one of the seven trustworthy-AI requirements
//! and at least one lifecycle step. Scoping an audit to a set of steps
//! retains exactly the questions whose tags intersect that set. Auditor
//! answers then drive ethical concerns, one per requirement with flagged
//! answers.

mod import;

pub use import::{export_csv, export_json, import_questions_csv, import_questions_json, ImportError, ImportProblem, CSV_HEADER};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::canonical::{self, Digest};
use crate::ids::{ActorId, EvidenceId, MitigationId, QuestionId, StepId};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RiskError {
    #[error("question filter needs a non-empty step scope")]
    EmptyScope,
    #[error("question `{0}` is not retained by the current scope")]
    NotRetained(QuestionId),
    #[error("evidence `{0}` is not registered")]
    DanglingEvidence(EvidenceId),
    #[error("a {answer:?} answer to `{question}` needs a justification")]
    MissingJustification { question: QuestionId, answer: Answer },
    #[error("deferring `{0}` needs a rationale")]
    MissingDeferralRationale(QuestionId),
    #[error("`{0}` is already answered and cannot be deferred")]
    AlreadyAnswered(QuestionId),
    #[error("questions neither answered nor deferred: {}", join(.0))]
    Unanswered(Vec<QuestionId>),
    #[error("recommendation `{0}` must address a concern or carry an auditor note")]
    UntracedRecommendation(MitigationId),
    #[error("waiving `{0}` needs a rationale")]
    MissingWaiverRationale(MitigationId),
    #[error("duplicate recommendation id `{0}`")]
    DuplicateRecommendation(MitigationId),
    #[error("unknown recommendation `{0}`")]
    UnknownRecommendation(MitigationId),
    #[error("severity override for {0} needs a rationale")]
    MissingOverrideRationale(Requirement),
}

fn join(ids: &[QuestionId]) -> String {
    ids.iter().map(|q| q.as_str()).collect::<Vec<_>>().join(", ")
}

/// The seven requirements for trustworthy AI, in their customary order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Requirement {
    HumanAgencyOversight,
    TechnicalRobustnessSafety,
    PrivacyDataGovernance,
    Transparency,
    DiversityNonDiscriminationFairness,
    SocietalEnvironmentalWellbeing,
    Accountability,
}

impl Requirement {
    pub const ALL: [Requirement; 7] = [
        Self::HumanAgencyOversight,
        Self::TechnicalRobustnessSafety,
        Self::PrivacyDataGovernance,
        Self::Transparency,
        Self::DiversityNonDiscriminationFairness,
        Self::SocietalEnvironmentalWellbeing,
        Self::Accountability,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::HumanAgencyOversight => "HumanAgencyOversight",
            Self::TechnicalRobustnessSafety => "TechnicalRobustnessSafety",
            Self::PrivacyDataGovernance => "PrivacyDataGovernance",
            Self::Transparency => "Transparency",
            Self::DiversityNonDiscriminationFairness => "DiversityNonDiscriminationFairness",
            Self::SocietalEnvironmentalWellbeing => "SocietalEnvironmentalWellbeing",
            Self::Accountability => "Accountability",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Self::HumanAgencyOversight => "Human agency and oversight",
            Self::TechnicalRobustnessSafety => "Technical robustness and safety",
            Self::PrivacyDataGovernance => "Privacy and data governance",
            Self::Transparency => "Transparency",
            Self::DiversityNonDiscriminationFairness => "Diversity, non-discrimination and fairness",
            Self::SocietalEnvironmentalWellbeing => "Societal and environmental well-being",
            Self::Accountability => "Accountability",
        }
    }
}

impl fmt::Display for Requirement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Requirement {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        Self::ALL
            .into_iter()
            .find(|r| r.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| s.to_owned())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskQuestion {
    pub id: QuestionId,
    pub text: String,
    pub requirement: Requirement,
    pub step_tags: BTreeSet<StepId>,
    /// Provenance label, e.g. an assessment-list item reference.
    pub source: String,
    /// Organisation-specific must-pass item.
    #[serde(default)]
    pub mandatory: bool,
}

/// Immutable, validated question database snapshot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionDb {
    questions: BTreeMap<QuestionId, RiskQuestion>,
    digest: Digest,
}

impl QuestionDb {
    pub(crate) fn from_validated(questions: BTreeMap<QuestionId, RiskQuestion>) -> Self {
        let list: Vec<&RiskQuestion> = questions.values().collect();
        let digest = canonical::digest_of(&list).expect("questions serialize");
        Self { questions, digest }
    }

    pub fn empty() -> Self {
        Self::from_validated(BTreeMap::new())
    }

    pub fn digest(&self) -> &Digest {
        &self.digest
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    pub fn get(&self, id: &QuestionId) -> Option<&RiskQuestion> {
        self.questions.get(id)
    }

    /// Ordered by id.
    pub fn questions(&self) -> impl Iterator<Item = &RiskQuestion> {
        self.questions.values()
    }

    /// Recomputes the digest; false if the snapshot was altered after import.
    pub fn verify(&self) -> bool {
        Self::from_validated(self.questions.clone()).digest == self.digest
    }
}

/// Questions whose step tags intersect `scope` and, when given, whose
/// requirement is in `requirements`. Ordered by requirement, then id.
pub fn filter_questions(
    db: &QuestionDb,
    scope: &BTreeSet<StepId>,
    requirements: Option<&BTreeSet<Requirement>>,
) -> Result<Vec<RiskQuestion>, RiskError> {
    if scope.is_empty() {
        return Err(RiskError::EmptyScope);
    }
    let mut out: Vec<RiskQuestion> = db
        .questions()
        .filter(|q| requirements.is_none_or(|rs| rs.contains(&q.requirement)))
        .filter(|q| q.step_tags.iter().any(|t| scope.contains(t)))
        .cloned()
        .collect();
    out.sort_by(|a, b| (a.requirement, &a.id).cmp(&(b.requirement, &b.id)));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Answer {
    Yes,
    No,
    Partial,
    NotApplicable,
    Unknown,
}

impl Answer {
    pub const ALL: [Answer; 5] = [Self::Yes, Self::No, Self::Partial, Self::NotApplicable, Self::Unknown];

    /// No, Partial and Unknown raise a concern.
    pub fn is_flagged(self) -> bool {
        matches!(self, Self::No | Self::Partial | Self::Unknown)
    }

    pub fn needs_justification(self) -> bool {
        matches!(self, Self::No | Self::Partial)
    }
}

impl FromStr for Answer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|a| format!("{a:?}").eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| s.to_owned())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionResponse {
    pub question_id: QuestionId,
    pub answer: Answer,
    pub justification: String,
    #[serde(default)]
    pub evidence_refs: Vec<EvidenceId>,
    pub answered_by: ActorId,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Deferral {
    pub question_id: QuestionId,
    pub rationale: String,
    pub deferred_by: ActorId,
    pub timestamp: DateTime<Utc>,
}

/// Current answers plus the full answer history of one iteration.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseSheet {
    current: BTreeMap<QuestionId, QuestionResponse>,
    history: Vec<QuestionResponse>,
    deferrals: BTreeMap<QuestionId, Deferral>,
}

impl ResponseSheet {
    pub fn record(
        &mut self,
        retained: &BTreeSet<QuestionId>,
        evidence: &BTreeSet<EvidenceId>,
        response: QuestionResponse,
    ) -> Result<(), RiskError> {
        if !retained.contains(&response.question_id) {
            return Err(RiskError::NotRetained(response.question_id));
        }
        if let Some(missing) = response.evidence_refs.iter().find(|e| !evidence.contains(*e)) {
            return Err(RiskError::DanglingEvidence(missing.clone()));
        }
        if response.answer.needs_justification() && response.justification.trim().is_empty() {
            return Err(RiskError::MissingJustification { question: response.question_id, answer: response.answer });
        }
        self.deferrals.remove(&response.question_id);
        self.history.push(response.clone());
        self.current.insert(response.question_id.clone(), response);
        Ok(())
    }

    pub fn defer(&mut self, retained: &BTreeSet<QuestionId>, deferral: Deferral) -> Result<(), RiskError> {
        if !retained.contains(&deferral.question_id) {
            return Err(RiskError::NotRetained(deferral.question_id));
        }
        if self.current.contains_key(&deferral.question_id) {
            return Err(RiskError::AlreadyAnswered(deferral.question_id));
        }
        if deferral.rationale.trim().is_empty() {
            return Err(RiskError::MissingDeferralRationale(deferral.question_id));
        }
        self.deferrals.insert(deferral.question_id.clone(), deferral);
        Ok(())
    }

    pub fn response(&self, id: &QuestionId) -> Option<&QuestionResponse> {
        self.current.get(id)
    }

    pub fn deferral(&self, id: &QuestionId) -> Option<&Deferral> {
        self.deferrals.get(id)
    }

    pub fn responses(&self) -> impl Iterator<Item = &QuestionResponse> {
        self.current.values()
    }

    pub fn history(&self) -> &[QuestionResponse] {
        &self.history
    }

    pub fn history_for<'a>(&'a self, id: &'a QuestionId) -> impl Iterator<Item = &'a QuestionResponse> + 'a {
        self.history.iter().filter(move |r| &r.question_id == id)
    }

    pub fn is_flagged(&self, id: &QuestionId) -> bool {
        self.current.get(id).is_some_and(|r| r.answer.is_flagged())
    }

    /// Retained questions with neither an answer nor a deferral.
    pub fn outstanding<'a>(&self, retained: impl IntoIterator<Item = &'a QuestionId>) -> Vec<QuestionId> {
        retained
            .into_iter()
            .filter(|q| !self.current.contains_key(*q) && !self.deferrals.contains_key(*q))
            .cloned()
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Severity {
    Info,
    Advisory,
    Major,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MitigationStatus {
    Open,
    Implemented,
    Waived,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MitigationRecommendation {
    pub id: MitigationId,
    pub text: String,
    pub mandatory: bool,
    pub status: MitigationStatus,
    #[serde(default)]
    pub waiver_rationale: Option<String>,
    /// The concern this recommendation answers.
    #[serde(default)]
    pub addresses: Option<Requirement>,
    /// Auditor note for recommendations not tied to a concern.
    #[serde(default)]
    pub note: Option<String>,
}

impl MitigationRecommendation {
    pub fn validate(&self) -> Result<(), RiskError> {
        let noted = self.note.as_deref().is_some_and(|n| !n.trim().is_empty());
        if self.addresses.is_none() && !noted {
            return Err(RiskError::UntracedRecommendation(self.id.clone()));
        }
        if self.status == MitigationStatus::Waived && self.waiver_rationale.as_deref().is_none_or(|r| r.trim().is_empty()) {
            return Err(RiskError::MissingWaiverRationale(self.id.clone()));
        }
        Ok(())
    }

    pub fn set_status(&mut self, status: MitigationStatus, rationale: Option<String>) -> Result<(), RiskError> {
        if status == MitigationStatus::Waived && rationale.as_deref().is_none_or(|r| r.trim().is_empty()) {
            return Err(RiskError::MissingWaiverRationale(self.id.clone()));
        }
        self.status = status;
        self.waiver_rationale = if status == MitigationStatus::Waived { rationale } else { None };
        Ok(())
    }

    pub fn is_open_mandatory(&self) -> bool {
        self.mandatory && self.status == MitigationStatus::Open
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeverityOverride {
    pub severity: Severity,
    pub rationale: String,
    pub actor: ActorId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EthicalConcern {
    pub requirement: Requirement,
    pub triggering_responses: Vec<QuestionId>,
    /// Effective severity, after any auditor override.
    pub severity: Severity,
    pub derived_severity: Severity,
    #[serde(default)]
    pub severity_override: Option<SeverityOverride>,
    pub recommendations: Vec<MitigationRecommendation>,
}

/// Severity from the flagged answers of one requirement.
///
/// Major: some `No` on a mandatory question. Advisory: the flags are all
/// `Partial` or `Unknown`. Info: the remaining case, i.e. `No` answers on
/// non-mandatory questions only.
pub fn severity_for(flags: &[(Answer, bool)]) -> Severity {
    if flags.iter().any(|&(a, mandatory)| a == Answer::No && mandatory) {
        Severity::Major
    } else if flags.iter().all(|&(a, _)| matches!(a, Answer::Partial | Answer::Unknown)) {
        Severity::Advisory
    } else {
        Severity::Info
    }
}

/// One concern per requirement with at least one flagged answer, ordered
/// by requirement. Fails if a retained question is neither answered nor
/// deferred.
pub fn derive_concerns(
    retained: &[RiskQuestion],
    sheet: &ResponseSheet,
    recommendations: &[MitigationRecommendation],
    overrides: &BTreeMap<Requirement, SeverityOverride>,
) -> Result<Vec<EthicalConcern>, RiskError> {
    let outstanding = sheet.outstanding(retained.iter().map(|q| &q.id));
    if !outstanding.is_empty() {
        return Err(RiskError::Unanswered(outstanding));
    }

    let mut flagged: BTreeMap<Requirement, Vec<(&RiskQuestion, Answer)>> = BTreeMap::new();
    for q in retained {
        if let Some(r) = sheet.response(&q.id).filter(|r| r.answer.is_flagged()) {
            flagged.entry(q.requirement).or_default().push((q, r.answer));
        }
    }

    Ok(flagged
        .into_iter()
        .map(|(requirement, mut hits)| {
            hits.sort_by(|a, b| a.0.id.cmp(&b.0.id));
            let flags: Vec<(Answer, bool)> = hits.iter().map(|(q, a)| (*a, q.mandatory)).collect();
            let derived = severity_for(&flags);
            let severity_override = overrides.get(&requirement).cloned();
            EthicalConcern {
                requirement,
                triggering_responses: hits.iter().map(|(q, _)| q.id.clone()).collect(),
                severity: severity_override.as_ref().map_or(derived, |o| o.severity),
                derived_severity: derived,
                severity_override,
                recommendations: recommendations.iter().filter(|m| m.addresses == Some(requirement)).cloned().collect(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerCounts {
    pub yes: u32,
    pub no: u32,
    pub partial: u32,
    pub not_applicable: u32,
    pub unknown: u32,
    pub deferred: u32,
    pub unanswered: u32,
}

/// Per-requirement tally of answer classes over the retained questions.
pub fn question_summary(retained: &[RiskQuestion], sheet: &ResponseSheet) -> BTreeMap<Requirement, AnswerCounts> {
    let mut out: BTreeMap<Requirement, AnswerCounts> = BTreeMap::new();
    for q in retained {
        let c = out.entry(q.requirement).or_default();
        match sheet.response(&q.id).map(|r| r.answer) {
            Some(Answer::Yes) => c.yes += 1,
            Some(Answer::No) => c.no += 1,
            Some(Answer::Partial) => c.partial += 1,
            Some(Answer::NotApplicable) => c.not_applicable += 1,
            Some(Answer::Unknown) => c.unknown += 1,
            None if sheet.deferral(&q.id).is_some() => c.deferred += 1,
            None => c.unanswered += 1,
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn at() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2023, 3, 2, 10, 0, 0).unwrap()
    }

    fn q(id: &str, req: Requirement, tags: &[&str], mandatory: bool) -> RiskQuestion {
        RiskQuestion {
            id: QuestionId::new(id),
            text: format!("question {id}?"),
            requirement: req,
            step_tags: tags.iter().map(|t| StepId::new(*t)).collect(),
            source: "synthetic".into(),
            mandatory,
        }
    }

    fn db(questions: Vec<RiskQuestion>) -> QuestionDb {
        QuestionDb::from_validated(questions.into_iter().map(|q| (q.id.clone(), q)).collect())
    }

    fn resp(id: &str, answer: Answer, why: &str) -> QuestionResponse {
        QuestionResponse {
            question_id: QuestionId::new(id),
            answer,
            justification: why.into(),
            evidence_refs: vec![],
            answered_by: ActorId::new("auditor"),
            timestamp: at(),
        }
    }

    fn ids(v: &[&str]) -> BTreeSet<QuestionId> {
        v.iter().map(|s| QuestionId::new(*s)).collect()
    }

    #[test]
    fn filter_orders_by_requirement_then_id() {
        let d = db(vec![
            q("b", Requirement::Transparency, &["s.a"], false),
            q("a", Requirement::Accountability, &["s.a"], false),
            q("c", Requirement::HumanAgencyOversight, &["s.a", "s.b"], false),
            q("d", Requirement::Transparency, &["s.c"], false),
        ]);
        let scope = [StepId::new("s.a")].into_iter().collect();
        let got: Vec<_> = filter_questions(&d, &scope, None).unwrap().into_iter().map(|q| q.id.to_string()).collect();
        assert_eq!(got, ["c", "b", "a"]);
        let only_t = [Requirement::Transparency].into_iter().collect();
        assert_eq!(filter_questions(&d, &scope, Some(&only_t)).unwrap().len(), 1);
    }

    #[test]
    fn filter_rejects_empty_scope_and_returns_nothing_for_disjoint() {
        let d = db(vec![q("a", Requirement::Transparency, &["s.a"], false)]);
        assert_eq!(filter_questions(&d, &BTreeSet::new(), None), Err(RiskError::EmptyScope));
        let scope = [StepId::new("s.zzz")].into_iter().collect();
        assert!(filter_questions(&d, &scope, None).unwrap().is_empty());
    }

    #[test]
    fn justification_rule_boundary() {
        let mut sheet = ResponseSheet::default();
        let retained = ids(&["x", "y", "z"]);
        let none = BTreeSet::new();
        assert!(sheet.record(&retained, &none, resp("x", Answer::NotApplicable, "")).is_ok());
        assert!(sheet.record(&retained, &none, resp("y", Answer::Unknown, "")).is_ok());
        assert_eq!(
            sheet.record(&retained, &none, resp("z", Answer::Partial, " ")),
            Err(RiskError::MissingJustification { question: QuestionId::new("z"), answer: Answer::Partial })
        );
        assert_eq!(
            sheet.record(&retained, &none, resp("w", Answer::Yes, "")),
            Err(RiskError::NotRetained(QuestionId::new("w")))
        );
    }

    #[test]
    fn dangling_evidence_is_rejected() {
        let mut sheet = ResponseSheet::default();
        let mut r = resp("x", Answer::Yes, "");
        r.evidence_refs.push(EvidenceId::new("ev-404"));
        assert_eq!(
            sheet.record(&ids(&["x"]), &BTreeSet::new(), r),
            Err(RiskError::DanglingEvidence(EvidenceId::new("ev-404")))
        );
    }

    #[test]
    fn no_answer_flags_question() {
        let mut sheet = ResponseSheet::default();
        sheet
            .record(&ids(&["explain"]), &BTreeSet::new(), resp("explain", Answer::No, "interface lacks uncertainty display"))
            .unwrap();
        assert!(sheet.is_flagged(&QuestionId::new("explain")));
    }

    #[test]
    fn deferral_then_answer_supersedes() {
        let mut sheet = ResponseSheet::default();
        let retained = ids(&["x"]);
        let d = Deferral { question_id: QuestionId::new("x"), rationale: "next round".into(), deferred_by: ActorId::new("a"), timestamp: at() };
        sheet.defer(&retained, d.clone()).unwrap();
        assert!(sheet.outstanding(&retained).is_empty());
        sheet.record(&retained, &BTreeSet::new(), resp("x", Answer::Yes, "")).unwrap();
        assert!(sheet.deferral(&QuestionId::new("x")).is_none());
        assert_eq!(sheet.defer(&retained, d), Err(RiskError::AlreadyAnswered(QuestionId::new("x"))));
    }

    #[test]
    fn severity_rules() {
        assert_eq!(severity_for(&[(Answer::No, true)]), Severity::Major);
        assert_eq!(severity_for(&[(Answer::Partial, true), (Answer::Unknown, false)]), Severity::Advisory);
        assert_eq!(severity_for(&[(Answer::No, false), (Answer::Partial, false)]), Severity::Info);
    }

    #[test]
    fn all_yes_gives_no_concerns_and_unanswered_is_an_error() {
        let qs = vec![q("a", Requirement::Transparency, &["s"], false), q("b", Requirement::Accountability, &["s"], true)];
        let mut sheet = ResponseSheet::default();
        let retained = ids(&["a", "b"]);
        sheet.record(&retained, &BTreeSet::new(), resp("a", Answer::Yes, "")).unwrap();
        assert_eq!(
            derive_concerns(&qs, &sheet, &[], &BTreeMap::new()),
            Err(RiskError::Unanswered(vec![QuestionId::new("b")]))
        );
        sheet.record(&retained, &BTreeSet::new(), resp("b", Answer::Yes, "")).unwrap();
        assert!(derive_concerns(&qs, &sheet, &[], &BTreeMap::new()).unwrap().is_empty());
    }

    #[test]
    fn concerns_attach_recommendations_and_overrides() {
        let qs = vec![q("a", Requirement::Transparency, &["s"], true)];
        let mut sheet = ResponseSheet::default();
        sheet.record(&ids(&["a"]), &BTreeSet::new(), resp("a", Answer::No, "missing")).unwrap();
        let rec = MitigationRecommendation {
            id: MitigationId::new("m1"),
            text: "log parameters".into(),
            mandatory: true,
            status: MitigationStatus::Open,
            waiver_rationale: None,
            addresses: Some(Requirement::Transparency),
            note: None,
        };
        let mut overrides = BTreeMap::new();
        overrides.insert(
            Requirement::Transparency,
            SeverityOverride { severity: Severity::Advisory, rationale: "mitigated by training".into(), actor: ActorId::new("lead") },
        );
        let concerns = derive_concerns(&qs, &sheet, &[rec], &overrides).unwrap();
        assert_eq!(concerns.len(), 1);
        assert_eq!(concerns[0].derived_severity, Severity::Major);
        assert_eq!(concerns[0].severity, Severity::Advisory);
        assert_eq!(concerns[0].recommendations.len(), 1);
    }

    #[test]
    fn recommendation_validation() {
        let mut rec = MitigationRecommendation {
            id: MitigationId::new("m"),
            text: "t".into(),
            mandatory: false,
            status: MitigationStatus::Open,
            waiver_rationale: None,
            addresses: None,
            note: None,
        };
        assert_eq!(rec.validate(), Err(RiskError::UntracedRecommendation(MitigationId::new("m"))));
        rec.note = Some("auditor observation".into());
        assert!(rec.validate().is_ok());
        assert_eq!(rec.set_status(MitigationStatus::Waived, None), Err(RiskError::MissingWaiverRationale(MitigationId::new("m"))));
        rec.set_status(MitigationStatus::Waived, Some("superseded by redesign".into())).unwrap();
        assert!(rec.validate().is_ok());
    }

    #[test]
    fn requirement_parsing_is_case_insensitive_and_closed() {
        assert_eq!("transparency".parse::<Requirement>(), Ok(Requirement::Transparency));
        assert_eq!("PrivacyDataGovernance".parse::<Requirement>(), Ok(Requirement::PrivacyDataGovernance));
        assert!("Fairness".parse::<Requirement>().is_err());
        assert_eq!(Requirement::ALL.len(), 7);
    }
}
