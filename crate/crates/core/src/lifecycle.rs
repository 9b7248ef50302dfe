//! Four-phase ML lifecycle model, per-step scoping and audit coverage.
//!
//! A [`LifecycleModel`] is an immutable value. Every mutation checks the
//! caller's expected revision and returns a new model with the revision
//! bumped, so concurrent writers see a conflict instead of losing an update.
//!
//! Step statuses map to a fixed color vocabulary used on the wire:
//!
//! | status         | color  |
//! |----------------|--------|
//! | `InScope`      | blue   |
//! | `NotRelevant`  | yellow |
//! | `NotAuditable` | white  |
//! | `Pending`      | grey   |

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::ids::{ActorId, PhaseId, StepId};

pub const DEFAULT_TEMPLATE: &str = "default";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LifecycleError {
    #[error("unknown step `{0}`")]
    UnknownStep(StepId),
    #[error("unknown phase `{0}`")]
    UnknownPhase(PhaseId),
    #[error("stale revision: expected {expected}, model is at {actual}")]
    StaleRevision { expected: u64, actual: u64 },
    #[error("assessment of `{0}` needs a rationale")]
    MissingRationale(StepId),
    #[error("duplicate step id `{0}`")]
    DuplicateStep(StepId),
    #[error("duplicate phase id `{0}`")]
    DuplicatePhase(PhaseId),
    #[error("phase `{0}` has no steps")]
    EmptyPhase(PhaseId),
    #[error("the default template is frozen; use a custom template to add or remove steps")]
    FrozenTemplate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StepStatus {
    Pending,
    InScope,
    NotRelevant,
    NotAuditable,
}

impl StepStatus {
    pub const ALL: [StepStatus; 4] = [Self::Pending, Self::InScope, Self::NotRelevant, Self::NotAuditable];

    pub fn color(self) -> Color {
        match self {
            Self::InScope => Color::Blue,
            Self::NotRelevant => Color::Yellow,
            Self::NotAuditable => Color::White,
            Self::Pending => Color::Grey,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Blue,
    Yellow,
    White,
    Grey,
}

impl Color {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Blue => "blue",
            Self::Yellow => "yellow",
            Self::White => "white",
            Self::Grey => "grey",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub id: StepId,
    pub title: String,
    /// Artifact-kind tags the auditor expects to collect for this step.
    pub expected_artifacts: Vec<String>,
    /// Accountable role.
    pub owner: Option<String>,
}

impl Step {
    pub fn new(id: impl Into<StepId>, title: impl Into<String>, artifacts: &[&str]) -> Self {
        Self {
            id: id.into(),
            title: title.into(),
            expected_artifacts: artifacts.iter().map(|s| s.to_string()).collect(),
            owner: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phase {
    pub id: PhaseId,
    pub title: String,
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepAssessment {
    pub step_id: StepId,
    pub status: StepStatus,
    pub rationale: String,
    pub assessed_by: ActorId,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LifecycleModel {
    pub template: String,
    pub phases: Vec<Phase>,
    pub revision: u64,
    assessments: BTreeMap<StepId, StepAssessment>,
    history: Vec<StepAssessment>,
}

/// `covered / assessable`, kept unreduced so comparisons stay exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fraction {
    pub covered: u32,
    pub assessable: u32,
}

impl Fraction {
    pub fn value(self) -> f64 {
        f64::from(self.covered) / f64::from(self.assessable)
    }

    /// Rational equality by cross-multiplication.
    pub fn same_ratio(self, other: Fraction) -> bool {
        u64::from(self.covered) * u64::from(other.assessable) == u64::from(other.covered) * u64::from(self.assessable)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coverage {
    Defined(Fraction),
    Undefined,
}

impl Coverage {
    fn from_counts(blue: u32, white: u32, grey: u32) -> Self {
        let assessable = blue + white + grey;
        if assessable == 0 {
            Coverage::Undefined
        } else {
            Coverage::Defined(Fraction { covered: blue, assessable })
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Coverage::Defined(f) => Some(f.value()),
            Coverage::Undefined => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColorCounts {
    pub blue: u32,
    pub yellow: u32,
    pub white: u32,
    pub grey: u32,
}

impl ColorCounts {
    fn add(&mut self, color: Color) {
        match color {
            Color::Blue => self.blue += 1,
            Color::Yellow => self.yellow += 1,
            Color::White => self.white += 1,
            Color::Grey => self.grey += 1,
        }
    }

    fn merge(&mut self, other: &ColorCounts) {
        self.blue += other.blue;
        self.yellow += other.yellow;
        self.white += other.white;
        self.grey += other.grey;
    }

    pub fn coverage(&self) -> Coverage {
        Coverage::from_counts(self.blue, self.white, self.grey)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseCoverage {
    pub phase: PhaseId,
    pub counts: ColorCounts,
    pub coverage: Coverage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageReport {
    /// In lifecycle order.
    pub per_phase: Vec<PhaseCoverage>,
    pub counts: ColorCounts,
    pub overall: Coverage,
}

impl CoverageReport {
    pub fn phase(&self, id: &str) -> Option<&PhaseCoverage> {
        self.per_phase.iter().find(|p| p.phase.as_str() == id)
    }
}

/// The default four-phase template with the union of both pilot step
/// inventories. Every step starts `Pending`.
pub fn instantiate_template() -> LifecycleModel {
    fn phase(id: &str, title: &str, steps: &[(&str, &str, &[&str])]) -> Phase {
        Phase {
            id: PhaseId::new(id),
            title: title.to_owned(),
            steps: steps
                .iter()
                .map(|(sid, t, a)| Step::new(format!("{id}.{sid}"), *t, a))
                .collect(),
        }
    }

    let phases = vec![
        phase(
            "formulation",
            "System Formulation",
            &[
                ("goals", "Goals", &["requirements_document"]),
                ("legacy_systems", "Legacy systems", &["architecture_document"]),
                ("evaluation_metrics", "Evaluation metrics", &["metric_specification"]),
                ("system_subjects", "System subjects", &["stakeholder_analysis"]),
                ("system_users", "System users", &["stakeholder_analysis"]),
                ("societal_context", "Societal context", &["impact_report"]),
                ("user_experience", "User experience", &["ux_specification"]),
                ("security_assessment", "Security assessment", &["security_report"]),
                ("impact_assessment", "Impact assessment", &["impact_report"]),
            ],
        ),
        phase(
            "data",
            "Data Management",
            &[
                ("specification", "Data specification", &["datasheet"]),
                ("collection", "Data collection", &["datasheet", "collection_protocol"]),
                ("curation", "Data curation", &["curation_log"]),
                ("processing", "Data processing", &["pipeline_specification"]),
                ("extraction", "Data extraction", &["pipeline_specification"]),
                ("quality_assessment", "Data quality assessment", &["data_quality_report"]),
            ],
        ),
        phase(
            "model",
            "Model Management",
            &[
                ("specification", "Model specification", &["model_card"]),
                ("feature_engineering", "Feature engineering", &["feature_documentation"]),
                ("training_optimisation", "Training/Optimisation", &["training_log"]),
                ("validation_interpretation", "Validation/Interpretation", &["validation_report"]),
                ("quality_assessment", "Model quality assessment", &["model_quality_report"]),
            ],
        ),
        phase(
            "deployment",
            "Deployment/Operationalisation",
            &[
                ("sandboxing", "Sandboxing", &["sandbox_test_report"]),
                ("operational_logging", "Operational logging", &["operational_log"]),
                ("continuous_testing", "Continuous testing", &["test_report"]),
                ("reliability_assessment", "Reliability assessment", &["reliability_report"]),
                ("black_box_auditing", "Black-box auditing", &["audit_report"]),
                ("post_market_analysis", "Post-market analysis", &["post_market_report"]),
            ],
        ),
    ];

    LifecycleModel {
        template: DEFAULT_TEMPLATE.to_owned(),
        phases,
        revision: 0,
        assessments: BTreeMap::new(),
        history: Vec::new(),
    }
}

impl LifecycleModel {
    /// A custom template. The name must differ from the default template's.
    pub fn custom(template: impl Into<String>, phases: Vec<Phase>) -> Result<Self, LifecycleError> {
        let template = template.into();
        if template == DEFAULT_TEMPLATE {
            return Err(LifecycleError::FrozenTemplate);
        }
        let model = Self { template, phases, revision: 0, assessments: BTreeMap::new(), history: Vec::new() };
        model.validate_structure()?;
        Ok(model)
    }

    pub fn validate_structure(&self) -> Result<(), LifecycleError> {
        let mut phase_ids = BTreeSet::new();
        let mut step_ids = BTreeSet::new();
        for phase in &self.phases {
            if !phase_ids.insert(&phase.id) {
                return Err(LifecycleError::DuplicatePhase(phase.id.clone()));
            }
            if phase.steps.is_empty() {
                return Err(LifecycleError::EmptyPhase(phase.id.clone()));
            }
            for step in &phase.steps {
                if !step_ids.insert(&step.id) {
                    return Err(LifecycleError::DuplicateStep(step.id.clone()));
                }
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> impl Iterator<Item = &Step> {
        self.phases.iter().flat_map(|p| p.steps.iter())
    }

    pub fn step_ids(&self) -> BTreeSet<StepId> {
        self.steps().map(|s| s.id.clone()).collect()
    }

    pub fn step_count(&self) -> usize {
        self.steps().count()
    }

    pub fn step(&self, id: &StepId) -> Option<&Step> {
        self.steps().find(|s| &s.id == id)
    }

    pub fn contains_step(&self, id: &StepId) -> bool {
        self.step(id).is_some()
    }

    pub fn phase_of(&self, id: &StepId) -> Option<&Phase> {
        self.phases.iter().find(|p| p.steps.iter().any(|s| &s.id == id))
    }

    pub fn status(&self, id: &StepId) -> StepStatus {
        self.assessments.get(id).map_or(StepStatus::Pending, |a| a.status)
    }

    pub fn assessment(&self, id: &StepId) -> Option<&StepAssessment> {
        self.assessments.get(id)
    }

    /// Every assessment ever applied, oldest first.
    pub fn history(&self) -> &[StepAssessment] {
        &self.history
    }

    pub fn history_for<'a>(&'a self, id: &'a StepId) -> impl Iterator<Item = &'a StepAssessment> + 'a {
        self.history.iter().filter(move |a| &a.step_id == id)
    }

    pub fn steps_with_status(&self, status: StepStatus) -> BTreeSet<StepId> {
        self.steps().filter(|s| self.status(&s.id) == status).map(|s| s.id.clone()).collect()
    }

    pub fn in_scope_steps(&self) -> BTreeSet<StepId> {
        self.steps_with_status(StepStatus::InScope)
    }

    pub fn color_map(&self) -> BTreeMap<StepId, Color> {
        self.steps().map(|s| (s.id.clone(), self.status(&s.id).color())).collect()
    }

    fn check_revision(&self, expected: u64) -> Result<(), LifecycleError> {
        if expected != self.revision {
            return Err(LifecycleError::StaleRevision { expected, actual: self.revision });
        }
        Ok(())
    }

    /// Records an assessment, replacing the step's current one.
    pub fn assess_step(&self, expected_revision: u64, assessment: StepAssessment) -> Result<Self, LifecycleError> {
        self.check_revision(expected_revision)?;
        if !self.contains_step(&assessment.step_id) {
            return Err(LifecycleError::UnknownStep(assessment.step_id));
        }
        if assessment.status != StepStatus::Pending && assessment.rationale.trim().is_empty() {
            return Err(LifecycleError::MissingRationale(assessment.step_id));
        }
        let mut next = self.clone();
        next.history.push(assessment.clone());
        next.assessments.insert(assessment.step_id.clone(), assessment);
        next.revision += 1;
        Ok(next)
    }

    pub fn set_owner(&self, expected_revision: u64, step: &StepId, owner: Option<String>) -> Result<Self, LifecycleError> {
        self.check_revision(expected_revision)?;
        let mut next = self.clone();
        let slot = next
            .phases
            .iter_mut()
            .flat_map(|p| p.steps.iter_mut())
            .find(|s| &s.id == step)
            .ok_or_else(|| LifecycleError::UnknownStep(step.clone()))?;
        slot.owner = owner;
        next.revision += 1;
        Ok(next)
    }

    /// Custom templates only.
    pub fn add_step(&self, expected_revision: u64, phase: &PhaseId, step: Step) -> Result<Self, LifecycleError> {
        self.check_revision(expected_revision)?;
        if self.template == DEFAULT_TEMPLATE {
            return Err(LifecycleError::FrozenTemplate);
        }
        if self.contains_step(&step.id) {
            return Err(LifecycleError::DuplicateStep(step.id));
        }
        let mut next = self.clone();
        let target = next
            .phases
            .iter_mut()
            .find(|p| &p.id == phase)
            .ok_or_else(|| LifecycleError::UnknownPhase(phase.clone()))?;
        target.steps.push(step);
        next.revision += 1;
        Ok(next)
    }

    /// Custom templates only. History of the removed step is kept.
    pub fn remove_step(&self, expected_revision: u64, step: &StepId) -> Result<Self, LifecycleError> {
        self.check_revision(expected_revision)?;
        if self.template == DEFAULT_TEMPLATE {
            return Err(LifecycleError::FrozenTemplate);
        }
        let mut next = self.clone();
        let phase = next
            .phases
            .iter_mut()
            .find(|p| p.steps.iter().any(|s| &s.id == step))
            .ok_or_else(|| LifecycleError::UnknownStep(step.clone()))?;
        if phase.steps.len() == 1 {
            return Err(LifecycleError::EmptyPhase(phase.id.clone()));
        }
        phase.steps.retain(|s| &s.id != step);
        next.assessments.remove(step);
        next.revision += 1;
        Ok(next)
    }

    /// Coverage = blue / (blue + white + grey). Yellow steps are excluded.
    pub fn coverage(&self) -> CoverageReport {
        let mut total = ColorCounts::default();
        let per_phase = self
            .phases
            .iter()
            .map(|phase| {
                let mut counts = ColorCounts::default();
                for step in &phase.steps {
                    counts.add(self.status(&step.id).color());
                }
                total.merge(&counts);
                PhaseCoverage { phase: phase.id.clone(), counts, coverage: counts.coverage() }
            })
            .collect();
        CoverageReport { per_phase, counts: total, overall: total.coverage() }
    }
}
