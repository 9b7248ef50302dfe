use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::ids::TriggerId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerKind {
    Periodic { interval_secs: u64 },
    NewDeploymentContext,
    NegativeFeedbackThreshold { count: u32 },
}

impl TriggerKind {
    pub fn describe(&self) -> String {
        match self {
            TriggerKind::Periodic { interval_secs } => format!("periodic re-audit every {}", humanize(*interval_secs)),
            TriggerKind::NewDeploymentContext => "deployment in a new social context".to_owned(),
            TriggerKind::NegativeFeedbackThreshold { count } => format!("{count} negative feedback reports"),
        }
    }
}

fn humanize(secs: u64) -> String {
    const DAY: u64 = 86_400;
    match secs {
        s if s % DAY == 0 => format!("{} day(s)", s / DAY),
        s if s % 3600 == 0 => format!("{} hour(s)", s / 3600),
        s => format!("{s} second(s)"),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerCounters {
    /// Negative feedback reports since the last firing.
    pub feedback: u32,
    pub last_fired: Option<DateTime<Utc>>,
    pub times_fired: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReauditTrigger {
    pub id: TriggerId,
    pub kind: TriggerKind,
    pub counters: TriggerCounters,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditEvent {
    ClockTick,
    DeploymentContextChange { description: String },
    NegativeFeedback { note: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiredTrigger {
    pub trigger: TriggerId,
    pub at: DateTime<Utc>,
    pub cause: String,
    /// Index of the iteration this firing opened, if one was opened.
    pub opened_iteration: Option<u32>,
}

impl ReauditTrigger {
    /// Updates counters for `event` and reports whether the trigger fires.
    /// `anchor` is the last time the audit was reported; `armed` is false
    /// while nothing has been reported yet.
    pub(super) fn observe(&mut self, event: &AuditEvent, at: DateTime<Utc>, anchor: Option<DateTime<Utc>>, armed: bool) -> Option<String> {
        let cause = match (&self.kind, event) {
            (TriggerKind::NegativeFeedbackThreshold { count }, AuditEvent::NegativeFeedback { .. }) => {
                self.counters.feedback += 1;
                (armed && self.counters.feedback >= *count).then(|| format!("{} negative feedback reports", self.counters.feedback))
            }
            (TriggerKind::NewDeploymentContext, AuditEvent::DeploymentContextChange { description }) => {
                armed.then(|| format!("new deployment context: {description}"))
            }
            (TriggerKind::Periodic { interval_secs }, _) => {
                let since = [self.counters.last_fired, anchor].into_iter().flatten().max();
                let due = since.is_some_and(|s| (at - s).num_seconds() >= 0 && (at - s).num_seconds() as u64 >= *interval_secs);
                (armed && due).then(|| format!("{} elapsed", humanize(*interval_secs)))
            }
            _ => None,
        };
        if cause.is_some() {
            self.counters.feedback = 0;
            self.counters.last_fired = Some(at);
            self.counters.times_fired += 1;
        }
        cause
    }
}
