//! Batch monitoring of prediction logs.
//!
//! A [`MonitorSpec`] names a metric, a batch size `n`, a threshold and a
//! direction. The log is cut into consecutive, non-overlapping batches of
//! exactly `n` records and each batch gets a Pass / Fail / Indeterminate
//! verdict. Two metric families ship:
//!
//! * conditional-independence ratio: within each stratum, the lowest
//!   group positive-decision rate divided by the highest, minimised over
//!   strata (fails below the threshold, 0.95 by default);
//! * error rate: mismatches between outcome and label over labelled
//!   records (fails above the threshold).
//!
//! Other metrics plug in through [`WindowMetric`].

mod log;
mod metrics;
mod run;

pub use log::{read_prediction_log, write_prediction_log, LogError};
pub use metrics::{
    conditional_independence_ratio, error_rate, CiOutcome, ConditionalIndependence, ErrorRate, Evaluation, GroupRate,
    StratumDetail, WindowMetric, IMPLICIT_STRATUM,
};
pub use run::{run_monitor, run_monitor_with, BatchVerdict, MonitorBatchResult, MonitorRun, MonitorStream, RunCounters, WindowRef};

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub const DEFAULT_THRESHOLD: f64 = 0.95;
pub const DEFAULT_MIN_GROUP_SIZE: u32 = 10;

/// A 0/1 decision or label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Bit(bool);

impl Bit {
    pub const ZERO: Bit = Bit(false);
    pub const ONE: Bit = Bit(true);

    pub fn is_one(self) -> bool {
        self.0
    }
}

impl From<bool> for Bit {
    fn from(b: bool) -> Self {
        Bit(b)
    }
}

impl TryFrom<u8> for Bit {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            0 => Ok(Bit(false)),
            1 => Ok(Bit(true)),
            other => Err(format!("expected 0 or 1, got {other}")),
        }
    }
}

impl From<Bit> for u8 {
    fn from(b: Bit) -> u8 {
        u8::from(b.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub record_id: String,
    pub timestamp: DateTime<Utc>,
    /// 1 = positive decision.
    pub outcome: Bit,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protected: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stratum: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Bit>,
    /// Any further fields, addressable by field selectors.
    #[serde(flatten)]
    pub attributes: BTreeMap<String, serde_json::Value>,
}

impl PredictionRecord {
    pub fn new(record_id: impl Into<String>, timestamp: DateTime<Utc>, outcome: bool) -> Self {
        Self {
            record_id: record_id.into(),
            timestamp,
            outcome: outcome.into(),
            protected: None,
            stratum: None,
            label: None,
            attributes: BTreeMap::new(),
        }
    }

    pub fn with_protected(mut self, group: impl Into<String>) -> Self {
        self.protected = Some(group.into());
        self
    }

    pub fn with_stratum(mut self, stratum: impl Into<String>) -> Self {
        self.stratum = Some(stratum.into());
        self
    }

    pub fn with_label(mut self, label: bool) -> Self {
        self.label = Some(label.into());
        self
    }

    /// Resolves a field selector to a categorical value.
    pub fn attribute(&self, field: &str) -> Option<String> {
        match field {
            "protected" => self.protected.clone(),
            "stratum" => self.stratum.clone(),
            "record_id" => Some(self.record_id.clone()),
            other => match self.attributes.get(other)? {
                serde_json::Value::String(s) => Some(s.clone()),
                serde_json::Value::Number(n) => Some(n.to_string()),
                serde_json::Value::Bool(b) => Some(b.to_string()),
                _ => None,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MetricKind {
    ConditionalIndependenceRatio,
    ErrorRate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    FailBelow,
    FailAbove,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorSpec {
    pub id: String,
    pub metric: MetricKind,
    pub batch_size: usize,
    pub threshold: f64,
    pub direction: Direction,
    pub min_group_size: u32,
    pub protected_attr: String,
    #[serde(default)]
    pub stratum_attr: Option<String>,
    #[serde(default)]
    pub document_failures_only: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MonitorError {
    #[error("batch size must be positive")]
    ZeroBatchSize,
    #[error("threshold {0} is outside (0, 1]")]
    ThresholdOutOfRange(f64),
    #[error("min_group_size must be positive")]
    ZeroMinGroupSize,
    #[error("{metric:?} must use {expected:?}")]
    WrongDirection { metric: MetricKind, expected: Direction },
}

impl MonitorSpec {
    /// Conditional-independence monitor with the default 0.95 threshold and
    /// a minimum group size of 10.
    pub fn fairness(id: impl Into<String>, batch_size: usize) -> Self {
        Self {
            id: id.into(),
            metric: MetricKind::ConditionalIndependenceRatio,
            batch_size,
            threshold: DEFAULT_THRESHOLD,
            direction: Direction::FailBelow,
            min_group_size: DEFAULT_MIN_GROUP_SIZE,
            protected_attr: "protected".into(),
            stratum_attr: None,
            document_failures_only: false,
        }
    }

    pub fn error_rate(id: impl Into<String>, batch_size: usize, threshold: f64) -> Self {
        Self {
            id: id.into(),
            metric: MetricKind::ErrorRate,
            batch_size,
            threshold,
            direction: Direction::FailAbove,
            min_group_size: 1,
            protected_attr: "protected".into(),
            stratum_attr: None,
            document_failures_only: false,
        }
    }

    pub fn with_stratum(mut self, field: impl Into<String>) -> Self {
        self.stratum_attr = Some(field.into());
        self
    }

    pub fn failures_only(mut self, on: bool) -> Self {
        self.document_failures_only = on;
        self
    }

    pub fn validate(&self) -> Result<(), MonitorError> {
        if self.batch_size == 0 {
            return Err(MonitorError::ZeroBatchSize);
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(MonitorError::ThresholdOutOfRange(self.threshold));
        }
        if self.min_group_size == 0 {
            return Err(MonitorError::ZeroMinGroupSize);
        }
        let expected = match self.metric {
            MetricKind::ConditionalIndependenceRatio => Direction::FailBelow,
            MetricKind::ErrorRate => Direction::FailAbove,
        };
        if self.direction != expected {
            return Err(MonitorError::WrongDirection { metric: self.metric, expected });
        }
        Ok(())
    }

    pub fn verdict(&self, value: MetricValue) -> BatchVerdict {
        match value {
            MetricValue::Indeterminate => BatchVerdict::Indeterminate,
            MetricValue::Value(v) => {
                let fails = match self.direction {
                    Direction::FailBelow => v < self.threshold,
                    Direction::FailAbove => v > self.threshold,
                };
                if fails {
                    BatchVerdict::Fail
                } else {
                    BatchVerdict::Pass
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricValue {
    Value(f64),
    Indeterminate,
}

impl MetricValue {
    pub fn value(self) -> Option<f64> {
        match self {
            MetricValue::Value(v) => Some(v),
            MetricValue::Indeterminate => None,
        }
    }
}
