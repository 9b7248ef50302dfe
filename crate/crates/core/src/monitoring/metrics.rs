use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{MetricKind, MetricValue, MonitorSpec, PredictionRecord};

/// Stratum key used when the spec has no stratum selector.
pub const IMPLICIT_STRATUM: &str = "*";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRate {
    pub positives: u64,
    pub total: u64,
    pub rate: f64,
    /// At least `min_group_size` records.
    pub eligible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumDetail {
    pub stratum: String,
    pub groups: BTreeMap<String, GroupRate>,
    /// `None` when fewer than two groups are eligible.
    pub ratio: Option<f64>,
    pub eligible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiOutcome {
    pub value: MetricValue,
    pub per_stratum: Vec<StratumDetail>,
    /// Records missing a selected attribute; excluded from every rate.
    pub malformed: u64,
}

/// Worst-stratum min/max positive-rate ratio.
///
/// Groups below `min_group_size` are dropped; a stratum with fewer than two
/// remaining groups is skipped; a stratum whose rates are all zero has
/// ratio 1. With no evaluated stratum the value is indeterminate.
pub fn conditional_independence_ratio(window: &[PredictionRecord], spec: &MonitorSpec) -> CiOutcome {
    let mut counts: BTreeMap<String, BTreeMap<String, (u64, u64)>> = BTreeMap::new();
    let mut malformed = 0u64;
    for record in window {
        let Some(group) = record.attribute(&spec.protected_attr) else {
            malformed += 1;
            continue;
        };
        let stratum = match &spec.stratum_attr {
            Some(field) => match record.attribute(field) {
                Some(s) => s,
                None => {
                    malformed += 1;
                    continue;
                }
            },
            None => IMPLICIT_STRATUM.to_owned(),
        };
        let slot = counts.entry(stratum).or_default().entry(group).or_default();
        slot.0 += u64::from(record.outcome.is_one());
        slot.1 += 1;
    }

    let min_size = u64::from(spec.min_group_size);
    let mut value: Option<f64> = None;
    let per_stratum = counts
        .into_iter()
        .map(|(stratum, groups)| {
            let eligible: Vec<(u64, u64)> = groups.values().copied().filter(|&(_, n)| n >= min_size).collect();
            let ratio = (eligible.len() >= 2).then(|| stratum_ratio(&eligible));
            if let Some(r) = ratio {
                value = Some(value.map_or(r, |v: f64| v.min(r)));
            }
            StratumDetail {
                stratum,
                groups: groups
                    .into_iter()
                    .map(|(g, (p, n))| (g, GroupRate { positives: p, total: n, rate: p as f64 / n as f64, eligible: n >= min_size }))
                    .collect(),
                ratio,
                eligible: ratio.is_some(),
            }
        })
        .collect();

    CiOutcome { value: value.map_or(MetricValue::Indeterminate, MetricValue::Value), per_stratum, malformed }
}

/// `p1/n1` vs `p2/n2` without rounding.
fn cmp_rate(a: (u64, u64), b: (u64, u64)) -> Ordering {
    (u128::from(a.0) * u128::from(b.1)).cmp(&(u128::from(b.0) * u128::from(a.1)))
}

fn stratum_ratio(groups: &[(u64, u64)]) -> f64 {
    let min = *groups.iter().min_by(|a, b| cmp_rate(**a, **b)).expect("non-empty");
    let max = *groups.iter().max_by(|a, b| cmp_rate(**a, **b)).expect("non-empty");
    if max.0 == 0 {
        return 1.0;
    }
    // (p_min / n_min) / (p_max / n_max), one rounding step
    let num = u128::from(min.0) * u128::from(max.1);
    let den = u128::from(min.1) * u128::from(max.0);
    num as f64 / den as f64
}

/// Mismatches between outcome and label over labelled records.
pub fn error_rate(window: &[PredictionRecord]) -> MetricValue {
    let (labelled, wrong) = window
        .iter()
        .filter_map(|r| r.label.map(|l| l != r.outcome))
        .fold((0u64, 0u64), |(n, w), mismatch| (n + 1, w + u64::from(mismatch)));
    if labelled == 0 {
        MetricValue::Indeterminate
    } else {
        MetricValue::Value(wrong as f64 / labelled as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub value: MetricValue,
    pub per_stratum: Vec<StratumDetail>,
    pub malformed: u64,
}

/// Extension point for further batch metrics.
pub trait WindowMetric: Sync {
    fn evaluate(&self, window: &[PredictionRecord]) -> Evaluation;
}

pub struct ConditionalIndependence<'a>(pub &'a MonitorSpec);

impl WindowMetric for ConditionalIndependence<'_> {
    fn evaluate(&self, window: &[PredictionRecord]) -> Evaluation {
        let out = conditional_independence_ratio(window, self.0);
        Evaluation { value: out.value, per_stratum: out.per_stratum, malformed: out.malformed }
    }
}

pub struct ErrorRate;

impl WindowMetric for ErrorRate {
    fn evaluate(&self, window: &[PredictionRecord]) -> Evaluation {
        Evaluation { value: error_rate(window), per_stratum: Vec::new(), malformed: 0 }
    }
}

pub(super) fn builtin(spec: &MonitorSpec) -> Box<dyn WindowMetric + '_> {
    match spec.metric {
        MetricKind::ConditionalIndependenceRatio => Box::new(ConditionalIndependence(spec)),
        MetricKind::ErrorRate => Box::new(ErrorRate),
    }
}
