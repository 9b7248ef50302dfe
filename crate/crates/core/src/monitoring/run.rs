use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{builtin, Evaluation, StratumDetail, WindowMetric};
use super::{MetricValue, MonitorError, MonitorSpec, PredictionRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BatchVerdict {
    Pass,
    Fail,
    Indeterminate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowRef {
    pub first_record_id: String,
    pub last_record_id: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorBatchResult {
    pub spec_id: String,
    pub batch_index: u64,
    pub window: WindowRef,
    pub value: MetricValue,
    pub per_stratum: Vec<StratumDetail>,
    pub verdict: BatchVerdict,
    pub malformed: u64,
    /// Trailing batch with fewer than `n` records; never evaluated.
    pub partial: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunCounters {
    pub records: u64,
    pub batches: u64,
    pub pass: u64,
    pub fail: u64,
    pub indeterminate: u64,
    /// Passing batches documented only through `pass`.
    pub suppressed_passes: u64,
    pub malformed_records: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorRun {
    pub spec: MonitorSpec,
    pub results: Vec<MonitorBatchResult>,
    pub counters: RunCounters,
}

impl MonitorRun {
    fn new(spec: MonitorSpec) -> Self {
        Self { spec, results: Vec::new(), counters: RunCounters::default() }
    }

    fn absorb(&mut self, result: MonitorBatchResult) {
        let c = &mut self.counters;
        c.records += result.window.count as u64;
        c.batches += 1;
        c.malformed_records += result.malformed;
        match result.verdict {
            BatchVerdict::Pass => c.pass += 1,
            BatchVerdict::Fail => c.fail += 1,
            BatchVerdict::Indeterminate => c.indeterminate += 1,
        }
        if result.verdict == BatchVerdict::Pass && self.spec.document_failures_only {
            c.suppressed_passes += 1;
        } else {
            self.results.push(result);
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &MonitorBatchResult> {
        self.results.iter().filter(|r| r.verdict == BatchVerdict::Fail)
    }
}

fn evaluate_batch(spec: &MonitorSpec, metric: &dyn WindowMetric, index: u64, window: &[PredictionRecord]) -> MonitorBatchResult {
    let partial = window.len() < spec.batch_size;
    let Evaluation { value, per_stratum, malformed } = metric.evaluate(window);
    let (value, per_stratum) = if partial { (MetricValue::Indeterminate, Vec::new()) } else { (value, per_stratum) };
    MonitorBatchResult {
        spec_id: spec.id.clone(),
        batch_index: index,
        window: WindowRef {
            first_record_id: window.first().map(|r| r.record_id.clone()).unwrap_or_default(),
            last_record_id: window.last().map(|r| r.record_id.clone()).unwrap_or_default(),
            count: window.len(),
        },
        value,
        per_stratum,
        verdict: spec.verdict(value),
        malformed,
        partial,
    }
}

/// Runs a built-in metric over tumbling batches of `spec.batch_size`.
pub fn run_monitor(spec: &MonitorSpec, log: &[PredictionRecord]) -> Result<MonitorRun, MonitorError> {
    spec.validate()?;
    Ok(run_monitor_with(spec, builtin(spec).as_ref(), log))
}

/// Same batching and documentation rules with a caller-supplied metric.
/// `spec.metric` is ignored; threshold and direction still apply.
pub fn run_monitor_with(spec: &MonitorSpec, metric: &dyn WindowMetric, log: &[PredictionRecord]) -> MonitorRun {
    let evaluated: Vec<MonitorBatchResult> = log
        .par_chunks(spec.batch_size.max(1))
        .enumerate()
        .map(|(i, w)| evaluate_batch(spec, metric, i as u64, w))
        .collect();
    let mut run = MonitorRun::new(spec.clone());
    for r in evaluated {
        run.absorb(r);
    }
    run
}

/// Incremental form of [`run_monitor`]: records are pushed one at a time
/// and each completed batch is evaluated immediately.
pub struct MonitorStream {
    spec: MonitorSpec,
    buffer: Vec<PredictionRecord>,
    next_index: u64,
    run: MonitorRun,
}

impl MonitorStream {
    pub fn new(spec: MonitorSpec) -> Result<Self, MonitorError> {
        spec.validate()?;
        Ok(Self { buffer: Vec::with_capacity(spec.batch_size), next_index: 0, run: MonitorRun::new(spec.clone()), spec })
    }

    /// Returns the batch result when this record completes a batch.
    pub fn push(&mut self, record: PredictionRecord) -> Option<MonitorBatchResult> {
        self.buffer.push(record);
        if self.buffer.len() < self.spec.batch_size {
            return None;
        }
        let result = evaluate_batch(&self.spec, builtin(&self.spec).as_ref(), self.next_index, &self.buffer);
        self.buffer.clear();
        self.next_index += 1;
        self.run.absorb(result.clone());
        Some(result)
    }

    pub fn pending(&self) -> usize {
        self.buffer.len()
    }

    /// Flushes the trailing partial batch, if any.
    pub fn finish(mut self) -> MonitorRun {
        if !self.buffer.is_empty() {
            let result = evaluate_batch(&self.spec, builtin(&self.spec).as_ref(), self.next_index, &self.buffer);
            self.run.absorb(result);
        }
        self.run
    }
}
