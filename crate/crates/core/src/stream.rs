//! Incremental assessment on a growing post-fault window.

use serde::{Deserialize, Serialize};

use crate::indices::{assess_window, AssessConfig, StabilityAssessment};
use crate::ingest::{self, CsvLayout, IngestError, RowBuffer, Sample};
use crate::Error;

/// Post-fault data time of the first report, seconds.
pub const FIRST_REPORT_S: f64 = 0.5;
pub const DEFAULT_REPORT_INTERVAL_S: f64 = 0.1;

#[derive(Debug, thiserror::Error)]
pub enum StreamError {
    #[error("row {row}: time {time} s is not after the previous sample at {previous} s")]
    OutOfOrder { row: usize, time: f64, previous: f64 },
    #[error("row {row}: {source}")]
    Row {
        row: usize,
        #[source]
        source: IngestError,
    },
    #[error("report at {at} s: {source}")]
    Report {
        at: f64,
        #[source]
        source: Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamConfig {
    pub t0: f64,
    pub report_interval: f64,
    pub first_report: f64,
    pub lookback: f64,
    pub assess: AssessConfig,
}

impl StreamConfig {
    pub fn new(t0: f64, assess: AssessConfig) -> Self {
        Self {
            t0,
            report_interval: DEFAULT_REPORT_INTERVAL_S,
            first_report: FIRST_REPORT_S,
            lookback: ingest::DEFAULT_LOOKBACK_S,
            assess,
        }
    }

    /// Report offsets after `t0`: `first_report + k interval` up to the window.
    pub fn report_times(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut k = 0usize;
        loop {
            let at = self.first_report + k as f64 * self.report_interval;
            if at > self.assess.window + 1e-9 {
                break;
            }
            out.push(at);
            k += 1;
        }
        out
    }
}

/// Buffers rows and emits an assessment each time the post-fault data
/// reaches the next report time. Rows are validated as they arrive;
/// rejected rows leave the buffer untouched.
#[derive(Debug)]
pub struct StreamAssessor {
    cfg: StreamConfig,
    layout: CsvLayout,
    buffer: RowBuffer,
    schedule: Vec<f64>,
    next: usize,
    rows_seen: usize,
    reported_len: usize,
}

impl StreamAssessor {
    pub fn new(layout: CsvLayout, cfg: StreamConfig) -> Self {
        let schedule = cfg.report_times();
        Self {
            buffer: RowBuffer::new(&layout),
            layout,
            schedule,
            cfg,
            next: 0,
            rows_seen: 0,
            reported_len: 0,
        }
    }

    pub fn layout(&self) -> &CsvLayout {
        &self.layout
    }

    /// Parses and appends one CSV record; returns any reports now due.
    pub fn push_record(&mut self, record: &csv::StringRecord) -> Vec<Result<StabilityAssessment, StreamError>> {
        let row = self.rows_seen;
        self.rows_seen += 1;
        match self.layout.parse_row(record, row) {
            Ok(sample) => self.push_sample(row, sample),
            Err(source) => vec![Err(StreamError::Row { row, source })],
        }
    }

    pub fn push_sample(&mut self, row: usize, sample: Sample) -> Vec<Result<StabilityAssessment, StreamError>> {
        if let Some(previous) = self.buffer.last_time() {
            if !(sample.time > previous) {
                return vec![Err(StreamError::OutOfOrder {
                    row,
                    time: sample.time,
                    previous,
                })];
            }
        }
        self.buffer.push(&sample);
        let mut out = Vec::new();
        while self.next < self.schedule.len() {
            let at = self.schedule[self.next];
            let Some(samples) = self.post_fault_samples() else {
                break;
            };
            let (dt, _) = self.span();
            if (samples as f64) < (at / dt).round() {
                break;
            }
            self.next += 1;
            self.reported_len = self.buffer.len();
            out.push(self.report(at).map_err(|source| StreamError::Report { at, source }));
        }
        out
    }

    /// Final assessment over everything buffered, if rows arrived after the
    /// last periodic report. Uses the configured window when enough data is
    /// available and the whole post-fault span otherwise.
    pub fn finish(&mut self) -> Option<Result<StabilityAssessment, StreamError>> {
        if self.buffer.len() == self.reported_len || self.buffer.len() < 2 {
            return None;
        }
        let samples = self.post_fault_samples()?;
        if samples < 2 {
            return None;
        }
        self.reported_len = self.buffer.len();
        let (dt, _) = self.span();
        let available = samples as f64 * dt;
        let at = self.cfg.assess.window.min(available);
        Some(self.report(at).map_err(|source| StreamError::Report { at, source }))
    }

    fn span(&self) -> (f64, f64) {
        let t = self.buffer.times();
        let n = t.len();
        if n < 2 {
            return (f64::INFINITY, t.first().copied().unwrap_or(0.0));
        }
        ((t[n - 1] - t[0]) / (n - 1) as f64, t[0])
    }

    /// Samples at or after `t0`, once the buffer reaches it.
    fn post_fault_samples(&self) -> Option<usize> {
        let (dt, start) = self.span();
        if !dt.is_finite() {
            return None;
        }
        let clear = ((self.cfg.t0 - start) / dt).round();
        if clear < 0.0 {
            return None;
        }
        self.buffer.len().checked_sub(clear as usize).filter(|&n| n > 0)
    }

    fn report(&self, at: f64) -> Result<StabilityAssessment, Error> {
        let traj = self.buffer.to_trajectory()?;
        let traj = ingest::prepare_trajectory(traj, Some(self.cfg.t0), self.cfg.lookback)?;
        let window = ingest::extract_post_fault_window(&traj, at)?;
        assess_window(traj.fault_clear_time(), &window, &self.cfg.assess)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::indices::assess;
    use crate::ingest::{write_csv, CsvSchema};
    use crate::synth::{synth_scenario, ScenarioKind, ScenarioParams};

    fn run(kind: ScenarioKind) -> (Vec<StabilityAssessment>, StabilityAssessment) {
        let s = synth_scenario(kind, &ScenarioParams::default()).unwrap();
        let mut csv_bytes = Vec::new();
        write_csv(&s.trajectory, &mut csv_bytes).unwrap();
        let mut rdr = csv::Reader::from_reader(csv_bytes.as_slice());
        let layout = CsvLayout::from_headers(rdr.headers().unwrap(), &CsvSchema::default()).unwrap();
        let cfg = StreamConfig::new(s.truth.fault_clear_time, AssessConfig::default());
        let mut streamer = StreamAssessor::new(layout, cfg.clone());
        let mut reports = Vec::new();
        for rec in rdr.records() {
            for r in streamer.push_record(&rec.unwrap()) {
                reports.push(r.unwrap());
            }
        }
        if let Some(r) = streamer.finish() {
            reports.push(r.unwrap());
        }
        let batch_traj = ingest::read_trajectory(csv_bytes.as_slice(), &CsvSchema::default()).unwrap();
        let batch_traj = ingest::prepare_trajectory(batch_traj, Some(cfg.t0), cfg.lookback).unwrap();
        let batch = assess(&batch_traj, &cfg.assess).unwrap();
        (reports, batch)
    }

    #[test]
    fn reports_follow_schedule_and_end_at_batch() {
        let (reports, batch) = run(ScenarioKind::StableOsc);
        assert!(reports.len() >= 25, "{}", reports.len());
        assert!(reports[0].latency_s <= 0.6 + 1e-9);
        assert_eq!(reports.last().unwrap(), &batch);
    }

    #[test]
    fn out_of_order_rows_are_rejected() {
        let s = synth_scenario(ScenarioKind::StableOsc, &ScenarioParams::default()).unwrap();
        let mut bytes = Vec::new();
        write_csv(&s.trajectory, &mut bytes).unwrap();
        let mut rdr = csv::Reader::from_reader(bytes.as_slice());
        let layout = CsvLayout::from_headers(rdr.headers().unwrap(), &CsvSchema::default()).unwrap();
        let mut streamer = StreamAssessor::new(layout, StreamConfig::new(1.1, AssessConfig::default()));
        let records: Vec<_> = rdr.records().map(Result::unwrap).collect();
        assert!(streamer.push_record(&records[0]).is_empty());
        assert!(streamer.push_record(&records[1]).is_empty());
        let out = streamer.push_record(&records[0]);
        assert!(matches!(out.as_slice(), [Err(StreamError::OutOfOrder { .. })]));
        assert!(streamer.push_record(&records[2]).is_empty());
    }
}
