//! Loading, validation and windowing of PMU-style voltage trajectories.
//!
//! CSV layout: a header row with a `time` column in seconds, one `V:<id>`
//! column per voltage channel (per-unit) and optional `Q:<id>` reactive
//! power columns (MVAr). Samples must be uniformly spaced.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigDocument, ConfigError};

/// Default post-fault analysis window, seconds.
pub const DEFAULT_WINDOW_S: f64 = 3.0;
/// Default pre-fault lookback used for `V_pre`, seconds.
pub const DEFAULT_LOOKBACK_S: f64 = 0.5;
/// Voltage below which a sample is considered fault-depressed, per-unit.
pub const FAULT_VOLTAGE_PU: f64 = 0.6;

const UNIFORM_DT_RTOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("no voltage columns (expected headers starting with `{0}`)")]
    NoVoltageColumns(String),
    #[error("row {row}: column `{column}` has unparsable value `{value}`")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: channel `{channel}` has invalid voltage {value} (must be finite and > 0 pu)")]
    InvalidVoltage {
        row: usize,
        channel: String,
        value: f64,
    },
    #[error("row {row}: channel `{channel}` has non-finite reactive power {value}")]
    InvalidReactivePower {
        row: usize,
        channel: String,
        value: f64,
    },
    #[error("row {row}: non-uniform sampling (step {step} s, expected {expected} s)")]
    NonUniformSampling { row: usize, step: f64, expected: f64 },
    #[error("trajectory needs at least 2 samples, found {0}")]
    TooShort(usize),
    #[error("sample interval must be finite and > 0, found {0}")]
    InvalidDt(f64),
    #[error("channel `{channel}` has {found} samples, expected {expected}")]
    LengthMismatch {
        channel: String,
        expected: usize,
        found: usize,
    },
    #[error("duplicate channel id `{0}`")]
    DuplicateChannel(String),
    #[error("fault-clear index {index} outside trajectory of length {len}")]
    FaultIndexOutOfRange { index: usize, len: usize },
    #[error("fault-clear time {time} s outside recorded span [{start}, {end}] s")]
    FaultTimeOutOfRange { time: f64, start: f64, end: f64 },
    #[error("no fault-clearing point found (no sample below {FAULT_VOLTAGE_PU} pu followed by a 3-sample rise)")]
    FaultNotFound,
    #[error("analysis window is empty")]
    EmptyWindow,
    #[error("window of {requested} s exceeds available post-fault data ({available} s)")]
    WindowExceedsData { requested: f64, available: f64 },
    #[error("pre-fault lookback window is empty")]
    EmptyLookback,
    #[error("lookback of {requested} s exceeds pre-fault data ({available} s)")]
    LookbackExceedsData { requested: f64, available: f64 },
    #[error("pre-fault voltage vector has {found} entries for {expected} channels")]
    PrefaultMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// One measured bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub id: String,
    pub voltage: Vec<f64>,
    pub reactive_power: Option<Vec<f64>>,
}

impl Channel {
    pub fn new(id: impl Into<String>, voltage: Vec<f64>) -> Self {
        Self {
            id: id.into(),
            voltage,
            reactive_power: None,
        }
    }

    pub fn with_reactive_power(mut self, q: Vec<f64>) -> Self {
        self.reactive_power = Some(q);
        self
    }
}

/// Multi-channel, uniformly sampled voltage trajectory.
///
/// Immutable once built; every constructor validates the invariants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoltageTrajectory {
    channels: Vec<Channel>,
    dt: f64,
    start_time: f64,
    fault_clear_index: usize,
    prefault_voltage: Vec<f64>,
}

impl VoltageTrajectory {
    /// Builds a trajectory with `fault_clear_index = 0` and the first sample
    /// of each channel as its pre-fault voltage.
    pub fn new(channels: Vec<Channel>, dt: f64, start_time: f64) -> Result<Self, IngestError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(IngestError::InvalidDt(dt));
        }
        let Some(first) = channels.first() else {
            return Err(IngestError::NoVoltageColumns("V:".into()));
        };
        let len = first.voltage.len();
        if len < 2 {
            return Err(IngestError::TooShort(len));
        }
        for (i, ch) in channels.iter().enumerate() {
            if channels[..i].iter().any(|c| c.id == ch.id) {
                return Err(IngestError::DuplicateChannel(ch.id.clone()));
            }
            if ch.voltage.len() != len {
                return Err(IngestError::LengthMismatch {
                    channel: ch.id.clone(),
                    expected: len,
                    found: ch.voltage.len(),
                });
            }
            if let Some((row, &value)) = ch
                .voltage
                .iter()
                .enumerate()
                .find(|(_, v)| !(v.is_finite() && **v > 0.0))
            {
                return Err(IngestError::InvalidVoltage {
                    row,
                    channel: ch.id.clone(),
                    value,
                });
            }
            if let Some(q) = &ch.reactive_power {
                if q.len() != len {
                    return Err(IngestError::LengthMismatch {
                        channel: format!("Q:{}", ch.id),
                        expected: len,
                        found: q.len(),
                    });
                }
                if let Some((row, &value)) = q.iter().enumerate().find(|(_, v)| !v.is_finite()) {
                    return Err(IngestError::InvalidReactivePower {
                        row,
                        channel: ch.id.clone(),
                        value,
                    });
                }
            }
        }
        let prefault_voltage = channels.iter().map(|c| c.voltage[0]).collect();
        Ok(Self {
            channels,
            dt,
            start_time,
            fault_clear_index: 0,
            prefault_voltage,
        })
    }

    pub fn with_fault_clear_index(mut self, index: usize) -> Result<Self, IngestError> {
        if index >= self.len() {
            return Err(IngestError::FaultIndexOutOfRange {
                index,
                len: self.len(),
            });
        }
        self.fault_clear_index = index;
        Ok(self)
    }

    /// Sets the fault-clear point from an absolute time stamp (nearest sample).
    pub fn with_fault_clear_time(self, time: f64) -> Result<Self, IngestError> {
        let end = self.time_at(self.len() - 1);
        if !(time.is_finite() && time >= self.start_time - 0.5 * self.dt && time <= end + 0.5 * self.dt) {
            return Err(IngestError::FaultTimeOutOfRange {
                time,
                start: self.start_time,
                end,
            });
        }
        let index = (((time - self.start_time) / self.dt).round().max(0.0) as usize).min(self.len() - 1);
        self.with_fault_clear_index(index)
    }

    pub fn with_prefault_voltage(mut self, v_pre: Vec<f64>) -> Result<Self, IngestError> {
        if v_pre.len() != self.channels.len() {
            return Err(IngestError::PrefaultMismatch {
                expected: self.channels.len(),
                found: v_pre.len(),
            });
        }
        if let Some((i, &value)) = v_pre.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(IngestError::InvalidVoltage {
                row: 0,
                channel: self.channels[i].id.clone(),
                value,
            });
        }
        self.prefault_voltage = v_pre;
        Ok(self)
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn channel(&self, id: &str) -> Option<&Channel> {
        self.channels.iter().find(|c| c.id == id)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn len(&self) -> usize {
        self.channels[0].voltage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn fault_clear_index(&self) -> usize {
        self.fault_clear_index
    }

    pub fn fault_clear_time(&self) -> f64 {
        self.time_at(self.fault_clear_index)
    }

    pub fn prefault_voltage(&self) -> &[f64] {
        &self.prefault_voltage
    }

    pub fn time_at(&self, index: usize) -> f64 {
        self.start_time + index as f64 * self.dt
    }

    pub fn has_reactive_power(&self) -> bool {
        self.channels.iter().all(|c| c.reactive_power.is_some())
    }

    /// Voltage samples of every channel, in channel order.
    pub fn voltages(&self) -> Vec<&[f64]> {
        self.channels.iter().map(|c| c.voltage.as_slice()).collect()
    }

    /// First sample of the contiguous fault-depressed run just before the
    /// fault-clear index, or the fault-clear index itself when the samples
    /// before it are healthy.
    pub fn fault_onset_index(&self) -> usize {
        let depressed = |i: usize| self.channels.iter().any(|c| c.voltage[i] < FAULT_VOLTAGE_PU);
        let mut onset = self.fault_clear_index;
        while onset > 0 && depressed(onset - 1) {
            onset -= 1;
        }
        onset
    }

    fn slice(&self, start: usize, end: usize) -> Vec<Channel> {
        self.channels
            .iter()
            .map(|c| Channel {
                id: c.id.clone(),
                voltage: c.voltage[start..end].to_vec(),
                reactive_power: c.reactive_power.as_ref().map(|q| q[start..end].to_vec()),
            })
            .collect()
    }
}

/// Column naming used when reading CSV input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    pub time_column: String,
    pub voltage_prefix: String,
    pub reactive_prefix: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            time_column: "time".into(),
            voltage_prefix: "V:".into(),
            reactive_prefix: "Q:".into(),
        }
    }
}

pub fn load_trajectory(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<VoltageTrajectory, IngestError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_trajectory(file, schema)
}

pub fn read_trajectory<R: Read>(reader: R, schema: &CsvSchema) -> Result<VoltageTrajectory, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let layout = CsvLayout::from_headers(rdr.headers()?, schema)?;
    let mut rows = RowBuffer::new(&layout);
    for (row, record) in rdr.records().enumerate() {
        let sample = layout.parse_row(&record?, row)?;
        rows.push(&sample);
    }
    rows.to_trajectory()
}

/// Column positions of a CSV header.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvLayout {
    schema: CsvSchema,
    time_col: usize,
    voltage_cols: Vec<(String, usize)>,
    reactive_cols: Vec<Option<usize>>,
}

/// One parsed CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub time: f64,
    pub voltage: Vec<f64>,
    pub reactive_power: Vec<Option<f64>>,
}

impl CsvLayout {
    pub fn from_headers(headers: &csv::StringRecord, schema: &CsvSchema) -> Result<Self, IngestError> {
        let time_col = headers
            .iter()
            .position(|h| h == schema.time_column)
            .ok_or_else(|| IngestError::MissingColumn(schema.time_column.clone()))?;
        let voltage_cols: Vec<(String, usize)> = headers
            .iter()
            .enumerate()
            .filter_map(|(i, h)| h.strip_prefix(&schema.voltage_prefix).map(|id| (id.to_string(), i)))
            .collect();
        if voltage_cols.is_empty() {
            return Err(IngestError::NoVoltageColumns(schema.voltage_prefix.clone()));
        }
        let reactive_cols = voltage_cols
            .iter()
            .map(|(id, _)| {
                let name = format!("{}{}", schema.reactive_prefix, id);
                headers.iter().position(|h| h == name)
            })
            .collect();
        Ok(Self {
            schema: schema.clone(),
            time_col,
            voltage_cols,
            reactive_cols,
        })
    }

    pub fn channel_ids(&self) -> impl Iterator<Item = &str> {
        self.voltage_cols.iter().map(|(id, _)| id.as_str())
    }

    pub fn has_reactive_power(&self, channel: usize) -> bool {
        self.reactive_cols[channel].is_some()
    }

    /// Parses and validates one data row (`row` is zero-based, header excluded).
    pub fn parse_row(&self, record: &csv::StringRecord, row: usize) -> Result<Sample, IngestError> {
        let field = |col: usize, name: &str| -> Result<f64, IngestError> {
            let raw = record.get(col).unwrap_or("");
            raw.parse::<f64>().map_err(|_| IngestError::Parse {
                row,
                column: name.to_string(),
                value: raw.to_string(),
            })
        };
        let time = field(self.time_col, &self.schema.time_column)?;
        if !time.is_finite() {
            return Err(IngestError::Parse {
                row,
                column: self.schema.time_column.clone(),
                value: time.to_string(),
            });
        }
        let mut voltage = Vec::with_capacity(self.voltage_cols.len());
        let mut reactive_power = Vec::with_capacity(self.voltage_cols.len());
        for ((id, col), qcol) in self.voltage_cols.iter().zip(&self.reactive_cols) {
            let name = format!("{}{}", self.schema.voltage_prefix, id);
            let v = field(*col, &name).map_err(|e| match e {
                // An empty cell is a validation failure on the voltage itself.
                IngestError::Parse { row, .. } if record.get(*col).map(str::is_empty).unwrap_or(true) => {
                    IngestError::InvalidVoltage {
                        row,
                        channel: id.clone(),
                        value: f64::NAN,
                    }
                }
                other => other,
            })?;
            if !(v.is_finite() && v > 0.0) {
                return Err(IngestError::InvalidVoltage {
                    row,
                    channel: id.clone(),
                    value: v,
                });
            }
            voltage.push(v);
            reactive_power.push(match qcol {
                Some(qc) => {
                    let name = format!("{}{}", self.schema.reactive_prefix, id);
                    let q = field(*qc, &name)?;
                    if !q.is_finite() {
                        return Err(IngestError::InvalidReactivePower {
                            row,
                            channel: id.clone(),
                            value: q,
                        });
                    }
                    Some(q)
                }
                None => None,
            });
        }
        Ok(Sample {
            time,
            voltage,
            reactive_power,
        })
    }
}

/// Column-major accumulation of parsed rows.
#[derive(Debug, Clone, PartialEq)]
pub struct RowBuffer {
    ids: Vec<String>,
    has_q: Vec<bool>,
    times: Vec<f64>,
    volts: Vec<Vec<f64>>,
    vars: Vec<Vec<f64>>,
}

impl RowBuffer {
    pub fn new(layout: &CsvLayout) -> Self {
        let n = layout.voltage_cols.len();
        Self {
            ids: layout.channel_ids().map(str::to_string).collect(),
            has_q: (0..n).map(|c| layout.has_reactive_power(c)).collect(),
            times: Vec::new(),
            volts: vec![Vec::new(); n],
            vars: vec![Vec::new(); n],
        }
    }

    pub fn push(&mut self, sample: &Sample) {
        self.times.push(sample.time);
        for (c, v) in sample.voltage.iter().enumerate() {
            self.volts[c].push(*v);
            if let Some(q) = sample.reactive_power[c] {
                self.vars[c].push(q);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn last_time(&self) -> Option<f64> {
        self.times.last().copied()
    }

    /// Checks uniform sampling and builds a trajectory with `t0` at index 0.
    pub fn to_trajectory(&self) -> Result<VoltageTrajectory, IngestError> {
        if self.times.len() < 2 {
            return Err(IngestError::TooShort(self.times.len()));
        }
        let dt = check_uniform(&self.times)?;
        let channels = self
            .ids
            .iter()
            .zip(&self.volts)
            .zip(&self.vars)
            .zip(&self.has_q)
            .map(|(((id, v), q), &has_q)| Channel {
                id: id.clone(),
                voltage: v.clone(),
                reactive_power: has_q.then(|| q.clone()),
            })
            .collect();
        VoltageTrajectory::new(channels, dt, self.times[0])
    }
}

/// Mean step `(t_last - t_first) / (n - 1)`; every step must match it to a
/// relative tolerance of 1e-6.
pub fn check_uniform(times: &[f64]) -> Result<f64, IngestError> {
    let n = times.len();
    if n < 2 {
        return Err(IngestError::TooShort(n));
    }
    let dt = (times[n - 1] - times[0]) / (n - 1) as f64;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(IngestError::InvalidDt(dt));
    }
    for (i, w) in times.windows(2).enumerate() {
        let step = w[1] - w[0];
        if ((step - dt) / dt).abs() > UNIFORM_DT_RTOL {
            return Err(IngestError::NonUniformSampling {
                row: i + 1,
                step,
                expected: dt,
            });
        }
    }
    Ok(dt)
}

/// Writes the trajectory in the CSV input layout. Values are printed with
/// the shortest representation that parses back to the same `f64`.
pub fn write_csv<W: Write>(traj: &VoltageTrajectory, writer: W) -> Result<(), IngestError> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["time".to_string()];
    header.extend(traj.channels.iter().map(|c| format!("V:{}", c.id)));
    header.extend(
        traj.channels
            .iter()
            .filter(|c| c.reactive_power.is_some())
            .map(|c| format!("Q:{}", c.id)),
    );
    wtr.write_record(&header)?;
    for i in 0..traj.len() {
        let mut row = vec![traj.time_at(i).to_string()];
        row.extend(traj.channels.iter().map(|c| c.voltage[i].to_string()));
        row.extend(
            traj.channels
                .iter()
                .filter_map(|c| c.reactive_power.as_ref())
                .map(|q| q[i].to_string()),
        );
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|source| IngestError::Io {
        path: "<writer>".into(),
        source,
    })?;
    Ok(())
}

/// Returns the post-fault slice `[t0, t0 + duration)`. The slice starts a
/// new trajectory whose fault-clear index is 0; `V_pre` is carried over.
pub fn extract_post_fault_window(traj: &VoltageTrajectory, duration: f64) -> Result<VoltageTrajectory, IngestError> {
    let samples = (duration / traj.dt).round();
    if !(samples.is_finite() && samples >= 1.0) {
        return Err(IngestError::EmptyWindow);
    }
    let samples = samples as usize;
    let start = traj.fault_clear_index;
    let available = traj.len() - start;
    if samples > available {
        return Err(IngestError::WindowExceedsData {
            requested: duration,
            available: available as f64 * traj.dt,
        });
    }
    if samples < 2 {
        return Err(IngestError::TooShort(samples));
    }
    Ok(VoltageTrajectory {
        channels: traj.slice(start, start + samples),
        dt: traj.dt,
        start_time: traj.time_at(start),
        fault_clear_index: 0,
        prefault_voltage: traj.prefault_voltage.clone(),
    })
}

/// Per-channel mean over the `lookback` seconds preceding fault onset.
pub fn estimate_prefault_voltage(traj: &VoltageTrajectory, lookback: f64) -> Result<Vec<f64>, IngestError> {
    let samples = (lookback / traj.dt).round();
    if !(samples.is_finite() && samples >= 1.0) {
        return Err(IngestError::EmptyLookback);
    }
    let samples = samples as usize;
    let end = traj.fault_onset_index();
    if samples > end {
        return Err(IngestError::LookbackExceedsData {
            requested: lookback,
            available: end as f64 * traj.dt,
        });
    }
    Ok(traj
        .channels
        .iter()
        .map(|c| c.voltage[end - samples..end].iter().sum::<f64>() / samples as f64)
        .collect())
}

/// Finds the last sample below [`FAULT_VOLTAGE_PU`] on any channel that is
/// followed by a strictly rising run of three samples on that channel.
pub fn detect_fault_clear_index(traj: &VoltageTrajectory) -> Result<usize, IngestError> {
    let n = traj.len();
    if n < 4 {
        return Err(IngestError::FaultNotFound);
    }
    (0..n - 3)
        .rev()
        .find(|&i| {
            traj.channels.iter().any(|c| {
                let v = &c.voltage;
                v[i] < FAULT_VOLTAGE_PU && v[i] < v[i + 1] && v[i + 1] < v[i + 2] && v[i + 2] < v[i + 3]
            })
        })
        .ok_or(IngestError::FaultNotFound)
}

/// Ingest settings read from the global block of a config document.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestConfig {
    pub fault_clear_time: Option<f64>,
    pub window_duration: f64,
    pub lookback: f64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            fault_clear_time: None,
            window_duration: DEFAULT_WINDOW_S,
            lookback: DEFAULT_LOOKBACK_S,
        }
    }
}

impl IngestConfig {
    pub fn from_document(doc: &ConfigDocument) -> Result<Self, IngestError> {
        let mut cfg = Self::default();
        if let Some(e) = doc.global_value("fault_clear_time") {
            cfg.fault_clear_time = Some(e.parse_f64()?);
        }
        if let Some(e) = doc.global_value("window_duration") {
            let v = e.parse_f64()?;
            if !(v > 0.0) {
                return Err(e.invalid("must be > 0".into()).into());
            }
            cfg.window_duration = v;
        }
        if let Some(e) = doc.global_value("lookback") {
            let v = e.parse_f64()?;
            if !(v > 0.0) {
                return Err(e.invalid("must be > 0".into()).into());
            }
            cfg.lookback = v;
        }
        Ok(cfg)
    }
}

/// Locates the fault-clear point (explicit time wins over auto-detection)
/// and fills in `V_pre` from the lookback window when pre-fault data exists.
pub fn prepare_trajectory(
    traj: VoltageTrajectory,
    fault_clear_time: Option<f64>,
    lookback: f64,
) -> Result<VoltageTrajectory, IngestError> {
    let traj = match fault_clear_time {
        Some(t) => traj.with_fault_clear_time(t)?,
        None => {
            let idx = detect_fault_clear_index(&traj)?;
            traj.with_fault_clear_index(idx)?
        }
    };
    if traj.fault_onset_index() == 0 {
        log::warn!("no pre-fault samples; using the first sample of each channel as V_pre");
        return Ok(traj);
    }
    let available = traj.fault_onset_index() as f64 * traj.dt();
    let lookback = lookback.min(available);
    let v_pre = estimate_prefault_voltage(&traj, lookback)?;
    traj.with_prefault_voltage(v_pre)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv_text(rows: &[(f64, f64, f64, f64)]) -> String {
        let mut s = String::from("time,V:A,V:B,V:C\n");
        for (t, a, b, c) in rows {
            s.push_str(&format!("{t},{a},{b},{c}\n"));
        }
        s
    }

    fn flat(len: usize, dt: f64, v: f64) -> VoltageTrajectory {
        VoltageTrajectory::new(vec![Channel::new("A", vec![v; len])], dt, 0.0).unwrap()
    }

    #[test]
    fn loads_three_channel_csv_at_50hz() {
        let rows: Vec<_> = (0..100).map(|i| (i as f64 * 0.02, 1.0, 0.99, 1.01)).collect();
        let traj = read_trajectory(csv_text(&rows).as_bytes(), &CsvSchema::default()).unwrap();
        assert_eq!(traj.channels().len(), 3);
        assert!((traj.dt() - 0.02).abs() < 1e-15);
        assert_eq!(traj.len(), 100);
        assert!(!traj.has_reactive_power());
    }

    #[test]
    fn nan_row_is_rejected_with_row_index() {
        let mut text = csv_text(&[(0.0, 1.0, 1.0, 1.0), (0.02, 1.0, 1.0, 1.0)]);
        text.push_str("0.04,1.0,NaN,1.0\n");
        let err = read_trajectory(text.as_bytes(), &CsvSchema::default()).unwrap_err();
        match err {
            IngestError::InvalidVoltage { row, ref channel, .. } => {
                assert_eq!(row, 2);
                assert_eq!(channel, "B");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("row 2"));
    }

    #[test]
    fn negative_voltage_is_rejected() {
        let text = csv_text(&[(0.0, 1.0, 1.0, 1.0), (0.02, 1.0, -0.5, 1.0)]);
        let err = read_trajectory(text.as_bytes(), &CsvSchema::default()).unwrap_err();
        assert!(matches!(err, IngestError::InvalidVoltage { row: 1, .. }));
    }

    #[test]
    fn jittered_timestamps_are_rejected() {
        let rows: Vec<_> = (0..20)
            .map(|i| {
                let jitter = if i == 7 { 1e-3 * 0.02 } else { 0.0 };
                (i as f64 * 0.02 + jitter, 1.0, 1.0, 1.0)
            })
            .collect();
        let err = read_trajectory(csv_text(&rows).as_bytes(), &CsvSchema::default()).unwrap_err();
        assert!(matches!(err, IngestError::NonUniformSampling { .. }), "{err:?}");
    }

    #[test]
    fn missing_time_column() {
        let err = read_trajectory("t,V:A\n0,1\n".as_bytes(), &CsvSchema::default()).unwrap_err();
        assert!(matches!(err, IngestError::MissingColumn(ref c) if c == "time"));
        let err = read_trajectory("time,X\n0,1\n".as_bytes(), &CsvSchema::default()).unwrap_err();
        assert!(matches!(err, IngestError::NoVoltageColumns(_)));
    }

    #[test]
    fn reactive_columns_attach_to_their_channel() {
        let text = "time,V:G1,Q:G1,V:B2\n0,1.0,10,1.0\n0.02,0.99,12,1.0\n";
        let traj = read_trajectory(text.as_bytes(), &CsvSchema::default()).unwrap();
        assert_eq!(traj.channel("G1").unwrap().reactive_power.as_deref(), Some(&[10.0, 12.0][..]));
        assert!(traj.channel("B2").unwrap().reactive_power.is_none());
    }

    #[test]
    fn post_fault_window_is_150_samples() {
        let traj = flat(2500, 0.02, 1.0).with_fault_clear_time(1.0).unwrap();
        let w = extract_post_fault_window(&traj, 3.0).unwrap();
        assert_eq!(w.len(), 150);
        assert_eq!(w.fault_clear_index(), 0);
        assert!((w.start_time() - 1.0).abs() < 1e-12);
        assert_eq!(traj.len(), 2500);
    }

    #[test]
    fn window_errors() {
        let traj = flat(2500, 0.02, 1.0).with_fault_clear_time(1.0).unwrap();
        assert!(matches!(extract_post_fault_window(&traj, 0.0), Err(IngestError::EmptyWindow)));
        match extract_post_fault_window(&traj, 60.0) {
            Err(IngestError::WindowExceedsData { available, .. }) => assert!((available - 49.0).abs() < 1e-9),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn prefault_voltage_is_lookback_mean() {
        let traj = flat(100, 0.02, 1.0).with_fault_clear_index(50).unwrap();
        assert_eq!(estimate_prefault_voltage(&traj, 0.2).unwrap(), vec![1.0]);

        let v = vec![0.98, 1.00, 1.02, 0.3, 0.3, 0.9, 0.95, 0.97, 0.99];
        let traj = VoltageTrajectory::new(vec![Channel::new("A", v)], 0.02, 0.0)
            .unwrap()
            .with_fault_clear_index(4)
            .unwrap();
        assert_eq!(traj.fault_onset_index(), 3);
        let vp = estimate_prefault_voltage(&traj, 0.06).unwrap();
        assert!((vp[0] - 1.0).abs() < 1e-12);

        // Clearing marked on the first healthy sample after the fault.
        let healthy_clear = traj.clone().with_fault_clear_index(5).unwrap();
        assert_eq!(healthy_clear.fault_onset_index(), 3);

        assert!(matches!(estimate_prefault_voltage(&traj, 0.0), Err(IngestError::EmptyLookback)));
        assert!(matches!(
            estimate_prefault_voltage(&traj, 1.0),
            Err(IngestError::LookbackExceedsData { .. })
        ));
    }

    #[test]
    fn auto_detects_fault_clearing() {
        let mut v = vec![1.0; 20];
        for x in &mut v[5..9] {
            *x = 0.3;
        }
        v[9] = 0.5;
        v[10] = 0.7;
        v[11] = 0.85;
        v[12] = 0.95;
        let traj = VoltageTrajectory::new(vec![Channel::new("A", v)], 0.02, 0.0).unwrap();
        assert_eq!(detect_fault_clear_index(&traj).unwrap(), 9);
        assert!(matches!(detect_fault_clear_index(&flat(20, 0.02, 1.0)), Err(IngestError::FaultNotFound)));
    }

    #[test]
    fn explicit_fault_time_wins_over_detection() {
        let mut v = vec![1.0; 40];
        v[10] = 0.3;
        v[11] = 0.4;
        v[12] = 0.5;
        v[13] = 0.6;
        let traj = VoltageTrajectory::new(vec![Channel::new("A", v)], 0.02, 0.0).unwrap();
        let auto = prepare_trajectory(traj.clone(), None, 0.1).unwrap();
        assert_eq!(auto.fault_clear_index(), 11);
        let explicit = prepare_trajectory(traj, Some(0.5), 0.1).unwrap();
        assert_eq!(explicit.fault_clear_index(), 25);
    }

    #[test]
    fn config_keys() {
        let doc = ConfigDocument::parse("fault_clear_time = 1.5\nwindow_duration = 2\nlookback = 0.25\n").unwrap();
        let cfg = IngestConfig::from_document(&doc).unwrap();
        assert_eq!(cfg.fault_clear_time, Some(1.5));
        assert_eq!(cfg.window_duration, 2.0);
        assert_eq!(cfg.lookback, 0.25);
        let bad = ConfigDocument::parse("window_duration = -1\n").unwrap();
        assert!(IngestConfig::from_document(&bad).is_err());
    }

    #[test]
    fn constructor_invariants() {
        assert!(matches!(
            VoltageTrajectory::new(vec![Channel::new("A", vec![1.0])], 0.02, 0.0),
            Err(IngestError::TooShort(1))
        ));
        assert!(matches!(
            VoltageTrajectory::new(vec![Channel::new("A", vec![1.0, 1.0])], 0.0, 0.0),
            Err(IngestError::InvalidDt(_))
        ));
        assert!(matches!(
            VoltageTrajectory::new(
                vec![Channel::new("A", vec![1.0, 1.0]), Channel::new("B", vec![1.0])],
                0.02,
                0.0
            ),
            Err(IngestError::LengthMismatch { .. })
        ));
        assert!(flat(10, 0.02, 1.0).with_fault_clear_index(10).is_err());
    }
}
