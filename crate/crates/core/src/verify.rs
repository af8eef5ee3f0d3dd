//! Device-under-test stand-in, classifier hooks, and the back-end verifier.
//!
//! The reference DUT is a pass-through image pipeline: it returns exactly
//! what the sensor twin served, completing on its own clock. Verification
//! happens in the Bayer domain, comparing injected and captured mosaics.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::FrameRecord;
use crate::imaging::{pixel_diff, BayerImage, ImagingError};
use crate::power::PowerEstimate;
use crate::sensor::{CaptureSchedule, FrameOutcome};
use crate::time::{cycles_to_ps, ps_to_cycles_ceil, SimTime, TimeError};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("classifier table has no prediction for frame {0}")]
    TableMiss(usize),
    #[error("{path}: {msg}")]
    Table { path: PathBuf, msg: String },
    #[error("no classifier configured")]
    NoClassifier,
    #[error("cannot summarize an empty campaign")]
    Empty,
    #[error("DUT clock must be positive")]
    InvalidClock,
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Time(#[from] TimeError),
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ClassifierSpec {
    #[default]
    None,
    Oracle,
    Constant {
        label: String,
    },
    Table {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct DutConfig {
    /// Consumption clock of the device; `None` follows the sensor clock.
    pub readout_clock_hz: Option<u64>,
    pub classifier: ClassifierSpec,
}

/// Resolved classifier hook.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Classifier {
    #[default]
    None,
    /// Echoes the ground-truth label.
    Oracle,
    Constant(String),
    /// Replays predictions recorded offline, keyed by study frame index.
    Table(BTreeMap<usize, String>),
}

impl Classifier {
    /// Resolves a spec; relative table paths are taken from `base`.
    pub fn from_spec(spec: &ClassifierSpec, base: &Path) -> Result<Self, VerifyError> {
        Ok(match spec {
            ClassifierSpec::None => Classifier::None,
            ClassifierSpec::Oracle => Classifier::Oracle,
            ClassifierSpec::Constant { label } => Classifier::Constant(label.clone()),
            ClassifierSpec::Table { path } => Classifier::Table(load_classifier_table(&base.join(path))?),
        })
    }

    pub fn is_configured(&self) -> bool {
        !matches!(self, Classifier::None)
    }
}

/// Reads a `frame_index,predicted_label` CSV.
pub fn load_classifier_table(path: &Path) -> Result<BTreeMap<usize, String>, VerifyError> {
    let err = |msg: String| VerifyError::Table {
        path: path.to_path_buf(),
        msg,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| err(e.to_string()))?;
    let header = reader.headers().map_err(|e| err(e.to_string()))?.clone();
    if header.iter().ne(["frame_index", "predicted_label"]) {
        return Err(err("expected header frame_index,predicted_label".into()));
    }
    let mut table = BTreeMap::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let idx: usize = rec[0]
            .parse()
            .map_err(|_| err(format!("bad frame index {:?}", &rec[0])))?;
        table.insert(idx, rec[1].to_string());
    }
    Ok(table)
}

pub fn classify(
    hook: &Classifier,
    _img: &BayerImage,
    record: &FrameRecord,
) -> Result<String, VerifyError> {
    match hook {
        Classifier::None => Err(VerifyError::NoClassifier),
        Classifier::Oracle => Ok(record.label.clone()),
        Classifier::Constant(label) => Ok(label.clone()),
        Classifier::Table(t) => t
            .get(&record.index)
            .cloned()
            .ok_or(VerifyError::TableMiss(record.index)),
    }
}

/// Pass-through reference pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dut {
    pub clock_hz: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Captured {
    pub image: BayerImage,
    /// Readout end, rounded up to the next DUT clock edge.
    pub complete_at: SimTime,
}

impl Dut {
    pub fn new(clock_hz: u64) -> Result<Self, VerifyError> {
        if clock_hz == 0 {
            return Err(VerifyError::InvalidClock);
        }
        Ok(Self { clock_hz })
    }

    pub fn receive(
        &self,
        served: BayerImage,
        schedule: &CaptureSchedule,
    ) -> Result<Captured, VerifyError> {
        let edges = ps_to_cycles_ceil(schedule.usable_readout_end, self.clock_hz)?;
        Ok(Captured {
            image: served,
            complete_at: cycles_to_ps(edges, self.clock_hz)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameVerdict {
    pub frame_index: usize,
    pub flagged: bool,
    pub underrun_count: u64,
    pub deviations: u64,
    pub max_abs_delta: u16,
    pub label: String,
    pub predicted: Option<String>,
    pub label_match: Option<bool>,
    pub first_chunk_latency_ps: Option<SimTime>,
    pub transfer_ps: Option<SimTime>,
}

impl FrameVerdict {
    pub fn corrupted(&self) -> bool {
        self.deviations > 0
    }
}

pub fn verify_frame(
    injected: &BayerImage,
    captured: &BayerImage,
    outcome: &FrameOutcome,
    record: &FrameRecord,
    predicted: Option<String>,
) -> Result<FrameVerdict, VerifyError> {
    let diff = pixel_diff(injected, captured)?;
    let label_match = predicted.as_ref().map(|p| *p == record.label);
    Ok(FrameVerdict {
        frame_index: record.index,
        flagged: outcome.flagged,
        underrun_count: outcome.underrun_count,
        deviations: diff.deviations,
        max_abs_delta: diff.max_abs_delta,
        label: record.label.clone(),
        predicted,
        label_match,
        first_chunk_latency_ps: outcome.first_chunk_latency_ps,
        transfer_ps: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub min_ps: SimTime,
    pub mean_ps: f64,
    pub max_ps: SimTime,
}

impl LatencyStats {
    pub fn from_samples(samples: impl IntoIterator<Item = SimTime>) -> Option<Self> {
        let mut n = 0u64;
        let mut sum = 0u128;
        let mut min = SimTime::MAX;
        let mut max = SimTime::ZERO;
        for s in samples {
            n += 1;
            sum += s.as_ps() as u128;
            min = min.min(s);
            max = max.max(s);
        }
        (n > 0).then(|| LatencyStats {
            min_ps: min,
            mean_ps: sum as f64 / n as f64,
            max_ps: max,
        })
    }

    pub fn mean_ms(&self) -> f64 {
        self.mean_ps / 1e9
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub frames: u64,
    pub flagged: u64,
    pub corrupted: u64,
    pub clean: u64,
    pub total_deviations: u64,
    pub total_underrun: u64,
    pub predictions: u64,
    pub classifier_accuracy: Option<f64>,
    pub first_chunk_latency: Option<LatencyStats>,
    pub transfer_time: Option<LatencyStats>,
    pub power: Option<PowerEstimate>,
}

pub fn summarize(verdicts: &[FrameVerdict]) -> Result<CampaignReport, VerifyError> {
    if verdicts.is_empty() {
        return Err(VerifyError::Empty);
    }
    let count = |f: fn(&FrameVerdict) -> bool| verdicts.iter().filter(|v| f(v)).count() as u64;
    let frames = verdicts.len() as u64;
    let corrupted = count(FrameVerdict::corrupted);
    let predictions = count(|v| v.label_match.is_some());
    let matches = count(|v| v.label_match == Some(true));
    Ok(CampaignReport {
        frames,
        flagged: count(|v| v.flagged),
        corrupted,
        clean: frames - corrupted,
        total_deviations: verdicts.iter().map(|v| v.deviations).sum(),
        total_underrun: verdicts.iter().map(|v| v.underrun_count).sum(),
        predictions,
        classifier_accuracy: (predictions > 0).then(|| matches as f64 / predictions as f64),
        first_chunk_latency: LatencyStats::from_samples(
            verdicts.iter().filter_map(|v| v.first_chunk_latency_ps),
        ),
        transfer_time: LatencyStats::from_samples(verdicts.iter().filter_map(|v| v.transfer_ps)),
        power: None,
    })
}
