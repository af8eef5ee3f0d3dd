//! Campaign configuration and the event-driven capture loop.
//!
//! One capture at a time moves through request, fetch, transfer, readout
//! and verification. The back-end plans every chunk arrival up front when
//! the fetch interrupt fires; the kernel then delivers those arrivals,
//! the deadline probe and the readout boundaries in time order.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::dataset::{
    load_manifest_with, DatasetError, FileMosaicSource, FrameRecord, ManifestOptions, MosaicSource,
    MosaicSpec, ProviderConfig, Study, SyntheticMosaicSource,
};
use crate::imaging::BayerImage;
use crate::kernel::{EventKind, KernelError, Scheduler, TraceEntry};
use crate::power::{estimate_power, PowerError, PowerParams};
use crate::sensor::{CaptureSchedule, SensorError, SensorProfile, SensorTwin, TwinConfig};
use crate::time::{SimTime, PS_PER_MS};
use crate::transport::{
    plan_transfer, sample_injected_delay, wire_round_trip, DelayDistribution, FaultConfig,
    LinkConfig, TransferPlan, TransportError,
};
use crate::verify::{
    classify, summarize, verify_frame, CampaignReport, Classifier, Dut, DutConfig, VerifyError,
};

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Sensor(#[from] SensorError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Power(#[from] PowerError),
    #[error("cannot read {path}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid configuration in {path}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
}

/// Where the frames come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StudySource {
    /// Deterministic pseudo-random mosaics with a GI-segment label mix.
    Synthetic { frames: usize, fps: f64 },
    Manifest {
        path: PathBuf,
        #[serde(default)]
        options: ManifestOptions,
    },
}

impl Default for StudySource {
    fn default() -> Self {
        StudySource::Synthetic {
            frames: 100,
            fps: 2.0,
        }
    }
}

/// When captures are requested.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CaptureSpec {
    /// One capture per study frame at its recorded timestamp.
    #[default]
    Study,
    /// `count` captures at a fixed rate; `count` defaults to the study length.
    Rate { fps: f64, count: Option<usize> },
    Timestamps { ms: Vec<u64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    #[serde(rename = "nominal-75mhz")]
    Nominal75Mhz,
    #[serde(rename = "lowpower-5mhz")]
    LowPower5Mhz,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Nominal75Mhz => "nominal-75mhz",
            Preset::LowPower5Mhz => "lowpower-5mhz",
        }
    }

    pub fn config(self) -> CampaignConfig {
        let mut cfg = CampaignConfig::default();
        match self {
            Preset::Nominal75Mhz => {
                cfg.sensor_clock_hz = 75_000_000;
                cfg.deadline_ps = None;
            }
            Preset::LowPower5Mhz => {
                cfg.sensor_clock_hz = 5_000_000;
                cfg.deadline_ps = Some(SimTime(120 * PS_PER_MS));
            }
        }
        cfg
    }
}

impl std::str::FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nominal-75mhz" => Ok(Preset::Nominal75Mhz),
            "lowpower-5mhz" => Ok(Preset::LowPower5Mhz),
            other => Err(format!(
                "unknown preset {other:?} (expected nominal-75mhz or lowpower-5mhz)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub name: String,
    pub seed: u64,
    pub study: StudySource,
    pub sensor: SensorProfile,
    pub sensor_clock_hz: u64,
    /// First-chunk deadline; `None` uses the physical window of one frame cycle.
    pub deadline_ps: Option<SimTime>,
    pub discard_first_frame: bool,
    pub link: LinkConfig,
    pub provider: ProviderConfig,
    pub faults: DelayDistribution,
    pub capture: CaptureSpec,
    pub dut: DutConfig,
    pub power: Option<PowerParams>,
    /// Record every processed event in the run result.
    pub trace: bool,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            name: "campaign".into(),
            seed: 0,
            study: StudySource::default(),
            sensor: SensorProfile::default(),
            sensor_clock_hz: 75_000_000,
            deadline_ps: None,
            discard_first_frame: true,
            link: LinkConfig::default(),
            provider: ProviderConfig::default(),
            faults: DelayDistribution::None,
            capture: CaptureSpec::Study,
            dut: DutConfig::default(),
            power: Some(PowerParams::default()),
            trace: false,
        }
    }
}

impl CampaignConfig {
    /// Parses a JSON document layered over `base`: keys present in the
    /// document replace the base value, nested objects merge recursively.
    pub fn from_json_over(text: &str, base: &CampaignConfig) -> Result<Self, serde_json::Error> {
        let mut merged = serde_json::to_value(base)?;
        let overlay: Value = serde_json::from_str(text)?;
        merge_json(&mut merged, overlay);
        serde_json::from_value(merged)
    }

    /// Loads a config file over `base` and makes relative paths inside it
    /// relative to the file's directory.
    pub fn load(path: &Path, base: &CampaignConfig) -> Result<Self, CampaignError> {
        let text = std::fs::read_to_string(path).map_err(|source| CampaignError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_json_over(&text, base).map_err(|source| CampaignError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.rebase(path.parent().unwrap_or(Path::new("")));
        Ok(cfg)
    }

    fn rebase(&mut self, dir: &Path) {
        if let StudySource::Manifest { path, .. } = &mut self.study {
            *path = dir.join(&*path);
        }
        if let crate::verify::ClassifierSpec::Table { path } = &mut self.dut.classifier {
            *path = dir.join(&*path);
        }
    }

    pub fn twin_config(&self) -> Result<TwinConfig, SensorError> {
        let mut cfg = TwinConfig::new(self.sensor, self.sensor_clock_hz)?;
        cfg.discard_first_frame = self.discard_first_frame;
        match self.deadline_ps {
            Some(d) => cfg.with_deadline(d),
            None => {
                let d = cfg.default_deadline()?;
                cfg.with_deadline(d)
            }
        }
    }

    pub fn fault_config(&self) -> FaultConfig {
        FaultConfig {
            delay: self.faults,
            seed: self.seed,
        }
    }

    pub fn mosaic_spec(&self) -> MosaicSpec {
        MosaicSpec {
            width: self.sensor.width,
            height: self.sensor.height,
            bit_depth: self.sensor.bit_depth,
            pattern: self.sensor.pattern,
        }
    }

    pub fn validate(&self) -> Result<(), CampaignError> {
        self.twin_config()?;
        self.link.validate()?;
        self.fault_config().validate()?;
        if let Some(p) = &self.power {
            p.validate()?;
        }
        if self.dut.readout_clock_hz == Some(0) {
            return Err(CampaignError::Config("DUT clock must be positive".into()));
        }
        match &self.study {
            StudySource::Synthetic { frames, fps } => {
                if *frames == 0 || !(*fps > 0.0 && fps.is_finite()) {
                    return Err(CampaignError::Config(
                        "synthetic study needs frames > 0 and a positive fps".into(),
                    ));
                }
            }
            StudySource::Manifest { path, .. } => {
                if !path.is_file() {
                    return Err(CampaignError::Config(format!(
                        "study manifest {} does not exist",
                        path.display()
                    )));
                }
            }
        }
        match &self.capture {
            CaptureSpec::Rate { fps, .. } if !(*fps > 0.0 && fps.is_finite()) => Err(
                CampaignError::Config(format!("capture rate {fps} must be positive")),
            ),
            CaptureSpec::Timestamps { ms } if ms.windows(2).any(|w| w[1] < w[0]) => Err(
                CampaignError::Config("capture timestamps must be non-decreasing".into()),
            ),
            _ => Ok(()),
        }
    }
}

fn merge_json(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    // A tagged enum switching variant must not inherit the old variant's fields.
                    Some(slot) if !switches_variant(slot, &v) => merge_json(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn switches_variant(base: &Value, overlay: &Value) -> bool {
    ["kind", "mode"].iter().any(|tag| {
        matches!((base.get(tag), overlay.get(tag)), (Some(a), Some(b)) if a != b)
    })
}

/// One line of the per-frame report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameLine {
    pub frame_index: usize,
    pub capture: u64,
    /// Fetch interrupt time.
    pub request_ps: SimTime,
    /// Requested capture time; later than `request_ps` never, earlier when
    /// the sensor was still busy with the previous frame.
    pub scheduled_ps: SimTime,
    /// First-chunk latency after the request.
    pub first_chunk_ps: SimTime,
    /// Latency of the last chunk after the request.
    pub complete_ps: SimTime,
    pub deadline_ps: SimTime,
    pub flagged: bool,
    pub underrun: u64,
    pub deviations: u64,
    pub max_abs_delta: u16,
    pub label: String,
    pub predicted: Option<String>,
    pub label_match: Option<bool>,
    pub lanes: u32,
    pub injected_delay_ps: SimTime,
    pub prep_ps: SimTime,
    pub transfer_ps: SimTime,
    /// Pixels already written when the usable readout began.
    pub buffered_at_readout: usize,
    pub readout_start_ps: SimTime,
    pub dut_complete_ps: SimTime,
}

/// Campaign summary: the aggregate report plus run metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub seed: u64,
    pub sensor_clock_hz: u64,
    pub lanes: u32,
    pub deadline_ps: SimTime,
    #[serde(flatten)]
    pub report: CampaignReport,
    pub corrupted_unflagged: u64,
    pub late_chunks: u64,
    pub events: u64,
    pub simulated_ps: SimTime,
    pub invariant_violations: Vec<String>,
}

impl RunSummary {
    /// Exit contract: no corrupted frame and no violated invariant.
    pub fn passed(&self) -> bool {
        self.report.corrupted == 0 && self.invariant_violations.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct CampaignRun {
    pub frames: Vec<FrameLine>,
    pub summary: RunSummary,
    pub trace: Option<Vec<TraceEntry>>,
}

/// Loads the configured study and mosaic source, then runs the campaign.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<CampaignRun, CampaignError> {
    cfg.validate()?;
    let classifier = Classifier::from_spec(&cfg.dut.classifier, Path::new(""))?;
    match &cfg.study {
        StudySource::Synthetic { frames, fps } => {
            let study = Study::synthetic(&cfg.name, *frames, *fps)?;
            let mut source = SyntheticMosaicSource::new(cfg.mosaic_spec(), cfg.seed);
            run_campaign_with(cfg, &study, &mut source, &classifier)
        }
        StudySource::Manifest { path, options } => {
            let study = load_manifest_with(path, options)?;
            let mut source = FileMosaicSource::new(&study, cfg.mosaic_spec());
            run_campaign_with(cfg, &study, &mut source, &classifier)
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Ev {
    Capture(usize),
    Chunk { capture: u64, chunk: usize },
    Window(u64),
    Deadline(u64),
    Complete(u64),
}

struct Active {
    id: u64,
    scheduled: SimTime,
    record: FrameRecord,
    injected: BayerImage,
    wire: Option<Vec<u16>>,
    plan: TransferPlan,
    delay: SimTime,
    prep: SimTime,
    schedule: CaptureSchedule,
    ingested: usize,
    buffered_at_readout: usize,
    deadline_missed: Option<bool>,
}

/// Requested capture times and, in study mode, the frame each one shows.
fn capture_plan(cfg: &CampaignConfig, study: &Study) -> Vec<(SimTime, Option<usize>)> {
    match &cfg.capture {
        CaptureSpec::Study => {
            let t0 = study.frames()[0].timestamp();
            study
                .frames()
                .iter()
                .enumerate()
                .map(|(i, f)| (f.timestamp() - t0, Some(i)))
                .collect()
        }
        CaptureSpec::Rate { fps, count } => (0..count.unwrap_or(study.len()))
            .map(|k| (SimTime::from_secs_f64(k as f64 / fps), None))
            .collect(),
        CaptureSpec::Timestamps { ms } => {
            ms.iter().map(|&m| (SimTime::from_ms(m), None)).collect()
        }
    }
}

/// Runs the capture loop against an already loaded study and source.
pub fn run_campaign_with(
    cfg: &CampaignConfig,
    study: &Study,
    source: &mut dyn MosaicSource,
    classifier: &Classifier,
) -> Result<CampaignRun, CampaignError> {
    cfg.validate()?;
    let twin_cfg = cfg.twin_config()?;
    let mut twin = SensorTwin::new(twin_cfg)?;
    let dut = Dut::new(cfg.dut.readout_clock_hz.unwrap_or(cfg.sensor_clock_hz))?;
    let faults = cfg.fault_config();
    let captures = capture_plan(cfg, study);
    let profile = cfg.sensor;
    let pixels = profile.pixels();
    let wire_bits = cfg.link.bits_per_pixel_on_wire;
    let t0 = study.frames()[0].timestamp();

    let mut sched: Scheduler<Ev> = Scheduler::new();
    if cfg.trace {
        sched = sched.with_trace();
    }
    if !captures.is_empty() {
        sched.schedule(captures[0].0, EventKind::CaptureRequest, Ev::Capture(0))?;
    }

    let mut active: Option<Active> = None;
    let mut lines = Vec::with_capacity(captures.len());
    let mut verdicts = Vec::with_capacity(captures.len());
    let mut violations = Vec::new();
    let mut late_chunks = 0u64;
    let mut events = 0u64;

    while let Some(ev) = sched.pop_until(SimTime::MAX) {
        events += 1;
        let now = ev.due;
        match ev.payload {
            Ev::Capture(k) => {
                let (scheduled, fixed) = captures[k];
                let schedule = twin.begin_capture(now)?;
                let id = twin.current_capture().expect("capture just began");
                let record = match fixed {
                    Some(i) => study.frames()[i].clone(),
                    None => study
                        .frame_at(t0 + scheduled, cfg.provider.end_policy)?
                        .clone(),
                };
                let injected = source.mosaic(&record)?;
                if injected.width() != profile.width
                    || injected.height() != profile.height
                    || injected.pattern() != profile.pattern
                    || injected.bit_depth() != profile.bit_depth
                {
                    return Err(CampaignError::Config(format!(
                        "frame {} does not match the sensor profile",
                        record.index
                    )));
                }
                // Converted frames usually fit the wire exactly; only keep a
                // narrowed copy when bits are actually lost.
                let narrowed = wire_round_trip(injected.samples(), profile.bit_depth, wire_bits);
                let wire = (narrowed != injected.samples()).then_some(narrowed);
                let delay = sample_injected_delay(&faults, k as u64);
                let prep = cfg.provider.prep_latency(cfg.seed, k as u64);
                let plan = plan_transfer(&cfg.link, prep, delay, now, pixels)?;

                for (i, c) in plan.chunks.iter().enumerate() {
                    sched.schedule(
                        c.arrival,
                        EventKind::ChunkArrival,
                        Ev::Chunk {
                            capture: id,
                            chunk: i,
                        },
                    )?;
                }
                sched.schedule(now + twin_cfg.deadline_ps, EventKind::DeadlineCheck, Ev::Deadline(id))?;
                sched.schedule(
                    schedule.usable_readout_start,
                    EventKind::ReadoutPixelWindow,
                    Ev::Window(id),
                )?;
                sched.schedule(schedule.frame_end, EventKind::ReadoutComplete, Ev::Complete(id))?;
                active = Some(Active {
                    id,
                    scheduled,
                    record,
                    injected,
                    wire,
                    plan,
                    delay,
                    prep,
                    schedule,
                    ingested: 0,
                    buffered_at_readout: 0,
                    deadline_missed: None,
                });
            }
            Ev::Chunk { capture, chunk } => match active.as_mut() {
                Some(a) if a.id == capture => {
                    let c = &a.plan.chunks[chunk];
                    let samples = a.wire.as_deref().unwrap_or(a.injected.samples());
                    twin.ingest_chunk(&samples[c.start..c.end], now)?;
                    a.ingested = c.end;
                }
                _ => late_chunks += 1,
            },
            Ev::Window(id) => {
                if let Some(a) = active.as_mut().filter(|a| a.id == id) {
                    a.buffered_at_readout = a.ingested;
                }
            }
            Ev::Deadline(id) => {
                if let Some(a) = active.as_mut().filter(|a| a.id == id) {
                    a.deadline_missed = Some(twin.deadline_missed(now)?);
                }
            }
            Ev::Complete(id) => {
                let a = active.take().filter(|a| a.id == id).ok_or_else(|| {
                    CampaignError::Config(format!("readout completion for unknown capture {id}"))
                })?;
                let outcome = twin.finalize_frame(now)?;
                let captured = dut.receive(outcome.served.clone(), &outcome.schedule)?;
                let predicted = if classifier.is_configured() {
                    Some(classify(classifier, &captured.image, &a.record)?)
                } else {
                    None
                };
                let mut verdict =
                    verify_frame(&a.injected, &captured.image, &outcome, &a.record, predicted)?;
                let first = a.plan.first_arrival() - a.schedule.interrupt_at;
                verdict.first_chunk_latency_ps = Some(first);
                verdict.transfer_ps = Some(a.plan.total_duration_ps);

                check_frame(&twin_cfg, &a, &outcome, verdict.deviations, &mut violations)?;

                lines.push(FrameLine {
                    frame_index: a.record.index,
                    capture: a.id,
                    request_ps: a.schedule.interrupt_at,
                    scheduled_ps: a.scheduled,
                    first_chunk_ps: first,
                    complete_ps: a.plan.complete_at() - a.schedule.interrupt_at,
                    deadline_ps: twin_cfg.deadline_ps,
                    flagged: verdict.flagged,
                    underrun: verdict.underrun_count,
                    deviations: verdict.deviations,
                    max_abs_delta: verdict.max_abs_delta,
                    label: verdict.label.clone(),
                    predicted: verdict.predicted.clone(),
                    label_match: verdict.label_match,
                    lanes: cfg.link.lanes,
                    injected_delay_ps: a.delay,
                    prep_ps: a.prep,
                    transfer_ps: a.plan.total_duration_ps,
                    buffered_at_readout: a.buffered_at_readout,
                    readout_start_ps: a.schedule.usable_readout_start,
                    dut_complete_ps: captured.complete_at,
                });
                verdicts.push(verdict);

                let next = a.id as usize + 1;
                if next < captures.len() {
                    let due = captures[next].0.max(now);
                    sched.schedule(due, EventKind::CaptureRequest, Ev::Capture(next))?;
                }
            }
        }
    }

    let horizon = match &cfg.capture {
        CaptureSpec::Rate { fps, .. } => {
            SimTime::from_secs_f64(captures.len() as f64 / fps).max(sched.now())
        }
        _ => sched.now(),
    };
    let log = twin.activity_until(horizon);
    if log.active_ps + log.idle_ps != log.span() {
        violations.push("activity log does not cover the simulated span".into());
    }

    let mut report = summarize(&verdicts)?;
    if let Some(params) = &cfg.power {
        report.power = Some(estimate_power(&log, params)?);
    }
    let corrupted_unflagged = verdicts.iter().filter(|v| v.corrupted() && !v.flagged).count();

    Ok(CampaignRun {
        frames: lines,
        summary: RunSummary {
            name: cfg.name.clone(),
            seed: cfg.seed,
            sensor_clock_hz: cfg.sensor_clock_hz,
            lanes: cfg.link.lanes,
            deadline_ps: twin_cfg.deadline_ps,
            report,
            corrupted_unflagged: corrupted_unflagged as u64,
            late_chunks,
            events,
            simulated_ps: horizon,
            invariant_violations: violations,
        },
        trace: sched.trace().map(<[TraceEntry]>::to_vec),
    })
}

/// True when, measured from the first chunk, every later chunk lands no
/// later than its first pixel would be read if readout began with the
/// first chunk. Under that condition an on-time start implies no underrun.
pub fn plan_keeps_pace(twin: &TwinConfig, plan: &TransferPlan) -> Result<bool, SensorError> {
    let first = plan.first_arrival();
    for c in &plan.chunks {
        if c.arrival - first > twin.readout_offset(c.start)? {
            return Ok(false);
        }
    }
    Ok(true)
}

fn check_frame(
    twin: &TwinConfig,
    a: &Active,
    outcome: &crate::sensor::FrameOutcome,
    deviations: u64,
    violations: &mut Vec<String>,
) -> Result<(), CampaignError> {
    let idx = a.record.index;
    if deviations > outcome.underrun_count {
        violations.push(format!(
            "capture {}: {} deviations exceed {} underrun pixels",
            a.id, deviations, outcome.underrun_count
        ));
    }
    if a.deadline_missed != Some(outcome.flagged) {
        violations.push(format!(
            "capture {}: deadline probe {:?} disagrees with flag {}",
            a.id, a.deadline_missed, outcome.flagged
        ));
    }
    let on_time = a.plan.first_arrival() <= a.schedule.usable_readout_start;
    if on_time && plan_keeps_pace(twin, &a.plan)? && outcome.underrun_count > 0 {
        violations.push(format!(
            "capture {} (frame {idx}): on-time paced transfer reported {} underrun pixels",
            a.id, outcome.underrun_count
        ));
    }
    Ok(())
}
