//! Timing-accurate twin of a NanEyeC-class miniature image sensor.
//!
//! After leaving idle the sensor starts transmitting after
//! `idle_to_tx_cycles`, but that first frame carries rolling-shutter
//! artefacts and is discarded. The first usable pixel leaves one full
//! `frame_cycle_cycles` after wake-up. The twin holds a single image
//! buffer: any pixel read out before its data has arrived from the back-end
//! is served with whatever the buffer held before.
//!
//! Readout is linearized to `cycles_per_pixel` per pixel from the usable
//! start; the rest of the frame cycle is trailing blanking.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{BayerImage, BayerPattern};
use crate::time::{cycles_to_ps, SimTime, TimeError};

pub const MAX_SENSOR_CLOCK_HZ: u64 = 75_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SensorError {
    #[error("a capture is already in flight")]
    Busy,
    #[error("no capture is in flight")]
    NotCapturing,
    #[error("chunk of {len} samples overflows the single-image buffer ({remaining} left)")]
    Overflow { len: usize, remaining: usize },
    #[error("pixel {index} is outside a {pixels}-pixel frame")]
    OutOfRange { index: usize, pixels: usize },
    #[error("frame cannot finish at {t:?}, readout runs until {readout_end:?}")]
    TooEarly { t: SimTime, readout_end: SimTime },
    #[error("chunk arrived at {arrival:?}, before its request at {request:?}")]
    ArrivalBeforeRequest { arrival: SimTime, request: SimTime },
    #[error("invalid sensor configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Time(#[from] TimeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorProfile {
    pub width: u32,
    pub height: u32,
    pub bit_depth: u16,
    pub idle_to_tx_cycles: u64,
    pub frame_cycle_cycles: u64,
    pub cycles_per_pixel: u64,
    pub pattern: BayerPattern,
    /// Extra exposure cycles added before both readouts. Zero is the
    /// lowest exposure setting.
    pub exposure_offset_cycles: u64,
}

impl Default for SensorProfile {
    fn default() -> Self {
        Self {
            width: 320,
            height: 320,
            bit_depth: 10,
            idle_to_tx_cycles: 11_520,
            frame_cycle_cycles: 1_298_880,
            cycles_per_pixel: 10,
            pattern: BayerPattern::Bggr,
            exposure_offset_cycles: 0,
        }
    }
}

impl SensorProfile {
    pub fn pixels(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn payload_bits_per_frame(&self) -> u64 {
        self.pixels() as u64 * self.bit_depth as u64
    }

    pub fn readout_cycles(&self) -> u64 {
        self.pixels() as u64 * self.cycles_per_pixel
    }

    pub fn validate(&self) -> Result<(), SensorError> {
        let bad = |m: String| Err(SensorError::Config(m));
        if self.width == 0 || self.height == 0 || self.width % 2 != 0 || self.height % 2 != 0 {
            return bad(format!("{}x{} is not a valid mosaic size", self.width, self.height));
        }
        if !(8..=16).contains(&self.bit_depth) {
            return bad(format!("bit depth {} is outside 8..=16", self.bit_depth));
        }
        if self.cycles_per_pixel == 0 {
            return bad("cycles_per_pixel must be positive".into());
        }
        // One bit per clock on the sensor line.
        if self.payload_bits_per_frame() > self.frame_cycle_cycles {
            return bad(format!(
                "{} payload bits do not fit in a {}-cycle frame",
                self.payload_bits_per_frame(),
                self.frame_cycle_cycles
            ));
        }
        if self.readout_cycles() > self.frame_cycle_cycles {
            return bad(format!(
                "readout of {} cycles exceeds the {}-cycle frame",
                self.readout_cycles(),
                self.frame_cycle_cycles
            ));
        }
        if self.idle_to_tx_cycles > self.frame_cycle_cycles {
            return bad("idle_to_tx_cycles exceeds the frame cycle".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwinConfig {
    pub profile: SensorProfile,
    pub clock_hz: u64,
    pub deadline_ps: SimTime,
    pub discard_first_frame: bool,
}

impl TwinConfig {
    /// Deadline defaults to the physical window: one frame cycle.
    pub fn new(profile: SensorProfile, clock_hz: u64) -> Result<Self, SensorError> {
        let deadline_ps = cycles_to_ps(profile.frame_cycle_cycles, clock_hz)?;
        let cfg = Self {
            profile,
            clock_hz,
            deadline_ps,
            discard_first_frame: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_deadline(mut self, deadline_ps: SimTime) -> Result<Self, SensorError> {
        self.deadline_ps = deadline_ps;
        self.validate()?;
        Ok(self)
    }

    pub fn frame_period(&self) -> Result<SimTime, SensorError> {
        Ok(cycles_to_ps(self.profile.frame_cycle_cycles, self.clock_hz)?)
    }

    pub fn default_deadline(&self) -> Result<SimTime, SensorError> {
        self.frame_period()
    }

    pub fn uses_default_deadline(&self) -> bool {
        self.default_deadline().is_ok_and(|d| d == self.deadline_ps)
    }

    pub fn validate(&self) -> Result<(), SensorError> {
        self.profile.validate()?;
        if self.clock_hz == 0 || self.clock_hz > MAX_SENSOR_CLOCK_HZ {
            return Err(SensorError::Config(format!(
                "sensor clock {} Hz is outside (0, 75 MHz]",
                self.clock_hz
            )));
        }
        if self.deadline_ps == SimTime::ZERO {
            return Err(SensorError::Config("deadline must be positive".into()));
        }
        let sched = self.schedule_at(SimTime::ZERO)?;
        if self.deadline_ps > sched.usable_readout_end {
            return Err(SensorError::Config(format!(
                "deadline {} is after readout completes at {}",
                self.deadline_ps, sched.usable_readout_end
            )));
        }
        Ok(())
    }

    /// Readout time of pixel `i` relative to the usable readout start.
    pub fn readout_offset(&self, i: usize) -> Result<SimTime, SensorError> {
        Ok(cycles_to_ps(
            i as u64 * self.profile.cycles_per_pixel,
            self.clock_hz,
        )?)
    }

    pub fn schedule_at(&self, t: SimTime) -> Result<CaptureSchedule, SensorError> {
        let p = &self.profile;
        let c = |cycles| cycles_to_ps(cycles, self.clock_hz);
        let discard_readout_start = t + c(p.idle_to_tx_cycles + p.exposure_offset_cycles)?;
        let usable_readout_start = if self.discard_first_frame {
            t + c(p.frame_cycle_cycles + p.exposure_offset_cycles)?
        } else {
            discard_readout_start
        };
        Ok(CaptureSchedule {
            interrupt_at: t,
            discard_readout_start,
            usable_readout_start,
            usable_readout_end: usable_readout_start + c(p.readout_cycles())?,
            frame_end: usable_readout_start + c(p.frame_cycle_cycles)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CaptureSchedule {
    /// Fetch interrupt towards the back-end; also the wake-up time.
    pub interrupt_at: SimTime,
    pub discard_readout_start: SimTime,
    pub usable_readout_start: SimTime,
    pub usable_readout_end: SimTime,
    /// End of the usable frame cycle including trailing blanking; the
    /// sensor returns to idle here.
    pub frame_end: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TwinState {
    Idle,
    Active,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ActivityLog {
    pub idle_ps: SimTime,
    pub active_ps: SimTime,
    pub transitions: Vec<(SimTime, TwinState)>,
    covered_until: SimTime,
    state: TwinState,
}

impl Default for ActivityLog {
    fn default() -> Self {
        Self {
            idle_ps: SimTime::ZERO,
            active_ps: SimTime::ZERO,
            transitions: vec![(SimTime::ZERO, TwinState::Idle)],
            covered_until: SimTime::ZERO,
            state: TwinState::Idle,
        }
    }
}

impl ActivityLog {
    /// Log that holds exactly the given split, for closed-form estimates.
    pub fn from_spans(active_ps: SimTime, idle_ps: SimTime) -> Self {
        Self {
            idle_ps,
            active_ps,
            transitions: vec![(SimTime::ZERO, TwinState::Idle)],
            covered_until: idle_ps + active_ps,
            state: TwinState::Idle,
        }
    }

    pub fn span(&self) -> SimTime {
        self.idle_ps + self.active_ps
    }

    pub fn covered_until(&self) -> SimTime {
        self.covered_until
    }

    fn advance(&mut self, t: SimTime) {
        let dt = t.saturating_sub(self.covered_until);
        match self.state {
            TwinState::Idle => self.idle_ps += dt,
            TwinState::Active => self.active_ps += dt,
        }
        self.covered_until = self.covered_until.max(t);
    }

    fn enter(&mut self, t: SimTime, state: TwinState) {
        self.advance(t);
        self.state = state;
        self.transitions.push((t, state));
    }

    /// Extends the current state up to `t` without a transition.
    pub fn close(&mut self, t: SimTime) {
        self.advance(t);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WriteProgress {
    pub write_ptr: usize,
    pub remaining: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameOutcome {
    pub capture_id: u64,
    pub schedule: CaptureSchedule,
    /// Interrupt to first chunk; `None` if nothing arrived before the frame ended.
    pub first_chunk_latency_ps: Option<SimTime>,
    pub flagged: bool,
    pub underrun_count: u64,
    pub served: BayerImage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Landed {
    start: usize,
    end: usize,
    arrival: SimTime,
}

#[derive(Debug)]
struct InFlight {
    id: u64,
    schedule: CaptureSchedule,
    stale: Vec<u16>,
    write_ptr: usize,
    landed: Vec<Landed>,
    first_arrival: Option<SimTime>,
}

#[derive(Debug)]
pub struct SensorTwin {
    config: TwinConfig,
    buffer: Vec<u16>,
    capture: Option<InFlight>,
    next_id: u64,
    log: ActivityLog,
}

impl SensorTwin {
    pub fn new(config: TwinConfig) -> Result<Self, SensorError> {
        config.validate()?;
        Ok(Self {
            buffer: vec![0; config.profile.pixels()],
            config,
            capture: None,
            next_id: 0,
            log: ActivityLog::default(),
        })
    }

    pub fn config(&self) -> &TwinConfig {
        &self.config
    }

    pub fn state(&self) -> TwinState {
        if self.capture.is_some() {
            TwinState::Active
        } else {
            TwinState::Idle
        }
    }

    pub fn current_capture(&self) -> Option<u64> {
        self.capture.as_ref().map(|c| c.id)
    }

    pub fn current_schedule(&self) -> Option<CaptureSchedule> {
        self.capture.as_ref().map(|c| c.schedule)
    }

    pub fn activity(&self) -> &ActivityLog {
        &self.log
    }

    /// Closes the activity ledger at `t` and returns a snapshot.
    pub fn activity_until(&mut self, t: SimTime) -> ActivityLog {
        self.log.close(t);
        self.log.clone()
    }

    /// Wakes the sensor at `t` and raises the fetch interrupt.
    pub fn begin_capture(&mut self, t: SimTime) -> Result<CaptureSchedule, SensorError> {
        if self.capture.is_some() {
            return Err(SensorError::Busy);
        }
        let schedule = self.config.schedule_at(t)?;
        self.log.enter(t, TwinState::Active);
        self.capture = Some(InFlight {
            id: self.next_id,
            schedule,
            stale: self.buffer.clone(),
            write_ptr: 0,
            landed: Vec::new(),
            first_arrival: None,
        });
        self.next_id += 1;
        Ok(schedule)
    }

    /// Writes the next contiguous run of samples into the frame buffer.
    pub fn ingest_chunk(
        &mut self,
        samples: &[u16],
        arrival: SimTime,
    ) -> Result<WriteProgress, SensorError> {
        let cap = self.capture.as_mut().ok_or(SensorError::NotCapturing)?;
        let pixels = self.buffer.len();
        let remaining = pixels - cap.write_ptr;
        if samples.len() > remaining {
            return Err(SensorError::Overflow {
                len: samples.len(),
                remaining,
            });
        }
        if arrival < cap.schedule.interrupt_at {
            return Err(SensorError::ArrivalBeforeRequest {
                arrival,
                request: cap.schedule.interrupt_at,
            });
        }
        let start = cap.write_ptr;
        let end = start + samples.len();
        self.buffer[start..end].copy_from_slice(samples);
        cap.write_ptr = end;
        cap.landed.push(Landed {
            start,
            end,
            arrival,
        });
        cap.first_arrival.get_or_insert(arrival);
        Ok(WriteProgress {
            write_ptr: end,
            remaining: pixels - end,
        })
    }

    /// Deadline probe: `true` if no data has arrived by `t`.
    pub fn deadline_missed(&self, t: SimTime) -> Result<bool, SensorError> {
        let cap = self.capture.as_ref().ok_or(SensorError::NotCapturing)?;
        Ok(cap.first_arrival.is_none_or(|a| a > t))
    }

    pub fn readout_pixel_time(&self, i: usize) -> Result<SimTime, SensorError> {
        let cap = self.capture.as_ref().ok_or(SensorError::NotCapturing)?;
        let pixels = self.config.profile.pixels();
        if i >= pixels {
            return Err(SensorError::OutOfRange { index: i, pixels });
        }
        Ok(cap.schedule.usable_readout_start + self.config.readout_offset(i)?)
    }

    /// Ends the capture: builds what the device actually read out and
    /// returns the sensor to idle at `t`.
    pub fn finalize_frame(&mut self, t: SimTime) -> Result<FrameOutcome, SensorError> {
        let cap = self.capture.as_ref().ok_or(SensorError::NotCapturing)?;
        if t < cap.schedule.usable_readout_end {
            return Err(SensorError::TooEarly {
                t,
                readout_end: cap.schedule.usable_readout_end,
            });
        }
        let cap = self.capture.take().expect("checked above");
        let readout_start = cap.schedule.usable_readout_start;

        let mut served = cap.stale;
        let mut underrun = (served.len() - cap.write_ptr) as u64;
        for chunk in &cap.landed {
            // Pixels whose readout precedes the chunk's arrival are stale; readout
            // time increases with index, so they form a prefix of the chunk.
            let mut lo = chunk.start;
            let mut hi = chunk.end;
            while lo < hi {
                let mid = lo + (hi - lo) / 2;
                if readout_start + self.config.readout_offset(mid)? < chunk.arrival {
                    lo = mid + 1;
                } else {
                    hi = mid;
                }
            }
            underrun += (lo - chunk.start) as u64;
            served[lo..chunk.end].copy_from_slice(&self.buffer[lo..chunk.end]);
        }

        let latency = cap.first_arrival.map(|a| a - cap.schedule.interrupt_at);
        let flagged = latency.is_none_or(|l| l > self.config.deadline_ps);
        self.log.enter(t, TwinState::Idle);

        let p = &self.config.profile;
        let served = BayerImage::new(p.width, p.height, p.bit_depth, p.pattern, served)
            .map_err(|e| SensorError::Config(e.to_string()))?;
        Ok(FrameOutcome {
            capture_id: cap.id,
            schedule: cap.schedule,
            first_chunk_latency_ps: latency,
            flagged,
            underrun_count: underrun,
            served,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrameRate {
    pub fps: f64,
    pub payload_bits_per_s: f64,
}

/// Continuous-streaming limit: one frame per frame cycle, no idle.
pub fn max_frame_rate(profile: &SensorProfile, clock_hz: u64) -> Result<FrameRate, SensorError> {
    if clock_hz == 0 {
        return Err(SensorError::Time(TimeError::InvalidClock));
    }
    let fps = clock_hz as f64 / profile.frame_cycle_cycles as f64;
    Ok(FrameRate {
        fps,
        payload_bits_per_s: fps * profile.payload_bits_per_frame() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MHZ: u64 = 1_000_000;

    fn twin(clock: u64) -> SensorTwin {
        SensorTwin::new(TwinConfig::new(SensorProfile::default(), clock).unwrap()).unwrap()
    }

    #[test]
    fn schedule_at_75mhz() {
        let mut t = twin(75 * MHZ);
        let s = t.begin_capture(SimTime::ZERO).unwrap();
        assert_eq!(s.discard_readout_start, SimTime::from_ns(153_600));
        assert_eq!(s.usable_readout_start, SimTime(17_318_400_000));
        // 1_024_000 readout cycles at 75 MHz.
        assert_eq!(s.usable_readout_end - s.usable_readout_start, SimTime(13_653_333_333));
        assert_eq!(s.frame_end, SimTime(2 * 17_318_400_000));
    }

    #[test]
    fn schedule_at_5mhz() {
        let mut t = twin(5 * MHZ);
        let s = t.begin_capture(SimTime::ZERO).unwrap();
        assert_eq!(s.usable_readout_start, SimTime::from_us(259_776));
    }

    #[test]
    fn no_discard_starts_usable_readout_early() {
        let mut cfg = TwinConfig::new(SensorProfile::default(), 75 * MHZ).unwrap();
        cfg.discard_first_frame = false;
        let s = cfg.schedule_at(SimTime::ZERO).unwrap();
        assert_eq!(s.usable_readout_start, s.discard_readout_start);
    }

    #[test]
    fn second_capture_is_busy() {
        let mut t = twin(75 * MHZ);
        t.begin_capture(SimTime::ZERO).unwrap();
        assert_eq!(t.begin_capture(SimTime(10)), Err(SensorError::Busy));
    }

    #[test]
    fn clock_and_deadline_limits() {
        assert!(TwinConfig::new(SensorProfile::default(), 76 * MHZ).is_err());
        assert!(TwinConfig::new(SensorProfile::default(), 0).is_err());
        let cfg = TwinConfig::new(SensorProfile::default(), 5 * MHZ).unwrap();
        assert!(cfg.with_deadline(SimTime::from_ms(120)).is_ok());
        assert!(cfg.with_deadline(SimTime::ZERO).is_err());
        assert!(cfg.with_deadline(SimTime::from_secs(1)).is_err());
        assert!(cfg.uses_default_deadline());
    }

    #[test]
    fn readout_pixel_times() {
        let mut t = twin(75 * MHZ);
        let s = t.begin_capture(SimTime::ZERO).unwrap();
        assert_eq!(t.readout_pixel_time(0).unwrap(), s.usable_readout_start);
        // 1_023_990 cycles / 75 MHz = 13.6532 ms
        assert_eq!(
            t.readout_pixel_time(102_399).unwrap() - s.usable_readout_start,
            SimTime(13_653_200_000)
        );
        assert!(matches!(
            t.readout_pixel_time(102_400),
            Err(SensorError::OutOfRange { .. })
        ));

        let mut t = twin(5 * MHZ);
        let s = t.begin_capture(SimTime::ZERO).unwrap();
        assert_eq!(
            t.readout_pixel_time(51_200).unwrap() - s.usable_readout_start,
            SimTime::from_us(102_400)
        );
    }

    #[test]
    fn early_full_image_has_no_underrun() {
        let mut t = twin(75 * MHZ);
        let img: Vec<u16> = (0..102_400u32).map(|i| (i % 1024) as u16).collect();
        t.begin_capture(SimTime::ZERO).unwrap();
        let p = t.ingest_chunk(&img[..51_200], SimTime::from_ms(6)).unwrap();
        assert_eq!(p.write_ptr, 51_200);
        let p = t.ingest_chunk(&img[51_200..], SimTime::from_ms(12)).unwrap();
        assert_eq!(p, WriteProgress { write_ptr: 102_400, remaining: 0 });
        let end = t.current_schedule().unwrap().frame_end;
        let out = t.finalize_frame(end).unwrap();
        assert_eq!(out.underrun_count, 0);
        assert!(!out.flagged);
        assert_eq!(out.served.samples(), &img[..]);
        assert_eq!(out.first_chunk_latency_ps, Some(SimTime::from_ms(6)));
    }

    #[test]
    fn overflow_rejected() {
        let mut t = twin(75 * MHZ);
        t.begin_capture(SimTime::ZERO).unwrap();
        t.ingest_chunk(&vec![0; 102_000], SimTime(1)).unwrap();
        assert_eq!(
            t.ingest_chunk(&[0; 401], SimTime(2)),
            Err(SensorError::Overflow { len: 401, remaining: 400 })
        );
    }

    #[test]
    fn ingest_requires_capture() {
        let mut t = twin(75 * MHZ);
        assert_eq!(t.ingest_chunk(&[1], SimTime(1)), Err(SensorError::NotCapturing));
        assert_eq!(t.finalize_frame(SimTime(1)).err(), Some(SensorError::NotCapturing));
    }

    #[test]
    fn first_chunk_at_6_5ms_meets_75mhz_deadline() {
        let mut t = twin(75 * MHZ);
        t.begin_capture(SimTime::ZERO).unwrap();
        t.ingest_chunk(&vec![4; 102_400], SimTime::from_us(6_500)).unwrap();
        assert!(!t.deadline_missed(t.config().deadline_ps).unwrap());
        let end = t.current_schedule().unwrap().frame_end;
        assert!(!t.finalize_frame(end).unwrap().flagged);
    }

    #[test]
    fn first_chunk_after_2_4s_is_flagged_at_120ms() {
        let cfg = TwinConfig::new(SensorProfile::default(), 5 * MHZ)
            .unwrap()
            .with_deadline(SimTime::from_ms(120))
            .unwrap();
        let mut t = SensorTwin::new(cfg).unwrap();
        let s = t.begin_capture(SimTime::ZERO).unwrap();
        assert!(t.deadline_missed(SimTime::from_ms(120)).unwrap());
        // Data lands long after the frame is over; the twin never sees it.
        let out = t.finalize_frame(s.frame_end).unwrap();
        assert!(out.flagged);
        assert_eq!(out.first_chunk_latency_ps, None);
        assert_eq!(out.underrun_count, 102_400);

        // Latency known but late.
        let s = t.begin_capture(SimTime::from_secs(3)).unwrap();
        t.ingest_chunk(&vec![4; 102_400], s.interrupt_at + SimTime::from_ms(121)).unwrap();
        let out = t.finalize_frame(s.frame_end).unwrap();
        assert!(out.flagged);
        assert_eq!(out.underrun_count, 0);
    }

    #[test]
    fn starved_frame_serves_previous_frame() {
        let mut t = twin(5 * MHZ);
        let first: Vec<u16> = (0..102_400u32).map(|i| (i * 3 % 1024) as u16).collect();
        let s = t.begin_capture(SimTime::ZERO).unwrap();
        t.ingest_chunk(&first, SimTime::from_ms(10)).unwrap();
        t.finalize_frame(s.frame_end).unwrap();

        let s = t.begin_capture(SimTime::from_secs(1)).unwrap();
        let out = t.finalize_frame(s.usable_readout_end).unwrap();
        assert_eq!(out.underrun_count, 102_400);
        assert_eq!(out.served.samples(), &first[..]);
    }

    #[test]
    fn first_capture_stale_content_is_zero() {
        let mut t = twin(5 * MHZ);
        let s = t.begin_capture(SimTime::ZERO).unwrap();
        let out = t.finalize_frame(s.frame_end).unwrap();
        assert!(out.served.samples().iter().all(|&v| v == 0));
    }

    #[test]
    fn finalize_before_readout_end_rejected() {
        let mut t = twin(5 * MHZ);
        let s = t.begin_capture(SimTime::ZERO).unwrap();
        assert!(matches!(
            t.finalize_frame(s.usable_readout_end - SimTime(1)),
            Err(SensorError::TooEarly { .. })
        ));
    }

    #[test]
    fn late_start_with_fast_link_underruns_a_prefix() {
        // 5 MHz readout: 2 us per pixel. First chunk 1 ms late, second well ahead.
        let mut t = twin(5 * MHZ);
        let s = t.begin_capture(SimTime::ZERO).unwrap();
        let img = vec![8u16; 102_400];
        t.ingest_chunk(&img[..51_200], s.usable_readout_start + SimTime::from_ms(1))
            .unwrap();
        t.ingest_chunk(&img[51_200..], s.usable_readout_start + SimTime::from_ms(9))
            .unwrap();
        let out = t.finalize_frame(s.frame_end).unwrap();
        // Pixels 0..=499 are read before 1 ms; pixel 500 exactly at 1 ms is fresh.
        assert_eq!(out.underrun_count, 500);
        assert!(out.served.samples()[..500].iter().all(|&v| v == 0));
        assert!(out.served.samples()[500..].iter().all(|&v| v == 8));
    }

    #[test]
    fn activity_log_accounts_every_picosecond() {
        let mut t = twin(5 * MHZ);
        let s = t.begin_capture(SimTime::from_ms(100)).unwrap();
        t.finalize_frame(s.frame_end).unwrap();
        let log = t.activity_until(SimTime::from_secs(2));
        assert_eq!(log.span(), SimTime::from_secs(2));
        assert_eq!(log.active_ps, s.frame_end - s.interrupt_at);
        assert_eq!(log.active_ps, SimTime::from_us(2 * 259_776));
        assert_eq!(
            log.transitions,
            vec![
                (SimTime::ZERO, TwinState::Idle),
                (SimTime::from_ms(100), TwinState::Active),
                (s.frame_end, TwinState::Idle)
            ]
        );
    }

    #[test]
    fn frame_rate_limits() {
        let p = SensorProfile::default();
        let r = max_frame_rate(&p, 75 * MHZ).unwrap();
        assert!((r.fps - 57.74).abs() < 0.01, "{}", r.fps);
        assert_eq!(p.payload_bits_per_frame() * 58, 59_392_000);
        let r = max_frame_rate(&p, 5 * MHZ).unwrap();
        assert!((r.fps - 5e6 / 1_298_880.0).abs() < 1e-12);
        assert!((r.fps - 3.849).abs() < 0.001);
        let r = max_frame_rate(&p, p.frame_cycle_cycles).unwrap();
        assert_eq!(r.fps, 1.0);
        assert_eq!(r.payload_bits_per_s, 1_024_000.0);
        assert!(max_frame_rate(&p, 0).is_err());
    }

    #[test]
    fn profile_must_fit_frame_cycle() {
        let p = SensorProfile {
            frame_cycle_cycles: 1_000_000,
            ..SensorProfile::default()
        };
        assert!(p.validate().is_err());
        assert!(SensorProfile::default().validate().is_ok());
    }
}
