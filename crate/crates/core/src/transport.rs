//! PC to FPGA link model: a USB-to-SPI bridge with 1, 2 or 4 data lanes,
//! a fixed overhead per API call, and optional injected back-end delay.
//!
//! A transfer is split into `calls_per_image` API calls of equal pixel
//! count. Each call pays its overhead before its first byte moves. Within a
//! call, pixels land in chunks of `chunk_pixels`; a chunk is visible to the
//! sensor twin once its last byte has arrived.

use rand::RngExt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{counter_rng, Stream};
use crate::time::{bits_to_ps, SimTime, TimeError, PS_PER_MS};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("lane count {0} is not one of 1, 2, 4")]
    Lanes(u32),
    #[error("invalid link configuration: {0}")]
    Config(String),
    #[error("a transfer needs at least one pixel")]
    EmptyTransfer,
    #[error("uniform delay bounds are reversed: {lo:?} > {hi:?}")]
    DelayBounds { lo: SimTime, hi: SimTime },
    #[error(transparent)]
    Time(#[from] TimeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub lanes: u32,
    pub link_clock_hz: u64,
    pub per_call_overhead_ps: SimTime,
    pub calls_per_image: u32,
    pub bits_per_pixel_on_wire: u32,
    pub chunk_pixels: u32,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            lanes: 4,
            link_clock_hz: 40_000_000,
            per_call_overhead_ps: SimTime(5 * PS_PER_MS),
            calls_per_image: 2,
            bits_per_pixel_on_wire: 8,
            chunk_pixels: 51_200,
        }
    }
}

impl LinkConfig {
    pub fn with_lanes(lanes: u32) -> Self {
        Self {
            lanes,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TransportError> {
        if !matches!(self.lanes, 1 | 2 | 4) {
            return Err(TransportError::Lanes(self.lanes));
        }
        if self.link_clock_hz == 0 {
            return Err(TransportError::Config("link clock must be positive".into()));
        }
        if self.calls_per_image == 0 {
            return Err(TransportError::Config("calls_per_image must be at least 1".into()));
        }
        if !(1..=16).contains(&self.bits_per_pixel_on_wire) {
            return Err(TransportError::Config(format!(
                "{} bits per pixel on the wire is outside 1..=16",
                self.bits_per_pixel_on_wire
            )));
        }
        if self.chunk_pixels == 0 {
            return Err(TransportError::Config("chunk_pixels must be at least 1".into()));
        }
        Ok(())
    }

    /// Aggregate payload bandwidth across all lanes.
    pub fn bits_per_second(&self) -> u64 {
        self.lanes as u64 * self.link_clock_hz
    }

    /// Time to clock out `pixels` worth of payload, excluding call overhead.
    pub fn payload_time(&self, pixels: u64) -> Result<SimTime, TransportError> {
        Ok(bits_to_ps(
            pixels * self.bits_per_pixel_on_wire as u64,
            self.bits_per_second(),
        )?)
    }
}

/// Overhead for every call plus payload time for every pixel.
pub fn transfer_duration(link: &LinkConfig, n_pixels: u64) -> Result<SimTime, TransportError> {
    link.validate()?;
    if n_pixels == 0 {
        return Err(TransportError::EmptyTransfer);
    }
    let overhead = SimTime(link.per_call_overhead_ps.0 * link.calls_per_image as u64);
    Ok(overhead + link.payload_time(n_pixels)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ChunkArrival {
    /// First pixel covered, inclusive.
    pub start: usize,
    /// One past the last pixel covered.
    pub end: usize,
    pub call: u32,
    pub arrival: SimTime,
}

impl ChunkArrival {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TransferPlan {
    pub request_at: SimTime,
    /// When the first API call is issued: request plus prep latency plus injected delay.
    pub start: SimTime,
    pub chunks: Vec<ChunkArrival>,
    pub total_duration_ps: SimTime,
}

impl TransferPlan {
    pub fn first_arrival(&self) -> SimTime {
        self.chunks[0].arrival
    }

    pub fn complete_at(&self) -> SimTime {
        self.chunks.last().expect("plans are never empty").arrival
    }
}

/// Arrival schedule for one image requested at `request_at`.
///
/// `prep` is the modeled load and convert latency of the back-end and
/// `fault_delay` any injected extra response time; both shift the whole
/// schedule.
pub fn plan_transfer(
    link: &LinkConfig,
    prep: SimTime,
    fault_delay: SimTime,
    request_at: SimTime,
    n_pixels: usize,
) -> Result<TransferPlan, TransportError> {
    link.validate()?;
    if n_pixels == 0 {
        return Err(TransportError::EmptyTransfer);
    }
    let start = request_at + prep + fault_delay;
    let calls = link.calls_per_image as usize;
    let per_call = n_pixels.div_ceil(calls);
    let chunk = link.chunk_pixels as usize;

    let mut chunks = Vec::new();
    for call in 0..calls {
        let call_start = call * per_call;
        let call_end = ((call + 1) * per_call).min(n_pixels);
        if call_start >= call_end {
            break;
        }
        let overhead = SimTime(link.per_call_overhead_ps.0 * (call as u64 + 1));
        let mut lo = call_start;
        while lo < call_end {
            let hi = (lo + chunk).min(call_end);
            // Payload time is taken from the absolute pixel count so per-chunk
            // rounding never accumulates.
            let arrival = start + overhead + link.payload_time(hi as u64)?;
            chunks.push(ChunkArrival {
                start: lo,
                end: hi,
                call: call as u32,
                arrival,
            });
            lo = hi;
        }
    }
    let total_duration_ps = chunks.last().map(|c| c.arrival).unwrap_or(start) - start;
    Ok(TransferPlan {
        request_at,
        start,
        chunks,
        total_duration_ps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DelayDistribution {
    #[default]
    None,
    Uniform { lo_ps: SimTime, hi_ps: SimTime },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FaultConfig {
    pub delay: DelayDistribution,
    pub seed: u64,
}

impl FaultConfig {
    pub fn validate(&self) -> Result<(), TransportError> {
        match self.delay {
            DelayDistribution::Uniform { lo_ps, hi_ps } if lo_ps > hi_ps => {
                Err(TransportError::DelayBounds { lo: lo_ps, hi: hi_ps })
            }
            _ => Ok(()),
        }
    }
}

/// Injected back-end delay for the request at `position` in the capture stream.
pub fn sample_injected_delay(faults: &FaultConfig, position: u64) -> SimTime {
    match faults.delay {
        DelayDistribution::None => SimTime::ZERO,
        DelayDistribution::Uniform { lo_ps, hi_ps } => {
            if lo_ps >= hi_ps {
                return lo_ps;
            }
            let mut rng = counter_rng(faults.seed, Stream::FaultDelay, position);
            SimTime(rng.random_range(lo_ps.0..=hi_ps.0))
        }
    }
}

/// Narrows sensor samples to the wire width by dropping low bits.
pub fn to_wire(samples: &[u16], sensor_bits: u16, wire_bits: u32) -> Vec<u16> {
    let shift = (sensor_bits as u32).saturating_sub(wire_bits);
    samples.iter().map(|&s| s >> shift).collect()
}

/// What survives a trip over the wire: the low bits the wire cannot carry
/// are cleared. Same result as `from_wire(&to_wire(..))` in one pass.
pub fn wire_round_trip(samples: &[u16], sensor_bits: u16, wire_bits: u32) -> Vec<u16> {
    let shift = (sensor_bits as u32).saturating_sub(wire_bits).min(16);
    let mask = (u32::from(u16::MAX) << shift) as u16;
    samples.iter().map(|&s| s & mask).collect()
}

/// Re-expands wire samples to the sensor width by zero-filling low bits.
pub fn from_wire(wire: &[u16], sensor_bits: u16, wire_bits: u32) -> Vec<u16> {
    let shift = (sensor_bits as u32).saturating_sub(wire_bits);
    wire.iter().map(|&s| s << shift).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const IMAGE: usize = 102_400;

    #[test]
    fn defaults_match_measured_setup() {
        let l = LinkConfig::default();
        assert_eq!(l.lanes, 4);
        assert_eq!(l.link_clock_hz, 40_000_000);
        assert_eq!(l.per_call_overhead_ps, SimTime::from_ms(5));
        assert_eq!(l.calls_per_image, 2);
        assert_eq!(l.bits_per_pixel_on_wire, 8);
        assert_eq!(l.chunk_pixels, 51_200);
    }

    #[test]
    fn lane_durations() {
        let ms = |lanes| transfer_duration(&LinkConfig::with_lanes(lanes), IMAGE as u64).unwrap();
        assert_eq!(ms(4), SimTime::from_us(15_120));
        assert_eq!(ms(2), SimTime::from_us(20_240));
        assert_eq!(ms(1), SimTime::from_us(30_480));
    }

    #[test]
    fn lane_durations_within_measured_tolerance() {
        for (lanes, measured_ms, tol) in [(4, 15.18, 0.01), (2, 20.28, 0.01), (1, 29.38, 0.04)] {
            let t = transfer_duration(&LinkConfig::with_lanes(lanes), IMAGE as u64)
                .unwrap()
                .as_ms_f64();
            assert!(((t - measured_ms) / measured_ms).abs() <= tol, "{lanes}: {t}");
        }
    }

    #[test]
    fn invalid_links_rejected() {
        assert!(matches!(
            transfer_duration(&LinkConfig::with_lanes(3), 10),
            Err(TransportError::Lanes(3))
        ));
        let mut l = LinkConfig::default();
        l.calls_per_image = 0;
        assert!(l.validate().is_err());
        assert!(matches!(
            transfer_duration(&LinkConfig::default(), 0),
            Err(TransportError::EmptyTransfer)
        ));
    }

    #[test]
    fn quad_plan_with_prep_latency() {
        let prep = SimTime::from_us(1_310);
        let plan = plan_transfer(&LinkConfig::default(), prep, SimTime::ZERO, SimTime::ZERO, IMAGE)
            .unwrap();
        // 1.31 + 5 + 2.56 ms, then 1.31 + 10 + 5.12 ms.
        assert_eq!(plan.chunks.len(), 2);
        assert_eq!(plan.first_arrival(), SimTime::from_us(8_870));
        assert_eq!(plan.complete_at(), SimTime::from_us(16_430));
        assert!(plan.complete_at() < SimTime::from_us(16_500));
        assert_eq!(plan.total_duration_ps, SimTime::from_us(15_120));
    }

    #[test]
    fn single_call_single_chunk() {
        let link = LinkConfig {
            calls_per_image: 1,
            chunk_pixels: IMAGE as u32,
            ..LinkConfig::default()
        };
        let plan = plan_transfer(&link, SimTime::ZERO, SimTime::ZERO, SimTime::from_ms(3), IMAGE)
            .unwrap();
        assert_eq!(plan.chunks.len(), 1);
        assert_eq!(
            plan.first_arrival(),
            SimTime::from_ms(3) + SimTime::from_ms(5) + link.payload_time(IMAGE as u64).unwrap()
        );
    }

    #[test]
    fn fault_delay_translates_schedule() {
        let link = LinkConfig::default();
        let prep = SimTime::from_us(1_310);
        let a = plan_transfer(&link, prep, SimTime::ZERO, SimTime::ZERO, IMAGE).unwrap();
        let d = SimTime::from_ms(2_400);
        let b = plan_transfer(&link, prep, d, SimTime::ZERO, IMAGE).unwrap();
        for (x, y) in a.chunks.iter().zip(&b.chunks) {
            assert_eq!(y.arrival - x.arrival, d);
            assert_eq!((x.start, x.end), (y.start, y.end));
        }
    }

    #[test]
    fn fine_chunks_within_calls() {
        let link = LinkConfig {
            chunk_pixels: 1_024,
            ..LinkConfig::default()
        };
        let plan = plan_transfer(&link, SimTime::ZERO, SimTime::ZERO, SimTime::ZERO, IMAGE).unwrap();
        assert_eq!(plan.chunks.len(), 100);
        // First kilopixel lands after one overhead plus 1024 * 8 bits / 160 Mb/s.
        assert_eq!(plan.first_arrival(), SimTime::from_ms(5) + SimTime::from_ns(51_200));
        assert_eq!(plan.complete_at(), SimTime::from_us(15_120));
        assert!(plan.chunks.iter().all(|c| c.call == (c.start / 51_200) as u32));
    }

    #[test]
    fn no_delay_is_zero() {
        let f = FaultConfig::default();
        assert!((0..100).all(|i| sample_injected_delay(&f, i) == SimTime::ZERO));
    }

    #[test]
    fn uniform_delay_reproducible_and_bounded() {
        let f = FaultConfig {
            delay: DelayDistribution::Uniform {
                lo_ps: SimTime::ZERO,
                hi_ps: SimTime::from_ms(2_500),
            },
            seed: 42,
        };
        let a: Vec<_> = (0..50).map(|i| sample_injected_delay(&f, i)).collect();
        let b: Vec<_> = (0..50).map(|i| sample_injected_delay(&f, i)).collect();
        assert_eq!(a, b);
        assert!(a.iter().all(|d| *d <= SimTime::from_ms(2_500)));
        assert!(a.windows(2).any(|w| w[0] != w[1]));
    }

    #[test]
    fn uniform_delay_mean() {
        let f = FaultConfig {
            delay: DelayDistribution::Uniform {
                lo_ps: SimTime::ZERO,
                hi_ps: SimTime::from_ms(2_500),
            },
            seed: 7,
        };
        let mean = (0..10_000)
            .map(|i| sample_injected_delay(&f, i).as_secs_f64())
            .sum::<f64>()
            / 10_000.0;
        assert!((mean - 1.25).abs() / 1.25 < 0.02, "{mean}");
    }

    #[test]
    fn degenerate_uniform_is_fixed() {
        let d = SimTime::from_ms(130);
        let f = FaultConfig {
            delay: DelayDistribution::Uniform { lo_ps: d, hi_ps: d },
            seed: 1,
        };
        assert_eq!(sample_injected_delay(&f, 5), d);
        let bad = FaultConfig {
            delay: DelayDistribution::Uniform {
                lo_ps: d,
                hi_ps: SimTime::ZERO,
            },
            seed: 1,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn wire_round_trip_is_lossless_for_widened_samples() {
        let samples: Vec<u16> = (0..=255u16).map(|v| v << 2).collect();
        let wire = to_wire(&samples, 10, 8);
        assert!(wire.iter().all(|&w| w <= 255));
        assert_eq!(from_wire(&wire, 10, 8), samples);
        assert_eq!(to_wire(&[1023], 10, 10), vec![1023]);
    }

    proptest! {
        #[test]
        fn fused_round_trip_matches_narrow_then_widen(
            samples in proptest::collection::vec(0u16..1024, 0..200),
            wire_bits in 1u32..=12,
        ) {
            prop_assert_eq!(
                wire_round_trip(&samples, 10, wire_bits),
                from_wire(&to_wire(&samples, 10, wire_bits), 10, wire_bits)
            );
        }

        #[test]
        fn payload_scales_inversely_with_lanes(n in 1u64..500_000) {
            let d = |lanes| transfer_duration(&LinkConfig::with_lanes(lanes), n).unwrap().0 as i128;
            let overhead = 2 * 5 * PS_PER_MS as i128;
            let p1 = d(1) - overhead;
            let p2 = d(2) - overhead;
            let p4 = d(4) - overhead;
            prop_assert!((p1 - 2 * p2).abs() <= 2);
            prop_assert!((p1 - 4 * p4).abs() <= 4);
        }

        #[test]
        fn plan_partitions_image_with_increasing_arrivals(
            n in 1usize..300_000,
            chunk in 1u32..120_000,
            calls in 1u32..5,
            lanes in prop::sample::select(vec![1u32, 2, 4]),
            prep in 0u64..10_000_000_000,
        ) {
            let link = LinkConfig { lanes, calls_per_image: calls, chunk_pixels: chunk, ..LinkConfig::default() };
            let plan = plan_transfer(&link, SimTime(prep), SimTime::ZERO, SimTime::ZERO, n).unwrap();
            let mut next = 0;
            for c in &plan.chunks {
                prop_assert_eq!(c.start, next);
                prop_assert!(c.end > c.start);
                next = c.end;
            }
            prop_assert_eq!(next, n);
            prop_assert!(plan.chunks.windows(2).all(|w| w[0].arrival < w[1].arrival));
            let nonempty_calls = (n.div_ceil(n.div_ceil(calls as usize))) as u64;
            if nonempty_calls == calls as u64 {
                prop_assert_eq!(plan.total_duration_ps, transfer_duration(&link, n as u64).unwrap());
            }
        }
    }
}
