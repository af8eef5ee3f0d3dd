//! Single-threaded virtual-time event scheduler.
//!
//! Events are ordered by `(due, seq)`, where `seq` is a per-scheduler
//! insertion counter. That total order is what makes replays reproducible.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::Serialize;
use thiserror::Error;

use crate::time::SimTime;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KernelError {
    #[error("event due at {due:?} is earlier than the current time {now:?}")]
    PastDue { due: SimTime, now: SimTime },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    CaptureRequest,
    ChunkArrival,
    ReadoutPixelWindow,
    ReadoutComplete,
    DeadlineCheck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct EventId(pub u64);

#[derive(Debug, Clone)]
pub struct SimEvent<P> {
    pub due: SimTime,
    pub seq: u64,
    pub kind: EventKind,
    pub payload: P,
}

/// One processed event, as recorded when tracing is enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TraceEntry {
    pub due: SimTime,
    pub seq: u64,
    pub kind: EventKind,
}

struct Queued<P> {
    key: (SimTime, u64),
    kind: EventKind,
    payload: P,
}

impl<P> PartialEq for Queued<P> {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}

impl<P> Eq for Queued<P> {}

impl<P> PartialOrd for Queued<P> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Queued<P> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key.cmp(&other.key)
    }
}

pub struct Scheduler<P> {
    queue: BinaryHeap<Reverse<Queued<P>>>,
    now: SimTime,
    next_seq: u64,
    trace: Option<Vec<TraceEntry>>,
}

impl<P> Default for Scheduler<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> Scheduler<P> {
    pub fn new() -> Self {
        Self {
            queue: BinaryHeap::new(),
            now: SimTime::ZERO,
            next_seq: 0,
            trace: None,
        }
    }

    /// Records `(due, seq, kind)` for every processed event.
    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn next_due(&self) -> Option<SimTime> {
        self.queue.peek().map(|Reverse(q)| q.key.0)
    }

    pub fn trace(&self) -> Option<&[TraceEntry]> {
        self.trace.as_deref()
    }

    pub fn schedule(
        &mut self,
        due: SimTime,
        kind: EventKind,
        payload: P,
    ) -> Result<EventId, KernelError> {
        if due < self.now {
            return Err(KernelError::PastDue { due, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(Queued {
            key: (due, seq),
            kind,
            payload,
        }));
        Ok(EventId(seq))
    }

    /// Removes the earliest event if it is due at or before `limit` and
    /// advances the clock to it.
    pub fn pop_until(&mut self, limit: SimTime) -> Option<SimEvent<P>> {
        if self.next_due()? > limit {
            return None;
        }
        let Reverse(q) = self.queue.pop()?;
        let (due, seq) = q.key;
        self.now = self.now.max(due);
        if let Some(trace) = self.trace.as_mut() {
            trace.push(TraceEntry {
                due,
                seq,
                kind: q.kind,
            });
        }
        Some(SimEvent {
            due,
            seq,
            kind: q.kind,
            payload: q.payload,
        })
    }

    /// Processes every event due at or before `limit`, including events the
    /// handler schedules along the way. Returns the number processed.
    pub fn run_until<F>(&mut self, limit: SimTime, mut handler: F) -> usize
    where
        F: FnMut(&mut Self, SimEvent<P>),
    {
        let mut processed = 0;
        while let Some(ev) = self.pop_until(limit) {
            handler(self, ev);
            processed += 1;
        }
        processed
    }

    /// Like [`run_until`](Self::run_until) but stops at the first handler error.
    pub fn try_run_until<F, E>(&mut self, limit: SimTime, mut handler: F) -> Result<usize, E>
    where
        F: FnMut(&mut Self, SimEvent<P>) -> Result<(), E>,
    {
        let mut processed = 0;
        while let Some(ev) = self.pop_until(limit) {
            handler(self, ev)?;
            processed += 1;
        }
        Ok(processed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn drain(s: &mut Scheduler<u32>) -> Vec<u32> {
        let mut out = Vec::new();
        s.run_until(SimTime::MAX, |_, ev| out.push(ev.payload));
        out
    }

    #[test]
    fn single_event_at_zero() {
        let mut s = Scheduler::new();
        s.schedule(SimTime::ZERO, EventKind::CaptureRequest, 0u32)
            .unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.next_due(), Some(SimTime::ZERO));
    }

    #[test]
    fn ties_break_by_insertion() {
        let mut s = Scheduler::new();
        s.schedule(SimTime(7), EventKind::ChunkArrival, 1u32).unwrap();
        s.schedule(SimTime(7), EventKind::ChunkArrival, 2u32).unwrap();
        assert_eq!(drain(&mut s), vec![1, 2]);
    }

    #[test]
    fn processes_in_due_order() {
        let mut s = Scheduler::new();
        for t in [5u64, 3, 4] {
            s.schedule(SimTime(t), EventKind::DeadlineCheck, t as u32)
                .unwrap();
        }
        assert_eq!(drain(&mut s), vec![3, 4, 5]);
        assert_eq!(s.now(), SimTime(5));
    }

    #[test]
    fn empty_queue_processes_nothing() {
        let mut s: Scheduler<u32> = Scheduler::new();
        assert_eq!(s.run_until(SimTime(1_000), |_, _| {}), 0);
        assert_eq!(s.now(), SimTime::ZERO);
    }

    #[test]
    fn limit_splits_queue() {
        let mut s = Scheduler::new();
        for t in [1u64, 2, 3, 10, 11] {
            s.schedule(SimTime(t), EventKind::ChunkArrival, t as u32)
                .unwrap();
        }
        assert_eq!(s.run_until(SimTime(3), |_, _| {}), 3);
        assert_eq!(s.len(), 2);
        assert_eq!(s.now(), SimTime(3));
    }

    #[test]
    fn handler_scheduled_events_run_in_same_call() {
        let mut s = Scheduler::new();
        s.schedule(SimTime(1), EventKind::CaptureRequest, 0u32)
            .unwrap();
        let mut seen = Vec::new();
        let n = s.run_until(SimTime(10), |s, ev| {
            seen.push((ev.due.0, ev.payload));
            if ev.payload < 3 {
                s.schedule(ev.due + SimTime(2), EventKind::ChunkArrival, ev.payload + 1)
                    .unwrap();
            }
        });
        assert_eq!(n, 4);
        assert_eq!(seen, vec![(1, 0), (3, 1), (5, 2), (7, 3)]);
    }

    #[test]
    fn past_due_rejected() {
        let mut s = Scheduler::new();
        s.schedule(SimTime(10), EventKind::CaptureRequest, 0u32)
            .unwrap();
        s.run_until(SimTime(10), |_, _| {});
        assert_eq!(
            s.schedule(SimTime(9), EventKind::CaptureRequest, 1),
            Err(KernelError::PastDue {
                due: SimTime(9),
                now: SimTime(10)
            })
        );
    }

    #[test]
    fn try_run_stops_on_error() {
        let mut s = Scheduler::new();
        for p in 0u32..5 {
            s.schedule(SimTime(p as u64), EventKind::ChunkArrival, p)
                .unwrap();
        }
        let r: Result<usize, u32> =
            s.try_run_until(SimTime::MAX, |_, ev| if ev.payload == 2 { Err(2) } else { Ok(()) });
        assert_eq!(r, Err(2));
        assert_eq!(s.len(), 2);
    }

    proptest! {
        #[test]
        fn processing_order_is_sorted_by_key(dues in proptest::collection::vec(0u64..50, 0..64)) {
            let mut s = Scheduler::new().with_trace();
            for (i, d) in dues.iter().enumerate() {
                s.schedule(SimTime(*d), EventKind::ChunkArrival, i as u32).unwrap();
            }
            s.run_until(SimTime::MAX, |_, _| {});
            let trace = s.trace().unwrap();
            let mut oracle: Vec<(u64, u64)> = dues.iter().enumerate().map(|(i, d)| (*d, i as u64)).collect();
            oracle.sort();
            let got: Vec<(u64, u64)> = trace.iter().map(|e| (e.due.0, e.seq)).collect();
            prop_assert_eq!(got, oracle);
        }

        #[test]
        fn limit_filters_exactly(dues in proptest::collection::vec(0u64..100, 0..64), limit in 0u64..100) {
            let mut s = Scheduler::new();
            for d in &dues {
                s.schedule(SimTime(*d), EventKind::ChunkArrival, 0u32).unwrap();
            }
            let n = s.run_until(SimTime(limit), |_, _| {});
            prop_assert_eq!(n, dues.iter().filter(|d| **d <= limit).count());
            prop_assert_eq!(s.len(), dues.len() - n);
        }
    }
}
