//! Deterministic discrete-event engine.
//!
//! The engine knows nothing about networks: it keeps the clock, a
//! time-ordered event queue and the run seed, and hands every popped
//! event to a caller-supplied [`Handler`]. Ordering is total on
//! `(fire_at, sequence)`, where `sequence` is the insertion ordinal, so
//! simultaneous events fire in the order they were scheduled.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashSet};
use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::KernelError;

/// Simulation time with nanosecond resolution.
///
/// Used both for instants (measured from run start) and for spans.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us * 1_000)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000_000)
    }

    /// Rounds to the nearest nanosecond. Negative and NaN inputs clamp to zero.
    pub fn from_secs_f64(s: f64) -> Self {
        if s.is_nan() || s <= 0.0 {
            return SimTime::ZERO;
        }
        let ns = (s * 1e9).round();
        if ns >= u64::MAX as f64 {
            SimTime::MAX
        } else {
            SimTime(ns as u64)
        }
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e9
    }

    pub fn checked_sub(self, rhs: SimTime) -> Option<SimTime> {
        self.0.checked_sub(rhs.0).map(SimTime)
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;

    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_add(rhs.0))
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        *self = *self + rhs;
    }
}

impl Sub for SimTime {
    type Output = SimTime;

    /// Panics on underflow; use [`SimTime::checked_sub`] where order is not known.
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(
            self.0
                .checked_sub(rhs.0)
                .expect("SimTime subtraction underflow"),
        )
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.9}s", self.as_secs_f64())
    }
}

/// What an event asks its target to do.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EventKind {
    SourceEmit,
    LinkDeliver,
    PortDequeueReady,
    StatsSample,
    RunEnd,
}

/// Identifies the component an event is addressed to (source, link, port...).
pub type ComponentId = u32;

/// Identifies a packet carried by an event.
pub type PacketId = u64;

/// A scheduled simulation action.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Event {
    pub fire_at: SimTime,
    pub sequence: u64,
    pub kind: EventKind,
    pub target: ComponentId,
    pub payload: Option<PacketId>,
}

impl Event {
    fn key(&self) -> (SimTime, u64) {
        (self.fire_at, self.sequence)
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Returned by [`Simulator::schedule`]; permits cancellation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunStats {
    pub events_processed: u64,
    pub final_time: SimTime,
}

/// Receives events popped by [`Simulator::run_until`].
pub trait Handler {
    type Error;

    fn on_event(&mut self, event: Event, sim: &mut Simulator) -> Result<(), Self::Error>;
}

/// A deterministic random stream derived from `(run seed, label)`.
///
/// Streams share the ChaCha key derived from the seed and use the label
/// hash as the ChaCha stream id, so distinct labels never overlap.
#[derive(Clone, Debug)]
pub struct RandomStream {
    label: String,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64, label: &str) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(fnv1a(label.as_bytes()));
        RandomStream {
            label: label.to_owned(),
            rng,
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        // 53 random mantissa bits.
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// The event engine: clock, pending-event queue, and run seed.
#[derive(Debug)]
pub struct Simulator {
    now: SimTime,
    next_sequence: u64,
    seed: u64,
    queue: BinaryHeap<Reverse<Event>>,
    cancelled: HashSet<u64>,
    trace: Option<Vec<Event>>,
}

impl Simulator {
    pub fn new(seed: u64) -> Self {
        Simulator {
            now: SimTime::ZERO,
            next_sequence: 0,
            seed,
            queue: BinaryHeap::new(),
            cancelled: HashSet::new(),
            trace: None,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of events still waiting (cancelled ones included until popped).
    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// Record every processed event; see [`Simulator::trace`].
    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn trace(&self) -> Option<&[Event]> {
        self.trace.as_deref()
    }

    pub fn rng_stream(&self, label: &str) -> RandomStream {
        RandomStream::new(self.seed, label)
    }

    pub fn schedule(
        &mut self,
        fire_at: SimTime,
        kind: EventKind,
        target: ComponentId,
        payload: Option<PacketId>,
    ) -> Result<EventHandle, KernelError> {
        if fire_at < self.now {
            return Err(KernelError::SchedulingInPast {
                fire_at,
                now: self.now,
            });
        }
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.queue.push(Reverse(Event {
            fire_at,
            sequence,
            kind,
            target,
            payload,
        }));
        Ok(EventHandle(sequence))
    }

    /// Schedules relative to the current clock; never in the past.
    pub fn schedule_in(
        &mut self,
        delay: SimTime,
        kind: EventKind,
        target: ComponentId,
        payload: Option<PacketId>,
    ) -> EventHandle {
        self.schedule(self.now + delay, kind, target, payload)
            .expect("relative schedule cannot be in the past")
    }

    /// Returns false if the event already fired or was already cancelled.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        let live = self
            .queue
            .iter()
            .any(|Reverse(e)| e.sequence == handle.0 && !self.cancelled.contains(&e.sequence));
        if live {
            self.cancelled.insert(handle.0);
        }
        live
    }

    /// Processes every event with `fire_at <= t_end` in `(fire_at, sequence)`
    /// order, then leaves the clock at `t_end`.
    pub fn run_until<H: Handler>(
        &mut self,
        t_end: SimTime,
        handler: &mut H,
    ) -> Result<RunStats, H::Error> {
        let mut processed = 0u64;
        while let Some(Reverse(top)) = self.queue.peek() {
            if top.fire_at > t_end {
                break;
            }
            let Reverse(event) = self.queue.pop().expect("peeked");
            if !self.cancelled.is_empty() && self.cancelled.remove(&event.sequence) {
                continue;
            }
            debug_assert!(event.fire_at >= self.now, "event causality violated");
            self.now = event.fire_at;
            if let Some(trace) = self.trace.as_mut() {
                trace.push(event);
            }
            processed += 1;
            handler.on_event(event, self)?;
        }
        if t_end > self.now {
            self.now = t_end;
        }
        Ok(RunStats {
            events_processed: processed,
            final_time: self.now,
        })
    }
}
