//! Discrete-event engine and seeded, labeled random streams.
//!
//! Events are ordered by `(time, seq)`. `seq` is handed out at scheduling
//! time, so two events at the same instant pop in insertion order. Every
//! stochastic component draws from its own [`RngStream`], keyed by a text
//! label and derived from one master seed; adding a new stream never shifts
//! the draws of an existing one.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("cannot schedule at t={time} s, clock is already at {clock} s")]
    SchedulingInPast { time: f64, clock: f64 },
    #[error("event time must be finite, got {0}")]
    NonFiniteTime(f64),
    #[error("int_below requires n >= 1, got {0}")]
    InvalidBound(u64),
}

/// Identifier of a scheduled event; equal to its sequence number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EventId(pub u64);

/// A popped event.
#[derive(Debug, Clone)]
pub struct Event<A> {
    pub time: f64,
    pub seq: u64,
    pub action: A,
}

struct Entry<A> {
    time: f64,
    seq: u64,
    action: A,
}

impl<A> PartialEq for Entry<A> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<A> Eq for Entry<A> {}

impl<A> PartialOrd for Entry<A> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<A> Ord for Entry<A> {
    // BinaryHeap is a max-heap; invert so the smallest (time, seq) is on top.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub processed: u64,
    pub clock: f64,
}

/// Priority queue of future actions plus the simulation clock.
pub struct Scheduler<A> {
    clock: f64,
    next_seq: u64,
    queue: BinaryHeap<Entry<A>>,
}

impl<A> Default for Scheduler<A> {
    fn default() -> Self {
        Self::new()
    }
}

impl<A> Scheduler<A> {
    pub fn new() -> Self {
        Self {
            clock: 0.0,
            next_seq: 0,
            queue: BinaryHeap::new(),
        }
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// Enqueue `action` to fire at absolute time `time`.
    pub fn schedule(&mut self, action: A, time: f64) -> Result<EventId, SimError> {
        if !time.is_finite() {
            return Err(SimError::NonFiniteTime(time));
        }
        if time < self.clock {
            return Err(SimError::SchedulingInPast {
                time,
                clock: self.clock,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Entry { time, seq, action });
        Ok(EventId(seq))
    }

    /// Enqueue `action` at `clock + delay`.
    pub fn schedule_in(&mut self, action: A, delay: f64) -> Result<EventId, SimError> {
        self.schedule(action, self.clock + delay.max(0.0))
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.queue.peek().map(|e| e.time)
    }

    /// Pop the next event if it is due at or before `t_end`, advancing the clock.
    pub fn pop_due(&mut self, t_end: f64) -> Option<Event<A>> {
        if self.queue.peek()?.time > t_end {
            return None;
        }
        let entry = self.queue.pop()?;
        self.clock = entry.time;
        Some(Event {
            time: entry.time,
            seq: entry.seq,
            action: entry.action,
        })
    }

    /// Move the clock forward to `t` without processing anything.
    pub fn advance_to(&mut self, t: f64) {
        if t > self.clock {
            self.clock = t;
        }
    }

    /// Process every event with `time <= t_end` in order. The handler may
    /// schedule further events through the scheduler it is handed.
    pub fn run_until<F>(&mut self, t_end: f64, mut handler: F) -> Result<RunSummary, SimError>
    where
        F: FnMut(&mut Self, Event<A>),
    {
        if t_end < self.clock {
            return Err(SimError::SchedulingInPast {
                time: t_end,
                clock: self.clock,
            });
        }
        let mut processed = 0;
        while let Some(event) = self.pop_due(t_end) {
            handler(self, event);
            processed += 1;
        }
        self.advance_to(t_end);
        Ok(RunSummary {
            processed,
            clock: self.clock,
        })
    }
}

/// Distribution requested from a stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Draw {
    Uniform01,
    Gaussian { mean: f64, std_dev: f64 },
    IntBelow(u64),
}

/// One labeled random stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    label: String,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, label: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(master_seed.to_le_bytes());
        hasher.update(label.as_bytes());
        let digest = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        Self {
            label: label.to_string(),
            rng: ChaCha8Rng::from_seed(seed),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn draw(&mut self, kind: Draw) -> Result<f64, SimError> {
        Ok(match kind {
            Draw::Uniform01 => self.uniform01(),
            Draw::Gaussian { mean, std_dev } => self.gaussian(mean, std_dev),
            Draw::IntBelow(n) => self.int_below(n)? as f64,
        })
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform01(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform on `[lo, hi)`; returns `lo` when the interval is empty.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return lo;
        }
        lo + (hi - lo) * self.uniform01()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn gaussian(&mut self, mean: f64, std_dev: f64) -> f64 {
        mean + std_dev * self.standard_normal()
    }

    pub fn int_below(&mut self, n: u64) -> Result<u64, SimError> {
        if n < 1 {
            return Err(SimError::InvalidBound(n));
        }
        Ok(self.rng.random_range(0..n))
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform01() < p
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
}

/// Lazily created streams, all derived from one master seed.
#[derive(Debug, Clone)]
pub struct RngStreams {
    master_seed: u64,
    streams: BTreeMap<String, RngStream>,
}

impl RngStreams {
    pub fn new(master_seed: u64) -> Self {
        Self {
            master_seed,
            streams: BTreeMap::new(),
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream(&mut self, label: &str) -> &mut RngStream {
        let seed = self.master_seed;
        self.streams
            .entry(label.to_string())
            .or_insert_with(|| RngStream::new(seed, label))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Clone, PartialEq)]
    enum Act {
        A,
        B,
    }

    fn drain(s: &mut Scheduler<Act>) -> Vec<Act> {
        let mut out = Vec::new();
        while let Some(e) = s.pop_due(f64::INFINITY) {
            out.push(e.action);
        }
        out
    }

    #[test]
    fn earlier_time_pops_first() {
        let mut s = Scheduler::new();
        s.schedule(Act::A, 5.0).unwrap();
        s.schedule(Act::B, 3.0).unwrap();
        assert_eq!(drain(&mut s), vec![Act::B, Act::A]);
    }

    #[test]
    fn ties_break_by_insertion() {
        let mut s = Scheduler::new();
        s.schedule(Act::A, 2.0).unwrap();
        s.schedule(Act::B, 2.0).unwrap();
        assert_eq!(drain(&mut s), vec![Act::A, Act::B]);
    }

    #[test]
    fn past_scheduling_rejected() {
        let mut s = Scheduler::new();
        s.schedule(Act::A, 4.0).unwrap();
        s.pop_due(10.0).unwrap();
        let clock = s.clock();
        assert_eq!(
            s.schedule(Act::B, clock - 1.0),
            Err(SimError::SchedulingInPast {
                time: 3.0,
                clock: 4.0
            })
        );
    }

    #[test]
    fn run_until_stops_at_horizon() {
        let mut s = Scheduler::new();
        for t in [1.0, 2.0, 9.0] {
            s.schedule(Act::A, t).unwrap();
        }
        let summary = s.run_until(5.0, |_, _| {}).unwrap();
        assert_eq!(summary.processed, 2);
        assert_eq!(summary.clock, 5.0);
        assert_eq!(s.pending(), 1);
    }

    #[test]
    fn run_until_on_empty_queue() {
        let mut s: Scheduler<Act> = Scheduler::new();
        let summary = s.run_until(10.0, |_, _| {}).unwrap();
        assert_eq!(summary.processed, 0);
        assert_eq!(summary.clock, 10.0);
    }

    #[test]
    fn handler_can_schedule_follow_ups() {
        let mut s = Scheduler::new();
        s.schedule(0u32, 0.0).unwrap();
        let mut seen = Vec::new();
        s.run_until(10.0, |sched, ev| {
            seen.push((ev.time, ev.action));
            if ev.action < 3 {
                sched.schedule_in(ev.action + 1, 1.5).unwrap();
            }
        })
        .unwrap();
        assert_eq!(seen, vec![(0.0, 0), (1.5, 1), (3.0, 2), (4.5, 3)]);
    }

    #[test]
    fn int_below_one_is_zero() {
        let mut r = RngStream::new(7, "x");
        for _ in 0..100 {
            assert_eq!(r.int_below(1).unwrap(), 0);
        }
        assert_eq!(r.int_below(0), Err(SimError::InvalidBound(0)));
        assert_eq!(r.draw(Draw::IntBelow(0)), Err(SimError::InvalidBound(0)));
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut r = RngStream::new(1, "u");
        for _ in 0..10_000 {
            let u = r.draw(Draw::Uniform01).unwrap();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn gaussian_mean_near_zero() {
        let mut r = RngStream::new(99, "g");
        let n = 100_000;
        let sum: f64 = (0..n)
            .map(|_| {
                r.draw(Draw::Gaussian {
                    mean: 0.0,
                    std_dev: 1.0,
                })
                .unwrap()
            })
            .sum();
        assert!((sum / n as f64).abs() < 0.02);
    }

    #[test]
    fn streams_are_independent_per_label() {
        let mut a = RngStreams::new(42);
        let xs: Vec<f64> = (0..5).map(|_| a.stream("x").uniform01()).collect();

        let mut b = RngStreams::new(42);
        for _ in 0..1000 {
            b.stream("y").uniform01();
        }
        let xs2: Vec<f64> = (0..5).map(|_| b.stream("x").uniform01()).collect();
        assert_eq!(xs, xs2);
    }

    #[test]
    fn same_seed_same_sequence() {
        let mut a = RngStream::new(5, "mobility/sink3");
        let mut b = RngStream::new(5, "mobility/sink3");
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut c = RngStream::new(6, "mobility/sink3");
        assert_ne!(a.next_u64(), c.next_u64());
    }
}
