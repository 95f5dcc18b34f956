//! Rebroadcast decisions for sink-layer broadcasts.
//!
//! [`BroadcastRelay`] holds one sink's per-broadcast state and is driven by
//! whoever delivers frames: the full MAC simulation, or the contention-free
//! [`simulate_broadcast`] used for graph-level checks.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::SinkError;
use crate::engine::{RngStream, Scheduler};
use crate::geometry::Position;
use crate::world::SinkId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BroadcastStrategy {
    Flood,
    /// Non-origin sinks rebroadcast with probability `p`.
    Probabilistic { p: f64 },
    /// Suppress when `k` or more duplicates arrive during the assessment delay.
    Counter { k: u32 },
    /// Rebroadcast only when the least additional coverage over every heard
    /// sender is at least `theta` of the disk area.
    Location { theta: f64 },
}

impl BroadcastStrategy {
    pub fn validate(&self) -> Result<(), SinkError> {
        match *self {
            Self::Probabilistic { p } if !(0.0..=1.0).contains(&p) => {
                Err(SinkError::InvalidStrategy(format!("probability {p} not in [0, 1]")))
            }
            Self::Counter { k: 0 } => Err(SinkError::InvalidStrategy("counter threshold must be >= 1".into())),
            Self::Location { theta } if !(0.0..=1.0).contains(&theta) => {
                Err(SinkError::InvalidStrategy(format!("coverage threshold {theta} not in [0, 1]")))
            }
            _ => Ok(()),
        }
    }
}

/// Area of the lens shared by two radius-`r` disks `d` apart.
pub fn lens_area(d: f64, r: f64) -> f64 {
    if d >= 2.0 * r {
        return 0.0;
    }
    let d = d.max(0.0);
    2.0 * r * r * (d / (2.0 * r)).acos() - 0.5 * d * (4.0 * r * r - d * d).sqrt()
}

/// Fraction of a receiver's disk not already covered by a sender `d` away.
pub fn additional_coverage(d: f64, r: f64) -> f64 {
    let disk = PI * r * r;
    ((disk - lens_area(d, r)) / disk).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BroadcastKey {
    pub origin: SinkId,
    pub seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RelayConfig {
    /// Upper bound of the uniform delay before a flood or gossip rebroadcast.
    pub jitter: f64,
    /// Upper bound of the random assessment delay for counter and location.
    pub assessment_delay: f64,
}

impl Default for RelayConfig {
    fn default() -> Self {
        Self {
            jitter: 0.002,
            assessment_delay: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decision {
    /// Nothing to do (duplicate, or suppressed).
    Ignore,
    Rebroadcast { delay: f64 },
    /// Call [`BroadcastRelay::assess`] after `delay`.
    Assess { delay: f64 },
}

#[derive(Debug, Clone, Default)]
struct RelayState {
    assessing: bool,
    duplicates: u32,
    senders: Vec<Position>,
}

#[derive(Debug, Clone)]
pub struct BroadcastRelay {
    pub strategy: BroadcastStrategy,
    pub cfg: RelayConfig,
    pub range: f64,
    seen: BTreeMap<BroadcastKey, RelayState>,
}

impl BroadcastRelay {
    pub fn new(strategy: BroadcastStrategy, cfg: RelayConfig, range: f64) -> Self {
        Self {
            strategy,
            cfg,
            range,
            seen: BTreeMap::new(),
        }
    }

    /// Register a broadcast this sink originates; the origin always sends.
    pub fn originate(&mut self, key: BroadcastKey) {
        self.seen.insert(key, RelayState::default());
    }

    pub fn has_seen(&self, key: &BroadcastKey) -> bool {
        self.seen.contains_key(key)
    }

    /// A copy of `key` arrived from a sender at `sender`.
    pub fn on_receive(&mut self, key: BroadcastKey, sender: Position, rng: &mut RngStream) -> Decision {
        if let Some(st) = self.seen.get_mut(&key) {
            if st.assessing {
                st.duplicates += 1;
                st.senders.push(sender);
            }
            return Decision::Ignore;
        }
        let mut st = RelayState::default();
        let decision = match self.strategy {
            BroadcastStrategy::Flood => Decision::Rebroadcast {
                delay: rng.uniform01() * self.cfg.jitter,
            },
            BroadcastStrategy::Probabilistic { p } => {
                if rng.bernoulli(p) {
                    Decision::Rebroadcast {
                        delay: rng.uniform01() * self.cfg.jitter,
                    }
                } else {
                    Decision::Ignore
                }
            }
            BroadcastStrategy::Counter { .. } | BroadcastStrategy::Location { .. } => {
                st.assessing = true;
                st.senders.push(sender);
                Decision::Assess {
                    delay: rng.uniform01() * self.cfg.assessment_delay,
                }
            }
        };
        self.seen.insert(key, st);
        decision
    }

    /// End of the assessment delay: decide whether to rebroadcast.
    pub fn assess(&mut self, key: BroadcastKey, own: Position) -> bool {
        let Some(st) = self.seen.get_mut(&key) else {
            return false;
        };
        if !st.assessing {
            return false;
        }
        st.assessing = false;
        match self.strategy {
            BroadcastStrategy::Counter { k } => st.duplicates < k,
            BroadcastStrategy::Location { theta } => {
                let least = st
                    .senders
                    .iter()
                    .map(|p| additional_coverage(p.distance(&own), self.range))
                    .fold(f64::INFINITY, f64::min);
                least >= theta
            }
            _ => false,
        }
    }

    /// Forget broadcasts older than the caller's retention horizon.
    pub fn forget(&mut self, keep: impl Fn(&BroadcastKey) -> bool) {
        self.seen.retain(|k, _| keep(k));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BroadcastOutcome {
    /// Nodes holding a copy at the end, origin included.
    pub reached: BTreeSet<usize>,
    pub transmissions: usize,
    pub transmitters: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
enum Step {
    Send(usize),
    Arrive { at: usize, from: usize },
    Assess(usize),
}

/// Run one broadcast over a static graph of equal-range nodes with no
/// collisions; every frame takes `frame_time` to arrive.
pub fn simulate_broadcast(
    positions: &[Position],
    range: f64,
    origin: usize,
    strategy: BroadcastStrategy,
    cfg: RelayConfig,
    frame_time: f64,
    rng: &mut RngStream,
) -> BroadcastOutcome {
    let key = BroadcastKey {
        origin: SinkId(origin as u32),
        seq: 0,
    };
    let mut relays: Vec<BroadcastRelay> = positions
        .iter()
        .map(|_| BroadcastRelay::new(strategy, cfg, range))
        .collect();
    let mut reached = BTreeSet::from([origin]);
    let mut transmitters = Vec::new();
    let mut sched: Scheduler<Step> = Scheduler::new();
    relays[origin].originate(key);
    sched.schedule(Step::Send(origin), 0.0).expect("fresh scheduler");
    while let Some(ev) = sched.pop_due(f64::INFINITY) {
        let now = ev.time;
        match ev.action {
            Step::Send(n) => {
                transmitters.push(n);
                for (m, p) in positions.iter().enumerate() {
                    if m != n && p.distance(&positions[n]) <= range {
                        sched
                            .schedule(Step::Arrive { at: m, from: n }, now + frame_time)
                            .expect("future");
                    }
                }
            }
            Step::Arrive { at, from } => {
                reached.insert(at);
                match relays[at].on_receive(key, positions[from], rng) {
                    Decision::Ignore => {}
                    Decision::Rebroadcast { delay } => {
                        sched.schedule(Step::Send(at), now + delay).expect("future");
                    }
                    Decision::Assess { delay } => {
                        sched.schedule(Step::Assess(at), now + delay).expect("future");
                    }
                }
            }
            Step::Assess(n) => {
                if relays[n].assess(key, positions[n]) {
                    sched.schedule(Step::Send(n), now).expect("future");
                }
            }
        }
    }
    BroadcastOutcome {
        reached,
        transmissions: transmitters.len(),
        transmitters,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize, gap: f64) -> Vec<Position> {
        (0..n).map(|i| Position::new(i as f64 * gap, 0.0)).collect()
    }

    #[test]
    fn flood_line_reaches_all() {
        let mut rng = RngStream::new(1, "bcast");
        let out = simulate_broadcast(&line(5, 10.0), 12.0, 0, BroadcastStrategy::Flood, RelayConfig::default(), 1e-3, &mut rng);
        assert_eq!(out.reached.len(), 5);
        assert!(out.transmissions <= 5);
    }

    #[test]
    fn probabilistic_extremes() {
        let pos = line(5, 10.0);
        let cfg = RelayConfig::default();
        let flood = simulate_broadcast(&pos, 12.0, 2, BroadcastStrategy::Flood, cfg, 1e-3, &mut RngStream::new(4, "b"));
        let p1 = simulate_broadcast(&pos, 12.0, 2, BroadcastStrategy::Probabilistic { p: 1.0 }, cfg, 1e-3, &mut RngStream::new(4, "b"));
        assert_eq!(flood.reached, p1.reached);
        let p0 = simulate_broadcast(&pos, 12.0, 2, BroadcastStrategy::Probabilistic { p: 0.0 }, cfg, 1e-3, &mut RngStream::new(4, "b"));
        assert_eq!(p0.reached, BTreeSet::from([1, 2, 3]));
        assert_eq!(p0.transmissions, 1);
    }

    #[test]
    fn lens_limits() {
        let r = 10.0;
        assert!((lens_area(0.0, r) - PI * r * r).abs() < 1e-9);
        assert_eq!(lens_area(20.0, r), 0.0);
        assert_eq!(additional_coverage(25.0, r), 1.0);
        // At d = r the extra coverage is 1 − (2π/3 − √3/2)/π ≈ 0.609.
        let expect = 1.0 - (2.0 * PI / 3.0 - 3f64.sqrt() / 2.0) / PI;
        assert!((additional_coverage(r, r) - expect).abs() < 1e-12);
    }

    #[test]
    fn counter_suppresses_on_duplicate() {
        let mut relay = BroadcastRelay::new(BroadcastStrategy::Counter { k: 1 }, RelayConfig::default(), 10.0);
        let mut rng = RngStream::new(2, "c");
        let key = BroadcastKey { origin: SinkId(0), seq: 3 };
        assert!(matches!(relay.on_receive(key, Position::new(0.0, 0.0), &mut rng), Decision::Assess { .. }));
        assert!(relay.assess(key, Position::new(5.0, 0.0)));

        let key = BroadcastKey { origin: SinkId(0), seq: 4 };
        relay.on_receive(key, Position::new(0.0, 0.0), &mut rng);
        assert_eq!(relay.on_receive(key, Position::new(1.0, 0.0), &mut rng), Decision::Ignore);
        assert!(!relay.assess(key, Position::new(5.0, 0.0)));
    }

    #[test]
    fn location_threshold() {
        let mut relay = BroadcastRelay::new(BroadcastStrategy::Location { theta: 0.5 }, RelayConfig::default(), 10.0);
        let mut rng = RngStream::new(2, "l");
        let key = BroadcastKey { origin: SinkId(0), seq: 0 };
        relay.on_receive(key, Position::new(0.0, 0.0), &mut rng);
        assert!(relay.assess(key, Position::new(10.0, 0.0)));
        let key = BroadcastKey { origin: SinkId(0), seq: 1 };
        relay.on_receive(key, Position::new(0.0, 0.0), &mut rng);
        assert!(!relay.assess(key, Position::new(2.0, 0.0)));
    }

    #[test]
    fn strategy_validation() {
        assert!(BroadcastStrategy::Probabilistic { p: 1.5 }.validate().is_err());
        assert!(BroadcastStrategy::Counter { k: 0 }.validate().is_err());
        assert!(BroadcastStrategy::Location { theta: 0.3 }.validate().is_ok());
    }
}
