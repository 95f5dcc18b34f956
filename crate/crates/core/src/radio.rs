//! Unit-disk radio with per-channel collisions and one half-duplex
//! transceiver per node.
//!
//! The medium is passive: callers start a transmission, schedule its end at
//! [`Transmission::end`], and call [`Radio::finish`] then. Verdicts are
//! decided at the end of a frame from the full set of transmissions that
//! overlapped it, so they never depend on the order events were scheduled.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{MetricLog, TxRecord};
use crate::world::{joules_to_fj, NodeId, World};
use crate::metrics::DrainReason;

/// Tolerance on range comparisons, so power-controlled unicasts reach the
/// addressee they were sized for.
const RANGE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelPlan {
    pub sensor_sink: u8,
    pub sensor_sensor: u8,
    pub sink_sink: u8,
}

impl Default for ChannelPlan {
    fn default() -> Self {
        Self {
            sensor_sink: 1,
            sensor_sensor: 6,
            sink_sink: 11,
        }
    }
}

impl ChannelPlan {
    pub fn validate(&self) -> Vec<String> {
        let c = [self.sensor_sink, self.sensor_sensor, self.sink_sink];
        if c[0] == c[1] || c[0] == c[2] || c[1] == c[2] {
            vec![format!("channel plan {c:?} must use three distinct channels")]
        } else {
            Vec::new()
        }
    }
}

/// Where in the beacon interval a time falls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    /// Quiet negotiation window; no data frames.
    Atim,
    /// Sinks sit on the sink-sink channel.
    SinkSlice,
    /// Sinks sit on the sensor-sink channel.
    SensorSink,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MacConfig {
    pub switch_latency: f64,
    pub bitrate: f64,
    pub beacon_interval: f64,
    pub atim_window: f64,
    /// Length of the sink-sink slice that follows the ATIM window.
    pub sink_slice: f64,
    pub retry_limit: u32,
    /// Upper bound of the uniform backoff before a retry or a deferred send.
    pub backoff: f64,
}

impl Default for MacConfig {
    fn default() -> Self {
        Self {
            switch_latency: 224e-6,
            bitrate: 250_000.0,
            beacon_interval: 0.1,
            atim_window: 0.01,
            sink_slice: 0.03,
            retry_limit: 2,
            backoff: 0.005,
        }
    }
}

impl MacConfig {
    pub fn duration(&self, bits: u64) -> f64 {
        bits as f64 / self.bitrate
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.bitrate > 0.0) {
            errs.push(format!("mac.bitrate must be > 0 (got {})", self.bitrate));
        }
        if !(self.switch_latency >= 0.0) {
            errs.push(format!("mac.switch_latency must be >= 0 (got {})", self.switch_latency));
        }
        if !(self.atim_window > 0.0 && self.atim_window < self.beacon_interval) {
            errs.push(format!(
                "mac.atim_window must satisfy 0 < atim_window < beacon_interval (got {} vs {})",
                self.atim_window, self.beacon_interval
            ));
        }
        if !(self.sink_slice > 0.0 && self.atim_window + self.sink_slice < self.beacon_interval) {
            errs.push(format!(
                "mac.sink_slice must be > 0 and leave room for the sensor-sink phase (got {})",
                self.sink_slice
            ));
        }
        if !(self.backoff > 0.0) {
            errs.push(format!("mac.backoff must be > 0 (got {})", self.backoff));
        }
        errs
    }

    fn interval_start(&self, t: f64) -> f64 {
        (t / self.beacon_interval).floor() * self.beacon_interval
    }

    pub fn phase_at(&self, t: f64) -> Phase {
        let off = t - self.interval_start(t);
        if off < self.atim_window {
            Phase::Atim
        } else if off < self.atim_window + self.sink_slice {
            Phase::SinkSlice
        } else {
            Phase::SensorSink
        }
    }

    /// `[start, end)` of the window of `phase` in the beacon interval `k`.
    pub fn window(&self, k: u64, phase: Phase) -> (f64, f64) {
        let base = k as f64 * self.beacon_interval;
        match phase {
            Phase::Atim => (base, base + self.atim_window),
            Phase::SinkSlice => (base + self.atim_window, base + self.atim_window + self.sink_slice),
            Phase::SensorSink => (base + self.atim_window + self.sink_slice, base + self.beacon_interval),
        }
    }

    pub fn interval_index(&self, t: f64) -> u64 {
        (t / self.beacon_interval).floor().max(0.0) as u64
    }

    /// Earliest time `>= t` inside a `phase` window with at least `need`
    /// seconds left before the window closes.
    pub fn next_fit(&self, t: f64, phase: Phase, need: f64) -> f64 {
        let mut k = self.interval_index(t);
        loop {
            let (s, e) = self.window(k, phase);
            let start = t.max(s);
            if start + need <= e {
                return start;
            }
            k += 1;
        }
    }

    /// Earliest time `>= t` outside the ATIM window with `need` seconds of
    /// data time left in the same beacon interval.
    pub fn next_data_fit(&self, t: f64, need: f64) -> f64 {
        let mut k = self.interval_index(t);
        loop {
            let base = k as f64 * self.beacon_interval;
            let start = t.max(base + self.atim_window);
            if start + need <= base + self.beacon_interval {
                return start;
            }
            k += 1;
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RadioError {
    #[error("node {0} is busy")]
    Busy(NodeId),
    #[error("node {node} is tuned to channel {tuned}, not {wanted}")]
    WrongChannel { node: NodeId, tuned: u8, wanted: u8 },
    #[error("node {0} is dead")]
    NodeDead(NodeId),
    #[error("addressee at {distance} m is beyond range {range} m")]
    OutOfRange { distance: f64, range: f64 },
    #[error("a frame needs at least one bit")]
    ZeroBits,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TxId(pub u64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transmission<P> {
    pub id: TxId,
    pub src: NodeId,
    /// `None` for a broadcast.
    pub dest: Option<NodeId>,
    pub payload: P,
    pub bits: u64,
    pub channel: u8,
    pub start: f64,
    pub end: f64,
    pub origin: crate::geometry::Position,
    pub range: f64,
}

impl<P> Transmission<P> {
    fn overlaps(&self, start: f64, end: f64) -> bool {
        self.start < end && self.end > start
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Delivered,
    /// Another same-channel frame overlapped at this receiver.
    Collision,
    /// Receiver was on another channel or mid-switch for part of the frame.
    NotListening,
    /// Receiver transmitted during the frame.
    HalfDuplex,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TxOutcome<P> {
    pub tx: Transmission<P>,
    /// Intended receivers (addressee, or every in-range alive node for a
    /// broadcast) with their verdicts, in node order.
    pub verdicts: Vec<(NodeId, Verdict)>,
}

impl<P> TxOutcome<P> {
    pub fn delivered(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.verdicts
            .iter()
            .filter(|(_, v)| *v == Verdict::Delivered)
            .map(|(n, _)| *n)
    }

    pub fn delivered_to(&self, node: NodeId) -> bool {
        self.verdicts.iter().any(|(n, v)| *n == node && *v == Verdict::Delivered)
    }
}

/// Audit trail of radio activity, one record per frame, reception, or switch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RadioRecord {
    Tx {
        src: NodeId,
        dest: Option<NodeId>,
        channel: u8,
        start: f64,
        end: f64,
        bits: u64,
    },
    Rx {
        node: NodeId,
        src: NodeId,
        channel: u8,
        start: f64,
        end: f64,
    },
    Switch {
        node: NodeId,
        from: u8,
        to: u8,
        t: f64,
        ready: f64,
        latency: f64,
    },
}

#[derive(Debug, Clone)]
struct NodeRadio {
    channel: u8,
    /// Time the node became able to hear `channel`.
    tuned_since: f64,
    tx: Option<TxId>,
}

#[derive(Debug, Clone)]
pub struct Radio<P> {
    pub plan: ChannelPlan,
    pub mac: MacConfig,
    n_sensors: usize,
    nodes: Vec<NodeRadio>,
    active: Vec<Transmission<P>>,
    history: Vec<Transmission<P>>,
    next_id: u64,
    audit: Option<Vec<RadioRecord>>,
}

impl<P: Clone> Radio<P> {
    /// Sensors start on the sensor-sensor channel, sinks on the sensor-sink
    /// channel.
    pub fn new(n_sensors: usize, n_sinks: usize, plan: ChannelPlan, mac: MacConfig) -> Self {
        let mut nodes = Vec::with_capacity(n_sensors + n_sinks);
        for i in 0..n_sensors + n_sinks {
            nodes.push(NodeRadio {
                channel: if i < n_sensors { plan.sensor_sensor } else { plan.sensor_sink },
                tuned_since: f64::NEG_INFINITY,
                tx: None,
            });
        }
        Self {
            plan,
            mac,
            n_sensors,
            nodes,
            active: Vec::new(),
            history: Vec::new(),
            next_id: 0,
            audit: None,
        }
    }

    pub fn enable_audit(&mut self) {
        self.audit.get_or_insert_with(Vec::new);
    }

    /// Drain the audit records collected since the last call.
    pub fn take_audit(&mut self) -> Vec<RadioRecord> {
        self.audit.as_mut().map(std::mem::take).unwrap_or_default()
    }

    fn slot(&self, node: NodeId) -> usize {
        match node {
            NodeId::Sensor(s) => s.0 as usize,
            NodeId::Sink(k) => self.n_sensors + k.0 as usize,
        }
    }

    fn record(&mut self, r: RadioRecord) {
        if let Some(a) = self.audit.as_mut() {
            a.push(r);
        }
    }

    /// Set the initial channel without paying the switch latency.
    pub fn set_channel(&mut self, node: NodeId, channel: u8) {
        let i = self.slot(node);
        self.nodes[i].channel = channel;
        self.nodes[i].tuned_since = f64::NEG_INFINITY;
    }

    pub fn channel(&self, node: NodeId) -> u8 {
        self.nodes[self.slot(node)].channel
    }

    pub fn is_switching(&self, node: NodeId, now: f64) -> bool {
        self.nodes[self.slot(node)].tuned_since > now
    }

    pub fn is_transmitting(&self, node: NodeId) -> bool {
        self.nodes[self.slot(node)].tx.is_some()
    }

    /// The node is tuned to the channel of an in-range frame in flight.
    pub fn is_receiving(&self, node: NodeId, now: f64, world: &World) -> bool {
        let st = &self.nodes[self.slot(node)];
        if st.tuned_since > now {
            return false;
        }
        let pos = world.pos(node);
        self.active.iter().any(|t| {
            t.src != node && t.channel == st.channel && t.origin.distance(&pos) <= t.range + RANGE_EPS
        })
    }

    /// Alive nodes tuned to `channel` that `node` reaches at full power.
    pub fn neighbors(&self, node: NodeId, channel: u8, world: &World) -> Vec<NodeId> {
        let origin = world.pos(node);
        let range = world.tx_range(node);
        world
            .node_ids()
            .filter(|&n| {
                n != node
                    && world.alive(n)
                    && self.channel(n) == channel
                    && origin.distance(&world.pos(n)) <= range + RANGE_EPS
            })
            .collect()
    }

    /// Retune `node`; it is deaf on every channel until the returned time.
    pub fn switch_channel(&mut self, node: NodeId, channel: u8, now: f64) -> Result<f64, RadioError> {
        let i = self.slot(node);
        let st = &self.nodes[i];
        if st.tx.is_some() {
            return Err(RadioError::Busy(node));
        }
        if st.channel == channel {
            return Ok(st.tuned_since.max(now));
        }
        let latency = self.mac.switch_latency;
        let ready = now + latency;
        let from = st.channel;
        self.nodes[i].channel = channel;
        self.nodes[i].tuned_since = ready;
        self.record(RadioRecord::Switch {
            node,
            from,
            to: channel,
            t: now,
            ready,
            latency,
        });
        Ok(ready)
    }

    /// Put a frame on the air. Sensors pay the transmit energy up front,
    /// sized to the addressee's distance (or full range for a broadcast).
    #[allow(clippy::too_many_arguments)]
    pub fn start(
        &mut self,
        src: NodeId,
        dest: Option<NodeId>,
        payload: P,
        bits: u64,
        channel: u8,
        now: f64,
        world: &mut World,
        log: &mut MetricLog,
    ) -> Result<&Transmission<P>, RadioError> {
        if bits == 0 {
            return Err(RadioError::ZeroBits);
        }
        if !world.alive(src) {
            return Err(RadioError::NodeDead(src));
        }
        let i = self.slot(src);
        let st = &self.nodes[i];
        if st.tx.is_some() || st.tuned_since > now || self.is_receiving(src, now, world) {
            return Err(RadioError::Busy(src));
        }
        if st.channel != channel {
            return Err(RadioError::WrongChannel {
                node: src,
                tuned: st.channel,
                wanted: channel,
            });
        }
        let origin = world.pos(src);
        let max_range = world.tx_range(src);
        let range = match dest {
            Some(d) => {
                let distance = origin.distance(&world.pos(d));
                if distance > max_range + RANGE_EPS {
                    return Err(RadioError::OutOfRange {
                        distance,
                        range: max_range,
                    });
                }
                distance
            }
            None => max_range,
        };
        if let NodeId::Sensor(s) = src {
            let fj = joules_to_fj(world.energy.tx_cost(bits, range.min(max_range)));
            world.charge(s, fj.max(1), DrainReason::Tx, now, log);
        }
        let id = TxId(self.next_id);
        self.next_id += 1;
        let end = now + self.mac.duration(bits);
        self.nodes[i].tx = Some(id);
        log.tx.push(TxRecord {
            channel,
            t: now,
            src,
            bits,
        });
        self.record(RadioRecord::Tx {
            src,
            dest,
            channel,
            start: now,
            end,
            bits,
        });
        self.active.push(Transmission {
            id,
            src,
            dest,
            payload,
            bits,
            channel,
            start: now,
            end,
            origin,
            range,
        });
        Ok(self.active.last().expect("just pushed"))
    }

    fn verdict(&self, tx: &Transmission<P>, rx: NodeId, world: &World) -> Verdict {
        let st = &self.nodes[self.slot(rx)];
        if st.channel != tx.channel || st.tuned_since > tx.start {
            return Verdict::NotListening;
        }
        let pos = world.pos(rx);
        let mut collided = false;
        for other in self.active.iter().chain(self.history.iter()) {
            if other.id == tx.id || !other.overlaps(tx.start, tx.end) {
                continue;
            }
            if other.src == rx {
                return Verdict::HalfDuplex;
            }
            if other.channel == tx.channel && other.origin.distance(&pos) <= other.range + RANGE_EPS {
                collided = true;
            }
        }
        if collided {
            Verdict::Collision
        } else {
            Verdict::Delivered
        }
    }

    /// Close frame `id` and decide every intended receiver's verdict.
    /// Delivered sensors pay the receive energy.
    pub fn finish(&mut self, id: TxId, world: &mut World, log: &mut MetricLog) -> Option<TxOutcome<P>> {
        let idx = self.active.iter().position(|t| t.id == id)?;
        let tx = self.active[idx].clone();
        let src_slot = self.slot(tx.src);
        self.nodes[src_slot].tx = None;

        let candidates: Vec<NodeId> = match tx.dest {
            Some(d) => vec![d],
            None => world
                .node_ids()
                .filter(|&n| n != tx.src && tx.origin.distance(&world.pos(n)) <= tx.range + RANGE_EPS)
                .collect(),
        };
        let mut verdicts = Vec::with_capacity(candidates.len());
        for rx in candidates {
            if !world.alive(rx) || tx.origin.distance(&world.pos(rx)) > tx.range + RANGE_EPS {
                continue;
            }
            let v = self.verdict(&tx, rx, world);
            verdicts.push((rx, v));
        }

        let done = self.active.remove(idx);
        self.history.push(done);
        let horizon = self.active.iter().map(|t| t.start).fold(f64::INFINITY, f64::min);
        self.history.retain(|t| t.end > horizon);

        for &(rx, v) in &verdicts {
            if v != Verdict::Delivered {
                continue;
            }
            if let NodeId::Sensor(s) = rx {
                let fj = joules_to_fj(world.energy.rx_cost(tx.bits));
                world.charge(s, fj.max(1), DrainReason::Rx, tx.end, log);
            }
            self.record(RadioRecord::Rx {
                node: rx,
                src: tx.src,
                channel: tx.channel,
                start: tx.start,
                end: tx.end,
            });
        }
        Some(TxOutcome { tx, verdicts })
    }

    pub fn active_count(&self) -> usize {
        self.active.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Position;
    use crate::world::{EnergyModel, Field, SensorId, SinkId, WorldSpec};

    fn line_world(xs: &[f64], range: f64) -> World {
        World::build(&WorldSpec {
            field: Field::new(500.0, 10.0),
            sensor_positions: xs.iter().map(|&x| Position::new(x, 5.0)).collect(),
            sensor_energy: vec![1.0; xs.len()],
            sensor_tx_range: range,
            sensor_sense_range: 5.0,
            sink_count: 1,
            sink_range_ratio: 30.0,
            sink_v_min: 0.0,
            sink_v_max: 0.0,
            energy: EnergyModel::default(),
        })
    }

    fn s(i: u32) -> NodeId {
        NodeId::Sensor(SensorId(i))
    }

    #[test]
    fn neighbors_by_distance_and_channel() {
        let w = line_world(&[0.0, 10.0], 15.0);
        let mut r: Radio<()> = Radio::new(2, 1, ChannelPlan::default(), MacConfig::default());
        r.set_channel(NodeId::Sink(SinkId(0)), 11);
        assert_eq!(r.neighbors(s(0), 6, &w), vec![s(1)]);
        r.set_channel(s(1), 1);
        assert!(r.neighbors(s(0), 6, &w).is_empty());
    }

    #[test]
    fn asymmetric_sink_link() {
        let mut w = line_world(&[50.0], 15.0);
        w.sinks[0].pos = Position::new(450.0, 5.0);
        let mut r: Radio<()> = Radio::new(1, 1, ChannelPlan::default(), MacConfig::default());
        r.set_channel(s(0), 1);
        let sink = NodeId::Sink(SinkId(0));
        assert_eq!(r.neighbors(sink, 1, &w), vec![s(0)]);
        assert!(r.neighbors(s(0), 1, &w).is_empty());
    }

    #[test]
    fn collision_at_common_receiver() {
        let mut w = line_world(&[0.0, 10.0, 20.0], 15.0);
        let mut log = MetricLog::default();
        let mut r: Radio<u8> = Radio::new(3, 1, ChannelPlan::default(), MacConfig::default());
        let a = r.start(s(0), Some(s(1)), 0, 1000, 6, 0.0, &mut w, &mut log).unwrap().id;
        let b = r.start(s(2), Some(s(1)), 1, 1000, 6, 0.001, &mut w, &mut log).unwrap().id;
        let oa = r.finish(a, &mut w, &mut log).unwrap();
        let ob = r.finish(b, &mut w, &mut log).unwrap();
        assert_eq!(oa.verdicts, vec![(s(1), Verdict::Collision)]);
        assert_eq!(ob.verdicts, vec![(s(1), Verdict::Collision)]);
    }

    #[test]
    fn cross_channel_no_interference() {
        let mut w = line_world(&[0.0, 10.0, 20.0, 12.0], 15.0);
        let mut log = MetricLog::default();
        let mut r: Radio<u8> = Radio::new(4, 1, ChannelPlan::default(), MacConfig::default());
        r.set_channel(s(2), 11);
        r.set_channel(s(3), 11);
        let a = r.start(s(0), Some(s(1)), 0, 1000, 6, 0.0, &mut w, &mut log).unwrap().id;
        let b = r.start(s(2), Some(s(3)), 1, 1000, 11, 0.0, &mut w, &mut log).unwrap().id;
        assert!(r.finish(a, &mut w, &mut log).unwrap().delivered_to(s(1)));
        assert!(r.finish(b, &mut w, &mut log).unwrap().delivered_to(s(3)));
    }

    #[test]
    fn single_broadcast_reaches_every_tuned_neighbor() {
        let mut w = line_world(&[0.0, 5.0, 10.0, 40.0], 15.0);
        let mut log = MetricLog::default();
        let mut r: Radio<()> = Radio::new(4, 1, ChannelPlan::default(), MacConfig::default());
        let id = r.start(s(1), None, (), 100, 6, 0.0, &mut w, &mut log).unwrap().id;
        let out = r.finish(id, &mut w, &mut log).unwrap();
        let got: Vec<NodeId> = out.delivered().collect();
        assert_eq!(got, vec![s(0), s(2)]);
        let rx_drains = log.drains.iter().filter(|d| d.reason == DrainReason::Rx).count();
        assert_eq!(rx_drains, 2);
    }

    #[test]
    fn switch_latency_and_deafness() {
        let mut w = line_world(&[0.0, 10.0], 15.0);
        let mut log = MetricLog::default();
        let mut r: Radio<()> = Radio::new(2, 1, ChannelPlan::default(), MacConfig::default());
        assert_eq!(r.switch_channel(s(1), 6, 1.0).unwrap(), 1.0);
        let ready = r.switch_channel(s(1), 11, 1.0).unwrap();
        assert_eq!(ready, 1.0 + 224e-6);
        r.switch_channel(s(1), 6, 1.0001).unwrap();
        // A frame starting while s1 is mid-switch is lost to it.
        let id = r.start(s(0), Some(s(1)), (), 100, 6, 1.0002, &mut w, &mut log).unwrap().id;
        let out = r.finish(id, &mut w, &mut log).unwrap();
        assert_eq!(out.verdicts, vec![(s(1), Verdict::NotListening)]);
    }

    #[test]
    fn busy_and_wrong_channel() {
        let mut w = line_world(&[0.0, 10.0], 15.0);
        let mut log = MetricLog::default();
        let mut r: Radio<()> = Radio::new(2, 1, ChannelPlan::default(), MacConfig::default());
        r.start(s(0), None, (), 100, 6, 0.0, &mut w, &mut log).unwrap();
        assert_eq!(
            r.start(s(0), None, (), 100, 6, 0.0, &mut w, &mut log).unwrap_err(),
            RadioError::Busy(s(0))
        );
        // s1 hears s0's frame, so it is receiving.
        assert_eq!(
            r.start(s(1), None, (), 100, 6, 0.0001, &mut w, &mut log).unwrap_err(),
            RadioError::Busy(s(1))
        );
        assert_eq!(r.switch_channel(s(0), 1, 0.0).unwrap_err(), RadioError::Busy(s(0)));
        assert!(matches!(
            r.start(s(1), None, (), 100, 11, 0.0, &mut w, &mut log),
            Err(RadioError::Busy(_)) | Err(RadioError::WrongChannel { .. })
        ));
    }

    #[test]
    fn unicast_energy_uses_addressee_distance() {
        let mut w = line_world(&[0.0, 10.0], 15.0);
        let mut log = MetricLog::default();
        let mut r: Radio<()> = Radio::new(2, 1, ChannelPlan::default(), MacConfig::default());
        let before = w.sensors[0].energy_fj;
        r.start(s(0), Some(s(1)), (), 1000, 6, 0.0, &mut w, &mut log).unwrap();
        let spent = before - w.sensors[0].energy_fj;
        assert_eq!(spent, joules_to_fj(1000.0 * (50e-9 + 100e-12 * 100.0)));
    }

    #[test]
    fn phase_windows() {
        let m = MacConfig::default();
        assert_eq!(m.phase_at(0.005), Phase::Atim);
        assert_eq!(m.phase_at(0.02), Phase::SinkSlice);
        assert_eq!(m.phase_at(0.05), Phase::SensorSink);
        let t = m.next_fit(0.095, Phase::SensorSink, 0.01);
        assert!((t - 0.14).abs() < 1e-12, "{t}");
        let t = m.next_data_fit(0.001, 0.004);
        assert!((t - 0.01).abs() < 1e-12);
    }
}
