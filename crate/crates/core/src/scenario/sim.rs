//! One simulation run: the MSSSN two-layer network or the flat baseline,
//! driven by the event scheduler.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::config::{ConfigError, ScenarioConfig};
use crate::engine::{RngStream, RngStreams, Scheduler, SimError};
use crate::geometry::{Position, Rect};
use crate::localization::{schedule_beacons, AnchorObservation, BeaconSlot, Localizer};
use crate::metrics::{
    lifetimes, summarize, AggregateRecord, AlertReceipt, AlertRecord, DeliveryRecord, DropReason, DropRecord,
    GeneratedRecord, Lifetimes, MetricLog, QueryRecord, ReportId, Summary, TakeoverRecord, TreeVersionRecord,
};
use crate::mobility::{AreaGrid, MobilityState, MobilityView};
use crate::radio::{Phase, Radio, RadioError, TxId};
use crate::sensor::{generate_report, CollectionTree, DataReport, NextHop, SinkAnchor, TreeStrategy};
use crate::sink::hotspot::predicted_crossing;
use crate::sink::{aggregate_window, takeover, AlertGate, BroadcastKey, BroadcastRelay, Decision, HeartbeatMonitor, HotspotTrack, RouteCache};
use crate::trace::{EventRecord, Trace, TraceLine};
use crate::world::{
    deploy_sensors, grid_layout, joules_to_fj, load_layout, NodeId, RegionId, SensorId, SinkId, World, WorldSpec,
};
use crate::metrics::DrainReason;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum System {
    Msssn,
    /// One static sink at the field center; sensors relay to it over
    /// min-hop paths on a single channel.
    Flat,
}

impl System {
    pub fn name(&self) -> &'static str {
        match self {
            System::Msssn => "msssn",
            System::Flat => "flat",
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("layout: {0}")]
    Layout(String),
    #[error(transparent)]
    Engine(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunOptions {
    /// Keep the JSONL event trace (with radio audit records).
    pub trace: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t: f64,
    pub sink: u32,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationRow {
    pub sensor_id: u32,
    pub true_x: f64,
    pub true_y: f64,
    pub est_x: Option<f64>,
    pub est_y: Option<f64>,
    pub error_m: Option<f64>,
    pub n_anchors: usize,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub system: System,
    pub seed: u64,
    /// Final state; positions and region membership are as deployed.
    pub world: World,
    pub log: MetricLog,
    pub summary: Summary,
    pub lifetimes: Lifetimes,
    pub trace: Option<Trace>,
    pub waypoints: Vec<Waypoint>,
    pub localization: Vec<LocalizationRow>,
    pub events: u64,
}

/// Sensor positions and initial energies for `seed`, identical for both
/// systems.
pub fn deployment(cfg: &ScenarioConfig, seed: u64) -> Result<(Vec<Position>, Vec<f64>), RunError> {
    let field = crate::world::Field::new(cfg.field.width, cfg.field.height);
    let s = &cfg.sensors;
    match s.layout.as_str() {
        "grid" => Ok((grid_layout(s.count, &field), vec![s.energy; s.count])),
        "file" => {
            let path = s.layout_file.as_ref().ok_or_else(|| RunError::Layout("no layout_file".into()))?;
            let rows = load_layout(path).map_err(|e| RunError::Layout(e.to_string()))?;
            for r in &rows {
                if !field.rect().contains(&r.pos) {
                    return Err(RunError::Layout(format!("sensor {} at ({}, {}) is outside the field", r.id, r.pos.x, r.pos.y)));
                }
            }
            Ok((rows.iter().map(|r| r.pos).collect(), rows.iter().map(|r| r.energy.unwrap_or(s.energy)).collect()))
        }
        _ => {
            let mut rng = RngStream::new(seed, "deploy");
            Ok((deploy_sensors(s.count, &field, &mut rng), vec![s.energy; s.count]))
        }
    }
}

/// SHA-256 over sensor positions and initial energies, hex encoded.
pub fn deployment_hash(positions: &[Position], energy: &[f64]) -> String {
    let mut h = Sha256::new();
    for (p, e) in positions.iter().zip(energy) {
        h.update(p.x.to_le_bytes());
        h.update(p.y.to_le_bytes());
        h.update(e.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq)]
struct QueryMsg {
    id: u64,
    origin: SinkId,
    target: RegionId,
    path: Vec<SinkId>,
    /// Cached source route; `None` floods.
    route: Option<Vec<SinkId>>,
}

#[derive(Debug, Clone, PartialEq)]
struct ReplyMsg {
    query: u64,
    /// Reverse of the query path: responder first, origin last.
    route: Vec<SinkId>,
    query_path: Vec<SinkId>,
    visited: Vec<SinkId>,
    stale: bool,
}

#[derive(Debug, Clone, PartialEq)]
struct AlertMsg {
    id: u64,
    target: RegionId,
}

#[derive(Debug, Clone, PartialEq)]
enum Packet {
    Data(DataReport),
    Heartbeat,
    Aggregate { key: BroadcastKey, record: AggregateRecord },
    Query(QueryMsg),
    Reply(ReplyMsg),
    Alert(AlertMsg),
    Beacon,
}

#[derive(Debug, Clone, PartialEq)]
struct Outgoing {
    dest: Option<SinkId>,
    packet: Packet,
    bits: u64,
    attempts: u32,
}

#[derive(Debug)]
enum Action {
    Generate(SensorId),
    SensorService(SensorId),
    ProxySend(SensorId),
    TxEnd(TxId),
    SinkSlice,
    SensorPhase,
    MobilityStep,
    Maintain,
    AggregateTick,
    Heartbeat(SinkId),
    HeartbeatCheck,
    SinkService(SinkId),
    Enqueue(SinkId, Box<Outgoing>),
    Assess(SinkId, BroadcastKey, Box<Outgoing>),
    QueryStart(u64),
    QueryTimeout(u64),
    SinkFail(SinkId),
    HotspotObserve(usize),
    BeaconListen(usize),
    BeaconSend(usize),
}

impl Action {
    fn tag(&self) -> &'static str {
        match self {
            Action::Generate(_) => "generate",
            Action::SensorService(_) => "sensor_service",
            Action::ProxySend(_) => "proxy_send",
            Action::TxEnd(_) => "tx_end",
            Action::SinkSlice => "sink_slice",
            Action::SensorPhase => "sensor_phase",
            Action::MobilityStep => "mobility_step",
            Action::Maintain => "maintain",
            Action::AggregateTick => "aggregate_tick",
            Action::Heartbeat(_) => "heartbeat",
            Action::HeartbeatCheck => "heartbeat_check",
            Action::SinkService(_) => "sink_service",
            Action::Enqueue(..) => "relay_enqueue",
            Action::Assess(..) => "relay_assess",
            Action::QueryStart(_) => "query_start",
            Action::QueryTimeout(_) => "query_timeout",
            Action::SinkFail(_) => "sink_fail",
            Action::HotspotObserve(_) => "hotspot_observe",
            Action::BeaconListen(_) => "beacon_listen",
            Action::BeaconSend(_) => "beacon_send",
        }
    }

    fn nodes(&self) -> Vec<NodeId> {
        match self {
            Action::Generate(s) | Action::SensorService(s) | Action::ProxySend(s) => vec![NodeId::Sensor(*s)],
            Action::Heartbeat(k)
            | Action::SinkService(k)
            | Action::Enqueue(k, _)
            | Action::Assess(k, ..)
            | Action::SinkFail(k) => vec![NodeId::Sink(*k)],
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
struct Queued {
    report: DataReport,
    attempts: u32,
}

#[derive(Debug, Clone, Default)]
struct SensorState {
    queue: VecDeque<Queued>,
    /// The queue head is on the air, or the proxy is retuning to send it.
    in_flight: bool,
    listening: bool,
    service_at: Option<f64>,
}

#[derive(Debug, Clone)]
struct SinkState {
    outbox: VecDeque<Outgoing>,
    in_flight: bool,
    service_at: Option<f64>,
    monitor: HeartbeatMonitor,
    relay: BroadcastRelay,
    /// Readings delivered per covered region, pruned each aggregation.
    collected: BTreeMap<RegionId, Vec<(f64, f64)>>,
    /// Latest aggregate known per region (own or from peers).
    cache: BTreeMap<RegionId, AggregateRecord>,
    seen: BTreeSet<(u8, u64)>,
    routes: RouteCache,
    receipts: BTreeSet<u64>,
}

#[derive(Debug, Clone)]
struct QueryState {
    origin: SinkId,
    target: RegionId,
    t_issued: f64,
    resolved: bool,
}

const SEEN_QUERY: u8 = 0;
const SEEN_ALERT: u8 = 1;

struct Sim<'a> {
    cfg: &'a ScenarioConfig,
    seed: u64,
    system: System,
    world: World,
    radio: Radio<Packet>,
    sched: Scheduler<Action>,
    log: MetricLog,
    mac_rng: RngStream,
    readings: RngStream,
    relay_rng: RngStream,
    shadow: RngStream,
    mobility_rng: Vec<RngStream>,
    trees: Vec<CollectionTree>,
    sensors: Vec<SensorState>,
    sinks: Vec<SinkState>,
    mobility: Vec<MobilityState>,
    area_sensors: BTreeMap<RegionId, Vec<usize>>,
    queries: BTreeMap<u64, QueryState>,
    query_script: Vec<(f64, SinkId, RegionId)>,
    tracks: Vec<HotspotTrack>,
    gate: AlertGate,
    next_report: u64,
    next_broadcast: u64,
    next_alert: u64,
    localizers: Vec<Localizer>,
    beacon_slots: Vec<BeaconSlot>,
    reserved: BTreeSet<u64>,
    trace: Option<Trace>,
    waypoints: Vec<Waypoint>,
    deaths_seen: usize,
    events: u64,
}

/// Run one replication of `cfg` with `seed`.
pub fn run_scenario(cfg: &ScenarioConfig, seed: u64, system: System, opts: RunOptions) -> Result<RunResult, RunError> {
    cfg.validate(true)?;
    let (positions, energy) = deployment(cfg, seed)?;
    let hash = deployment_hash(&positions, &energy);
    let mut sim = Sim::new(cfg, seed, system, positions, energy, opts);
    sim.log.meta.deployment_hash = hash;
    sim.start()?;
    let t_end = cfg.t_end;
    while let Some(ev) = sim.sched.pop_due(t_end) {
        sim.events += 1;
        if let Some(trace) = &mut sim.trace {
            let rec = TraceLine::Event(EventRecord {
                t: ev.time,
                seq: ev.seq,
                action: ev.action.tag().to_string(),
                nodes: ev.action.nodes(),
            });
            trace.push(&rec);
        }
        sim.handle(ev.time, ev.action)?;
        sim.reap_deaths(ev.time);
        sim.flush_audit();
    }
    sim.sched.advance_to(t_end);
    Ok(sim.finish())
}

impl<'a> Sim<'a> {
    fn new(
        cfg: &'a ScenarioConfig,
        seed: u64,
        system: System,
        positions: Vec<Position>,
        energy: Vec<f64>,
        opts: RunOptions,
    ) -> Self {
        let flat = system == System::Flat;
        let spec = WorldSpec {
            field: crate::world::Field::new(cfg.field.width, cfg.field.height),
            sensor_positions: positions,
            sensor_energy: energy,
            sensor_tx_range: cfg.sensors.tx_range,
            sensor_sense_range: cfg.sensors.sense_range,
            sink_count: if flat { 1 } else { cfg.sinks.count },
            sink_range_ratio: cfg.sinks.range_ratio,
            sink_v_min: if flat { 0.0 } else { cfg.sinks.v_min },
            sink_v_max: if flat { 0.0 } else { cfg.sinks.v_max },
            energy: cfg.energy,
        };
        let world = World::build(&spec);
        let n_sensors = world.sensors.len();
        let n_sinks = world.sinks.len();
        let mut radio = Radio::new(n_sensors, n_sinks, cfg.channels, cfg.mac);
        if flat {
            radio.set_channel(NodeId::Sink(SinkId(0)), cfg.channels.sensor_sensor);
        }
        if opts.trace {
            radio.enable_audit();
        }
        let mut streams = RngStreams::new(seed);
        let mobility_rng = (0..n_sinks).map(|i| streams.stream(&format!("mobility/sink{i}")).clone()).collect();
        let strategy = if flat { TreeStrategy::StaticSink } else { cfg.tree.strategy };
        let trees = world.regions.iter().map(|r| CollectionTree::empty(r.id, strategy)).collect();
        let peers: Vec<SinkId> = world.sinks.iter().map(|k| k.id).collect();
        let sinks = world
            .sinks
            .iter()
            .map(|k| SinkState {
                outbox: VecDeque::new(),
                in_flight: false,
                service_at: None,
                monitor: HeartbeatMonitor::new(
                    cfg.faults.heartbeat_period,
                    cfg.faults.heartbeat_misses,
                    peers.iter().copied().filter(|p| *p != k.id),
                    0.0,
                ),
                relay: BroadcastRelay::new(cfg.broadcast.strategy, cfg.broadcast.relay, k.tx_range),
                collected: BTreeMap::new(),
                cache: BTreeMap::new(),
                seen: BTreeSet::new(),
                routes: RouteCache::default(),
                receipts: BTreeSet::new(),
            })
            .collect();
        let mobility = world
            .sinks
            .iter()
            .enumerate()
            .map(|(i, k)| {
                let model = if flat { crate::mobility::MobilityModel::Stationary } else { cfg.sinks.model(i) };
                MobilityState::new(model, cfg.sinks.params, k.pos, k.v_min, k.v_max)
            })
            .collect();
        let mut area_sensors = BTreeMap::new();
        for r in &world.regions {
            let grid = AreaGrid::new(r.bounds, cfg.sinks.params.areas_per_side);
            let mut counts = vec![0; grid.count()];
            for s in &r.members {
                counts[grid.locate(&world.sensor(*s).pos)] += 1;
            }
            area_sensors.insert(r.id, counts);
        }
        Sim {
            cfg,
            seed,
            system,
            radio,
            sched: Scheduler::new(),
            log: MetricLog::default(),
            mac_rng: streams.stream("mac").clone(),
            readings: streams.stream("traffic/readings").clone(),
            relay_rng: streams.stream("sink/relay").clone(),
            shadow: streams.stream("localization/shadowing").clone(),
            mobility_rng,
            trees,
            sensors: vec![SensorState::default(); n_sensors],
            sinks,
            mobility,
            area_sensors,
            queries: BTreeMap::new(),
            query_script: Vec::new(),
            tracks: Vec::new(),
            gate: AlertGate::new(cfg.hotspots.cooldown),
            next_report: 0,
            next_broadcast: 0,
            next_alert: 0,
            localizers: vec![Localizer::new(cfg.localization.window); n_sensors],
            beacon_slots: Vec::new(),
            reserved: BTreeSet::new(),
            trace: opts.trace.then(Trace::default),
            waypoints: Vec::new(),
            deaths_seen: 0,
            events: 0,
            world,
        }
    }

    fn flat(&self) -> bool {
        self.system == System::Flat
    }

    fn at(&mut self, t: f64, a: Action) -> Result<(), SimError> {
        if t <= self.cfg.t_end {
            self.sched.schedule(a, t)?;
        }
        Ok(())
    }

    fn start(&mut self) -> Result<(), RunError> {
        let cfg = self.cfg;
        self.log.meta.t_end = cfg.t_end;
        self.log.meta.sensor_count = self.world.sensors.len();
        self.log.meta.region_count = self.world.regions.len();
        for s in &self.world.sensors {
            if !s.alive {
                self.log.record_death(s.id, 0.0);
            }
        }
        self.deaths_seen = self.log.deaths.len();

        for r in 0..self.world.regions.len() {
            let region = RegionId(r as u32);
            let anchor = self.anchor(region);
            let strategy = self.trees[r].strategy;
            self.trees[r] = CollectionTree::build(&self.world, region, strategy, anchor, None);
            self.log.tree_versions.push(TreeVersionRecord {
                region,
                t: 0.0,
                version: 0,
                root: self.trees[r].root,
            });
        }
        for k in &self.world.sinks {
            self.waypoints.push(Waypoint {
                t: 0.0,
                sink: k.id.0,
                x: k.pos.x,
                y: k.pos.y,
            });
        }

        let mut phase = RngStream::new(self.seed, "traffic/phase");
        let interval = cfg.traffic.report_interval;
        for i in 0..self.world.sensors.len() {
            let offset = phase.uniform01() * interval;
            if interval > 0.0 {
                self.at(offset, Action::Generate(SensorId(i as u32)))?;
            }
        }
        self.at(cfg.tree.maintenance_period, Action::Maintain)?;

        if self.flat() {
            return Ok(());
        }

        let mac = cfg.mac;
        self.at(mac.atim_window, Action::SinkSlice)?;
        self.at(mac.atim_window + mac.sink_slice, Action::SensorPhase)?;
        self.at(cfg.sinks.step, Action::MobilityStep)?;
        self.at(cfg.traffic.aggregate_period, Action::AggregateTick)?;
        if self.world.sinks.len() > 1 {
            let slot = cfg.heartbeat_slot();
            let per_slice = (((mac.sink_slice - mac.switch_latency) / slot).floor() as usize).max(1);
            for i in 0..self.world.sinks.len() {
                let t = (i / per_slice) as f64 * mac.beacon_interval
                    + mac.atim_window
                    + mac.switch_latency
                    + (i % per_slice) as f64 * slot;
                self.at(t, Action::Heartbeat(SinkId(i as u32)))?;
            }
            self.at(cfg.faults.check_period, Action::HeartbeatCheck)?;
        }
        for f in &cfg.faults.sink_failures {
            self.at(f.t, Action::SinkFail(SinkId(f.sink)))?;
        }

        let regions = self.world.regions.len() as u64;
        let mut script: Vec<(f64, SinkId, RegionId)> = cfg
            .queries
            .scripted
            .iter()
            .map(|q| (q.t, SinkId(q.origin), RegionId(q.region)))
            .collect();
        if let Some(r) = &cfg.queries.random {
            let mut rng = RngStream::new(self.seed, "traffic/queries");
            let n = self.world.sinks.len() as u64;
            for _ in 0..r.count {
                let t = rng.uniform(r.start, r.end);
                let o = rng.int_below(n)? as u32;
                let g = rng.int_below(regions)? as u32;
                script.push((t, SinkId(o), RegionId(g)));
            }
        }
        for (i, q) in script.iter().enumerate() {
            self.sched.schedule(Action::QueryStart(i as u64), q.0).ok();
        }
        self.query_script = script;

        for (i, h) in cfg.hotspots.tracks.iter().enumerate() {
            self.tracks.push(HotspotTrack::new(i as u32, SinkId(0), cfg.hotspots.window));
            self.at(h.t_start, Action::HotspotObserve(i))?;
        }

        if cfg.localization.enabled {
            let l = &cfg.localization;
            let bi = mac.beacon_interval;
            let first = mac.interval_index(l.start) as f64 * bi;
            let period = (l.round_period / bi).round().max(1.0) * bi;
            let rounds = l
                .rounds
                .unwrap_or_else(|| (((cfg.t_end - first) / period).floor() as u32).saturating_add(1));
            let alive: Vec<SinkId> = self.world.sinks.iter().filter(|k| k.alive).map(|k| k.id).collect();
            let sched = schedule_beacons(&alive, bi, rounds, first, period);
            for (i, slot) in sched.slots.iter().enumerate() {
                let k = mac.interval_index(slot.start + bi / 2.0);
                self.reserved.insert(k);
                let (phase_start, _) = mac.window(k, Phase::SensorSink);
                self.at(phase_start, Action::BeaconListen(i))?;
                self.at(phase_start + 2.0 * mac.switch_latency, Action::BeaconSend(i))?;
            }
            self.beacon_slots = sched.slots;
        }
        Ok(())
    }

    fn handle(&mut self, now: f64, action: Action) -> Result<(), RunError> {
        match action {
            Action::Generate(s) => self.generate(now, s)?,
            Action::SensorService(s) => {
                if self.sensors[s.0 as usize].service_at == Some(now) {
                    self.sensors[s.0 as usize].service_at = None;
                    self.sensor_service(now, s)?;
                }
            }
            Action::ProxySend(s) => self.proxy_send(now, s)?,
            Action::TxEnd(id) => self.tx_end(now, id)?,
            Action::SinkSlice => {
                let ch = self.cfg.channels.sink_sink;
                self.retune_sinks(now, ch);
                self.at(now + self.cfg.mac.beacon_interval, Action::SinkSlice)?;
            }
            Action::SensorPhase => {
                let ch = self.cfg.channels.sensor_sink;
                self.retune_sinks(now, ch);
                self.at(now + self.cfg.mac.beacon_interval, Action::SensorPhase)?;
            }
            Action::MobilityStep => self.mobility_step(now)?,
            Action::Maintain => {
                self.charge_idle(now);
                for r in 0..self.trees.len() {
                    self.maintain_region(now, RegionId(r as u32))?;
                }
                self.at(now + self.cfg.tree.maintenance_period, Action::Maintain)?;
            }
            Action::AggregateTick => self.aggregate_tick(now)?,
            Action::Heartbeat(k) => {
                if self.world.sink(k).alive {
                    let out = Outgoing {
                        dest: None,
                        packet: Packet::Heartbeat,
                        bits: self.cfg.traffic.heartbeat_bits,
                        attempts: 0,
                    };
                    let st = &mut self.sinks[k.0 as usize];
                    let at = usize::from(st.in_flight).min(st.outbox.len());
                    st.outbox.insert(at, out);
                    self.sink_service(now, k)?;
                    self.at(now + self.cfg.faults.heartbeat_period, Action::Heartbeat(k))?;
                }
            }
            Action::HeartbeatCheck => {
                self.heartbeat_check(now)?;
                self.at(now + self.cfg.faults.check_period, Action::HeartbeatCheck)?;
            }
            Action::SinkService(k) => {
                if self.sinks[k.0 as usize].service_at == Some(now) {
                    self.sinks[k.0 as usize].service_at = None;
                    self.sink_service(now, k)?;
                }
            }
            Action::Enqueue(k, out) => self.enqueue(now, k, *out)?,
            Action::Assess(k, key, out) => {
                if self.world.sink(k).alive {
                    let pos = self.world.sink(k).pos;
                    if self.sinks[k.0 as usize].relay.assess(key, pos) {
                        self.enqueue(now, k, *out)?;
                    }
                }
            }
            Action::QueryStart(i) => self.query_start(now, i)?,
            Action::QueryTimeout(i) => {
                let Some(q) = self.queries.get_mut(&i) else {
                    return Ok(());
                };
                if !q.resolved {
                    q.resolved = true;
                    let (origin, target, t_issued) = (q.origin, q.target, q.t_issued);
                    self.sinks[origin.0 as usize].routes.invalidate_region(target);
                    self.log.queries.push(QueryRecord {
                        query: i,
                        origin,
                        region: target,
                        t_issued,
                        t: now,
                        answered: false,
                        path: vec![origin],
                        reply_hops: Vec::new(),
                        stale: false,
                    });
                }
            }
            Action::SinkFail(k) => {
                let sink = &mut self.world.sinks[k.0 as usize];
                if sink.alive {
                    sink.alive = false;
                    let st = &mut self.sinks[k.0 as usize];
                    st.outbox.clear();
                    if !self.world.sinks.iter().any(|s| s.alive) && self.log.headless_at.is_none() {
                        self.log.headless_at = Some(now);
                    }
                }
            }
            Action::HotspotObserve(i) => self.hotspot_observe(now, i)?,
            Action::BeaconListen(i) => self.beacon_listen(now, i),
            Action::BeaconSend(i) => self.beacon_send(now, i)?,
        }
        Ok(())
    }

    // ----- sensor plane -----

    fn generate(&mut self, now: f64, s: SensorId) -> Result<(), RunError> {
        let reading = self.readings.uniform01();
        self.at(now + self.cfg.traffic.report_interval, Action::Generate(s))?;
        let pos = self.world.sensor(s).pos;
        let id = ReportId(self.next_report);
        let Ok(report) = generate_report(&self.world, s, &pos, reading, self.cfg.traffic.report_bits, now, id) else {
            return Ok(());
        };
        self.next_report += 1;
        self.log.generated.push(GeneratedRecord {
            report: id,
            source: s,
            region: report.region,
            t: now,
        });
        self.push_report(now, s, report);
        self.kick_sensor(now, s, now)?;
        Ok(())
    }

    /// Append to a sensor queue, evicting the oldest report not on the air.
    fn push_report(&mut self, now: f64, s: SensorId, report: DataReport) {
        let cap = self.cfg.tree.buffer;
        let st = &mut self.sensors[s.0 as usize];
        if st.queue.len() >= cap {
            let victim = usize::from(st.in_flight);
            if let Some(old) = st.queue.remove(victim) {
                self.log.drops.push(DropRecord {
                    report: old.report.id,
                    t: now,
                    at: s,
                    hop: old.report.hop_count,
                    reason: DropReason::BufferOverflow,
                });
            }
        }
        st.queue.push_back(Queued { report, attempts: 0 });
    }

    fn kick_sensor(&mut self, _now: f64, s: SensorId, t: f64) -> Result<(), RunError> {
        let st = &mut self.sensors[s.0 as usize];
        if st.queue.is_empty() || st.in_flight {
            return Ok(());
        }
        if st.service_at.is_some_and(|p| p <= t) {
            return Ok(());
        }
        st.service_at = Some(t);
        self.sched.schedule(Action::SensorService(s), t)?;
        Ok(())
    }

    fn backoff(&mut self) -> f64 {
        self.mac_rng.uniform01() * self.cfg.mac.backoff
    }

    /// Random start offset inside a window that opens later than `now`, so
    /// deferred senders do not all start at the window edge.
    fn spread(&mut self, now: f64, fit: f64, slack: f64) -> f64 {
        if fit > now {
            fit + self.mac_rng.uniform01() * self.cfg.mac.backoff.min(slack.max(0.0))
        } else {
            fit
        }
    }

    /// Earliest sensor-sensor send time for a `frame`-long transmission.
    fn data_slot(&mut self, now: f64, frame: f64) -> f64 {
        if self.flat() {
            return now;
        }
        let mac = self.cfg.mac;
        let fit = mac.next_data_fit(now, frame);
        let end = mac.interval_index(fit) as f64 * mac.beacon_interval + mac.beacon_interval;
        self.spread(now, fit, end - fit - frame)
    }

    /// Earliest time a proxy may start retuning for a sink hop of `need`
    /// seconds, skipping intervals reserved for localization beacons.
    fn proxy_slot(&mut self, now: f64, need: f64) -> f64 {
        let mac = self.cfg.mac;
        let mut k = mac.interval_index(now);
        loop {
            if !self.reserved.contains(&k) {
                let (s, e) = mac.window(k, Phase::SensorSink);
                let start = now.max(s);
                if start + need <= e {
                    return self.spread(now, start, e - start - need);
                }
            }
            k += 1;
        }
    }

    fn sensor_service(&mut self, now: f64, s: SensorId) -> Result<(), RunError> {
        let i = s.0 as usize;
        if !self.world.sensor(s).alive || self.sensors[i].in_flight || self.sensors[i].listening {
            return Ok(());
        }
        let ch6 = self.cfg.channels.sensor_sensor;
        let ready = self.radio.switch_channel(NodeId::Sensor(s), ch6, now).unwrap_or(now);
        if ready > now {
            return self.kick_sensor(now, s, ready);
        }
        loop {
            let Some(head) = self.sensors[i].queue.front() else {
                return Ok(());
            };
            let report = head.report.clone();
            let r = report.region.0 as usize;
            match self.trees[r].next_hop(s) {
                NextHop::Wait => return Ok(()),
                NextHop::Detached => {
                    self.sensors[i].queue.pop_front();
                    self.log.drops.push(DropRecord {
                        report: report.id,
                        t: now,
                        at: s,
                        hop: report.hop_count,
                        reason: DropReason::Detached,
                    });
                }
                NextHop::Sensor(n) => {
                    let frame = self.cfg.mac.duration(report.bits);
                    let t = self.data_slot(now, frame);
                    if t > now {
                        return self.kick_sensor(now, s, t);
                    }
                    return self.send_data(now, s, NodeId::Sensor(n), report, ch6);
                }
                NextHop::Sink => {
                    let Some(k) = self.trees[r].sink else {
                        return Ok(());
                    };
                    if self.cfg.tree.proxy_wired && !self.flat() {
                        self.sensors[i].queue.pop_front();
                        self.deliver(now, k, &report);
                        continue;
                    }
                    let sink = self.world.sink(k);
                    if !sink.alive || sink.pos.distance(&self.world.sensor(s).pos) > self.world.sensor(s).tx_range {
                        // Stale attachment: the sink moved or died since the last rebuild.
                        let before = self.trees[r].version;
                        self.maintain_region(now, report.region)?;
                        if self.trees[r].version == before {
                            return Ok(());
                        }
                        continue;
                    }
                    if self.flat() {
                        return self.send_data(now, s, NodeId::Sink(k), report, ch6);
                    }
                    let mac = self.cfg.mac;
                    let need = mac.switch_latency + mac.duration(report.bits);
                    let t = self.proxy_slot(now, need);
                    if t > now {
                        return self.kick_sensor(now, s, t);
                    }
                    let ready = match self.radio.switch_channel(NodeId::Sensor(s), self.cfg.channels.sensor_sink, now) {
                        Ok(r) => r,
                        Err(_) => return Ok(()),
                    };
                    self.sensors[i].in_flight = true;
                    self.sched.schedule(Action::ProxySend(s), ready)?;
                    return Ok(());
                }
            }
        }
    }

    fn send_data(&mut self, now: f64, s: SensorId, dest: NodeId, report: DataReport, ch: u8) -> Result<(), RunError> {
        let bits = report.bits;
        match self
            .radio
            .start(NodeId::Sensor(s), Some(dest), Packet::Data(report), bits, ch, now, &mut self.world, &mut self.log)
        {
            Ok(tx) => {
                let (id, end) = (tx.id, tx.end);
                self.sensors[s.0 as usize].in_flight = true;
                self.sched.schedule(Action::TxEnd(id), end)?;
            }
            Err(RadioError::Busy(_)) | Err(RadioError::WrongChannel { .. }) => {
                let t = now + self.backoff();
                self.kick_sensor(now, s, t)?;
            }
            Err(RadioError::OutOfRange { .. }) => {
                self.fail_attempt(now, s);
                let t = now + self.backoff();
                self.kick_sensor(now, s, t)?;
            }
            Err(RadioError::NodeDead(_)) | Err(RadioError::ZeroBits) => {}
        }
        Ok(())
    }

    fn proxy_send(&mut self, now: f64, s: SensorId) -> Result<(), RunError> {
        let i = s.0 as usize;
        self.sensors[i].in_flight = false;
        if !self.world.sensor(s).alive {
            return Ok(());
        }
        let ch6 = self.cfg.channels.sensor_sensor;
        let ch1 = self.cfg.channels.sensor_sink;
        let target = self.sensors[i].queue.front().and_then(|h| {
            let tree = &self.trees[h.report.region.0 as usize];
            match (tree.next_hop(s), tree.sink) {
                (NextHop::Sink, Some(k)) => Some((k, h.report.clone())),
                _ => None,
            }
        });
        let sent = match target {
            Some((k, report))
                if self.world.sink(k).alive
                    && self.world.sink(k).pos.distance(&self.world.sensor(s).pos) <= self.world.sensor(s).tx_range =>
            {
                let bits = report.bits;
                match self.radio.start(
                    NodeId::Sensor(s),
                    Some(NodeId::Sink(k)),
                    Packet::Data(report),
                    bits,
                    ch1,
                    now,
                    &mut self.world,
                    &mut self.log,
                ) {
                    Ok(tx) => {
                        let (id, end) = (tx.id, tx.end);
                        self.sensors[i].in_flight = true;
                        self.sched.schedule(Action::TxEnd(id), end)?;
                        true
                    }
                    Err(_) => false,
                }
            }
            _ => false,
        };
        if !sent {
            let ready = self.radio.switch_channel(NodeId::Sensor(s), ch6, now).unwrap_or(now);
            let t = ready.max(now + self.backoff());
            self.kick_sensor(now, s, t)?;
        }
        Ok(())
    }

    /// Count a failed attempt on the queue head; drop it past the retry limit.
    fn fail_attempt(&mut self, now: f64, s: SensorId) {
        let limit = self.cfg.mac.retry_limit;
        let st = &mut self.sensors[s.0 as usize];
        let Some(head) = st.queue.front_mut() else {
            return;
        };
        head.attempts += 1;
        if head.attempts > limit {
            let q = st.queue.pop_front().expect("head");
            self.log.drops.push(DropRecord {
                report: q.report.id,
                t: now,
                at: s,
                hop: q.report.hop_count,
                reason: DropReason::RetriesExhausted,
            });
        }
    }

    fn deliver(&mut self, now: f64, k: SinkId, report: &DataReport) {
        self.log.deliveries.push(DeliveryRecord {
            report: report.id,
            source: report.source,
            region: report.region,
            sink: k,
            t_created: report.created_at,
            t_delivered: now,
            hops: report.hop_count + 1,
        });
        let st = &mut self.sinks[k.0 as usize];
        st.collected.entry(report.region).or_default().push((now, report.reading));
        let bounds = self.world.region(report.region).bounds;
        let pos = self.world.sensor(report.source).pos;
        self.mobility[k.0 as usize].record_collection(report.region, &bounds, &pos, 1.0, now);
    }

    fn sensor_tx_end(&mut self, now: f64, s: SensorId, dest: Option<NodeId>, delivered: bool) -> Result<(), RunError> {
        let i = s.0 as usize;
        self.sensors[i].in_flight = false;
        let ch6 = self.cfg.channels.sensor_sensor;
        let alive = self.world.sensor(s).alive;
        let ready = if alive {
            self.radio.switch_channel(NodeId::Sensor(s), ch6, now).unwrap_or(now)
        } else {
            now
        };
        if delivered {
            let q = self.sensors[i].queue.pop_front().expect("in-flight head");
            match dest {
                Some(NodeId::Sensor(n)) => {
                    let mut report = q.report;
                    report.hop_count += 1;
                    if self.world.sensor(n).alive {
                        self.push_report(now, n, report);
                        self.kick_sensor(now, n, now)?;
                    }
                }
                Some(NodeId::Sink(k)) => self.deliver(now, k, &q.report),
                None => {}
            }
            if alive {
                self.kick_sensor(now, s, ready)?;
            }
        } else if alive {
            self.fail_attempt(now, s);
            let t = ready.max(now + self.backoff());
            self.kick_sensor(now, s, t)?;
        }
        Ok(())
    }

    /// Covering sink nearest the region centroid (lowest id on ties).
    fn attach_sink(&self, region: RegionId) -> Option<SinkId> {
        let c = self.world.region(region).bounds.centroid();
        self.world
            .covering_sinks(region)
            .into_iter()
            .min_by(|a, b| {
                let da = self.world.sink(*a).pos.distance(&c);
                let db = self.world.sink(*b).pos.distance(&c);
                da.total_cmp(&db).then(a.cmp(b))
            })
    }

    fn anchor(&self, region: RegionId) -> Option<SinkAnchor> {
        self.attach_sink(region).map(|id| SinkAnchor {
            id,
            pos: self.world.sink(id).pos,
        })
    }

    fn maintain_region(&mut self, now: f64, region: RegionId) -> Result<(), RunError> {
        let anchor = self.anchor(region);
        let r = region.0 as usize;
        let was_waiting = self.trees[r].sink.is_none();
        if self.trees[r].maintain(&self.world, anchor) {
            self.log.tree_versions.push(TreeVersionRecord {
                region,
                t: now,
                version: self.trees[r].version,
                root: self.trees[r].root,
            });
        }
        if was_waiting && self.trees[r].sink.is_some() || self.trees[r].version > 0 {
            let members = self.world.region(region).members.clone();
            for s in members {
                if self.world.sensor(s).alive && !self.sensors[s.0 as usize].queue.is_empty() {
                    self.kick_sensor(now, s, now)?;
                }
            }
        }
        Ok(())
    }

    fn charge_idle(&mut self, now: f64) {
        let p = self.cfg.energy.idle_power;
        if p <= 0.0 {
            return;
        }
        let fj = joules_to_fj(p * self.cfg.tree.maintenance_period);
        for i in 0..self.world.sensors.len() {
            self.world.charge(SensorId(i as u32), fj, DrainReason::Idle, now, &mut self.log);
        }
    }

    fn reap_deaths(&mut self, now: f64) {
        while self.deaths_seen < self.log.deaths.len() {
            let s = self.log.deaths[self.deaths_seen].node;
            self.deaths_seen += 1;
            let st = &mut self.sensors[s.0 as usize];
            let keep = usize::from(st.in_flight);
            let dropped: Vec<Queued> = st.queue.drain(keep.min(st.queue.len())..).collect();
            for q in dropped {
                self.log.drops.push(DropRecord {
                    report: q.report.id,
                    t: now,
                    at: s,
                    hop: q.report.hop_count,
                    reason: DropReason::NodeDied,
                });
            }
            st.listening = false;
        }
    }

    fn flush_audit(&mut self) {
        if let Some(trace) = self.trace.as_mut() {
            for r in self.radio.take_audit() {
                trace.push(&TraceLine::Radio(r));
            }
        }
    }

    // ----- radio dispatch -----

    fn tx_end(&mut self, now: f64, id: TxId) -> Result<(), RunError> {
        let Some(out) = self.radio.finish(id, &mut self.world, &mut self.log) else {
            return Ok(());
        };
        match out.tx.src {
            NodeId::Sensor(s) => {
                let delivered = out.tx.dest.is_some_and(|d| out.delivered_to(d));
                // A dead sender's queue was already dropped; its frame still counts.
                let dest = out.tx.dest;
                if !self.world.sensor(s).alive && delivered {
                    if let Packet::Data(report) = &out.tx.payload {
                        self.relay_orphan(now, dest, report.clone())?;
                    }
                    self.sensors[s.0 as usize].in_flight = false;
                    return Ok(());
                }
                self.sensor_tx_end(now, s, dest, delivered)
            }
            NodeId::Sink(k) => {
                if matches!(out.tx.payload, Packet::Beacon) {
                    self.beacon_heard(now, k, &out);
                    self.sinks[k.0 as usize].in_flight = false;
                    self.beacon_done(now)?;
                    return self.kick_sink(now, k, now);
                }
                let receivers: Vec<SinkId> = out
                    .delivered()
                    .filter_map(|n| match n {
                        NodeId::Sink(r) => Some(r),
                        NodeId::Sensor(_) => None,
                    })
                    .collect();
                let st = &mut self.sinks[k.0 as usize];
                st.in_flight = false;
                let ok = match out.tx.dest {
                    Some(d) => out.delivered_to(d),
                    None => true,
                };
                if ok {
                    st.outbox.pop_front();
                } else if let Some(head) = st.outbox.front_mut() {
                    head.attempts += 1;
                    if head.attempts > self.cfg.mac.retry_limit {
                        st.outbox.pop_front();
                    }
                }
                let sender_pos = out.tx.origin;
                for r in receivers {
                    self.sink_receive(now, r, k, sender_pos, &out.tx.payload, out.tx.dest.is_some())?;
                }
                let t = if ok { now } else { now + self.backoff() };
                self.kick_sink(now, k, t)
            }
        }
    }

    /// The sender died paying for a frame that still arrived.
    fn relay_orphan(&mut self, now: f64, dest: Option<NodeId>, mut report: DataReport) -> Result<(), RunError> {
        match dest {
            Some(NodeId::Sensor(n)) if self.world.sensor(n).alive => {
                report.hop_count += 1;
                self.push_report(now, n, report);
                self.kick_sensor(now, n, now)
            }
            Some(NodeId::Sink(k)) => {
                self.deliver(now, k, &report);
                Ok(())
            }
            _ => Ok(()),
        }
    }

    // ----- sink plane -----

    fn retune_sinks(&mut self, now: f64, ch: u8) {
        for i in 0..self.world.sinks.len() {
            if self.world.sinks[i].alive {
                let _ = self.radio.switch_channel(NodeId::Sink(SinkId(i as u32)), ch, now);
            }
        }
    }

    /// Earliest sink-slice start for a `frame`, after the slice retune.
    fn sink_slot(&mut self, now: f64, frame: f64) -> f64 {
        let mac = self.cfg.mac;
        let mut k = mac.interval_index(now);
        loop {
            let (s, e) = mac.window(k, Phase::SinkSlice);
            let start = now.max(s + mac.switch_latency);
            if start + frame <= e {
                return self.spread(now, start, e - start - frame);
            }
            k += 1;
        }
    }

    fn kick_sink(&mut self, _now: f64, k: SinkId, t: f64) -> Result<(), RunError> {
        let st = &mut self.sinks[k.0 as usize];
        if st.outbox.is_empty() || st.in_flight || !self.world.sinks[k.0 as usize].alive {
            return Ok(());
        }
        if st.service_at.is_some_and(|p| p <= t) {
            return Ok(());
        }
        st.service_at = Some(t);
        self.sched.schedule(Action::SinkService(k), t)?;
        Ok(())
    }

    fn enqueue(&mut self, now: f64, k: SinkId, out: Outgoing) -> Result<(), RunError> {
        if !self.world.sink(k).alive {
            return Ok(());
        }
        self.sinks[k.0 as usize].outbox.push_back(out);
        self.kick_sink(now, k, now)
    }

    fn sink_service(&mut self, now: f64, k: SinkId) -> Result<(), RunError> {
        let i = k.0 as usize;
        if !self.world.sink(k).alive || self.sinks[i].in_flight {
            return Ok(());
        }
        let Some(head) = self.sinks[i].outbox.front() else {
            return Ok(());
        };
        let (dest, bits, packet) = (head.dest, head.bits, head.packet.clone());
        let frame = self.cfg.mac.duration(bits);
        let t = self.sink_slot(now, frame);
        if t > now {
            return self.kick_sink(now, k, t);
        }
        let ch = self.cfg.channels.sink_sink;
        match self.radio.start(
            NodeId::Sink(k),
            dest.map(NodeId::Sink),
            packet,
            bits,
            ch,
            now,
            &mut self.world,
            &mut self.log,
        ) {
            Ok(tx) => {
                let (id, end) = (tx.id, tx.end);
                self.sinks[i].in_flight = true;
                self.sched.schedule(Action::TxEnd(id), end)?;
            }
            Err(RadioError::OutOfRange { .. }) | Err(RadioError::NodeDead(_)) | Err(RadioError::ZeroBits) => {
                // The next hop is gone: the route is broken.
                self.sinks[i].outbox.pop_front();
                self.kick_sink(now, k, now)?;
            }
            Err(RadioError::Busy(_)) | Err(RadioError::WrongChannel { .. }) => {
                let t = now + self.backoff();
                self.kick_sink(now, k, t)?;
            }
        }
        Ok(())
    }

    fn covers(&self, k: SinkId, region: RegionId) -> bool {
        let s = self.world.sink(k);
        s.alive && s.covered_regions.contains(&region)
    }

    fn cached_aggregate(&self, k: SinkId, region: RegionId, now: f64) -> bool {
        match self.sinks[k.0 as usize].cache.get(&region) {
            Some(a) => now - a.t > self.cfg.traffic.aggregate_period,
            None => true,
        }
    }

    fn sink_receive(
        &mut self,
        now: f64,
        k: SinkId,
        from: SinkId,
        sender_pos: Position,
        packet: &Packet,
        unicast: bool,
    ) -> Result<(), RunError> {
        let bits = &self.cfg.traffic;
        match packet {
            Packet::Heartbeat => self.sinks[k.0 as usize].monitor.heard(from, now),
            Packet::Aggregate { key, record } => {
                let st = &mut self.sinks[k.0 as usize];
                let newer = st.cache.get(&record.region).is_none_or(|a| a.t <= record.t);
                if newer {
                    st.cache.insert(record.region, record.clone());
                }
                let out = Outgoing {
                    dest: None,
                    packet: packet.clone(),
                    bits: bits.aggregate_bits,
                    attempts: 0,
                };
                match st.relay.on_receive(*key, sender_pos, &mut self.relay_rng) {
                    Decision::Ignore => {}
                    Decision::Rebroadcast { delay } => {
                        self.sched.schedule(Action::Enqueue(k, Box::new(out)), now + delay)?;
                    }
                    Decision::Assess { delay } => {
                        self.sched.schedule(Action::Assess(k, *key, Box::new(out)), now + delay)?;
                    }
                }
            }
            Packet::Query(q) => self.query_receive(now, k, q.clone(), unicast)?,
            Packet::Reply(r) => self.reply_receive(now, k, r.clone())?,
            Packet::Alert(a) => {
                if !self.sinks[k.0 as usize].seen.insert((SEEN_ALERT, a.id)) {
                    return Ok(());
                }
                if self.covers(k, a.target) {
                    self.receipt(now, k, a.id, a.target);
                } else {
                    let delay = self.relay_rng.uniform01() * self.cfg.broadcast.relay.jitter;
                    let out = Outgoing {
                        dest: None,
                        packet: packet.clone(),
                        bits: self.cfg.traffic.alert_bits,
                        attempts: 0,
                    };
                    self.sched.schedule(Action::Enqueue(k, Box::new(out)), now + delay)?;
                }
            }
            Packet::Data(_) | Packet::Beacon => {}
        }
        Ok(())
    }

    fn receipt(&mut self, now: f64, k: SinkId, id: u64, region: RegionId) {
        if self.sinks[k.0 as usize].receipts.insert(id) {
            self.log.alert_receipts.push(AlertReceipt { id, t: now, sink: k, region });
        }
    }

    fn aggregate_tick(&mut self, now: f64) -> Result<(), RunError> {
        let period = self.cfg.traffic.aggregate_period;
        let t0 = (now - period).max(0.0);
        for i in 0..self.world.sinks.len() {
            let k = SinkId(i as u32);
            if !self.world.sink(k).alive {
                continue;
            }
            let regions: Vec<RegionId> = self.world.sink(k).covered_regions.iter().copied().collect();
            for region in regions {
                let st = &mut self.sinks[i];
                let readings = st.collected.remove(&region).unwrap_or_default();
                let agg = aggregate_window(k, region, &readings, t0, now).expect("positive window");
                let record = AggregateRecord {
                    t: now,
                    sink: k,
                    region,
                    count: agg.count,
                    mean: agg.mean,
                };
                st.cache.insert(region, record.clone());
                self.log.aggregates.push(record.clone());
                if self.world.sinks.len() > 1 {
                    let key = BroadcastKey {
                        origin: k,
                        seq: self.next_broadcast,
                    };
                    self.next_broadcast += 1;
                    self.sinks[i].relay.originate(key);
                    let out = Outgoing {
                        dest: None,
                        packet: Packet::Aggregate { key, record },
                        bits: self.cfg.traffic.aggregate_bits,
                        attempts: 0,
                    };
                    self.enqueue(now, k, out)?;
                }
            }
            // Keep relay memory bounded: broadcasts older than a few periods are done.
            let horizon = self.next_broadcast.saturating_sub(64 * self.world.sinks.len() as u64);
            self.sinks[i].relay.forget(|key| key.seq >= horizon);
        }
        self.at(now + period, Action::AggregateTick)?;
        Ok(())
    }

    fn heartbeat_check(&mut self, now: f64) -> Result<(), RunError> {
        for i in 0..self.world.sinks.len() {
            if !self.world.sinks[i].alive {
                continue;
            }
            let suspects = self.sinks[i].monitor.check(now);
            for f in suspects {
                self.takeover_policy(now, f)?;
            }
        }
        Ok(())
    }

    /// The remote-user hook: confirm a suspicion out of band, then hand the
    /// failed sink's regions to the nearest survivors.
    fn takeover_policy(&mut self, now: f64, f: SinkId) -> Result<(), RunError> {
        if self.world.sink(f).alive {
            for st in &mut self.sinks {
                st.monitor.reset(f, now);
            }
            return Ok(());
        }
        if self.world.sink(f).covered_regions.is_empty() {
            return Ok(());
        }
        match takeover(&mut self.world, f) {
            Ok(moves) => {
                for (region, new_sink) in moves {
                    self.log.takeovers.push(TakeoverRecord {
                        t: now,
                        failed: f,
                        region,
                        new_sink,
                    });
                    self.maintain_region(now, region)?;
                }
                for st in &mut self.sinks {
                    st.routes.invalidate_sink(f);
                }
            }
            Err(_) => {
                if self.log.headless_at.is_none() {
                    self.log.headless_at = Some(now);
                }
            }
        }
        Ok(())
    }

    fn mobility_step(&mut self, now: f64) -> Result<(), RunError> {
        let dt = self.cfg.sinks.step;
        for i in 0..self.world.sinks.len() {
            if !self.world.sinks[i].alive {
                continue;
            }
            let covered: Vec<RegionId> = self.world.sinks[i].covered_regions.iter().copied().collect();
            let view = MobilityView {
                regions: covered.iter().map(|r| (*r, self.world.region(*r).bounds)).collect(),
                area_sensors: covered
                    .iter()
                    .map(|r| (*r, self.area_sensors[r].clone()))
                    .collect(),
            };
            let Ok(pos) = self.mobility[i].step(dt, now, &mut self.mobility_rng[i], &view) else {
                continue;
            };
            self.world.sinks[i].pos = pos;
            self.waypoints.push(Waypoint {
                t: now + dt,
                sink: i as u32,
                x: pos.x,
                y: pos.y,
            });
            for r in covered {
                self.maintain_region(now, r)?;
            }
        }
        self.at(now + dt, Action::MobilityStep)?;
        Ok(())
    }

    fn query_start(&mut self, now: f64, i: u64) -> Result<(), RunError> {
        let (_, origin, target) = self.query_script[i as usize];
        let mut record = QueryRecord {
            query: i,
            origin,
            region: target,
            t_issued: now,
            t: now,
            answered: false,
            path: vec![origin],
            reply_hops: Vec::new(),
            stale: false,
        };
        if !self.world.sink(origin).alive {
            self.log.queries.push(record);
            return Ok(());
        }
        if self.covers(origin, target) {
            record.answered = true;
            record.reply_hops = vec![origin];
            record.stale = self.cached_aggregate(origin, target, now);
            self.log.queries.push(record);
            return Ok(());
        }
        self.queries.insert(
            i,
            QueryState {
                origin,
                target,
                t_issued: now,
                resolved: false,
            },
        );
        self.sched
            .schedule(Action::QueryTimeout(i), now + self.cfg.routing.discovery_timeout)?;
        self.sinks[origin.0 as usize].seen.insert((SEEN_QUERY, i));
        let route = self.sinks[origin.0 as usize].routes.get(target).cloned();
        let msg = QueryMsg {
            id: i,
            origin,
            target,
            path: vec![origin],
            route: route.clone(),
        };
        let dest = route.as_ref().and_then(|r| r.get(1).copied());
        let out = Outgoing {
            dest,
            packet: Packet::Query(msg),
            bits: self.cfg.traffic.query_bits,
            attempts: 0,
        };
        self.enqueue(now, origin, out)
    }

    fn query_receive(&mut self, now: f64, k: SinkId, mut q: QueryMsg, unicast: bool) -> Result<(), RunError> {
        if !unicast && !self.sinks[k.0 as usize].seen.insert((SEEN_QUERY, q.id)) {
            return Ok(());
        }
        if q.route.is_some() != unicast || !q.path.last().is_some_and(|_| true) {
            return Ok(());
        }
        if !q_visit(&mut q.path, k) {
            return Ok(());
        }
        if self.covers(k, q.target) {
            let route: Vec<SinkId> = q.path.iter().rev().copied().collect();
            let reply = ReplyMsg {
                query: q.id,
                route: route.clone(),
                query_path: q.path.clone(),
                visited: vec![k],
                stale: self.cached_aggregate(k, q.target, now),
            };
            let out = Outgoing {
                dest: route.get(1).copied(),
                packet: Packet::Reply(reply),
                bits: self.cfg.traffic.reply_bits,
                attempts: 0,
            };
            return self.enqueue(now, k, out);
        }
        match q.route.clone() {
            Some(route) => {
                let Some(pos) = route.iter().position(|s| *s == k) else {
                    return Ok(());
                };
                let Some(&next) = route.get(pos + 1) else {
                    return Ok(());
                };
                let out = Outgoing {
                    dest: Some(next),
                    packet: Packet::Query(q),
                    bits: self.cfg.traffic.query_bits,
                    attempts: 0,
                };
                self.enqueue(now, k, out)
            }
            None => {
                let delay = self.relay_rng.uniform01() * self.cfg.broadcast.relay.jitter;
                let out = Outgoing {
                    dest: None,
                    packet: Packet::Query(q),
                    bits: self.cfg.traffic.query_bits,
                    attempts: 0,
                };
                self.sched.schedule(Action::Enqueue(k, Box::new(out)), now + delay)?;
                Ok(())
            }
        }
    }

    fn reply_receive(&mut self, now: f64, k: SinkId, mut r: ReplyMsg) -> Result<(), RunError> {
        let idx = r.visited.len();
        if r.route.get(idx) != Some(&k) {
            return Ok(());
        }
        r.visited.push(k);
        if idx + 1 < r.route.len() {
            let out = Outgoing {
                dest: Some(r.route[idx + 1]),
                packet: Packet::Reply(r),
                bits: self.cfg.traffic.reply_bits,
                attempts: 0,
            };
            return self.enqueue(now, k, out);
        }
        let Some(q) = self.queries.get_mut(&r.query) else {
            return Ok(());
        };
        if q.resolved || q.origin != k {
            return Ok(());
        }
        q.resolved = true;
        let (target, t_issued) = (q.target, q.t_issued);
        self.sinks[k.0 as usize].routes.insert(target, r.query_path.clone());
        self.log.queries.push(QueryRecord {
            query: r.query,
            origin: k,
            region: target,
            t_issued,
            t: now,
            answered: true,
            path: r.query_path,
            reply_hops: r.visited,
            stale: r.stale,
        });
        Ok(())
    }

    fn hotspot_observe(&mut self, now: f64, i: usize) -> Result<(), RunError> {
        let h = self.cfg.hotspots.tracks[i].clone();
        let dt = now - h.t_start;
        let p = Position::new(h.start[0] + h.velocity[0] * dt, h.start[1] + h.velocity[1] * dt);
        if now + self.cfg.hotspots.observe_period <= h.t_end {
            self.at(now + self.cfg.hotspots.observe_period, Action::HotspotObserve(i))?;
        }
        let Some(region) = self.world.locate(&p) else {
            return Ok(());
        };
        let Some(owner) = self.attach_sink(region) else {
            return Ok(());
        };
        let track = &mut self.tracks[i];
        track.owner = owner;
        track.observe(now, p);
        let Some((vx, vy)) = track.velocity() else {
            return Ok(());
        };
        let speed = vx.hypot(vy);
        if speed <= 0.0 {
            return Ok(());
        }
        let bounds: Rect = self.world.region(region).bounds;
        let tau = self
            .cfg
            .hotspots
            .horizon
            .unwrap_or(bounds.width().min(bounds.height()) / (4.0 * speed));
        let Some(to) = predicted_crossing(&self.tracks[i], &self.world.grid, &self.world.field, tau) else {
            return Ok(());
        };
        if !self.gate.allow(i as u32, to, now) {
            return Ok(());
        }
        let id = self.next_alert;
        self.next_alert += 1;
        self.log.alerts.push(AlertRecord {
            id,
            t: now,
            hotspot: i as u32,
            from: owner,
            region: to,
        });
        self.sinks[owner.0 as usize].seen.insert((SEEN_ALERT, id));
        if self.covers(owner, to) {
            self.receipt(now, owner, id, to);
            return Ok(());
        }
        // The alert carries the track history: one (t, x, y) sample per observation.
        let bits = self.cfg.traffic.alert_bits + 192 * self.tracks[i].observations.len() as u64;
        let out = Outgoing {
            dest: None,
            packet: Packet::Alert(AlertMsg { id, target: to }),
            bits,
            attempts: 0,
        };
        self.enqueue(now, owner, out)
    }

    // ----- localization -----

    fn beacon_listen(&mut self, now: f64, _slot: usize) {
        let ch1 = self.cfg.channels.sensor_sink;
        for i in 0..self.world.sensors.len() {
            let s = SensorId(i as u32);
            let st = &self.sensors[i];
            if !self.world.sensor(s).alive || st.in_flight || st.listening {
                continue;
            }
            if self.radio.is_switching(NodeId::Sensor(s), now) || self.radio.is_transmitting(NodeId::Sensor(s)) {
                continue;
            }
            if self.radio.switch_channel(NodeId::Sensor(s), ch1, now).is_ok() {
                self.sensors[i].listening = true;
            }
        }
    }

    fn beacon_send(&mut self, now: f64, slot: usize) -> Result<(), RunError> {
        let k = self.beacon_slots[slot].sink;
        let ch1 = self.cfg.channels.sensor_sink;
        let bits = self.cfg.traffic.beacon_bits;
        let sent = self.world.sink(k).alive
            && !self.sinks[k.0 as usize].in_flight
            && self.radio.channel(NodeId::Sink(k)) == ch1;
        if sent {
            if let Ok(tx) = self.radio.start(NodeId::Sink(k), None, Packet::Beacon, bits, ch1, now, &mut self.world, &mut self.log) {
                let (id, end) = (tx.id, tx.end);
                self.sinks[k.0 as usize].in_flight = true;
                self.sched.schedule(Action::TxEnd(id), end)?;
                return Ok(());
            }
        }
        self.beacon_done(now)
    }

    fn beacon_heard(&mut self, now: f64, _k: SinkId, out: &crate::radio::TxOutcome<Packet>) {
        let model = self.cfg.localization.path_loss;
        for n in out.delivered() {
            let NodeId::Sensor(s) = n else {
                continue;
            };
            let d = out.tx.origin.distance(&self.world.sensor(s).pos);
            let z = self.shadow.standard_normal();
            let rssi = model.rssi(d, z);
            self.localizers[s.0 as usize].hear(AnchorObservation {
                anchor: out.tx.origin,
                rssi,
                distance: model.rssi_to_distance(rssi),
                heard_at: now,
            });
        }
    }

    fn beacon_done(&mut self, now: f64) -> Result<(), RunError> {
        let ch6 = self.cfg.channels.sensor_sensor;
        for i in 0..self.world.sensors.len() {
            if !self.sensors[i].listening {
                continue;
            }
            self.sensors[i].listening = false;
            let s = SensorId(i as u32);
            if self.world.sensor(s).alive {
                let ready = self.radio.switch_channel(NodeId::Sensor(s), ch6, now).unwrap_or(now);
                self.kick_sensor(now, s, ready)?;
            }
        }
        Ok(())
    }

    fn finish(mut self) -> RunResult {
        self.flush_audit();
        let summary = summarize(&self.log);
        let lifetimes = lifetimes(&self.log, &self.world, &self.cfg.lifetime);
        let localization = if self.cfg.localization.enabled && !self.flat() {
            self.world
                .sensors
                .iter()
                .map(|s| {
                    let est = self.localizers[s.id.0 as usize].estimate;
                    LocalizationRow {
                        sensor_id: s.id.0,
                        true_x: s.pos.x,
                        true_y: s.pos.y,
                        est_x: est.map(|e| e.pos.x),
                        est_y: est.map(|e| e.pos.y),
                        error_m: est.map(|e| e.pos.distance(&s.pos)),
                        n_anchors: est.map_or(0, |e| e.anchors),
                    }
                })
                .collect()
        } else {
            Vec::new()
        };
        RunResult {
            system: self.system,
            seed: self.seed,
            world: self.world,
            log: self.log,
            summary,
            lifetimes,
            trace: self.trace,
            waypoints: self.waypoints,
            localization,
            events: self.events,
        }
    }
}

fn q_visit(path: &mut Vec<SinkId>, k: SinkId) -> bool {
    if path.contains(&k) {
        return false;
    }
    path.push(k);
    true
}
