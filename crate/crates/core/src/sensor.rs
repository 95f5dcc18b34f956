//! Sensing, per-region collection trees, and hop-by-hop report forwarding.
//!
//! Trees are rebuilt from scratch on every structural change; the version
//! counter moves iff the tree's edge set (including the attachment to the
//! sink) changes.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Position;
use crate::metrics::{DeliveryRecord, DropReason, DropRecord, MetricLog, ReportId};
use crate::radio::MacConfig;
use crate::world::{RadioMode, RegionId, SensorId, SensorNode, SinkId, World};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeStrategy {
    /// Rooted at the sensor nearest the covering sink (its proxy).
    SinkRooted,
    /// Rooted at an elected access node, with a unicast path to the proxy.
    AccessNodeRooted,
    /// Flat baseline: every sensor in range of a fixed sink attaches to it.
    StaticSink,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensorError {
    #[error("sensor {0} is dead")]
    NodeDead(SensorId),
    #[error("stimulus at {distance} m is beyond sensing range {range} m")]
    NotDetected { distance: f64, range: f64 },
    #[error("sensor {0} has no path to the tree root")]
    Detached(SensorId),
    #[error("region {0} has no sink attachment")]
    NoAttachment(RegionId),
    #[error("report dropped at hop {hop} after retries")]
    Dropped { hop: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataReport {
    pub id: ReportId,
    pub source: SensorId,
    pub region: RegionId,
    pub bits: u64,
    pub reading: f64,
    pub created_at: f64,
    pub hop_count: u32,
    /// Hotspot id and its observed position, for hotspot-triggered reports.
    pub hotspot: Option<(u32, Position)>,
}

/// Closed-disk detection: a stimulus exactly at `sense_range` is detected.
pub fn detects(sensor: &SensorNode, stimulus: &Position) -> bool {
    sensor.pos.distance(stimulus) <= sensor.sense_range
}

pub fn generate_report(
    world: &World,
    sensor: SensorId,
    stimulus: &Position,
    reading: f64,
    bits: u64,
    now: f64,
    id: ReportId,
) -> Result<DataReport, SensorError> {
    let node = world.sensor(sensor);
    if !node.alive {
        return Err(SensorError::NodeDead(sensor));
    }
    if !detects(node, stimulus) {
        return Err(SensorError::NotDetected {
            distance: node.pos.distance(stimulus),
            range: node.sense_range,
        });
    }
    Ok(DataReport {
        id,
        source: sensor,
        region: node.region,
        bits: bits.max(1),
        reading,
        created_at: now,
        hop_count: 0,
        hotspot: None,
    })
}

/// Where a sensor sends a report next.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NextHop {
    Sensor(SensorId),
    Sink,
    /// The tree exists but has no sink attachment yet; hold the report.
    Wait,
    Detached,
}

/// The sink a tree attaches to and where it currently is.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkAnchor {
    pub id: SinkId,
    pub pos: Position,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectionTree {
    pub region: RegionId,
    pub strategy: TreeStrategy,
    pub root: Option<SensorId>,
    pub sink: Option<SinkId>,
    /// Sensors that hand reports straight to the sink.
    pub attach: BTreeSet<SensorId>,
    pub parent: BTreeMap<SensorId, SensorId>,
    pub depth: BTreeMap<SensorId, u32>,
    /// Access node first, proxy last (access-node strategy only).
    pub access_path: Vec<SensorId>,
    pub detached: BTreeSet<SensorId>,
    pub version: u64,
}

/// Links among alive members of one region (or of every sensor when
/// `region` is `None`).
pub fn sensor_graph(world: &World, region: Option<RegionId>) -> BTreeMap<SensorId, Vec<SensorId>> {
    let members: Vec<&SensorNode> = match region {
        Some(r) => world.region(r).members.iter().map(|&s| world.sensor(s)).collect(),
        None => world.sensors.iter().collect(),
    };
    let alive: Vec<&SensorNode> = members.into_iter().filter(|s| s.alive).collect();
    let mut adj: BTreeMap<SensorId, Vec<SensorId>> = alive.iter().map(|s| (s.id, Vec::new())).collect();
    for (i, a) in alive.iter().enumerate() {
        for b in &alive[i + 1..] {
            let d = a.pos.distance(&b.pos);
            if d <= a.tx_range && d <= b.tx_range {
                adj.get_mut(&a.id).expect("member").push(b.id);
                adj.get_mut(&b.id).expect("member").push(a.id);
            }
        }
    }
    adj
}

/// Multi-source BFS; neighbor lists are in id order so ties go to the
/// lowest-id parent.
fn bfs(
    adj: &BTreeMap<SensorId, Vec<SensorId>>,
    sources: &BTreeSet<SensorId>,
) -> (BTreeMap<SensorId, SensorId>, BTreeMap<SensorId, u32>) {
    let mut parent = BTreeMap::new();
    let mut depth = BTreeMap::new();
    let mut queue = VecDeque::new();
    for &s in sources {
        depth.insert(s, 0);
        queue.push_back(s);
    }
    while let Some(u) = queue.pop_front() {
        let du = depth[&u];
        for &v in &adj[&u] {
            if let Entry::Vacant(slot) = depth.entry(v) {
                slot.insert(du + 1);
                parent.insert(v, u);
                queue.push_back(v);
            }
        }
    }
    (parent, depth)
}

/// Nearest alive region member that can reach the sink (lowest id on ties).
pub fn nearest_proxy(world: &World, region: RegionId, sink: &SinkAnchor) -> Option<SensorId> {
    let mut best: Option<(f64, SensorId)> = None;
    for &id in &world.region(region).members {
        let s = world.sensor(id);
        if !s.alive {
            continue;
        }
        let d = s.pos.distance(&sink.pos);
        if d > s.tx_range {
            continue;
        }
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, id));
        }
    }
    best.map(|(_, id)| id)
}

/// Alive member with the most residual energy (lowest id on ties).
pub fn elect_access_node(world: &World, region: RegionId) -> Option<SensorId> {
    let mut best: Option<(u64, SensorId)> = None;
    for &id in &world.region(region).members {
        let s = world.sensor(id);
        if s.alive && best.is_none_or(|(e, _)| s.energy_fj > e) {
            best = Some((s.energy_fj, id));
        }
    }
    best.map(|(_, id)| id)
}

fn path_to(parent: &BTreeMap<SensorId, SensorId>, from: SensorId, root: SensorId) -> Vec<SensorId> {
    let mut path = vec![from];
    let mut cur = from;
    while cur != root {
        cur = parent[&cur];
        path.push(cur);
    }
    path
}

impl CollectionTree {
    pub fn empty(region: RegionId, strategy: TreeStrategy) -> Self {
        Self {
            region,
            strategy,
            root: None,
            sink: None,
            attach: BTreeSet::new(),
            parent: BTreeMap::new(),
            depth: BTreeMap::new(),
            access_path: Vec::new(),
            detached: BTreeSet::new(),
            version: 0,
        }
    }

    /// Build a fresh tree (version 0). `access_node` pins the access-node
    /// root; `None` elects one.
    pub fn build(
        world: &World,
        region: RegionId,
        strategy: TreeStrategy,
        sink: Option<SinkAnchor>,
        access_node: Option<SensorId>,
    ) -> Self {
        let mut tree = Self::empty(region, strategy);
        let adj = match strategy {
            TreeStrategy::StaticSink => sensor_graph(world, None),
            _ => sensor_graph(world, Some(region)),
        };
        if adj.is_empty() {
            return tree;
        }
        tree.sink = sink.map(|s| s.id);
        match strategy {
            TreeStrategy::SinkRooted => {
                let Some(proxy) = sink.and_then(|s| nearest_proxy(world, region, &s)) else {
                    tree.sink = None;
                    return tree;
                };
                tree.root = Some(proxy);
                tree.attach.insert(proxy);
                (tree.parent, tree.depth) = bfs(&adj, &tree.attach);
            }
            TreeStrategy::AccessNodeRooted => {
                let root = access_node
                    .filter(|a| adj.contains_key(a))
                    .or_else(|| elect_access_node(world, region))
                    .expect("nonempty region has an alive member");
                tree.root = Some(root);
                (tree.parent, tree.depth) = bfs(&adj, &BTreeSet::from([root]));
                let proxy = sink.and_then(|s| nearest_proxy(world, region, &s));
                match proxy {
                    Some(p) if tree.depth.contains_key(&p) => {
                        let mut path = path_to(&tree.parent, p, root);
                        path.reverse();
                        tree.access_path = path;
                        tree.attach.insert(p);
                    }
                    _ => tree.sink = None,
                }
            }
            TreeStrategy::StaticSink => {
                if let Some(s) = sink {
                    tree.attach = adj
                        .keys()
                        .filter(|id| world.sensor(**id).pos.distance(&s.pos) <= world.sensor(**id).tx_range)
                        .copied()
                        .collect();
                }
                if tree.attach.is_empty() {
                    tree.sink = None;
                    return tree;
                }
                (tree.parent, tree.depth) = bfs(&adj, &tree.attach);
            }
        }
        tree.detached = adj.keys().filter(|id| !tree.depth.contains_key(id)).copied().collect();
        tree
    }

    pub fn is_empty(&self) -> bool {
        self.root.is_none() && self.attach.is_empty() && self.depth.is_empty()
    }

    /// Edge set plus attachment; equality here is "no route transition".
    fn shape(&self) -> (Option<SensorId>, &BTreeSet<SensorId>, &BTreeMap<SensorId, SensorId>, &[SensorId]) {
        (self.root, &self.attach, &self.parent, &self.access_path)
    }

    fn broken(&self, world: &World) -> bool {
        let dead = |s: &SensorId| !world.sensor(*s).alive;
        self.root.as_ref().is_some_and(dead)
            || self.attach.iter().any(dead)
            || self.parent.iter().any(|(c, p)| dead(c) || dead(p))
    }

    /// Re-evaluate the tree against the current world and sink position.
    /// Returns whether the version moved.
    pub fn maintain(&mut self, world: &World, sink: Option<SinkAnchor>) -> bool {
        let rebuilt = match self.strategy {
            TreeStrategy::SinkRooted => {
                let proxy = sink.and_then(|s| nearest_proxy(world, self.region, &s));
                let current = self.attach.iter().next().copied();
                if proxy != current || self.broken(world) || sink.map(|s| s.id) != self.sink {
                    Some(Self::build(world, self.region, self.strategy, sink, None))
                } else {
                    None
                }
            }
            TreeStrategy::AccessNodeRooted => {
                let root_alive = self.root.is_some_and(|r| world.sensor(r).alive);
                let keep = if root_alive { self.root } else { None };
                Some(Self::build(world, self.region, self.strategy, sink, keep))
            }
            TreeStrategy::StaticSink => {
                if self.broken(world) || sink.map(|s| s.id) != self.sink {
                    Some(Self::build(world, self.region, self.strategy, sink, None))
                } else {
                    None
                }
            }
        };
        let Some(mut fresh) = rebuilt else {
            return false;
        };
        let changed = fresh.shape() != self.shape();
        fresh.version = self.version + u64::from(changed);
        *self = fresh;
        changed
    }

    pub fn next_hop(&self, node: SensorId) -> NextHop {
        if self.attach.contains(&node) {
            return NextHop::Sink;
        }
        if let Some(i) = self.access_path.iter().position(|&s| s == node) {
            return NextHop::Sensor(self.access_path[i + 1]);
        }
        if let Some(&p) = self.parent.get(&node) {
            return NextHop::Sensor(p);
        }
        // Without an attachment the tree is either empty (nobody knows yet
        // whether they connect) or rooted at an access node that holds.
        if self.attach.is_empty() && (self.depth.is_empty() || self.root == Some(node)) {
            return NextHop::Wait;
        }
        NextHop::Detached
    }

    /// Sensor relays from `node` to the attachment point, `node` first.
    /// `None` when the node is detached or the tree has no attachment.
    pub fn route(&self, node: SensorId) -> Option<Vec<SensorId>> {
        let mut path = vec![node];
        let mut cur = node;
        for _ in 0..=self.depth.len() + self.access_path.len() {
            match self.next_hop(cur) {
                NextHop::Sink => return Some(path),
                NextHop::Sensor(n) => {
                    path.push(n);
                    cur = n;
                }
                NextHop::Wait | NextHop::Detached => return None,
            }
        }
        None
    }

    /// Verify the parent map is acyclic and every tree member reaches an
    /// attachment point or the root.
    pub fn check_structure(&self) -> Result<(), String> {
        for &node in self.depth.keys() {
            let mut cur = node;
            let mut steps = 0;
            while let Some(&p) = self.parent.get(&cur) {
                cur = p;
                steps += 1;
                if steps > self.depth.len() {
                    return Err(format!("cycle through {node}"));
                }
            }
            let ok = self.attach.contains(&cur) || self.root == Some(cur);
            if !ok {
                return Err(format!("{node} ends at {cur}, not at the root"));
            }
        }
        Ok(())
    }
}

/// Report on its way to the sink, with per-hop retry bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct IdealDelivery {
    pub report: DataReport,
    pub latency: f64,
    pub relays: Vec<SensorId>,
}

/// Forward a report along `tree` with no contention: each hop takes one
/// frame time, the proxy pays one channel switch before the sink hop, and a
/// dead next hop costs `retry_limit + 1` failed attempts before a drop.
/// Drains and the delivery or drop are logged.
#[allow(clippy::too_many_arguments)]
pub fn forward_ideal(
    world: &mut World,
    tree: &CollectionTree,
    mut report: DataReport,
    sink: SinkAnchor,
    mac: &MacConfig,
    proxy_wired: bool,
    now: f64,
    log: &mut MetricLog,
) -> Result<IdealDelivery, SensorError> {
    let frame = mac.duration(report.bits);
    let mut t = now;
    let mut cur = report.source;
    let mut relays = vec![cur];
    loop {
        if !world.sensor(cur).alive {
            log.drops.push(DropRecord {
                report: report.id,
                t,
                at: cur,
                hop: report.hop_count,
                reason: DropReason::NodeDied,
            });
            return Err(SensorError::NodeDead(cur));
        }
        match tree.next_hop(cur) {
            NextHop::Detached => {
                log.drops.push(DropRecord {
                    report: report.id,
                    t,
                    at: cur,
                    hop: report.hop_count,
                    reason: DropReason::Detached,
                });
                return Err(SensorError::Detached(cur));
            }
            NextHop::Wait => return Err(SensorError::NoAttachment(tree.region)),
            NextHop::Sensor(next) => {
                let d = world.sensor(cur).pos.distance(&world.sensor(next).pos);
                if !world.sensor(next).alive {
                    for _ in 0..=mac.retry_limit {
                        let _ = world.drain(cur, report.bits, d, RadioMode::Tx, t, log);
                        t += frame;
                    }
                    log.drops.push(DropRecord {
                        report: report.id,
                        t,
                        at: cur,
                        hop: report.hop_count,
                        reason: DropReason::RetriesExhausted,
                    });
                    return Err(SensorError::Dropped { hop: report.hop_count });
                }
                let _ = world.drain(cur, report.bits, d, RadioMode::Tx, t, log);
                t += frame;
                let _ = world.drain(next, report.bits, 0.0, RadioMode::Rx, t, log);
                report.hop_count += 1;
                cur = next;
                relays.push(cur);
            }
            NextHop::Sink => {
                if !proxy_wired {
                    let d = world.sensor(cur).pos.distance(&sink.pos);
                    t += mac.switch_latency;
                    let _ = world.drain(cur, report.bits, d, RadioMode::Tx, t, log);
                    t += frame;
                }
                report.hop_count += 1;
                log.deliveries.push(DeliveryRecord {
                    report: report.id,
                    source: report.source,
                    region: report.region,
                    sink: sink.id,
                    t_created: report.created_at,
                    t_delivered: t,
                    hops: report.hop_count,
                });
                return Ok(IdealDelivery {
                    latency: t - now,
                    report,
                    relays,
                });
            }
        }
    }
}
