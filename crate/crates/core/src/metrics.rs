//! Append-only metric log, the three network-lifetime definitions, and
//! per-run summaries.
//!
//! Everything downstream of a run is a pure function of [`MetricLog`] (plus
//! the static [`World`] layout for lifetimes), so a serialized log
//! reproduces its summary bit for bit.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::world::{fj_to_joules, NodeId, RegionId, SensorId, SinkId, World};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ReportId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DrainReason {
    Tx,
    Rx,
    Idle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DropReason {
    /// MAC retries exhausted on a hop.
    RetriesExhausted,
    /// Source or relay has no path to the tree root.
    Detached,
    /// Source buffer overflow while waiting for a proxy.
    BufferOverflow,
    /// Holder died with the report queued.
    NodeDied,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrainRecord {
    pub node: SensorId,
    pub t: f64,
    pub fj: u64,
    pub reason: DrainReason,
}

impl DrainRecord {
    pub fn joules(&self) -> f64 {
        fj_to_joules(self.fj)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeathRecord {
    pub node: SensorId,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedRecord {
    pub report: ReportId,
    pub source: SensorId,
    pub region: RegionId,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliveryRecord {
    pub report: ReportId,
    pub source: SensorId,
    pub region: RegionId,
    pub sink: SinkId,
    pub t_created: f64,
    pub t_delivered: f64,
    /// Sensor-to-sensor hops plus the final hop into the sink.
    pub hops: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropRecord {
    pub report: ReportId,
    pub t: f64,
    pub at: SensorId,
    pub hop: u32,
    pub reason: DropReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeVersionRecord {
    pub region: RegionId,
    pub t: f64,
    pub version: u64,
    pub root: Option<SensorId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TxRecord {
    pub channel: u8,
    pub t: f64,
    pub src: NodeId,
    pub bits: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query: u64,
    pub origin: SinkId,
    pub region: RegionId,
    pub t_issued: f64,
    /// Resolution time: reply arrival, or the discovery timeout.
    pub t: f64,
    pub answered: bool,
    /// Path recorded by the query on its way out (origin first).
    pub path: Vec<SinkId>,
    /// Sinks the reply visited, responder first.
    pub reply_hops: Vec<SinkId>,
    pub stale: bool,
}

impl QueryRecord {
    pub fn latency(&self) -> Option<f64> {
        self.answered.then_some(self.t - self.t_issued)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TakeoverRecord {
    pub t: f64,
    pub failed: SinkId,
    pub region: RegionId,
    pub new_sink: SinkId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertRecord {
    pub id: u64,
    pub t: f64,
    pub hotspot: u32,
    pub from: SinkId,
    pub region: RegionId,
}

/// An alert reaching a sink that covers its target region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertReceipt {
    pub id: u64,
    pub t: f64,
    pub sink: SinkId,
    pub region: RegionId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRecord {
    pub t: f64,
    pub sink: SinkId,
    pub region: RegionId,
    pub count: u64,
    pub mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LogMeta {
    pub t_end: f64,
    pub sensor_count: usize,
    pub region_count: usize,
    pub deployment_hash: String,
}

/// Append-only record of everything a run did.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricLog {
    pub meta: LogMeta,
    pub drains: Vec<DrainRecord>,
    pub deaths: Vec<DeathRecord>,
    pub generated: Vec<GeneratedRecord>,
    pub deliveries: Vec<DeliveryRecord>,
    pub drops: Vec<DropRecord>,
    pub tree_versions: Vec<TreeVersionRecord>,
    pub tx: Vec<TxRecord>,
    pub queries: Vec<QueryRecord>,
    pub takeovers: Vec<TakeoverRecord>,
    pub alerts: Vec<AlertRecord>,
    pub alert_receipts: Vec<AlertReceipt>,
    pub aggregates: Vec<AggregateRecord>,
    pub headless_at: Option<f64>,
}

impl MetricLog {
    pub fn record_drain(&mut self, node: SensorId, t: f64, fj: u64, reason: DrainReason) {
        self.drains.push(DrainRecord { node, t, fj, reason });
    }

    pub fn record_death(&mut self, node: SensorId, t: f64) {
        self.deaths.push(DeathRecord { node, t });
    }

    /// Total joules drained from each sensor, folded from the drain stream.
    pub fn energy_per_sensor(&self) -> Vec<f64> {
        let mut fj = vec![0u64; self.meta.sensor_count];
        for d in &self.drains {
            if let Some(slot) = fj.get_mut(d.node.0 as usize) {
                *slot += d.fj;
            }
        }
        fj.into_iter().map(fj_to_joules).collect()
    }

    /// Death time per sensor (`None` if it survived).
    pub fn death_times(&self) -> Vec<Option<f64>> {
        let mut out = vec![None; self.meta.sensor_count];
        for d in &self.deaths {
            if let Some(slot) = out.get_mut(d.node.0 as usize) {
                if slot.is_none() {
                    *slot = Some(d.t);
                }
            }
        }
        out
    }
}

/// A lifetime value; runs that end before the condition occurs report
/// [`Lifetime::NotReached`] rather than the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "Option<f64>", from = "Option<f64>")]
pub enum Lifetime {
    At(f64),
    NotReached,
}

impl From<Lifetime> for Option<f64> {
    fn from(l: Lifetime) -> Self {
        match l {
            Lifetime::At(t) => Some(t),
            Lifetime::NotReached => None,
        }
    }
}

impl From<Option<f64>> for Lifetime {
    fn from(o: Option<f64>) -> Self {
        o.map_or(Lifetime::NotReached, Lifetime::At)
    }
}

impl Lifetime {
    pub fn time(&self) -> Option<f64> {
        (*self).into()
    }
}

/// Distinct death times in ascending order.
fn death_epochs(log: &MetricLog) -> Vec<(f64, Vec<SensorId>)> {
    let mut deaths: Vec<&DeathRecord> = log.deaths.iter().collect();
    deaths.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.node.cmp(&b.node)));
    let mut out: Vec<(f64, Vec<SensorId>)> = Vec::new();
    for d in deaths {
        match out.last_mut() {
            Some((t, ids)) if *t == d.t => ids.push(d.node),
            _ => out.push((d.t, vec![d.node])),
        }
    }
    out
}

/// First time some region has fewer than `k` alive sensors.
pub fn lifetime_coverage(log: &MetricLog, world: &World, k: usize) -> Lifetime {
    let k = k.max(1);
    let mut alive: Vec<usize> = world.regions.iter().map(|r| r.members.len()).collect();
    if alive.iter().any(|&n| n < k) {
        return Lifetime::At(0.0);
    }
    let mut dead = vec![false; world.sensors.len()];
    for (t, ids) in death_epochs(log) {
        for id in ids {
            let i = id.0 as usize;
            if !dead[i] {
                dead[i] = true;
                alive[world.sensors[i].region.0 as usize] -= 1;
            }
        }
        if alive.iter().any(|&n| n < k) {
            return Lifetime::At(t);
        }
    }
    Lifetime::NotReached
}

/// First time at least `percent`% of the deployed sensors are dead.
pub fn lifetime_fraction(log: &MetricLog, percent: f64) -> Lifetime {
    let n = log.meta.sensor_count;
    if n == 0 {
        return Lifetime::NotReached;
    }
    let mut dead = vec![false; n];
    let mut count = 0usize;
    for (t, ids) in death_epochs(log) {
        for id in ids {
            if let Some(d) = dead.get_mut(id.0 as usize) {
                if !*d {
                    *d = true;
                    count += 1;
                }
            }
        }
        if count as f64 * 100.0 >= percent * n as f64 {
            return Lifetime::At(t);
        }
    }
    Lifetime::NotReached
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionScope {
    /// Each region's alive sensors must stay mutually reachable.
    Region,
    /// All alive sensors of the field must stay mutually reachable.
    Global,
}

/// Sensor-sensor links: pairs within the (shared) sensor range.
pub fn sensor_adjacency(world: &World) -> Vec<Vec<usize>> {
    let n = world.sensors.len();
    let mut adj = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (&world.sensors[i], &world.sensors[j]);
            let d = a.pos.distance(&b.pos);
            if d <= a.tx_range && d <= b.tx_range {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    adj
}

fn connected(members: &[usize], adj: &[Vec<usize>], dead: &[bool], region_of: Option<&[u32]>) -> bool {
    let alive: Vec<usize> = members.iter().copied().filter(|&i| !dead[i]).collect();
    let Some(&start) = alive.first() else {
        return true;
    };
    let mut seen = vec![false; dead.len()];
    seen[start] = true;
    let mut queue = VecDeque::from([start]);
    let mut reached = 1;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if seen[v] || dead[v] {
                continue;
            }
            if let Some(regions) = region_of {
                if regions[v] != regions[start] {
                    continue;
                }
            }
            seen[v] = true;
            reached += 1;
            queue.push_back(v);
        }
    }
    reached == alive.len()
}

/// First time the alive sensor graph disconnects.
///
/// With [`PartitionScope::Region`], a region is partitioned when some alive
/// member can no longer reach the region's tree root; since any alive member
/// may serve as root, this is the same as the region's alive subgraph having
/// more than one component.
pub fn lifetime_partition(log: &MetricLog, world: &World, scope: PartitionScope) -> Lifetime {
    let adj = sensor_adjacency(world);
    let mut dead = vec![false; world.sensors.len()];
    let regions: Vec<u32> = world.sensors.iter().map(|s| s.region.0).collect();
    let all: Vec<usize> = (0..world.sensors.len()).collect();
    let members: Vec<Vec<usize>> = world
        .regions
        .iter()
        .map(|r| r.members.iter().map(|s| s.0 as usize).collect())
        .collect();

    let check = |dead: &[bool], touched: Option<&[usize]>| -> bool {
        match scope {
            PartitionScope::Global => !connected(&all, &adj, dead, None),
            PartitionScope::Region => {
                let mut bad = false;
                for (ri, m) in members.iter().enumerate() {
                    if let Some(t) = touched {
                        if !t.contains(&ri) {
                            continue;
                        }
                    }
                    if !connected(m, &adj, dead, Some(&regions)) {
                        bad = true;
                        break;
                    }
                }
                bad
            }
        }
    };

    if check(&dead, None) {
        return Lifetime::At(0.0);
    }
    for (t, ids) in death_epochs(log) {
        let mut touched = Vec::new();
        for id in ids {
            let i = id.0 as usize;
            dead[i] = true;
            touched.push(regions[i] as usize);
        }
        if check(&dead, Some(&touched)) {
            return Lifetime::At(t);
        }
    }
    Lifetime::NotReached
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub duration: f64,
    pub generated: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub delivery_ratio: f64,
    /// Delivered reports per second.
    pub throughput: f64,
    pub mean_delay: f64,
    pub p95_delay: f64,
    pub mean_hops: f64,
    pub total_energy: f64,
    pub mean_sensor_energy: f64,
    pub median_sensor_energy: f64,
    pub max_sensor_energy: f64,
    pub per_sensor_energy: Vec<f64>,
    pub route_transitions: BTreeMap<u32, u64>,
    pub queries: u64,
    pub queries_answered: u64,
    pub query_success_rate: f64,
    pub mean_query_latency: f64,
    pub tx_per_channel: BTreeMap<u8, u64>,
    pub takeovers: u64,
    pub alerts: u64,
    pub deaths: u64,
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Median of a sample (mean of the two middle values for even sizes).
pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Nearest-rank percentile, `q` in `(0, 1]`.
pub fn percentile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = (q * v.len() as f64).ceil().max(1.0) as usize;
    v[rank.min(v.len()) - 1]
}

pub fn summarize(log: &MetricLog) -> Summary {
    let duration = log.meta.t_end;
    let generated = log.generated.len() as u64;
    let delivered = log.deliveries.len() as u64;
    let delays: Vec<f64> = log
        .deliveries
        .iter()
        .map(|d| d.t_delivered - d.t_created)
        .collect();
    let hops: Vec<f64> = log.deliveries.iter().map(|d| d.hops as f64).collect();
    let per_sensor = log.energy_per_sensor();
    let total_fj: u64 = log.drains.iter().map(|d| d.fj).sum();

    let mut route_transitions = BTreeMap::new();
    for r in 0..log.meta.region_count as u32 {
        route_transitions.insert(r, 0);
    }
    for v in &log.tree_versions {
        if v.version > 0 {
            *route_transitions.entry(v.region.0).or_insert(0) += 1;
        }
    }

    let mut tx_per_channel = BTreeMap::new();
    for t in &log.tx {
        *tx_per_channel.entry(t.channel).or_insert(0) += 1;
    }

    let answered: Vec<f64> = log.queries.iter().filter_map(|q| q.latency()).collect();
    let queries = log.queries.len() as u64;

    Summary {
        duration,
        generated,
        delivered,
        dropped: log.drops.len() as u64,
        delivery_ratio: if generated > 0 {
            delivered as f64 / generated as f64
        } else {
            0.0
        },
        throughput: if duration > 0.0 {
            delivered as f64 / duration
        } else {
            0.0
        },
        mean_delay: mean(&delays),
        p95_delay: percentile(&delays, 0.95),
        mean_hops: mean(&hops),
        total_energy: fj_to_joules(total_fj),
        mean_sensor_energy: mean(&per_sensor),
        median_sensor_energy: median(&per_sensor),
        max_sensor_energy: per_sensor.iter().copied().fold(0.0, f64::max),
        per_sensor_energy: per_sensor,
        route_transitions,
        queries,
        queries_answered: answered.len() as u64,
        query_success_rate: if queries > 0 {
            answered.len() as f64 / queries as f64
        } else {
            0.0
        },
        mean_query_latency: mean(&answered),
        tx_per_channel,
        takeovers: log.takeovers.len() as u64,
        alerts: log.alerts.len() as u64,
        deaths: log.deaths.len() as u64,
    }
}

/// Parameters for the lifetime columns of a report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LifetimeParams {
    pub coverage_k: usize,
    pub fraction_percent: f64,
    pub partition_scope: PartitionScope,
}

impl Default for LifetimeParams {
    fn default() -> Self {
        Self {
            coverage_k: 1,
            fraction_percent: 50.0,
            partition_scope: PartitionScope::Region,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lifetimes {
    pub first_death: Lifetime,
    pub coverage: Lifetime,
    pub fraction: Lifetime,
    pub partition: Lifetime,
}

pub fn lifetimes(log: &MetricLog, world: &World, params: &LifetimeParams) -> Lifetimes {
    Lifetimes {
        first_death: lifetime_fraction(log, f64::MIN_POSITIVE),
        coverage: lifetime_coverage(log, world, params.coverage_k),
        fraction: lifetime_fraction(log, params.fraction_percent),
        partition: lifetime_partition(log, world, params.partition_scope),
    }
}

/// Named scalar columns of one replication, in output order.
pub fn metric_columns(summary: &Summary, lt: &Lifetimes) -> Vec<(&'static str, Option<f64>)> {
    let ch = |c: u8| Some(*summary.tx_per_channel.get(&c).unwrap_or(&0) as f64);
    vec![
        ("generated", Some(summary.generated as f64)),
        ("delivered", Some(summary.delivered as f64)),
        ("dropped", Some(summary.dropped as f64)),
        ("delivery_ratio", Some(summary.delivery_ratio)),
        ("throughput", Some(summary.throughput)),
        ("mean_delay", Some(summary.mean_delay)),
        ("p95_delay", Some(summary.p95_delay)),
        ("mean_hops", Some(summary.mean_hops)),
        ("total_energy", Some(summary.total_energy)),
        ("mean_sensor_energy", Some(summary.mean_sensor_energy)),
        ("median_sensor_energy", Some(summary.median_sensor_energy)),
        ("max_sensor_energy", Some(summary.max_sensor_energy)),
        (
            "route_transitions",
            Some(summary.route_transitions.values().sum::<u64>() as f64),
        ),
        ("queries", Some(summary.queries as f64)),
        ("query_success_rate", Some(summary.query_success_rate)),
        ("mean_query_latency", Some(summary.mean_query_latency)),
        ("tx_ch1", ch(1)),
        ("tx_ch6", ch(6)),
        ("tx_ch11", ch(11)),
        ("takeovers", Some(summary.takeovers as f64)),
        ("alerts", Some(summary.alerts as f64)),
        ("deaths", Some(summary.deaths as f64)),
        ("lifetime_first_death", lt.first_death.time()),
        ("lifetime_coverage", lt.coverage.time()),
        ("lifetime_fraction", lt.fraction.time()),
        ("lifetime_partition", lt.partition.time()),
    ]
}

/// Mean, sample standard deviation, min and max of one metric across
/// replications; not-reached lifetimes are counted, not averaged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub n: usize,
    pub missing: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

pub fn stat(values: &[Option<f64>]) -> Stat {
    let xs: Vec<f64> = values.iter().flatten().copied().collect();
    let n = xs.len();
    let missing = values.len() - n;
    if n == 0 {
        return Stat {
            n,
            missing,
            mean: None,
            std: None,
            min: None,
            max: None,
        };
    }
    let m = mean(&xs);
    let var = if n > 1 {
        xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    Stat {
        n,
        missing,
        mean: Some(m),
        std: Some(var.sqrt()),
        min: xs.iter().copied().reduce(f64::min),
        max: xs.iter().copied().reduce(f64::max),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Position;
    use crate::world::{EnergyModel, Field, WorldSpec};

    fn world_with(positions: Vec<Position>, sinks: u32, range: f64) -> World {
        let n = positions.len();
        World::build(&WorldSpec {
            field: Field::new(100.0, 100.0),
            sensor_positions: positions,
            sensor_energy: vec![1.0; n],
            sensor_tx_range: range,
            sensor_sense_range: 5.0,
            sink_count: sinks,
            sink_range_ratio: 25.0,
            sink_v_min: 0.0,
            sink_v_max: 0.0,
            energy: EnergyModel::default(),
        })
    }

    fn log_with_deaths(n: usize, deaths: &[(u32, f64)]) -> MetricLog {
        let mut log = MetricLog::default();
        log.meta.sensor_count = n;
        for &(id, t) in deaths {
            log.record_death(SensorId(id), t);
        }
        log
    }

    #[test]
    fn coverage_initial_violation_is_zero() {
        let w = world_with(vec![Position::new(10.0, 10.0), Position::new(20.0, 10.0)], 1, 15.0);
        let log = log_with_deaths(2, &[]);
        assert_eq!(lifetime_coverage(&log, &w, 3), Lifetime::At(0.0));
        assert_eq!(lifetime_coverage(&log, &w, 2), Lifetime::NotReached);
    }

    #[test]
    fn coverage_first_death_breaks_full_k() {
        let w = world_with(
            vec![Position::new(10.0, 10.0), Position::new(20.0, 10.0), Position::new(30.0, 10.0)],
            1,
            15.0,
        );
        let log = log_with_deaths(3, &[(0, 1.0), (1, 2.0), (2, 3.0)]);
        assert_eq!(lifetime_coverage(&log, &w, 3), Lifetime::At(1.0));
        assert_eq!(lifetime_coverage(&log, &w, 1), Lifetime::At(3.0));
    }

    #[test]
    fn fraction_examples() {
        let log = log_with_deaths(4, &[(0, 1.0), (1, 2.0), (2, 3.0), (3, 4.0)]);
        assert_eq!(lifetime_fraction(&log, 50.0), Lifetime::At(2.0));
        assert_eq!(lifetime_fraction(&log, 1e-9), Lifetime::At(1.0));
        let log = log_with_deaths(4, &[(0, 1.0), (1, 2.0), (2, 3.0)]);
        assert_eq!(lifetime_fraction(&log, 100.0), Lifetime::NotReached);
        assert_eq!(lifetime_fraction(&log_with_deaths(0, &[]), 10.0), Lifetime::NotReached);
    }

    #[test]
    fn partition_at_cut_vertex() {
        let w = world_with(
            vec![Position::new(10.0, 10.0), Position::new(20.0, 10.0), Position::new(30.0, 10.0)],
            1,
            12.0,
        );
        let log = log_with_deaths(3, &[(1, 7.0)]);
        assert_eq!(lifetime_partition(&log, &w, PartitionScope::Region), Lifetime::At(7.0));
    }

    #[test]
    fn triangle_survives_any_single_death() {
        let pts = vec![Position::new(10.0, 10.0), Position::new(20.0, 10.0), Position::new(15.0, 18.0)];
        let w = world_with(pts, 1, 12.0);
        for victim in 0..3 {
            let log = log_with_deaths(3, &[(victim, 2.0)]);
            assert_eq!(
                lifetime_partition(&log, &w, PartitionScope::Region),
                Lifetime::NotReached
            );
        }
    }

    #[test]
    fn region_scope_ignores_cross_region_gaps() {
        // Two regions, each internally connected, mutually out of range.
        let pts = vec![
            Position::new(10.0, 10.0),
            Position::new(20.0, 10.0),
            Position::new(80.0, 10.0),
            Position::new(90.0, 10.0),
        ];
        let w = world_with(pts, 2, 12.0);
        let log = log_with_deaths(4, &[]);
        assert_eq!(lifetime_partition(&log, &w, PartitionScope::Region), Lifetime::NotReached);
        assert_eq!(lifetime_partition(&log, &w, PartitionScope::Global), Lifetime::At(0.0));
    }

    #[test]
    fn empty_log_summary_is_zero() {
        let s = summarize(&MetricLog::default());
        assert_eq!(s.generated, 0);
        assert_eq!(s.delivered, 0);
        assert_eq!(s.throughput, 0.0);
        assert_eq!(s.delivery_ratio, 0.0);
        assert_eq!(s.mean_delay, 0.0);
        assert_eq!(s.total_energy, 0.0);
        assert_eq!(s.query_success_rate, 0.0);
    }

    #[test]
    fn throughput_arithmetic() {
        let mut log = MetricLog::default();
        log.meta.t_end = 100.0;
        for i in 0..10 {
            log.generated.push(GeneratedRecord {
                report: ReportId(i),
                source: SensorId(0),
                region: RegionId(0),
                t: i as f64,
            });
        }
        for i in 0..8 {
            log.deliveries.push(DeliveryRecord {
                report: ReportId(i),
                source: SensorId(0),
                region: RegionId(0),
                sink: SinkId(0),
                t_created: i as f64,
                t_delivered: i as f64 + 0.5,
                hops: 2,
            });
        }
        let s = summarize(&log);
        assert_eq!(s.throughput, 0.08);
        assert_eq!(s.delivery_ratio, 0.8);
        assert_eq!(s.mean_delay, 0.5);
    }

    #[test]
    fn energy_total_matches_fold() {
        let mut log = MetricLog::default();
        log.meta.sensor_count = 3;
        let mut expect = [0u64; 3];
        for i in 0..300u64 {
            let node = (i * 7 % 3) as u32;
            let fj = 1000 + i * 37;
            expect[node as usize] += fj;
            log.record_drain(SensorId(node), i as f64, fj, DrainReason::Tx);
        }
        let s = summarize(&log);
        let total: u64 = expect.iter().sum();
        assert_eq!(s.total_energy, fj_to_joules(total));
        for (i, e) in expect.iter().enumerate() {
            assert_eq!(s.per_sensor_energy[i], fj_to_joules(*e));
        }
    }

    #[test]
    fn percentile_nearest_rank() {
        let xs: Vec<f64> = (1..=20).map(|i| i as f64).collect();
        assert_eq!(percentile(&xs, 0.95), 19.0);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn stats_skip_missing() {
        let s = stat(&[Some(1.0), None, Some(3.0)]);
        assert_eq!(s.n, 2);
        assert_eq!(s.missing, 1);
        assert_eq!(s.mean, Some(2.0));
        assert_eq!(s.std, Some(2.0f64.sqrt()));
        assert_eq!(s.min, Some(1.0));
        assert_eq!(s.max, Some(3.0));
    }
}
