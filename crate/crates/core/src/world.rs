//! Field geometry, node populations, the region grid, and the sensor energy model.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::RngStream;
use crate::geometry::{Position, Rect};
use crate::metrics::{DrainReason, MetricLog};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SensorId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SinkId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RegionId(pub u32);

impl fmt::Display for SensorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

impl fmt::Display for SinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "k{}", self.0)
    }
}

impl fmt::Display for RegionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// Any radio-equipped node. Sensors order before sinks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeId {
    Sensor(SensorId),
    Sink(SinkId),
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Sensor(s) => s.fmt(f),
            NodeId::Sink(k) => k.fmt(f),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("node {0} is dead")]
    NodeDead(NodeId),
    #[error("transmission distance {distance} m exceeds range {range} m")]
    OutOfRange { distance: f64, range: f64 },
    #[error("a drain needs at least one bit")]
    ZeroBits,
    #[error("layout file: {0}")]
    Layout(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub width: f64,
    pub height: f64,
}

impl Field {
    pub fn new(width: f64, height: f64) -> Self {
        Self { width, height }
    }

    pub fn rect(&self) -> Rect {
        Rect::new(0.0, 0.0, self.width, self.height)
    }

    pub fn center(&self) -> Position {
        self.rect().centroid()
    }
}

pub const FJ_PER_JOULE: f64 = 1e15;

pub fn joules_to_fj(joules: f64) -> u64 {
    (joules * FJ_PER_JOULE).round().max(0.0) as u64
}

pub fn fj_to_joules(fj: u64) -> f64 {
    fj as f64 / FJ_PER_JOULE
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensorNode {
    pub id: SensorId,
    pub pos: Position,
    /// Residual energy in femtojoules; integer so drain bookkeeping is exact.
    pub energy_fj: u64,
    pub initial_fj: u64,
    pub tx_range: f64,
    pub sense_range: f64,
    pub alive: bool,
    pub region: RegionId,
}

impl SensorNode {
    pub fn energy(&self) -> f64 {
        fj_to_joules(self.energy_fj)
    }

    pub fn initial_energy(&self) -> f64 {
        fj_to_joules(self.initial_fj)
    }
}

/// A mobile sink. Sinks carry no battery; they only fail through injected faults.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SinkNode {
    pub id: SinkId,
    pub pos: Position,
    pub home_region: RegionId,
    pub covered_regions: BTreeSet<RegionId>,
    pub tx_range: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub alive: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Region {
    pub id: RegionId,
    pub bounds: Rect,
    pub members: Vec<SensorId>,
}

/// First-order radio model: `tx = bits·(e_elec + e_amp·d^α)`, `rx = bits·e_elec`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyModel {
    pub e_elec: f64,
    pub e_amp: f64,
    pub alpha: f64,
    pub idle_power: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        Self {
            e_elec: 50e-9,
            e_amp: 100e-12,
            alpha: 2.0,
            idle_power: 0.0,
        }
    }
}

impl EnergyModel {
    pub fn tx_cost(&self, bits: u64, distance: f64) -> f64 {
        bits as f64 * (self.e_elec + self.e_amp * distance.powf(self.alpha))
    }

    pub fn rx_cost(&self, bits: u64) -> f64 {
        bits as f64 * self.e_elec
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.e_elec > 0.0) {
            errs.push(format!("energy.e_elec must be > 0 (got {})", self.e_elec));
        }
        if !(self.e_amp > 0.0) {
            errs.push(format!("energy.e_amp must be > 0 (got {})", self.e_amp));
        }
        if !(self.alpha > 0.0) {
            errs.push(format!("energy.alpha must be > 0 (got {})", self.alpha));
        }
        if !(self.idle_power >= 0.0) {
            errs.push(format!("energy.idle_power must be >= 0 (got {})", self.idle_power));
        }
        errs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RadioMode {
    Tx,
    Rx,
}

/// Row/column split of the field into equal cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionGrid {
    pub rows: u32,
    pub cols: u32,
}

impl RegionGrid {
    /// `rows·cols = n` with `|rows − cols|` minimal, `rows <= cols`.
    pub fn for_count(n: u32) -> Self {
        assert!(n >= 1, "need at least one region");
        let mut rows = (n as f64).sqrt().floor() as u32;
        while rows > 1 && !n.is_multiple_of(rows) {
            rows -= 1;
        }
        let rows = rows.max(1);
        Self {
            rows,
            cols: n / rows,
        }
    }

    pub fn count(&self) -> u32 {
        self.rows * self.cols
    }

    pub fn cell(&self, field: &Field, index: u32) -> Rect {
        let (r, c) = (index / self.cols, index % self.cols);
        let w = field.width / self.cols as f64;
        let h = field.height / self.rows as f64;
        let x1 = if c + 1 == self.cols { field.width } else { (c + 1) as f64 * w };
        let y1 = if r + 1 == self.rows { field.height } else { (r + 1) as f64 * h };
        Rect::new(c as f64 * w, r as f64 * h, x1, y1)
    }

    /// Region owning `p`. Cells are half-open on their upper edges except
    /// along the field border, so every field point maps to exactly one cell.
    pub fn locate(&self, field: &Field, p: &Position) -> Option<RegionId> {
        if !field.rect().contains(p) {
            return None;
        }
        let w = field.width / self.cols as f64;
        let h = field.height / self.rows as f64;
        let mut c = ((p.x / w).floor() as u32).min(self.cols - 1);
        let mut r = ((p.y / h).floor() as u32).min(self.rows - 1);
        // Guard against rounding putting a point just past a cell edge.
        while c > 0 && p.x < self.cell(field, r * self.cols + c).x0 {
            c -= 1;
        }
        while r > 0 && p.y < self.cell(field, r * self.cols + c).y0 {
            r -= 1;
        }
        Some(RegionId(r * self.cols + c))
    }
}

/// Uniform i.i.d. sensor positions over the field.
pub fn deploy_sensors(count: usize, field: &Field, rng: &mut RngStream) -> Vec<Position> {
    (0..count)
        .map(|_| {
            let x = rng.uniform(0.0, field.width);
            let y = rng.uniform(0.0, field.height);
            Position::new(x, y)
        })
        .collect()
}

/// Regular grid layout, row-major, cell-centered.
pub fn grid_layout(count: usize, field: &Field) -> Vec<Position> {
    if count == 0 {
        return Vec::new();
    }
    let cols = (count as f64 * field.width / field.height).sqrt().ceil().max(1.0) as usize;
    let rows = count.div_ceil(cols);
    let (dx, dy) = (field.width / cols as f64, field.height / rows as f64);
    (0..count)
        .map(|i| {
            let (r, c) = (i / cols, i % cols);
            Position::new((c as f64 + 0.5) * dx, (r as f64 + 0.5) * dy)
        })
        .collect()
}

/// One row of a `id,x,y[,energy]` layout file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayoutEntry {
    pub id: u32,
    pub pos: Position,
    pub energy: Option<f64>,
}

pub fn parse_layout(text: &str) -> Result<Vec<LayoutEntry>, WorldError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| WorldError::Layout(e.to_string()))?;
        let field = |i: usize| record.get(i).unwrap_or("");
        if line == 0 && field(0).parse::<u32>().is_err() {
            continue; // header
        }
        if record.len() < 3 || record.len() > 4 {
            return Err(WorldError::Layout(format!(
                "row {}: expected id,x,y[,energy], got {} fields",
                line + 1,
                record.len()
            )));
        }
        let num = |i: usize| -> Result<f64, WorldError> {
            field(i)
                .parse::<f64>()
                .map_err(|_| WorldError::Layout(format!("row {}: bad number {:?}", line + 1, field(i))))
        };
        let id = field(0)
            .parse::<u32>()
            .map_err(|_| WorldError::Layout(format!("row {}: bad id {:?}", line + 1, field(0))))?;
        let energy = if record.len() == 4 { Some(num(3)?) } else { None };
        out.push(LayoutEntry {
            id,
            pos: Position::new(num(1)?, num(2)?),
            energy,
        });
    }
    out.sort_by_key(|e| e.id);
    Ok(out)
}

pub fn load_layout(path: &Path) -> Result<Vec<LayoutEntry>, WorldError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| WorldError::Layout(format!("{}: {e}", path.display())))?;
    parse_layout(&text)
}

/// Static description used to assemble a [`World`].
#[derive(Debug, Clone)]
pub struct WorldSpec {
    pub field: Field,
    pub sensor_positions: Vec<Position>,
    pub sensor_energy: Vec<f64>,
    pub sensor_tx_range: f64,
    pub sensor_sense_range: f64,
    pub sink_count: u32,
    pub sink_range_ratio: f64,
    pub sink_v_min: f64,
    pub sink_v_max: f64,
    pub energy: EnergyModel,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct World {
    pub field: Field,
    pub grid: RegionGrid,
    pub sensors: Vec<SensorNode>,
    pub sinks: Vec<SinkNode>,
    pub regions: Vec<Region>,
    pub energy: EnergyModel,
}

impl World {
    /// Build sensors and sinks, split the field into one cell per sink and
    /// place each sink at the centroid of its home cell.
    pub fn build(spec: &WorldSpec) -> Self {
        let (grid, regions) = partition_and_assign(&spec.field, spec.sink_count);
        let mut world = World {
            field: spec.field,
            grid,
            sensors: Vec::with_capacity(spec.sensor_positions.len()),
            sinks: Vec::new(),
            regions,
            energy: spec.energy,
        };
        for (i, pos) in spec.sensor_positions.iter().enumerate() {
            let energy = joules_to_fj(spec.sensor_energy[i]);
            let region = world.locate(pos).expect("sensor outside the field");
            world.sensors.push(SensorNode {
                id: SensorId(i as u32),
                pos: *pos,
                energy_fj: energy,
                initial_fj: energy,
                tx_range: spec.sensor_tx_range,
                sense_range: spec.sensor_sense_range,
                alive: energy > 0,
                region,
            });
            world.regions[region.0 as usize].members.push(SensorId(i as u32));
        }
        for i in 0..spec.sink_count {
            let home = RegionId(i);
            world.sinks.push(SinkNode {
                id: SinkId(i),
                pos: world.regions[i as usize].bounds.centroid(),
                home_region: home,
                covered_regions: BTreeSet::from([home]),
                tx_range: spec.sink_range_ratio * spec.sensor_tx_range,
                v_min: spec.sink_v_min,
                v_max: spec.sink_v_max,
                alive: true,
            });
        }
        world
    }

    pub fn locate(&self, p: &Position) -> Option<RegionId> {
        self.grid.locate(&self.field, p)
    }

    pub fn sensor(&self, id: SensorId) -> &SensorNode {
        &self.sensors[id.0 as usize]
    }

    pub fn sink(&self, id: SinkId) -> &SinkNode {
        &self.sinks[id.0 as usize]
    }

    pub fn region(&self, id: RegionId) -> &Region {
        &self.regions[id.0 as usize]
    }

    pub fn pos(&self, node: NodeId) -> Position {
        match node {
            NodeId::Sensor(s) => self.sensor(s).pos,
            NodeId::Sink(k) => self.sink(k).pos,
        }
    }

    pub fn alive(&self, node: NodeId) -> bool {
        match node {
            NodeId::Sensor(s) => self.sensor(s).alive,
            NodeId::Sink(k) => self.sink(k).alive,
        }
    }

    pub fn tx_range(&self, node: NodeId) -> f64 {
        match node {
            NodeId::Sensor(s) => self.sensor(s).tx_range,
            NodeId::Sink(k) => self.sink(k).tx_range,
        }
    }

    /// All nodes in id order: sensors first, then sinks.
    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.sensors
            .iter()
            .map(|s| NodeId::Sensor(s.id))
            .chain(self.sinks.iter().map(|k| NodeId::Sink(k.id)))
    }

    /// Alive sinks covering `region`, in id order.
    pub fn covering_sinks(&self, region: RegionId) -> Vec<SinkId> {
        self.sinks
            .iter()
            .filter(|k| k.alive && k.covered_regions.contains(&region))
            .map(|k| k.id)
            .collect()
    }

    /// Charge a sensor for radio activity. Sinks are never charged.
    ///
    /// The remaining energy is clamped at zero; crossing zero kills the node
    /// and appends a death record. Returns the joules actually removed.
    pub fn drain(
        &mut self,
        sensor: SensorId,
        bits: u64,
        distance: f64,
        mode: RadioMode,
        now: f64,
        log: &mut MetricLog,
    ) -> Result<f64, WorldError> {
        let model = self.energy;
        let node = &mut self.sensors[sensor.0 as usize];
        if !node.alive {
            return Err(WorldError::NodeDead(NodeId::Sensor(sensor)));
        }
        if bits == 0 {
            return Err(WorldError::ZeroBits);
        }
        let (cost, reason) = match mode {
            RadioMode::Tx => {
                if distance > node.tx_range {
                    return Err(WorldError::OutOfRange {
                        distance,
                        range: node.tx_range,
                    });
                }
                (model.tx_cost(bits, distance), DrainReason::Tx)
            }
            RadioMode::Rx => (model.rx_cost(bits), DrainReason::Rx),
        };
        Ok(fj_to_joules(self.charge(sensor, joules_to_fj(cost), reason, now, log)))
    }

    /// Remove `fj` femtojoules (clamped at the residual) from a live sensor
    /// and log it; returns what was actually removed.
    pub fn charge(
        &mut self,
        sensor: SensorId,
        fj: u64,
        reason: DrainReason,
        now: f64,
        log: &mut MetricLog,
    ) -> u64 {
        let node = &mut self.sensors[sensor.0 as usize];
        if !node.alive || fj == 0 {
            return 0;
        }
        let taken = fj.min(node.energy_fj);
        node.energy_fj -= taken;
        log.record_drain(sensor, now, taken, reason);
        if node.energy_fj == 0 {
            node.alive = false;
            log.record_death(sensor, now);
        }
        taken
    }
}

/// Split the field into an `r×c` grid of `n` cells and hand cell `i` to sink `i`.
pub fn partition_and_assign(field: &Field, n: u32) -> (RegionGrid, Vec<Region>) {
    let grid = RegionGrid::for_count(n);
    let regions = (0..grid.count())
        .map(|i| Region {
            id: RegionId(i),
            bounds: grid.cell(field, i),
            members: Vec::new(),
        })
        .collect();
    (grid, regions)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(positions: Vec<Position>, sinks: u32) -> WorldSpec {
        let n = positions.len();
        WorldSpec {
            field: Field::new(100.0, 100.0),
            sensor_positions: positions,
            sensor_energy: vec![1.0; n],
            sensor_tx_range: 15.0,
            sensor_sense_range: 10.0,
            sink_count: sinks,
            sink_range_ratio: 25.0,
            sink_v_min: 1.0,
            sink_v_max: 2.0,
            energy: EnergyModel::default(),
        }
    }

    #[test]
    fn deploy_zero_is_empty() {
        let mut rng = RngStream::new(1, "deploy");
        assert!(deploy_sensors(0, &Field::new(10.0, 10.0), &mut rng).is_empty());
    }

    #[test]
    fn deploy_within_bounds() {
        let mut rng = RngStream::new(1, "deploy");
        let field = Field::new(100.0, 100.0);
        let pts = deploy_sensors(1000, &field, &mut rng);
        assert_eq!(pts.len(), 1000);
        assert!(pts.iter().all(|p| field.rect().contains(p)));
    }

    #[test]
    fn deploy_mean_is_centered() {
        let mut rng = RngStream::new(3, "deploy");
        let pts = deploy_sensors(10_000, &Field::new(100.0, 100.0), &mut rng);
        let mean = pts.iter().map(|p| p.x).sum::<f64>() / pts.len() as f64;
        assert!((mean - 50.0).abs() < 1.0, "mean x = {mean}");
    }

    #[test]
    fn partition_shapes() {
        let field = Field::new(100.0, 100.0);
        let (g, r) = partition_and_assign(&field, 1);
        assert_eq!((g.rows, g.cols), (1, 1));
        assert_eq!(r[0].bounds, field.rect());

        let (g, r) = partition_and_assign(&field, 4);
        assert_eq!((g.rows, g.cols), (2, 2));
        for cell in &r {
            assert_eq!(cell.bounds.width(), 50.0);
            assert_eq!(cell.bounds.height(), 50.0);
        }
        assert_eq!(r[1].bounds, Rect::new(50.0, 0.0, 100.0, 50.0));

        let (g, _) = partition_and_assign(&field, 6);
        assert_eq!((g.rows, g.cols), (2, 3));
        let (g, _) = partition_and_assign(&field, 7);
        assert_eq!((g.rows, g.cols), (1, 7));
    }

    #[test]
    fn regions_tile_the_field() {
        let field = Field::new(90.0, 70.0);
        for n in 1..=12 {
            let (grid, regions) = partition_and_assign(&field, n);
            let area: f64 = regions.iter().map(|r| r.bounds.area()).sum();
            assert!((area - field.width * field.height).abs() < 1e-9);
            for i in 0..=90 {
                for j in 0..=70 {
                    let p = Position::new(i as f64, j as f64);
                    let id = grid.locate(&field, &p).unwrap();
                    assert!(regions[id.0 as usize].bounds.contains(&p));
                }
            }
        }
    }

    #[test]
    fn world_assigns_members_and_sinks() {
        let w = World::build(&spec(
            vec![Position::new(10.0, 10.0), Position::new(60.0, 10.0), Position::new(60.0, 60.0)],
            4,
        ));
        assert_eq!(w.regions[0].members, vec![SensorId(0)]);
        assert_eq!(w.regions[1].members, vec![SensorId(1)]);
        assert_eq!(w.regions[3].members, vec![SensorId(2)]);
        assert_eq!(w.sinks[2].home_region, RegionId(2));
        assert!(w.sinks[2].covered_regions.contains(&RegionId(2)));
        assert_eq!(w.sinks[0].tx_range, 375.0);
    }

    #[test]
    fn tx_drain_zero_distance_is_e_elec() {
        let mut w = World::build(&spec(vec![Position::new(1.0, 1.0)], 1));
        let mut log = MetricLog::default();
        let j = w.drain(SensorId(0), 1, 0.0, RadioMode::Tx, 0.0, &mut log).unwrap();
        assert_eq!(j, 50e-9);
    }

    #[test]
    fn tx_drain_hand_arithmetic() {
        let mut s = spec(vec![Position::new(1.0, 1.0)], 1);
        s.sensor_tx_range = 60.0;
        let mut w = World::build(&s);
        let mut log = MetricLog::default();
        let j = w.drain(SensorId(0), 8000, 50.0, RadioMode::Tx, 0.0, &mut log).unwrap();
        // 8000 · (50e-9 + 100e-12 · 50²) = 8000 · 3e-7
        assert!((j - 2.4e-3).abs() < 1e-15, "{j}");
        let rx = w.drain(SensorId(0), 8000, 0.0, RadioMode::Rx, 0.0, &mut log).unwrap();
        assert!((rx - 4.0e-4).abs() < 1e-15);
    }

    #[test]
    fn drain_errors() {
        let mut w = World::build(&spec(vec![Position::new(1.0, 1.0)], 1));
        let mut log = MetricLog::default();
        assert_eq!(
            w.drain(SensorId(0), 10, 20.0, RadioMode::Tx, 0.0, &mut log),
            Err(WorldError::OutOfRange {
                distance: 20.0,
                range: 15.0
            })
        );
        assert_eq!(
            w.drain(SensorId(0), 0, 1.0, RadioMode::Tx, 0.0, &mut log),
            Err(WorldError::ZeroBits)
        );
        w.sensors[0].alive = false;
        assert_eq!(
            w.drain(SensorId(0), 10, 1.0, RadioMode::Rx, 0.0, &mut log),
            Err(WorldError::NodeDead(NodeId::Sensor(SensorId(0))))
        );
    }

    #[test]
    fn drain_clamps_and_kills() {
        let mut s = spec(vec![Position::new(1.0, 1.0)], 1);
        s.sensor_energy = vec![1e-9];
        let mut w = World::build(&s);
        let mut log = MetricLog::default();
        let j = w.drain(SensorId(0), 1, 0.0, RadioMode::Rx, 4.0, &mut log).unwrap();
        assert_eq!(j, 1e-9);
        assert_eq!(w.sensors[0].energy_fj, 0);
        assert!(!w.sensors[0].alive);
        assert_eq!(log.deaths.len(), 1);
        assert_eq!(log.deaths[0].t, 4.0);
    }

    #[test]
    fn layout_with_and_without_header() {
        let a = parse_layout("id,x,y,energy\n1,2.5,3,0.5\n0,1,1\n").unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a[0].id, 0);
        assert_eq!(a[0].energy, None);
        assert_eq!(a[1].pos, Position::new(2.5, 3.0));
        assert_eq!(a[1].energy, Some(0.5));
        assert!(parse_layout("0,1\n").is_err());
        assert!(parse_layout("0,a,1\n").is_err());
    }

    #[test]
    fn grid_layout_inside_field() {
        let f = Field::new(100.0, 50.0);
        let pts = grid_layout(50, &f);
        assert_eq!(pts.len(), 50);
        assert!(pts.iter().all(|p| f.rect().contains(p)));
    }
}
