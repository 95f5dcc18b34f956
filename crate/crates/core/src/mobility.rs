//! Sink trajectories.
//!
//! Every model moves the sink inside one *active* region. A sink covering
//! several regions rotates through them, spending `region_dwell` seconds in
//! each and travelling at `v_max` between them; positions during those
//! transit legs may cross foreign regions.

use std::collections::BTreeMap;
use std::f64::consts::{LN_2, TAU};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::RngStream;
use crate::geometry::{Position, Rect};
use crate::world::RegionId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MobilityError {
    #[error("unknown mobility model {name:?}; valid models: {}", MobilityModel::NAMES.join(", "))]
    UnknownModel { name: String },
    #[error("circle circumference must be > 0 (got {0})")]
    NonPositiveLength(f64),
    #[error("time step must be > 0 (got {0})")]
    NonPositiveStep(f64),
    #[error("sink covers no region")]
    NoRegion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MobilityModel {
    Stationary,
    /// New heading and speed every step.
    RandomWalk,
    /// Uniform choice among adjacent areas.
    BiasedConnectivity,
    /// Adjacent areas weighted by `1 / (1 + visits)`.
    BiasedLeastVisited,
    /// Adjacent areas weighted by their sensor count.
    BiasedDensity,
    Circle,
    DataDriven,
}

impl MobilityModel {
    pub const NAMES: [&'static str; 7] = [
        "stationary",
        "random_walk",
        "biased_connectivity",
        "biased_least_visited",
        "biased_density",
        "circle",
        "data_driven",
    ];
    const ALL: [MobilityModel; 7] = [
        Self::Stationary,
        Self::RandomWalk,
        Self::BiasedConnectivity,
        Self::BiasedLeastVisited,
        Self::BiasedDensity,
        Self::Circle,
        Self::DataDriven,
    ];

    pub fn name(&self) -> &'static str {
        Self::NAMES[Self::ALL.iter().position(|m| m == self).expect("listed")]
    }

    pub fn describe(&self) -> &'static str {
        match self {
            Self::Stationary => "sink stays at its start position",
            Self::RandomWalk => "uniform heading in [0, 2pi) and speed in [v_min, v_max] every step; reflects at edges",
            Self::BiasedConnectivity => "dwell in an area, then move to a uniformly chosen adjacent area",
            Self::BiasedLeastVisited => "adjacent areas weighted by 1 / (1 + visits)",
            Self::BiasedDensity => "adjacent areas weighted by sensor count",
            Self::Circle => "constant-speed circle of radius circumference / 2pi around the region centroid",
            Self::DataDriven => {
                "go to the area maximizing U * (1 - exp(-lambda * dt)) / (1 + dist / v_max)"
            }
        }
    }

    fn is_area_walk(&self) -> bool {
        matches!(
            self,
            Self::BiasedConnectivity | Self::BiasedLeastVisited | Self::BiasedDensity | Self::DataDriven
        )
    }
}

impl FromStr for MobilityModel {
    type Err = MobilityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::NAMES
            .iter()
            .position(|n| *n == s)
            .map(|i| Self::ALL[i])
            .ok_or_else(|| MobilityError::UnknownModel { name: s.to_string() })
    }
}

impl TryFrom<String> for MobilityModel {
    type Error = MobilityError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<MobilityModel> for String {
    fn from(m: MobilityModel) -> Self {
        m.name().to_string()
    }
}

impl fmt::Display for MobilityModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MobilityParams {
    /// Areas per region side for the area-walk models.
    pub areas_per_side: usize,
    /// Seconds spent in an area before choosing the next one.
    pub area_dwell: f64,
    /// Circle circumference; `None` uses a circle of radius a quarter of
    /// the region's shorter side.
    pub circumference: Option<f64>,
    /// Decay rate of the data-driven freshness factor (1/s).
    pub lambda: f64,
    /// Weight of the newest sample in the usefulness moving average.
    pub ema_alpha: f64,
    /// Prior usefulness of never-visited areas.
    pub usefulness_prior: f64,
    /// Seconds spent in each region when covering several.
    pub region_dwell: f64,
}

impl Default for MobilityParams {
    fn default() -> Self {
        Self {
            areas_per_side: 4,
            area_dwell: 10.0,
            circumference: None,
            lambda: LN_2 / 60.0,
            ema_alpha: 0.3,
            usefulness_prior: 1.0,
            region_dwell: 30.0,
        }
    }
}

impl MobilityParams {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.areas_per_side == 0 {
            errs.push("mobility.areas_per_side must be >= 1".to_string());
        }
        if !(self.area_dwell >= 0.0) {
            errs.push(format!("mobility.area_dwell must be >= 0 (got {})", self.area_dwell));
        }
        if let Some(l) = self.circumference {
            if let Err(e) = circle_radius(l) {
                errs.push(format!("mobility.circumference: {e}"));
            }
        }
        if !(self.lambda > 0.0) {
            errs.push(format!("mobility.lambda must be > 0 (got {})", self.lambda));
        }
        if !(self.ema_alpha > 0.0 && self.ema_alpha <= 1.0) {
            errs.push(format!("mobility.ema_alpha must be in (0, 1] (got {})", self.ema_alpha));
        }
        if !(self.region_dwell > 0.0) {
            errs.push(format!("mobility.region_dwell must be > 0 (got {})", self.region_dwell));
        }
        errs
    }
}

pub fn circle_radius(l: f64) -> Result<f64, MobilityError> {
    if !(l > 0.0) {
        return Err(MobilityError::NonPositiveLength(l));
    }
    Ok(l / TAU)
}

/// Row-major `a×a` subdivision of a region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AreaGrid {
    pub bounds: Rect,
    pub a: usize,
}

impl AreaGrid {
    pub fn new(bounds: Rect, a: usize) -> Self {
        Self { bounds, a: a.max(1) }
    }

    pub fn count(&self) -> usize {
        self.a * self.a
    }

    pub fn rect(&self, i: usize) -> Rect {
        let (r, c) = (i / self.a, i % self.a);
        let w = self.bounds.width() / self.a as f64;
        let h = self.bounds.height() / self.a as f64;
        let x0 = self.bounds.x0 + c as f64 * w;
        let y0 = self.bounds.y0 + r as f64 * h;
        Rect::new(x0, y0, x0 + w, y0 + h)
    }

    pub fn centroid(&self, i: usize) -> Position {
        self.rect(i).centroid()
    }

    pub fn locate(&self, p: &Position) -> usize {
        let w = self.bounds.width() / self.a as f64;
        let h = self.bounds.height() / self.a as f64;
        let c = (((p.x - self.bounds.x0) / w).floor().max(0.0) as usize).min(self.a - 1);
        let r = (((p.y - self.bounds.y0) / h).floor().max(0.0) as usize).min(self.a - 1);
        r * self.a + c
    }

    /// 4-neighbors in ascending index order.
    pub fn adjacent(&self, i: usize) -> Vec<usize> {
        let (r, c) = (i / self.a, i % self.a);
        let mut out = Vec::with_capacity(4);
        if r > 0 {
            out.push(i - self.a);
        }
        if c > 0 {
            out.push(i - 1);
        }
        if c + 1 < self.a {
            out.push(i + 1);
        }
        if r + 1 < self.a {
            out.push(i + self.a);
        }
        out
    }
}

/// Transition weights over `candidates` for a biased walk.
pub fn transition_weights(model: MobilityModel, candidates: &[usize], visits: &[u64], sensors: &[usize]) -> Vec<f64> {
    let w: Vec<f64> = candidates
        .iter()
        .map(|&a| match model {
            MobilityModel::BiasedLeastVisited => 1.0 / (1.0 + visits[a] as f64),
            MobilityModel::BiasedDensity => sensors.get(a).copied().unwrap_or(0) as f64,
            _ => 1.0,
        })
        .collect();
    if w.iter().sum::<f64>() > 0.0 {
        w
    } else {
        vec![1.0; candidates.len()]
    }
}

/// Index drawn with probability proportional to `weights`.
pub fn choose_weighted(weights: &[f64], rng: &mut RngStream) -> usize {
    let total: f64 = weights.iter().sum();
    let mut x = rng.uniform01() * total;
    for (i, w) in weights.iter().enumerate() {
        if x < *w {
            return i;
        }
        x -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Per-area usefulness memory for the data-driven model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsefulnessMap {
    pub expected: Vec<f64>,
    /// Last collection time per area; `None` means never.
    pub last_collected: Vec<Option<f64>>,
}

impl UsefulnessMap {
    pub fn new(areas: usize, prior: f64) -> Self {
        Self {
            expected: vec![prior; areas],
            last_collected: vec![None; areas],
        }
    }

    /// Fold one report's usefulness into area `a`'s moving average.
    pub fn record(&mut self, a: usize, usefulness: f64, alpha: f64, now: f64) {
        self.expected[a] = alpha * usefulness + (1.0 - alpha) * self.expected[a];
        self.last_collected[a] = Some(now);
    }
}

pub fn data_driven_score(expected: f64, elapsed: Option<f64>, distance: f64, v_max: f64, lambda: f64) -> f64 {
    let fresh = match elapsed {
        None => 1.0,
        Some(dt) => 1.0 - (-lambda * dt.max(0.0)).exp(),
    };
    let reach = if v_max > 0.0 { 1.0 + distance / v_max } else { 1.0 };
    expected * fresh / reach
}

/// Area with the best data-driven score; lowest id wins ties.
pub fn choose_data_driven_target(
    pos: &Position,
    areas: &AreaGrid,
    map: &UsefulnessMap,
    now: f64,
    v_max: f64,
    lambda: f64,
) -> usize {
    let mut best = (f64::NEG_INFINITY, 0);
    for a in 0..areas.count() {
        let elapsed = map.last_collected[a].map(|t| now - t);
        let s = data_driven_score(map.expected[a], elapsed, pos.distance(&areas.centroid(a)), v_max, lambda);
        if s > best.0 {
            best = (s, a);
        }
    }
    best.1
}

/// The covered regions a sink can use this step.
#[derive(Debug, Clone, Default)]
pub struct MobilityView {
    pub regions: Vec<(RegionId, Rect)>,
    /// Sensor count per area of each region, for the density walk.
    pub area_sensors: BTreeMap<RegionId, Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircleTrajectory {
    pub center: Position,
    pub radius: f64,
    pub phase: f64,
}

impl CircleTrajectory {
    pub fn position(&self) -> Position {
        Position::new(
            self.center.x + self.radius * self.phase.cos(),
            self.center.y + self.radius * self.phase.sin(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
struct AreaLeg {
    grid: AreaGrid,
    current: usize,
    target: Option<usize>,
    dwell_until: f64,
    leg_speed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MobilityState {
    pub model: MobilityModel,
    pub params: MobilityParams,
    pub pos: Position,
    pub heading: f64,
    pub speed: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub active: Option<RegionId>,
    active_since: f64,
    transit: Option<Position>,
    pub circle: Option<CircleTrajectory>,
    leg: Option<AreaLeg>,
    pub visits: BTreeMap<RegionId, Vec<u64>>,
    pub usefulness: BTreeMap<RegionId, UsefulnessMap>,
}

impl MobilityState {
    pub fn new(model: MobilityModel, params: MobilityParams, start: Position, v_min: f64, v_max: f64) -> Self {
        Self {
            model,
            params,
            pos: start,
            heading: 0.0,
            speed: if model == MobilityModel::Circle { (v_min + v_max) / 2.0 } else { v_min },
            v_min,
            v_max,
            active: None,
            active_since: 0.0,
            transit: None,
            circle: None,
            leg: None,
            visits: BTreeMap::new(),
            usefulness: BTreeMap::new(),
        }
    }

    pub fn in_transit(&self) -> bool {
        self.transit.is_some()
    }

    fn circle_for(&self, bounds: &Rect) -> CircleTrajectory {
        let radius = match self.params.circumference {
            Some(l) => l / TAU,
            None => bounds.width().min(bounds.height()) / 4.0,
        };
        CircleTrajectory {
            center: bounds.centroid(),
            radius,
            phase: 0.0,
        }
    }

    /// Set up the model's memory for a freshly entered region.
    fn enter(&mut self, region: RegionId, bounds: Rect, now: f64) {
        match self.model {
            MobilityModel::Circle => {
                let c = self.circle_for(&bounds);
                self.pos = c.position();
                self.circle = Some(c);
            }
            m if m.is_area_walk() => {
                let grid = AreaGrid::new(bounds, self.params.areas_per_side);
                let current = grid.locate(&self.pos);
                let visits = self.visits.entry(region).or_insert_with(|| vec![0; grid.count()]);
                visits[current] += 1;
                self.usefulness
                    .entry(region)
                    .or_insert_with(|| UsefulnessMap::new(grid.count(), self.params.usefulness_prior));
                self.leg = Some(AreaLeg {
                    grid,
                    current,
                    target: None,
                    dwell_until: now + self.params.area_dwell,
                    leg_speed: self.v_min,
                });
            }
            _ => {}
        }
    }

    /// Pick the region to serve now, starting a transit leg on a change.
    fn schedule_region(&mut self, view: &MobilityView, now: f64) -> Result<(RegionId, Rect), MobilityError> {
        if view.regions.is_empty() {
            return Err(MobilityError::NoRegion);
        }
        let idx = self.active.and_then(|a| view.regions.iter().position(|(r, _)| *r == a));
        let next = match idx {
            None => Some(0),
            Some(i)
                if view.regions.len() > 1
                    && self.transit.is_none()
                    && now - self.active_since >= self.params.region_dwell =>
            {
                Some((i + 1) % view.regions.len())
            }
            _ => None,
        };
        if let Some(n) = next {
            let (region, bounds) = view.regions[n];
            let first = self.active.is_none();
            self.active = Some(region);
            self.active_since = now;
            self.leg = None;
            self.circle = None;
            if first && bounds.contains(&self.pos) {
                self.enter(region, bounds, now);
            } else {
                let entry = match self.model {
                    MobilityModel::Circle => self.circle_for(&bounds).position(),
                    _ => bounds.centroid(),
                };
                self.transit = Some(entry);
            }
        }
        let i = view
            .regions
            .iter()
            .position(|(r, _)| Some(*r) == self.active)
            .expect("active is covered");
        Ok(view.regions[i])
    }

    /// Advance by `dt` seconds ending at `now + dt`.
    pub fn step(&mut self, dt: f64, now: f64, rng: &mut RngStream, view: &MobilityView) -> Result<Position, MobilityError> {
        if !(dt > 0.0) {
            return Err(MobilityError::NonPositiveStep(dt));
        }
        let (region, bounds) = self.schedule_region(view, now)?;
        if let Some(target) = self.transit {
            let (p, arrived) = self.pos.toward(&target, self.v_max * dt);
            self.pos = p;
            if arrived {
                // Dwell time counts from arrival, not from the switch.
                self.transit = None;
                self.active_since = now + dt;
                self.enter(region, bounds, now + dt);
            }
            return Ok(self.pos);
        }
        match self.model {
            MobilityModel::Stationary => {}
            MobilityModel::RandomWalk => {
                self.heading = rng.uniform(0.0, TAU);
                self.speed = rng.uniform(self.v_min, self.v_max.max(self.v_min));
                let d = self.speed * dt;
                let p = Position::new(self.pos.x + d * self.heading.cos(), self.pos.y + d * self.heading.sin());
                self.pos = bounds.reflect(p);
            }
            MobilityModel::Circle => {
                let c = self.circle.as_mut().expect("entered");
                c.phase = (c.phase + self.speed * dt / c.radius).rem_euclid(TAU);
                self.pos = c.position();
            }
            _ => self.area_step(region, dt, now, rng, view),
        }
        Ok(self.pos)
    }

    fn area_step(&mut self, region: RegionId, dt: f64, now: f64, rng: &mut RngStream, view: &MobilityView) {
        let model = self.model;
        let leg = self.leg.as_mut().expect("entered");
        let t_end = now + dt;
        if let Some(target) = leg.target {
            let (p, arrived) = self.pos.toward(&leg.grid.centroid(target), leg.leg_speed * dt);
            self.pos = p;
            if arrived {
                leg.current = target;
                leg.target = None;
                leg.dwell_until = t_end + self.params.area_dwell;
                self.visits.get_mut(&region).expect("entered")[target] += 1;
            }
            return;
        }
        if t_end < leg.dwell_until {
            return;
        }
        let next = if model == MobilityModel::DataDriven {
            let map = &self.usefulness[&region];
            choose_data_driven_target(&self.pos, &leg.grid, map, t_end, self.v_max, self.params.lambda)
        } else {
            let cands = leg.grid.adjacent(leg.current);
            if cands.is_empty() {
                leg.dwell_until = t_end + self.params.area_dwell;
                return;
            }
            let empty = Vec::new();
            let sensors = view.area_sensors.get(&region).unwrap_or(&empty);
            let w = transition_weights(model, &cands, &self.visits[&region], sensors);
            cands[choose_weighted(&w, rng)]
        };
        leg.leg_speed = rng.uniform(self.v_min, self.v_max.max(self.v_min));
        self.speed = leg.leg_speed;
        if next == leg.current {
            self.visits.get_mut(&region).expect("entered")[next] += 1;
            leg.dwell_until = t_end + self.params.area_dwell;
            return;
        }
        leg.target = Some(next);
        if leg.leg_speed <= 0.0 {
            leg.target = None;
            leg.dwell_until = t_end + self.params.area_dwell;
        }
    }

    /// Feed the data-driven model: a report of `usefulness` arrived from `pos`.
    pub fn record_collection(&mut self, region: RegionId, bounds: &Rect, pos: &Position, usefulness: f64, now: f64) {
        if self.model != MobilityModel::DataDriven {
            return;
        }
        let grid = AreaGrid::new(*bounds, self.params.areas_per_side);
        let prior = self.params.usefulness_prior;
        let map = self
            .usefulness
            .entry(region)
            .or_insert_with(|| UsefulnessMap::new(grid.count(), prior));
        map.record(grid.locate(pos), usefulness, self.params.ema_alpha, now);
    }
}

/// Time for one lap at speed `v`.
pub fn circle_period(radius: f64, v: f64) -> f64 {
    TAU * radius / v
}
