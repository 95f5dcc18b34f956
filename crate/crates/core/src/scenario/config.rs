//! Scenario files: TOML with every field defaulted, validated as a whole.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::localization::PathLossModel;
use crate::metrics::LifetimeParams;
use crate::mobility::{MobilityModel, MobilityParams};
use crate::radio::{ChannelPlan, MacConfig};
use crate::sensor::TreeStrategy;
use crate::sink::{BroadcastStrategy, RelayConfig};
use crate::world::{EnergyModel, RegionGrid};

/// Inclusive band of sink/sensor range ratios accepted without an override.
pub const RATIO_BAND: (f64, f64) = (20.0, 30.0);

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldConfig {
    pub width: f64,
    pub height: f64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            width: 100.0,
            height: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub count: usize,
    /// Initial energy per sensor in joules.
    pub energy: f64,
    pub tx_range: f64,
    pub sense_range: f64,
    /// `uniform`, `grid`, or `file`.
    pub layout: String,
    /// `id,x,y[,energy]` CSV, read when `layout = "file"`.
    pub layout_file: Option<PathBuf>,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            count: 200,
            energy: 0.5,
            tx_range: 15.0,
            sense_range: 10.0,
            layout: "uniform".into(),
            layout_file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SinkConfig {
    pub count: u32,
    pub range_ratio: f64,
    pub v_min: f64,
    pub v_max: f64,
    /// Model for every sink without an entry in `models`.
    pub mobility: String,
    /// Per-sink overrides, indexed by sink id.
    pub models: Vec<String>,
    /// Mobility update period in seconds.
    pub step: f64,
    pub params: MobilityParams,
}

impl Default for SinkConfig {
    fn default() -> Self {
        Self {
            count: 4,
            range_ratio: 25.0,
            v_min: 0.5,
            v_max: 2.0,
            mobility: "biased_least_visited".into(),
            models: Vec::new(),
            step: 0.5,
            params: MobilityParams::default(),
        }
    }
}

impl SinkConfig {
    /// Model of sink `i`; call after validation.
    pub fn model(&self, i: usize) -> MobilityModel {
        self.models
            .get(i)
            .unwrap_or(&self.mobility)
            .parse()
            .expect("validated model name")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeConfig {
    pub strategy: TreeStrategy,
    pub maintenance_period: f64,
    /// The proxy-to-sink hop is a free, collision-exempt wire.
    pub proxy_wired: bool,
    /// Reports a sensor may hold; the oldest is dropped on overflow.
    pub buffer: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            strategy: TreeStrategy::SinkRooted,
            maintenance_period: 1.0,
            proxy_wired: false,
            buffer: 64,
        }
    }
}

/// Frame sizes in bits and periodic traffic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficConfig {
    /// Seconds between reports of one sensor; 0 disables periodic sensing.
    pub report_interval: f64,
    pub report_bits: u64,
    pub aggregate_period: f64,
    pub aggregate_bits: u64,
    pub heartbeat_bits: u64,
    pub query_bits: u64,
    pub reply_bits: u64,
    pub alert_bits: u64,
    pub beacon_bits: u64,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            report_interval: 10.0,
            report_bits: 1024,
            aggregate_period: 10.0,
            aggregate_bits: 512,
            heartbeat_bits: 128,
            query_bits: 256,
            reply_bits: 1024,
            alert_bits: 512,
            beacon_bits: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryEvent {
    pub t: f64,
    pub origin: u32,
    pub region: u32,
}

/// `count` queries at uniform times in `[start, end)` between uniformly
/// chosen origin sinks and target regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomQueries {
    pub count: u32,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QueryConfig {
    pub scripted: Vec<QueryEvent>,
    pub random: Option<RandomQueries>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BroadcastConfig {
    pub strategy: BroadcastStrategy,
    pub relay: RelayConfig,
}

impl Default for BroadcastConfig {
    fn default() -> Self {
        Self {
            strategy: BroadcastStrategy::Flood,
            relay: RelayConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoutingConfig {
    pub discovery_timeout: f64,
}

impl Default for RoutingConfig {
    fn default() -> Self {
        Self { discovery_timeout: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinkFailure {
    pub t: f64,
    pub sink: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FaultConfig {
    pub sink_failures: Vec<SinkFailure>,
    pub heartbeat_period: f64,
    /// Consecutive missed heartbeats before a peer is suspected.
    pub heartbeat_misses: u32,
    pub check_period: f64,
}

impl Default for FaultConfig {
    fn default() -> Self {
        Self {
            sink_failures: Vec::new(),
            heartbeat_period: 1.0,
            heartbeat_misses: 3,
            check_period: 0.25,
        }
    }
}

/// A hotspot moving in a straight line at constant velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HotspotScript {
    pub start: [f64; 2],
    pub velocity: [f64; 2],
    pub t_start: f64,
    pub t_end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HotspotConfig {
    pub tracks: Vec<HotspotScript>,
    pub observe_period: f64,
    /// Observations in the velocity fit.
    pub window: usize,
    /// Extrapolation horizon; unset means a quarter of the time the
    /// hotspot needs to cross the shorter region side at its fitted speed.
    pub horizon: Option<f64>,
    pub cooldown: f64,
}

impl Default for HotspotConfig {
    fn default() -> Self {
        Self {
            tracks: Vec::new(),
            observe_period: 1.0,
            window: 5,
            horizon: None,
            cooldown: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizationConfig {
    pub enabled: bool,
    /// First beacon round starts in the beacon interval holding this time.
    pub start: f64,
    pub round_period: f64,
    /// Rounds to schedule; unset fills the run.
    pub rounds: Option<u32>,
    /// Observation freshness window in seconds.
    pub window: f64,
    pub path_loss: PathLossModel,
}

impl Default for LocalizationConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            start: 1.0,
            round_period: 5.0,
            rounds: None,
            window: 30.0,
            path_loss: PathLossModel::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub t_end: f64,
    pub replications: u32,
    pub field: FieldConfig,
    pub sensors: SensorConfig,
    pub sinks: SinkConfig,
    pub tree: TreeConfig,
    pub mac: MacConfig,
    pub channels: ChannelPlan,
    pub energy: EnergyModel,
    pub traffic: TrafficConfig,
    pub queries: QueryConfig,
    pub broadcast: BroadcastConfig,
    pub routing: RoutingConfig,
    pub faults: FaultConfig,
    pub hotspots: HotspotConfig,
    pub localization: LocalizationConfig,
    pub lifetime: LifetimeParams,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            t_end: 600.0,
            replications: 1,
            field: FieldConfig::default(),
            sensors: SensorConfig::default(),
            sinks: SinkConfig::default(),
            tree: TreeConfig::default(),
            mac: MacConfig::default(),
            channels: ChannelPlan::default(),
            energy: EnergyModel::default(),
            traffic: TrafficConfig::default(),
            queries: QueryConfig::default(),
            broadcast: BroadcastConfig::default(),
            routing: RoutingConfig::default(),
            faults: FaultConfig::default(),
            hotspots: HotspotConfig::default(),
            localization: LocalizationConfig::default(),
            lifetime: LifetimeParams::default(),
        }
    }
}

fn positive(errs: &mut Vec<String>, name: &str, v: f64) {
    if !(v > 0.0 && v.is_finite()) {
        errs.push(format!("{name} must be a positive number (got {v})"));
    }
}

fn non_negative(errs: &mut Vec<String>, name: &str, v: f64) {
    if !(v >= 0.0 && v.is_finite()) {
        errs.push(format!("{name} must be >= 0 (got {v})"));
    }
}

impl ScenarioConfig {
    /// Parse without validating.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Read, parse, and validate. Relative layout paths resolve against the
    /// config file's directory.
    pub fn load(path: &Path, allow_out_of_range: bool) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text)?;
        if let (Some(f), Some(dir)) = (cfg.sensors.layout_file.as_mut(), path.parent()) {
            if f.is_relative() {
                *f = dir.join(&*f);
            }
        }
        cfg.validate(allow_out_of_range)?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Every violation, not just the first.
    pub fn violations(&self, allow_out_of_range: bool) -> Vec<String> {
        let mut e = Vec::new();
        positive(&mut e, "t_end", self.t_end);
        if self.replications == 0 {
            e.push("replications must be >= 1".into());
        }
        positive(&mut e, "field.width", self.field.width);
        positive(&mut e, "field.height", self.field.height);

        let s = &self.sensors;
        non_negative(&mut e, "sensors.energy", s.energy);
        positive(&mut e, "sensors.tx_range", s.tx_range);
        non_negative(&mut e, "sensors.sense_range", s.sense_range);
        match s.layout.as_str() {
            "uniform" | "grid" => {}
            "file" => {
                if s.layout_file.is_none() {
                    e.push("sensors.layout = \"file\" needs sensors.layout_file".into());
                }
            }
            other => e.push(format!(
                "sensors.layout {other:?} is not one of \"uniform\", \"grid\", \"file\""
            )),
        }

        let k = &self.sinks;
        if k.count == 0 {
            e.push("sinks.count must be >= 1".into());
        }
        positive(&mut e, "sinks.range_ratio", k.range_ratio);
        let (lo, hi) = RATIO_BAND;
        if !allow_out_of_range && k.range_ratio.is_finite() && !(lo..=hi).contains(&k.range_ratio) {
            e.push(format!(
                "sinks.range_ratio = {} is outside the supported {lo}-{hi} band; \
                 pass --allow-out-of-paper-range to use it anyway",
                k.range_ratio
            ));
        }
        non_negative(&mut e, "sinks.v_min", k.v_min);
        if !(k.v_max >= k.v_min) {
            e.push(format!("sinks.v_max ({}) must be >= sinks.v_min ({})", k.v_max, k.v_min));
        }
        positive(&mut e, "sinks.step", k.step);
        for (i, name) in std::iter::once(&k.mobility).chain(k.models.iter()).enumerate() {
            if let Err(err) = name.parse::<MobilityModel>() {
                let key = if i == 0 {
                    "sinks.mobility".to_string()
                } else {
                    format!("sinks.models[{}]", i - 1)
                };
                e.push(format!("{key}: {err}"));
            }
        }
        if k.models.len() > k.count as usize {
            e.push(format!(
                "sinks.models lists {} models for {} sinks",
                k.models.len(),
                k.count
            ));
        }
        e.extend(k.params.validate());

        positive(&mut e, "tree.maintenance_period", self.tree.maintenance_period);
        if self.tree.buffer == 0 {
            e.push("tree.buffer must be >= 1".into());
        }
        if self.tree.strategy == TreeStrategy::StaticSink {
            e.push("tree.strategy static_sink is reserved for the flat baseline".into());
        }
        e.extend(self.mac.validate());
        e.extend(self.channels.validate());
        e.extend(self.energy.validate());

        let t = &self.traffic;
        non_negative(&mut e, "traffic.report_interval", t.report_interval);
        positive(&mut e, "traffic.aggregate_period", t.aggregate_period);
        for (name, bits) in [
            ("report_bits", t.report_bits),
            ("aggregate_bits", t.aggregate_bits),
            ("heartbeat_bits", t.heartbeat_bits),
            ("query_bits", t.query_bits),
            ("reply_bits", t.reply_bits),
            ("alert_bits", t.alert_bits),
            ("beacon_bits", t.beacon_bits),
        ] {
            if bits == 0 {
                e.push(format!("traffic.{name} must be >= 1"));
            }
        }
        // Sink-sink frames must fit in one sink slice after the retune.
        let longest = [t.aggregate_bits, t.heartbeat_bits, t.query_bits, t.reply_bits, t.alert_bits]
            .into_iter()
            .max()
            .unwrap_or(0);
        if self.mac.bitrate > 0.0 && self.mac.duration(longest) + self.mac.switch_latency > self.mac.sink_slice {
            e.push(format!(
                "a {longest}-bit sink frame does not fit in mac.sink_slice = {}",
                self.mac.sink_slice
            ));
        }
        let sensor_phase = self.mac.beacon_interval - self.mac.atim_window - self.mac.sink_slice;
        if self.mac.bitrate > 0.0
            && self.mac.duration(t.report_bits.max(t.beacon_bits)) + 2.0 * self.mac.switch_latency > sensor_phase
        {
            e.push("a report or beacon frame does not fit in the sensor-sink phase".into());
        }

        let regions = if k.count > 0 { RegionGrid::for_count(k.count).count() } else { 0 };
        for (i, q) in self.queries.scripted.iter().enumerate() {
            non_negative(&mut e, &format!("queries.scripted[{i}].t"), q.t);
            if q.origin >= k.count {
                e.push(format!("queries.scripted[{i}].origin {} is not a sink id", q.origin));
            }
            if q.region >= regions {
                e.push(format!("queries.scripted[{i}].region {} is not a region id", q.region));
            }
        }
        if let Some(r) = &self.queries.random {
            if !(r.start >= 0.0 && r.end > r.start) {
                e.push(format!("queries.random needs 0 <= start < end (got {}..{})", r.start, r.end));
            }
        }
        if let Err(err) = self.broadcast.strategy.validate() {
            e.push(format!("broadcast.strategy: {err}"));
        }
        non_negative(&mut e, "broadcast.relay.jitter", self.broadcast.relay.jitter);
        non_negative(&mut e, "broadcast.relay.assessment_delay", self.broadcast.relay.assessment_delay);
        positive(&mut e, "routing.discovery_timeout", self.routing.discovery_timeout);

        let f = &self.faults;
        positive(&mut e, "faults.heartbeat_period", f.heartbeat_period);
        positive(&mut e, "faults.check_period", f.check_period);
        if f.heartbeat_misses == 0 {
            e.push("faults.heartbeat_misses must be >= 1".into());
        }
        for (i, x) in f.sink_failures.iter().enumerate() {
            non_negative(&mut e, &format!("faults.sink_failures[{i}].t"), x.t);
            if x.sink >= k.count {
                e.push(format!("faults.sink_failures[{i}].sink {} is not a sink id", x.sink));
            }
        }
        // Heartbeats share the sink slice, one frame per sink.
        let slot = self.heartbeat_slot();
        let per_slice = ((self.mac.sink_slice - self.mac.switch_latency) / slot).floor();
        if per_slice >= 1.0 {
            let intervals = (k.count as f64 / per_slice).ceil() * self.mac.beacon_interval;
            if intervals > f.heartbeat_period + 1e-9 {
                e.push(format!(
                    "{} heartbeats do not fit in faults.heartbeat_period = {}",
                    k.count, f.heartbeat_period
                ));
            }
        }

        let h = &self.hotspots;
        positive(&mut e, "hotspots.observe_period", h.observe_period);
        positive(&mut e, "hotspots.cooldown", h.cooldown);
        if h.window < 2 {
            e.push("hotspots.window must be >= 2".into());
        }
        if let Some(tau) = h.horizon {
            positive(&mut e, "hotspots.horizon", tau);
        }
        for (i, tr) in h.tracks.iter().enumerate() {
            if !(tr.t_end >= tr.t_start && tr.t_start >= 0.0) {
                e.push(format!("hotspots.tracks[{i}] needs 0 <= t_start <= t_end"));
            }
        }

        let l = &self.localization;
        non_negative(&mut e, "localization.start", l.start);
        positive(&mut e, "localization.round_period", l.round_period);
        positive(&mut e, "localization.window", l.window);
        e.extend(l.path_loss.validate());
        if l.enabled && l.round_period < k.count as f64 * self.mac.beacon_interval {
            e.push("localization.round_period is shorter than one beacon per sink".into());
        }

        if !(self.lifetime.fraction_percent > 0.0 && self.lifetime.fraction_percent <= 100.0) {
            e.push(format!(
                "lifetime.fraction_percent must be in (0, 100] (got {})",
                self.lifetime.fraction_percent
            ));
        }
        if self.lifetime.coverage_k == 0 {
            e.push("lifetime.coverage_k must be >= 1".into());
        }
        e
    }

    pub fn validate(&self, allow_out_of_range: bool) -> Result<(), ConfigError> {
        let v = self.violations(allow_out_of_range);
        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(v))
        }
    }

    /// Heartbeat slot length: one frame plus a guard.
    pub fn heartbeat_slot(&self) -> f64 {
        self.mac.duration(self.traffic.heartbeat_bits) + self.mac.switch_latency
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gets_defaults() {
        let cfg = ScenarioConfig::from_toml("seed = 7\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.sinks.range_ratio, 25.0);
        assert_eq!(cfg.mac.switch_latency, 224e-6);
        cfg.validate(false).unwrap();
    }

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = ScenarioConfig::default();
        assert_eq!(ScenarioConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn ratio_outside_band_needs_override() {
        let cfg = ScenarioConfig::from_toml("[sinks]\nrange_ratio = 50\n").unwrap();
        let errs = cfg.violations(false);
        assert_eq!(errs.len(), 1);
        assert!(errs[0].contains("20-30"), "{}", errs[0]);
        assert!(errs[0].contains("--allow-out-of-paper-range"));
        assert!(cfg.violations(true).is_empty());
    }

    #[test]
    fn unknown_model_lists_names() {
        let cfg = ScenarioConfig::from_toml("[sinks]\nmobility = \"teleport\"\n").unwrap();
        let errs = cfg.violations(false);
        assert_eq!(errs.len(), 1);
        for name in MobilityModel::NAMES {
            assert!(errs[0].contains(name), "{}", errs[0]);
        }
    }

    #[test]
    fn all_violations_reported() {
        let cfg = ScenarioConfig::from_toml(
            "t_end = -1\n[sinks]\ncount = 0\nmobility = \"nope\"\n[field]\nwidth = 0\n",
        )
        .unwrap();
        assert!(cfg.violations(false).len() >= 4);
    }

    #[test]
    fn malformed_is_a_parse_error() {
        assert!(matches!(ScenarioConfig::from_toml("seed = "), Err(ConfigError::Parse(_))));
        assert!(matches!(ScenarioConfig::from_toml("bogus = 1"), Err(ConfigError::Parse(_))));
    }
}
