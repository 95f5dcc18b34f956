//! Peer liveness from heartbeats, and region handover when a sink fails.

use std::collections::{BTreeMap, BTreeSet};

use super::SinkError;
use crate::world::{RegionId, SinkId, World};

/// Per-observer view of which peers are still heard.
#[derive(Debug, Clone, PartialEq)]
pub struct HeartbeatMonitor {
    pub period: f64,
    pub misses: u32,
    last_heard: BTreeMap<SinkId, f64>,
    suspected: BTreeSet<SinkId>,
}

impl HeartbeatMonitor {
    /// Every peer counts as heard at `now`.
    pub fn new(period: f64, misses: u32, peers: impl IntoIterator<Item = SinkId>, now: f64) -> Self {
        Self {
            period,
            misses,
            last_heard: peers.into_iter().map(|p| (p, now)).collect(),
            suspected: BTreeSet::new(),
        }
    }

    pub fn heard(&mut self, peer: SinkId, now: f64) {
        if let Some(t) = self.last_heard.get_mut(&peer) {
            *t = t.max(now);
        }
    }

    /// A peer is suspected once `misses` heartbeats (plus half a period of
    /// slack for slot alignment) have gone unheard.
    pub fn deadline(&self, peer: SinkId) -> Option<f64> {
        self.last_heard
            .get(&peer)
            .map(|t| t + (self.misses as f64 + 0.5) * self.period)
    }

    /// Peers newly suspected at `now`; each is reported once.
    pub fn check(&mut self, now: f64) -> Vec<SinkId> {
        let mut out = Vec::new();
        for (&peer, &t) in &self.last_heard {
            if !self.suspected.contains(&peer) && now > t + (self.misses as f64 + 0.5) * self.period {
                out.push(peer);
            }
        }
        self.suspected.extend(out.iter().copied());
        out
    }

    /// Treat `peer` as heard at `now` and lift any suspicion.
    pub fn reset(&mut self, peer: SinkId, now: f64) {
        if let Some(t) = self.last_heard.get_mut(&peer) {
            *t = t.max(now);
        }
        self.suspected.remove(&peer);
    }

    pub fn is_suspected(&self, peer: SinkId) -> bool {
        self.suspected.contains(&peer)
    }
}

/// Hand each region of `failed` to the alive sink whose position is nearest
/// that region's centroid (lowest id on ties). Marks `failed` dead.
pub fn takeover(world: &mut World, failed: SinkId) -> Result<Vec<(RegionId, SinkId)>, SinkError> {
    let idx = failed.0 as usize;
    world.sinks[idx].alive = false;
    let regions: Vec<RegionId> = std::mem::take(&mut world.sinks[idx].covered_regions)
        .into_iter()
        .collect();
    if !world.sinks.iter().any(|k| k.alive) {
        // Keep the record of what it covered for diagnostics.
        world.sinks[idx].covered_regions = regions.into_iter().collect();
        return Err(SinkError::NoSinkAvailable);
    }
    let mut out = Vec::new();
    for region in regions {
        let c = world.region(region).bounds.centroid();
        let best = world
            .sinks
            .iter()
            .filter(|k| k.alive)
            .min_by(|a, b| {
                a.pos
                    .distance(&c)
                    .total_cmp(&b.pos.distance(&c))
                    .then(a.id.cmp(&b.id))
            })
            .map(|k| k.id)
            .expect("at least one alive sink");
        world.sinks[best.0 as usize].covered_regions.insert(region);
        out.push((region, best));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Position;
    use crate::world::{EnergyModel, Field, WorldSpec};

    fn world(sinks: u32) -> World {
        World::build(&WorldSpec {
            field: Field::new(100.0, 100.0),
            sensor_positions: vec![],
            sensor_energy: vec![],
            sensor_tx_range: 15.0,
            sensor_sense_range: 5.0,
            sink_count: sinks,
            sink_range_ratio: 25.0,
            sink_v_min: 0.0,
            sink_v_max: 0.0,
            energy: EnergyModel::default(),
        })
    }

    #[test]
    fn two_sinks_survivor_takes_all() {
        let mut w = world(2);
        let got = takeover(&mut w, SinkId(1)).unwrap();
        assert_eq!(got, vec![(RegionId(1), SinkId(0))]);
        assert_eq!(w.covering_sinks(RegionId(1)), vec![SinkId(0)]);
        assert!(w.sinks[0].covered_regions.contains(&RegionId(0)));
    }

    #[test]
    fn equidistant_goes_to_lowest_id() {
        let mut w = world(4);
        // Region 3's centroid is (75,75); sinks 1 and 2 sit 50 m from it.
        w.sinks[0].pos = Position::new(0.0, 0.0);
        w.sinks[1].pos = Position::new(75.0, 25.0);
        w.sinks[2].pos = Position::new(25.0, 75.0);
        let got = takeover(&mut w, SinkId(3)).unwrap();
        assert_eq!(got, vec![(RegionId(3), SinkId(1))]);
    }

    #[test]
    fn all_failed() {
        let mut w = world(1);
        assert_eq!(takeover(&mut w, SinkId(0)), Err(SinkError::NoSinkAvailable));
    }

    #[test]
    fn heartbeat_suspicion() {
        let mut m = HeartbeatMonitor::new(1.0, 3, [SinkId(1), SinkId(2)], 0.0);
        m.heard(SinkId(1), 2.0);
        assert!(m.check(3.4).is_empty());
        assert_eq!(m.check(3.6), vec![SinkId(2)]);
        assert!(m.check(10.0) == vec![SinkId(1)]);
        assert!(m.is_suspected(SinkId(2)));
    }
}
