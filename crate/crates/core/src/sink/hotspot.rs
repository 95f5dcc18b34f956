//! Hotspot tracks: least-squares velocity over a short window, linear
//! extrapolation, and cross-region alert gating.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::geometry::Position;
use crate::world::{Field, RegionGrid, RegionId, SinkId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HotspotTrack {
    pub id: u32,
    pub owner: SinkId,
    pub window: usize,
    pub observations: VecDeque<(f64, Position)>,
}

impl HotspotTrack {
    pub fn new(id: u32, owner: SinkId, window: usize) -> Self {
        Self {
            id,
            owner,
            window: window.max(2),
            observations: VecDeque::new(),
        }
    }

    pub fn observe(&mut self, t: f64, pos: Position) {
        self.observations.push_back((t, pos));
        while self.observations.len() > self.window {
            self.observations.pop_front();
        }
    }

    pub fn last(&self) -> Option<(f64, Position)> {
        self.observations.back().copied()
    }

    /// Fitted `(t̄, x̄, ȳ, vx, vy)`; needs two distinct observation times.
    fn fit(&self) -> Option<(f64, f64, f64, f64, f64)> {
        let n = self.observations.len();
        if n < 2 {
            return None;
        }
        let nf = n as f64;
        let tm = self.observations.iter().map(|o| o.0).sum::<f64>() / nf;
        let xm = self.observations.iter().map(|o| o.1.x).sum::<f64>() / nf;
        let ym = self.observations.iter().map(|o| o.1.y).sum::<f64>() / nf;
        let mut stt = 0.0;
        let mut stx = 0.0;
        let mut sty = 0.0;
        for &(t, p) in &self.observations {
            let dt = t - tm;
            stt += dt * dt;
            stx += dt * (p.x - xm);
            sty += dt * (p.y - ym);
        }
        if stt <= 0.0 {
            return None;
        }
        Some((tm, xm, ym, stx / stt, sty / stt))
    }

    /// Velocity in m/s from a least-squares line through the window.
    pub fn velocity(&self) -> Option<(f64, f64)> {
        self.fit().map(|(_, _, _, vx, vy)| (vx, vy))
    }

    /// Fitted position `tau` seconds after the latest observation.
    pub fn predict(&self, tau: f64) -> Option<Position> {
        let (tm, xm, ym, vx, vy) = self.fit()?;
        let t = self.last()?.0 + tau;
        Some(Position::new(xm + vx * (t - tm), ym + vy * (t - tm)))
    }
}

/// At most one alert per (hotspot, region) per cooldown.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AlertGate {
    pub cooldown: f64,
    last: BTreeMap<(u32, RegionId), f64>,
}

impl AlertGate {
    pub fn new(cooldown: f64) -> Self {
        Self {
            cooldown,
            last: BTreeMap::new(),
        }
    }

    pub fn allow(&mut self, hotspot: u32, region: RegionId, now: f64) -> bool {
        match self.last.get(&(hotspot, region)) {
            Some(&t) if now - t < self.cooldown => false,
            _ => {
                self.last.insert((hotspot, region), now);
                true
            }
        }
    }
}

/// Region the track is predicted to enter within `tau`, if it differs from
/// the region of its latest observation. Does not consult the gate.
pub fn predicted_crossing(track: &HotspotTrack, grid: &RegionGrid, field: &Field, tau: f64) -> Option<RegionId> {
    let (_, here) = track.last()?;
    let pred = track.predict(tau)?;
    let to = grid.locate(field, &pred)?;
    let from = grid.locate(field, &here);
    (Some(to) != from).then_some(to)
}

/// [`predicted_crossing`] filtered through the cooldown gate.
pub fn track_hotspot(
    track: &HotspotTrack,
    grid: &RegionGrid,
    field: &Field,
    tau: f64,
    now: f64,
    gate: &mut AlertGate,
) -> Option<RegionId> {
    let to = predicted_crossing(track, grid, field, tau)?;
    gate.allow(track.id, to, now).then_some(to)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_regions() -> (RegionGrid, Field) {
        (RegionGrid::for_count(2), Field::new(100.0, 100.0))
    }

    #[test]
    fn eastward_hotspot_alerts_east_neighbor() {
        let (g, f) = two_regions();
        let mut tr = HotspotTrack::new(0, SinkId(0), 5);
        tr.observe(0.0, Position::new(48.0, 50.0));
        tr.observe(1.0, Position::new(49.0, 50.0));
        let p = tr.predict(5.0).unwrap();
        assert!((p.x - 54.0).abs() < 1e-12 && (p.y - 50.0).abs() < 1e-12);
        let mut gate = AlertGate::new(10.0);
        assert_eq!(track_hotspot(&tr, &g, &f, 5.0, 1.0, &mut gate), Some(RegionId(1)));
        assert_eq!(track_hotspot(&tr, &g, &f, 5.0, 2.0, &mut gate), None, "cooldown");
        assert_eq!(track_hotspot(&tr, &g, &f, 5.0, 11.5, &mut gate), Some(RegionId(1)));
    }

    #[test]
    fn stationary_never_alerts() {
        let (g, f) = two_regions();
        let mut tr = HotspotTrack::new(0, SinkId(0), 5);
        for i in 0..5 {
            tr.observe(i as f64, Position::new(49.9, 50.0));
        }
        assert_eq!(tr.velocity(), Some((0.0, 0.0)));
        let mut gate = AlertGate::new(10.0);
        assert_eq!(track_hotspot(&tr, &g, &f, 100.0, 5.0, &mut gate), None);
    }

    #[test]
    fn single_observation_has_no_velocity() {
        let (g, f) = two_regions();
        let mut tr = HotspotTrack::new(0, SinkId(0), 5);
        tr.observe(0.0, Position::new(49.0, 50.0));
        assert_eq!(tr.velocity(), None);
        assert_eq!(predicted_crossing(&tr, &g, &f, 5.0), None);
    }

    #[test]
    fn window_keeps_last_k() {
        let mut tr = HotspotTrack::new(0, SinkId(0), 3);
        for i in 0..10 {
            tr.observe(i as f64, Position::new(i as f64, 0.0));
        }
        assert_eq!(tr.observations.len(), 3);
        let (vx, vy) = tr.velocity().unwrap();
        assert!((vx - 1.0).abs() < 1e-12 && vy.abs() < 1e-12);
    }
}
