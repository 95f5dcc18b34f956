//! Beacon schedules, RSSI ranging, and least-squares tri-lateration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Position;
use crate::world::SinkId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LocalizationError {
    #[error("need at least 3 anchors, have {0}")]
    InsufficientAnchors(usize),
    #[error("anchors are collinear")]
    CollinearAnchors,
}

/// RSSI quantized to `levels` equal bins over `[min_dbm, max_dbm]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantization {
    pub levels: u32,
    pub min_dbm: f64,
    pub max_dbm: f64,
}

impl Quantization {
    /// Midpoint of the bin holding `rssi`; out-of-range values clamp to the
    /// end bins.
    pub fn snap(&self, rssi: f64) -> f64 {
        let step = (self.max_dbm - self.min_dbm) / self.levels as f64;
        let idx = ((rssi - self.min_dbm) / step).floor().clamp(0.0, self.levels as f64 - 1.0);
        self.min_dbm + (idx + 0.5) * step
    }
}

/// Log-distance path loss with log-normal shadowing, referenced at 1 m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathLossModel {
    pub p0: f64,
    pub eta: f64,
    pub sigma: f64,
    pub quantization: Option<Quantization>,
}

impl Default for PathLossModel {
    fn default() -> Self {
        Self {
            p0: -40.0,
            eta: 2.0,
            sigma: 0.0,
            quantization: None,
        }
    }
}

impl PathLossModel {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.eta > 0.0) {
            errs.push(format!("localization.path_loss.eta must be > 0 (got {})", self.eta));
        }
        if !(self.sigma >= 0.0) {
            errs.push(format!("localization.path_loss.sigma must be >= 0 (got {})", self.sigma));
        }
        if let Some(q) = self.quantization {
            if q.levels == 0 || !(q.max_dbm > q.min_dbm) {
                errs.push("localization.path_loss.quantization needs levels >= 1 and max_dbm > min_dbm".into());
            }
        }
        errs
    }

    /// Received strength at `distance` for a standard-normal draw `z`.
    pub fn rssi(&self, distance: f64, z: f64) -> f64 {
        self.p0 - 10.0 * self.eta * distance.max(1e-3).log10() + self.sigma * z
    }

    pub fn rssi_to_distance(&self, rssi: f64) -> f64 {
        let r = match self.quantization {
            Some(q) => q.snap(rssi),
            None => rssi,
        };
        10f64.powf((self.p0 - r) / (10.0 * self.eta))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeaconSlot {
    pub sink: SinkId,
    pub round: u32,
    pub start: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeaconSchedule {
    pub slot_duration: f64,
    pub rounds: u32,
    pub slots: Vec<BeaconSlot>,
}

/// Round-robin TDMA in ascending sink id. Round `j` begins at
/// `start + j·round_period`; a `round_period` shorter than one full round
/// is stretched to it.
pub fn schedule_beacons(sinks: &[SinkId], slot_duration: f64, rounds: u32, start: f64, round_period: f64) -> BeaconSchedule {
    let mut ids = sinks.to_vec();
    ids.sort();
    ids.dedup();
    let period = round_period.max(slot_duration * ids.len() as f64);
    let mut slots = Vec::with_capacity(ids.len() * rounds as usize);
    for j in 0..rounds {
        for (k, &sink) in ids.iter().enumerate() {
            slots.push(BeaconSlot {
                sink,
                round: j,
                start: start + j as f64 * period + k as f64 * slot_duration,
            });
        }
    }
    BeaconSchedule {
        slot_duration,
        rounds,
        slots,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorObservation {
    pub anchor: Position,
    pub rssi: f64,
    pub distance: f64,
    pub heard_at: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub pos: Position,
    /// RMS of `|dist(pos, anchor) − distance|` over the observations used.
    pub residual: f64,
    pub anchors: usize,
}

/// Relative eigenvalue floor of the normal matrix below which the anchor
/// set is treated as collinear.
pub const COLLINEAR_THRESHOLD: f64 = 1e-8;

/// Linearized least squares: subtract the first circle equation from the
/// others and solve the 2×2 normal equations.
pub fn trilaterate(obs: &[AnchorObservation]) -> Result<Estimate, LocalizationError> {
    if obs.len() < 3 {
        return Err(LocalizationError::InsufficientAnchors(obs.len()));
    }
    // Work relative to the first anchor to limit cancellation.
    let o = obs[0].anchor;
    let d0 = obs[0].distance;
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ob in &obs[1..] {
        let x = ob.anchor.x - o.x;
        let y = ob.anchor.y - o.y;
        let (ax, ay) = (2.0 * x, 2.0 * y);
        let rhs = d0 * d0 - ob.distance * ob.distance + x * x + y * y;
        a11 += ax * ax;
        a12 += ax * ay;
        a22 += ay * ay;
        b1 += ax * rhs;
        b2 += ay * rhs;
    }
    let tr = a11 + a22;
    let det = a11 * a22 - a12 * a12;
    let disc = ((a11 - a22).powi(2) + 4.0 * a12 * a12).sqrt();
    let l_max = (tr + disc) / 2.0;
    let l_min = (tr - disc) / 2.0;
    if !(l_max > 0.0) || l_min / l_max < COLLINEAR_THRESHOLD {
        return Err(LocalizationError::CollinearAnchors);
    }
    let x = (a22 * b1 - a12 * b2) / det;
    let y = (a11 * b2 - a12 * b1) / det;
    let pos = Position::new(o.x + x, o.y + y);
    let sq: f64 = obs
        .iter()
        .map(|ob| (pos.distance(&ob.anchor) - ob.distance).powi(2))
        .sum();
    Ok(Estimate {
        pos,
        residual: (sq / obs.len() as f64).sqrt(),
        anchors: obs.len(),
    })
}

/// One sensor's anchor memory.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Localizer {
    pub window: f64,
    pub observations: Vec<AnchorObservation>,
    pub estimate: Option<Estimate>,
}

impl Localizer {
    pub fn new(window: f64) -> Self {
        Self {
            window,
            observations: Vec::new(),
            estimate: None,
        }
    }

    /// Record a beacon, drop stale ones, and re-estimate once three or more
    /// fresh observations exist.
    pub fn hear(&mut self, ob: AnchorObservation) {
        let now = ob.heard_at;
        self.observations.push(ob);
        self.observations.retain(|o| now - o.heard_at <= self.window);
        if self.observations.len() >= 3 {
            if let Ok(e) = trilaterate(&self.observations) {
                self.estimate = Some(e);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ob(x: f64, y: f64, d: f64) -> AnchorObservation {
        AnchorObservation {
            anchor: Position::new(x, y),
            rssi: 0.0,
            distance: d,
            heard_at: 0.0,
        }
    }

    #[test]
    fn schedule_examples() {
        let s = schedule_beacons(&[SinkId(2), SinkId(0), SinkId(1)], 0.1, 1, 0.0, 0.0);
        let starts: Vec<f64> = s.slots.iter().map(|b| b.start).collect();
        assert_eq!(starts, vec![0.0, 0.1, 0.2]);
        assert_eq!(s.slots[0].sink, SinkId(0));
        assert_eq!(schedule_beacons(&[SinkId(0)], 0.1, 3, 0.0, 1.0).slots.len(), 3);
        assert!(schedule_beacons(&[], 0.1, 3, 0.0, 1.0).slots.is_empty());
    }

    #[test]
    fn ranging_inversion() {
        let m = PathLossModel::default();
        assert!((m.rssi_to_distance(m.p0) - 1.0).abs() < 1e-12);
        assert!((m.rssi_to_distance(m.p0 - 20.0) - 10.0).abs() < 1e-12);
        let d = 37.5;
        assert!((m.rssi_to_distance(m.rssi(d, 0.0)) - d).abs() < 1e-9);
    }

    #[test]
    fn quantized_snaps_to_midpoint() {
        let q = Quantization {
            levels: 10,
            min_dbm: -100.0,
            max_dbm: 0.0,
        };
        assert_eq!(q.snap(-55.0), -55.0);
        assert_eq!(q.snap(-51.0), -55.0);
        assert_eq!(q.snap(10.0), -5.0);
        assert_eq!(q.snap(-500.0), -95.0);
    }

    #[test]
    fn exact_trilateration() {
        let e = trilaterate(&[ob(0.0, 0.0, 2f64.sqrt()), ob(4.0, 0.0, 10f64.sqrt()), ob(0.0, 4.0, 10f64.sqrt())]).unwrap();
        assert!(e.pos.distance(&Position::new(1.0, 1.0)) < 1e-12);
        assert!(e.residual < 1e-12);
    }

    #[test]
    fn anchor_errors() {
        assert_eq!(
            trilaterate(&[ob(0.0, 0.0, 1.0), ob(1.0, 0.0, 1.0)]),
            Err(LocalizationError::InsufficientAnchors(2))
        );
        assert_eq!(
            trilaterate(&[ob(0.0, 0.0, 1.0), ob(1.0, 0.0, 1.0), ob(2.0, 0.0, 1.0)]),
            Err(LocalizationError::CollinearAnchors)
        );
    }

    #[test]
    fn localizer_needs_three_fresh() {
        let mut l = Localizer::new(30.0);
        let truth = Position::new(3.0, 4.0);
        let mk = |x: f64, y: f64, t: f64| AnchorObservation {
            anchor: Position::new(x, y),
            rssi: 0.0,
            distance: truth.distance(&Position::new(x, y)),
            heard_at: t,
        };
        l.hear(mk(0.0, 0.0, 0.0));
        l.hear(mk(10.0, 0.0, 1.0));
        assert!(l.estimate.is_none());
        l.hear(mk(0.0, 10.0, 40.0));
        assert!(l.estimate.is_none(), "first two are stale");
        l.hear(mk(10.0, 10.0, 41.0));
        l.hear(mk(20.0, 5.0, 42.0));
        assert!(l.estimate.unwrap().pos.distance(&truth) < 1e-9);
    }
}
