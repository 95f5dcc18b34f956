use serde::{Deserialize, Serialize};

use super::SinkError;
use crate::world::{RegionId, SinkId};

/// Count and mean of the readings a sink received for one region over
/// `[t0, t1)`. `mean` is `None` for an empty window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub region: RegionId,
    pub sink: SinkId,
    pub t0: f64,
    pub t1: f64,
    pub count: u64,
    pub mean: Option<f64>,
}

/// `readings` are `(delivery time, value)` pairs; those outside the window
/// are ignored.
pub fn aggregate_window(
    sink: SinkId,
    region: RegionId,
    readings: &[(f64, f64)],
    t0: f64,
    t1: f64,
) -> Result<Aggregate, SinkError> {
    if !(t1 > t0) {
        return Err(SinkError::InvalidWindow { t0, t1 });
    }
    let mut count = 0u64;
    let mut sum = 0.0;
    for &(t, v) in readings {
        if t >= t0 && t < t1 {
            count += 1;
            sum += v;
        }
    }
    Ok(Aggregate {
        region,
        sink,
        t0,
        t1,
        count,
        mean: (count > 0).then(|| sum / count as f64),
    })
}
