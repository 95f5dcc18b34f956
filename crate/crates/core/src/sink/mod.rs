//! Sink-layer protocols: aggregation, broadcast relaying, on-demand routes
//! with reverse-path replies, failure takeover, and hotspot tracking.

use thiserror::Error;

use crate::world::{RegionId, SinkId};

pub mod aggregate;
pub mod broadcast;
pub mod hotspot;
pub mod routing;
pub mod takeover;

pub use aggregate::{aggregate_window, Aggregate};
pub use broadcast::{simulate_broadcast, BroadcastKey, BroadcastOutcome, BroadcastRelay, BroadcastStrategy, Decision, RelayConfig};
pub use hotspot::{AlertGate, HotspotTrack};
pub use routing::{answer_query, discover_route, Query, RouteCache, SinkGraph};
pub use takeover::{takeover, HeartbeatMonitor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SinkError {
    #[error("aggregation window [{t0}, {t1}) is empty or reversed")]
    InvalidWindow { t0: f64, t1: f64 },
    #[error("no sink answered for region {0} before the discovery timeout")]
    NoRoute(RegionId),
    #[error("reply path broken at hop {from} -> {to}")]
    PathBroken { from: SinkId, to: SinkId },
    #[error("no alive sink can take over")]
    NoSinkAvailable,
    #[error("invalid broadcast strategy: {0}")]
    InvalidStrategy(String),
}
