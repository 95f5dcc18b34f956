//! The guide in `book/`, compiled so that every Rust snippet runs as a
//! doc-test.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/determinism.md")]
pub mod determinism {}
#[doc = include_str!("../../../book/src/world.md")]
pub mod world {}
#[doc = include_str!("../../../book/src/mac.md")]
pub mod mac {}
#[doc = include_str!("../../../book/src/trees.md")]
pub mod trees {}
#[doc = include_str!("../../../book/src/sink-layer.md")]
pub mod sink_layer {}
#[doc = include_str!("../../../book/src/mobility.md")]
pub mod mobility {}
#[doc = include_str!("../../../book/src/localization.md")]
pub mod localization {}
#[doc = include_str!("../../../book/src/metrics.md")]
pub mod metrics {}
#[doc = include_str!("../../../book/src/scenarios.md")]
pub mod scenarios {}
