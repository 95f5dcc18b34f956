//! On-demand route discovery between sinks and reverse-path replies.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::SinkError;
use crate::engine::Scheduler;
use crate::geometry::Position;
use crate::world::{RegionId, SinkId, World};

/// A query or route request; `path` records every sink it crossed,
/// origin first, without repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub id: u64,
    pub origin: SinkId,
    pub target: RegionId,
    pub path: Vec<SinkId>,
}

impl Query {
    pub fn new(id: u64, origin: SinkId, target: RegionId) -> Self {
        Self {
            id,
            origin,
            target,
            path: vec![origin],
        }
    }

    /// Append `sink` to the path; refuses repeats.
    pub fn visit(&mut self, sink: SinkId) -> bool {
        if self.path.contains(&sink) {
            return false;
        }
        self.path.push(sink);
        true
    }

    /// Hops a reply takes: the recorded path reversed.
    pub fn reply_route(&self) -> Vec<SinkId> {
        self.path.iter().rev().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SinkVertex {
    pub id: SinkId,
    pub pos: Position,
    pub range: f64,
    pub alive: bool,
    pub covered: BTreeSet<RegionId>,
}

/// Snapshot of the sink layer for graph-level route computations.
#[derive(Debug, Clone, PartialEq)]
pub struct SinkGraph {
    pub vertices: Vec<SinkVertex>,
}

impl SinkGraph {
    pub fn from_world(world: &World) -> Self {
        Self {
            vertices: world
                .sinks
                .iter()
                .map(|k| SinkVertex {
                    id: k.id,
                    pos: k.pos,
                    range: k.tx_range,
                    alive: k.alive,
                    covered: k.covered_regions.clone(),
                })
                .collect(),
        }
    }

    fn v(&self, id: SinkId) -> &SinkVertex {
        &self.vertices[id.0 as usize]
    }

    /// `to` hears `from`.
    pub fn link(&self, from: SinkId, to: SinkId) -> bool {
        let (a, b) = (self.v(from), self.v(to));
        a.alive && b.alive && a.pos.distance(&b.pos) <= a.range
    }

    pub fn neighbors(&self, from: SinkId) -> Vec<SinkId> {
        self.vertices
            .iter()
            .filter(|b| b.id != from && self.link(from, b.id))
            .map(|b| b.id)
            .collect()
    }

    pub fn covers(&self, sink: SinkId, region: RegionId) -> bool {
        let v = self.v(sink);
        v.alive && v.covered.contains(&region)
    }
}

#[derive(Debug, Clone)]
enum Step {
    Request { at: SinkId, path: Vec<SinkId> },
    Reply { at: SinkId, route: Vec<SinkId>, idx: usize },
}

/// Flood a route request for `target` from `src` with path recording; every
/// covering sink replies along the reversed path, and the earliest reply to
/// reach `src` (by time, then scheduling order) names the route. Each hop
/// costs `frame_time`. Replies later than `timeout` do not count.
pub fn discover_route(
    graph: &SinkGraph,
    src: SinkId,
    target: RegionId,
    frame_time: f64,
    timeout: f64,
) -> Result<Vec<SinkId>, SinkError> {
    if !graph.v(src).alive {
        return Err(SinkError::NoRoute(target));
    }
    if graph.covers(src, target) {
        return Ok(vec![src]);
    }
    let mut seen = BTreeSet::from([src]);
    let mut sched: Scheduler<Step> = Scheduler::new();
    for n in graph.neighbors(src) {
        sched
            .schedule(Step::Request { at: n, path: vec![src, n] }, frame_time)
            .expect("future");
    }
    while let Some(ev) = sched.pop_due(timeout) {
        match ev.action {
            Step::Request { at, path } => {
                if !seen.insert(at) {
                    continue;
                }
                if graph.covers(at, target) {
                    let route: Vec<SinkId> = path.iter().rev().copied().collect();
                    sched
                        .schedule(Step::Reply { at: route[1], route, idx: 1 }, ev.time + frame_time)
                        .expect("future");
                    continue;
                }
                for n in graph.neighbors(at) {
                    if !path.contains(&n) {
                        let mut p = path.clone();
                        p.push(n);
                        sched.schedule(Step::Request { at: n, path: p }, ev.time + frame_time).expect("future");
                    }
                }
            }
            Step::Reply { at, route, idx } => {
                if at == src {
                    let mut path = route;
                    path.reverse();
                    return Ok(path);
                }
                let next = route[idx + 1];
                if graph.link(at, next) {
                    sched
                        .schedule(Step::Reply { at: next, route, idx: idx + 1 }, ev.time + frame_time)
                        .expect("future");
                }
            }
        }
    }
    Err(SinkError::NoRoute(target))
}

/// Walk the reverse of `query.path` from the responder back to the origin.
/// Returns the hop sequence, or the first broken hop.
pub fn answer_query(graph: &SinkGraph, query: &Query) -> Result<Vec<SinkId>, SinkError> {
    let route = query.reply_route();
    for w in route.windows(2) {
        if !graph.link(w[0], w[1]) {
            return Err(SinkError::PathBroken { from: w[0], to: w[1] });
        }
    }
    Ok(route)
}

/// Routes discovered per target region, dropped when a hop breaks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RouteCache {
    routes: BTreeMap<RegionId, Vec<SinkId>>,
}

impl RouteCache {
    pub fn get(&self, region: RegionId) -> Option<&Vec<SinkId>> {
        self.routes.get(&region)
    }

    pub fn insert(&mut self, region: RegionId, route: Vec<SinkId>) {
        self.routes.insert(region, route);
    }

    /// Drop every route that passes through `sink`.
    pub fn invalidate_sink(&mut self, sink: SinkId) {
        self.routes.retain(|_, r| !r.contains(&sink));
    }

    pub fn invalidate_region(&mut self, region: RegionId) {
        self.routes.remove(&region);
    }

    pub fn len(&self) -> usize {
        self.routes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.routes.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(xs: &[(f64, f64)], range: f64) -> SinkGraph {
        SinkGraph {
            vertices: xs
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| SinkVertex {
                    id: SinkId(i as u32),
                    pos: Position::new(x, y),
                    range,
                    alive: true,
                    covered: BTreeSet::from([RegionId(i as u32)]),
                })
                .collect(),
        }
    }

    #[test]
    fn chain_route() {
        let g = chain(&[(0.0, 0.0), (10.0, 0.0), (20.0, 0.0)], 12.0);
        let r = discover_route(&g, SinkId(0), RegionId(2), 1e-3, 5.0).unwrap();
        assert_eq!(r, vec![SinkId(0), SinkId(1), SinkId(2)]);
    }

    #[test]
    fn partitioned_graph_has_no_route() {
        let g = chain(&[(0.0, 0.0), (50.0, 0.0)], 12.0);
        assert_eq!(
            discover_route(&g, SinkId(0), RegionId(1), 1e-3, 5.0),
            Err(SinkError::NoRoute(RegionId(1)))
        );
    }

    #[test]
    fn equal_paths_pick_same_route_every_time() {
        // Diamond: 0 -> {1, 2} -> 3.
        let g = chain(&[(0.0, 0.0), (10.0, 8.0), (10.0, -8.0), (20.0, 0.0)], 13.0);
        let first = discover_route(&g, SinkId(0), RegionId(3), 1e-3, 5.0).unwrap();
        assert_eq!(first.len(), 3);
        for _ in 0..10 {
            assert_eq!(discover_route(&g, SinkId(0), RegionId(3), 1e-3, 5.0).unwrap(), first);
        }
    }

    #[test]
    fn reply_reverses_path() {
        let g = chain(&[(0.0, 0.0), (10.0, 0.0), (20.0, 0.0)], 12.0);
        let mut q = Query::new(1, SinkId(0), RegionId(2));
        assert!(q.visit(SinkId(1)));
        assert!(q.visit(SinkId(2)));
        assert!(!q.visit(SinkId(1)));
        assert_eq!(answer_query(&g, &q).unwrap(), vec![SinkId(2), SinkId(1), SinkId(0)]);
    }

    #[test]
    fn dead_middle_breaks_reply() {
        let mut g = chain(&[(0.0, 0.0), (10.0, 0.0), (20.0, 0.0)], 12.0);
        let mut q = Query::new(1, SinkId(0), RegionId(2));
        q.visit(SinkId(1));
        q.visit(SinkId(2));
        g.vertices[1].alive = false;
        assert_eq!(
            answer_query(&g, &q),
            Err(SinkError::PathBroken {
                from: SinkId(2),
                to: SinkId(1)
            })
        );
    }

    #[test]
    fn cache_invalidation() {
        let mut c = RouteCache::default();
        c.insert(RegionId(2), vec![SinkId(0), SinkId(1), SinkId(2)]);
        c.insert(RegionId(3), vec![SinkId(0), SinkId(3)]);
        c.invalidate_sink(SinkId(1));
        assert!(c.get(RegionId(2)).is_none());
        assert_eq!(c.len(), 1);
    }
}
