//! Property tests over whole runs and over the building blocks they use.

#![allow(clippy::field_reassign_with_default)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use msssn::engine::{RngStream, Scheduler};
use msssn::geometry::Position;
use msssn::mobility::MobilityModel;
use msssn::scenario::{run_scenario, RunOptions, ScenarioConfig, System};
use msssn::sensor::{CollectionTree, NextHop, SinkAnchor, TreeStrategy};
use msssn::world::{EnergyModel, Field, RegionId, SensorId, SinkId, World, WorldSpec};
use proptest::prelude::*;

fn small_config(seed: u64, sensors: usize, energy: f64, sinks: u32, mobility: usize) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    cfg.seed = seed;
    cfg.t_end = 60.0;
    cfg.sensors.count = sensors;
    cfg.sensors.energy = energy;
    cfg.sinks.count = sinks;
    cfg.sinks.mobility = MobilityModel::NAMES[mobility].to_string();
    cfg.traffic.report_interval = 2.0;
    cfg
}

fn world(positions: Vec<Position>, field: f64, sinks: u32) -> World {
    let n = positions.len();
    World::build(&WorldSpec {
        field: Field::new(field, field),
        sensor_positions: positions,
        sensor_energy: vec![1.0; n],
        sensor_tx_range: 15.0,
        sensor_sense_range: 5.0,
        sink_count: sinks,
        sink_range_ratio: 25.0,
        sink_v_min: 0.0,
        sink_v_max: 0.0,
        energy: EnergyModel::default(),
    })
}

/// Hop distance from `sources` over alive sensors, restricted to `region`
/// unless it is `None`.
fn hops(w: &World, sources: &BTreeSet<SensorId>, region: Option<RegionId>) -> BTreeMap<SensorId, u32> {
    let ok = |s: &SensorId| {
        let n = w.sensor(*s);
        n.alive && region.is_none_or(|r| n.region == r)
    };
    let mut dist: BTreeMap<SensorId, u32> = sources.iter().filter(|s| ok(s)).map(|s| (*s, 0)).collect();
    let mut q: VecDeque<SensorId> = dist.keys().copied().collect();
    while let Some(u) = q.pop_front() {
        let du = dist[&u];
        for v in &w.sensors {
            if ok(&v.id) && !dist.contains_key(&v.id) {
                let d = v.pos.distance(&w.sensor(u).pos);
                if d <= v.tx_range && d <= w.sensor(u).tx_range {
                    dist.insert(v.id, du + 1);
                    q.push_back(v.id);
                }
            }
        }
    }
    dist
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Energy bookkeeping, death records, and delivery records agree with
    /// the final world and with the summary.
    #[test]
    fn run_bookkeeping(
        seed in 0u64..1000,
        sensors in 20usize..80,
        energy in 0.002f64..0.05,
        sinks in prop::sample::select(vec![1u32, 2, 4]),
        mobility in 0usize..MobilityModel::NAMES.len(),
        flat in any::<bool>(),
    ) {
        let cfg = small_config(seed, sensors, energy, sinks, mobility);
        let system = if flat { System::Flat } else { System::Msssn };
        let r = run_scenario(&cfg, seed, system, RunOptions::default()).unwrap();

        let mut drained = vec![0u64; sensors];
        for d in &r.log.drains {
            drained[d.node.0 as usize] += d.fj;
        }
        for s in &r.world.sensors {
            prop_assert_eq!(drained[s.id.0 as usize], s.initial_fj - s.energy_fj, "sensor {}", s.id.0);
            prop_assert_eq!(s.alive, s.energy_fj > 0);
        }

        let mut died = BTreeSet::new();
        for w in r.log.deaths.windows(2) {
            prop_assert!(w[0].t <= w[1].t);
        }
        for d in &r.log.deaths {
            prop_assert!(died.insert(d.node), "sensor {} died twice", d.node.0);
        }
        prop_assert_eq!(died.len(), r.world.sensors.iter().filter(|s| !s.alive).count());

        let generated: BTreeMap<u64, _> = r.log.generated.iter().map(|g| (g.report.0, g)).collect();
        let mut delivered = BTreeSet::new();
        for d in &r.log.deliveries {
            prop_assert!(delivered.insert(d.report.0), "report {} delivered twice", d.report.0);
            let g = generated.get(&d.report.0).expect("delivered report was generated");
            prop_assert_eq!((g.source, g.region, g.t), (d.source, d.region, d.t_created));
            prop_assert!(d.t_delivered >= d.t_created);
            prop_assert!(d.t_delivered <= cfg.t_end);
        }

        let s = &r.summary;
        prop_assert_eq!(s.generated as usize, r.log.generated.len());
        prop_assert_eq!(s.delivered as usize, r.log.deliveries.len());
        if s.generated > 0 {
            prop_assert!((s.delivery_ratio - s.delivered as f64 / s.generated as f64).abs() < 1e-12);
        }
        let total: f64 = drained.iter().map(|&fj| fj as f64 * 1e-15).sum();
        prop_assert!((s.total_energy - total).abs() < 1e-9 * total.max(1.0));
        let mut per = drained.iter().map(|&fj| fj as f64 * 1e-15).collect::<Vec<_>>();
        per.sort_by(f64::total_cmp);
        let n = per.len();
        let med = if n % 2 == 1 { per[n / 2] } else { (per[n / 2 - 1] + per[n / 2]) / 2.0 };
        prop_assert!((s.median_sensor_energy - med).abs() < 1e-12);

        let mut last: BTreeMap<u32, u64> = BTreeMap::new();
        for v in &r.log.tree_versions {
            let prev = last.insert(v.region.0, v.version);
            prop_assert!(prev.is_none_or(|p| p <= v.version));
        }
    }

    /// Trees are acyclic, stay inside their region, and give every member
    /// its minimum hop count to the attachment set.
    #[test]
    fn trees_are_shortest_hop_forests(
        pts in prop::collection::vec((0.0f64..60.0, 0.0f64..60.0), 5..60),
        sink in (0.0f64..60.0, 0.0f64..60.0),
        kills in prop::collection::vec(0usize..60, 0..10),
        strategy in prop::sample::select(vec![TreeStrategy::SinkRooted, TreeStrategy::AccessNodeRooted, TreeStrategy::StaticSink]),
    ) {
        let positions: Vec<Position> = pts.iter().map(|&(x, y)| Position::new(x, y)).collect();
        let mut w = world(positions, 60.0, 2);
        let anchor = SinkAnchor { id: SinkId(0), pos: Position::new(sink.0, sink.1) };
        let region = RegionId(0);
        let mut tree = CollectionTree::build(&w, region, strategy, Some(anchor), None);
        for k in kills {
            if let Some(s) = w.sensors.get_mut(k) {
                s.alive = false;
            }
        }
        tree.maintain(&w, Some(anchor));
        prop_assert!(tree.check_structure().is_ok(), "{:?}", tree.check_structure());

        let scope = (strategy != TreeStrategy::StaticSink).then_some(region);
        let root_set: BTreeSet<SensorId> = match strategy {
            TreeStrategy::AccessNodeRooted => tree.root.into_iter().collect(),
            _ => tree.attach.clone(),
        };
        let expect = hops(&w, &root_set, scope);
        prop_assert_eq!(&tree.depth, &expect);

        for (&child, &parent) in &tree.parent {
            let (c, p) = (w.sensor(child), w.sensor(parent));
            prop_assert!(c.alive && p.alive);
            prop_assert!(c.pos.distance(&p.pos) <= c.tx_range);
            if scope.is_some() {
                prop_assert!(c.region == region && p.region == region);
            }
        }
        for &a in &tree.attach {
            prop_assert!(w.sensor(a).pos.distance(&anchor.pos) <= w.sensor(a).tx_range);
        }
        for s in &w.sensors {
            if !tree.depth.contains_key(&s.id) {
                continue;
            }
            if let Some(route) = tree.route(s.id) {
                let unique: BTreeSet<_> = route.iter().collect();
                prop_assert_eq!(unique.len(), route.len(), "route revisits a sensor");
                prop_assert_eq!(tree.next_hop(*route.last().unwrap()), NextHop::Sink);
            }
        }
    }

    /// The TOML form of a config parses back to the same config.
    #[test]
    fn config_toml_round_trip(
        seed in any::<u64>(),
        t_end in 1.0f64..5000.0,
        sensors in 1usize..1000,
        sinks in 1u32..20,
        ratio in 20.0f64..30.0,
        mobility in 0usize..MobilityModel::NAMES.len(),
        interval in 0.1f64..100.0,
        wired in any::<bool>(),
    ) {
        let mut cfg = ScenarioConfig::default();
        cfg.seed = seed;
        cfg.t_end = t_end;
        cfg.sensors.count = sensors;
        cfg.sinks.count = sinks;
        cfg.sinks.range_ratio = ratio;
        cfg.sinks.mobility = MobilityModel::NAMES[mobility].to_string();
        cfg.traffic.report_interval = interval;
        cfg.tree.proxy_wired = wired;
        let back = ScenarioConfig::from_toml(&cfg.to_toml()).unwrap();
        prop_assert_eq!(back, cfg);
    }

    /// Events come out in time order, ties in scheduling order.
    #[test]
    fn scheduler_orders_by_time_then_insertion(times in prop::collection::vec(0u32..50, 1..200)) {
        let mut s: Scheduler<usize> = Scheduler::new();
        for (i, &t) in times.iter().enumerate() {
            s.schedule(i, t as f64 * 0.5).unwrap();
        }
        let mut expect: Vec<(u32, usize)> = times.iter().enumerate().map(|(i, &t)| (t, i)).collect();
        expect.sort();
        let got: Vec<usize> = std::iter::from_fn(|| s.pop_due(f64::INFINITY).map(|e| e.action)).collect();
        prop_assert_eq!(got, expect.into_iter().map(|e| e.1).collect::<Vec<_>>());
    }

    /// A stream is a pure function of (seed, label).
    #[test]
    fn streams_replay(seed in any::<u64>(), label in "[a-z]{1,12}") {
        let mut a = RngStream::new(seed, &label);
        let mut b = RngStream::new(seed, &label);
        let mut c = RngStream::new(seed, &format!("{label}x"));
        let xs: Vec<u64> = (0..16).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..16).map(|_| b.next_u64()).collect();
        let zs: Vec<u64> = (0..16).map(|_| c.next_u64()).collect();
        prop_assert_eq!(&xs, &ys);
        prop_assert_ne!(&xs, &zs);
    }
}

#[test]
fn msssn_and_flat_share_deployment_and_traffic() {
    let cfg = small_config(9, 50, 0.5, 4, 3);
    let m = run_scenario(&cfg, 9, System::Msssn, RunOptions::default()).unwrap();
    let f = run_scenario(&cfg, 9, System::Flat, RunOptions::default()).unwrap();
    assert_eq!(m.log.meta.deployment_hash, f.log.meta.deployment_hash);
    let key = |r: &msssn::scenario::RunResult| -> Vec<(u32, u64)> {
        r.log.generated.iter().map(|g| (g.source.0, g.t.to_bits())).collect()
    };
    assert_eq!(key(&m), key(&f));
}
