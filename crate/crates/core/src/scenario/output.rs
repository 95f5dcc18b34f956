//! Output files: metrics.csv, summary.json, trace.jsonl, waypoints.csv,
//! localization.csv.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::compare::{metric_values, stats, Comparison, PairedMetric, Stat, METRICS};
use super::sim::{RunResult, System};

pub const NOT_REACHED: &str = "not_reached";

/// Shortest round-trip decimal; stable across runs and platforms.
fn num(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => NOT_REACHED.to_string(),
    }
}

fn csv_err(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

/// One row per (replication, system).
pub fn metrics_csv(rows: &[(usize, &RunResult)]) -> io::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["replication", "seed", "system"];
    header.extend_from_slice(METRICS);
    w.write_record(&header).map_err(csv_err)?;
    for (rep, r) in rows {
        let mut rec = vec![rep.to_string(), r.seed.to_string(), r.system.name().to_string()];
        rec.extend(metric_values(r).into_iter().map(num));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| io::Error::other(e.to_string()))
}

pub fn waypoints_csv(r: &RunResult) -> io::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["time", "sink_id", "x", "y"]).map_err(csv_err)?;
    for p in &r.waypoints {
        w.write_record([num(Some(p.t)), p.sink.to_string(), num(Some(p.x)), num(Some(p.y))])
            .map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| io::Error::other(e.to_string()))
}

pub fn localization_csv(r: &RunResult) -> io::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["sensor_id", "true_x", "true_y", "est_x", "est_y", "error_m", "n_anchors"])
        .map_err(csv_err)?;
    for l in &r.localization {
        // Sensors without an estimate leave the estimate columns empty.
        let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        w.write_record([
            l.sensor_id.to_string(),
            num(Some(l.true_x)),
            num(Some(l.true_y)),
            opt(l.est_x),
            opt(l.est_y),
            opt(l.error_m),
            l.n_anchors.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| io::Error::other(e.to_string()))
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryDoc {
    pub seed: u64,
    pub replications: usize,
    pub systems: BTreeMap<String, BTreeMap<String, Stat>>,
    /// Deployment hash per replication; paired systems share one.
    pub deployment_hashes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paired: Option<BTreeMap<String, PairedMetric>>,
}

pub fn summary_for_runs(seed: u64, runs: &[&RunResult]) -> SummaryDoc {
    let mut systems: BTreeMap<String, Vec<&RunResult>> = BTreeMap::new();
    for r in runs {
        systems.entry(r.system.name().to_string()).or_default().push(r);
    }
    let mut hashes: Vec<String> = Vec::new();
    for r in runs {
        if !hashes.contains(&r.log.meta.deployment_hash) {
            hashes.push(r.log.meta.deployment_hash.clone());
        }
    }
    SummaryDoc {
        seed,
        replications: systems.values().map(Vec::len).max().unwrap_or(0),
        systems: systems.into_iter().map(|(k, v)| (k, stats(&v))).collect(),
        deployment_hashes: hashes,
        paired: None,
    }
}

pub fn summary_for_comparison(seed: u64, c: &Comparison) -> SummaryDoc {
    SummaryDoc {
        seed,
        replications: c.pairs.len(),
        systems: BTreeMap::from([
            (System::Msssn.name().to_string(), c.msssn.clone()),
            (System::Flat.name().to_string(), c.flat.clone()),
        ]),
        deployment_hashes: c.pairs.iter().map(|p| p.msssn.log.meta.deployment_hash.clone()).collect(),
        paired: Some(c.paired.clone()),
    }
}

/// Writes every output for `runs` into `dir`. With a single run the per-run
/// files use plain names; otherwise they carry a `-{system}-{rep}` suffix.
pub fn write_outputs(dir: &Path, runs: &[(usize, &RunResult)], summary: &SummaryDoc) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: String, bytes: &[u8]| -> io::Result<()> {
        let p = dir.join(name);
        fs::write(&p, bytes)?;
        written.push(p);
        Ok(())
    };
    put("metrics.csv".into(), &metrics_csv(runs)?)?;
    let mut json = serde_json::to_vec_pretty(summary).map_err(io::Error::other)?;
    json.push(b'\n');
    put("summary.json".into(), &json)?;
    let single = runs.len() == 1;
    for (rep, r) in runs {
        let name = |stem: &str, ext: &str| {
            if single {
                format!("{stem}.{ext}")
            } else {
                format!("{stem}-{}-{rep}.{ext}", r.system.name())
            }
        };
        if let Some(t) = &r.trace {
            put(name("trace", "jsonl"), t.bytes())?;
        }
        put(name("waypoints", "csv"), &waypoints_csv(r)?)?;
        if !r.localization.is_empty() {
            put(name("localization", "csv"), &localization_csv(r)?)?;
        }
    }
    Ok(written)
}
