//! Replications, paired MSSSN-vs-flat comparisons, and their statistics.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::sim::{run_scenario, RunError, RunOptions, RunResult, System};

/// Scalar metrics reported per replication, in column order. Lifetimes are
/// `None` when not reached.
pub const METRICS: &[&str] = &[
    "generated",
    "delivered",
    "delivery_ratio",
    "throughput",
    "mean_delay",
    "p95_delay",
    "mean_hops",
    "total_energy",
    "mean_sensor_energy",
    "median_sensor_energy",
    "max_sensor_energy",
    "route_transitions",
    "queries",
    "query_success_rate",
    "mean_query_latency",
    "takeovers",
    "alerts",
    "deaths",
    "lifetime_first_death",
    "lifetime_coverage",
    "lifetime_fraction",
    "lifetime_partition",
];

pub fn metric_values(r: &RunResult) -> Vec<Option<f64>> {
    let s = &r.summary;
    let l = &r.lifetimes;
    vec![
        Some(s.generated as f64),
        Some(s.delivered as f64),
        Some(s.delivery_ratio),
        Some(s.throughput),
        Some(s.mean_delay),
        Some(s.p95_delay),
        Some(s.mean_hops),
        Some(s.total_energy),
        Some(s.mean_sensor_energy),
        Some(s.median_sensor_energy),
        Some(s.max_sensor_energy),
        Some(s.route_transitions.values().sum::<u64>() as f64),
        Some(s.queries as f64),
        Some(s.query_success_rate),
        Some(s.mean_query_latency),
        Some(s.takeovers as f64),
        Some(s.alerts as f64),
        Some(s.deaths as f64),
        l.first_death.into(),
        l.coverage.into(),
        l.fraction.into(),
        l.partition.into(),
    ]
}

/// Mean, sample standard deviation, and range over the reached values;
/// `n` counts them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub n: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

impl Stat {
    pub fn of(values: impl IntoIterator<Item = Option<f64>>) -> Self {
        let xs: Vec<f64> = values.into_iter().flatten().collect();
        let n = xs.len();
        if n == 0 {
            return Self {
                n,
                mean: None,
                std: None,
                min: None,
                max: None,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self {
            n,
            mean: Some(mean),
            std: Some(std),
            min: xs.iter().copied().reduce(f64::min),
            max: xs.iter().copied().reduce(f64::max),
        }
    }
}

/// Two-sided exact binomial sign test: probability under p = 1/2 of a
/// split at least as lopsided as `wins` vs `losses`. Ties are excluded by
/// the caller.
pub fn sign_test(wins: u64, losses: u64) -> f64 {
    let n = wins + losses;
    if n == 0 {
        return 1.0;
    }
    let k = wins.min(losses);
    // P(X <= k) for X ~ Bin(n, 1/2), accumulated in log space.
    let ln_half_n = n as f64 * 0.5f64.ln();
    let mut ln_c = 0.0;
    let mut tail = 0.0;
    for i in 0..=k {
        if i > 0 {
            ln_c += ((n - i + 1) as f64).ln() - (i as f64).ln();
        }
        tail += (ln_c + ln_half_n).exp();
    }
    (2.0 * tail).min(1.0)
}

/// Per-metric paired outcome. `lower` counts pairs where MSSSN is strictly
/// lower, `higher` strictly higher; pairs where either side is not reached
/// or both are equal are ties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedMetric {
    pub deltas: Vec<Option<f64>>,
    pub mean_delta: Option<f64>,
    pub lower: u64,
    pub higher: u64,
    pub ties: u64,
    pub p_value: f64,
}

#[derive(Debug, Clone)]
pub struct Pair {
    pub replication: usize,
    pub seed: u64,
    pub msssn: RunResult,
    pub flat: RunResult,
}

impl Pair {
    /// Both systems saw the same sensors and initial energies.
    pub fn same_deployment(&self) -> bool {
        self.msssn.log.meta.deployment_hash == self.flat.log.meta.deployment_hash
    }
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub pairs: Vec<Pair>,
    pub msssn: BTreeMap<String, Stat>,
    pub flat: BTreeMap<String, Stat>,
    pub paired: BTreeMap<String, PairedMetric>,
}

pub fn seed_for(base: u64, replication: usize) -> u64 {
    base.wrapping_add(replication as u64)
}

/// `reps` replications of one system on seeds `seed, seed+1, ...`, run in
/// parallel and returned in replication order.
pub fn batch(cfg: &ScenarioConfig, seed: u64, reps: usize, system: System, opts: RunOptions) -> Result<Vec<RunResult>, RunError> {
    (0..reps)
        .into_par_iter()
        .map(|i| run_scenario(cfg, seed_for(seed, i), system, opts))
        .collect()
}

pub fn stats(runs: &[&RunResult]) -> BTreeMap<String, Stat> {
    let rows: Vec<Vec<Option<f64>>> = runs.iter().map(|r| metric_values(r)).collect();
    METRICS
        .iter()
        .enumerate()
        .map(|(j, name)| (name.to_string(), Stat::of(rows.iter().map(|row| row[j]))))
        .collect()
}

fn paired_metric(m: &[Option<f64>], f: &[Option<f64>]) -> PairedMetric {
    let deltas: Vec<Option<f64>> = m.iter().zip(f).map(|(a, b)| Some((*a)? - (*b)?)).collect();
    let lower = deltas.iter().filter(|d| d.is_some_and(|d| d < 0.0)).count() as u64;
    let higher = deltas.iter().filter(|d| d.is_some_and(|d| d > 0.0)).count() as u64;
    PairedMetric {
        mean_delta: Stat::of(deltas.iter().copied()).mean,
        ties: deltas.len() as u64 - lower - higher,
        p_value: sign_test(lower, higher),
        lower,
        higher,
        deltas,
    }
}

/// Run both systems on each seed and summarize per-metric deltas
/// (MSSSN minus flat).
pub fn compare(cfg: &ScenarioConfig, seed: u64, reps: usize, opts: RunOptions) -> Result<Comparison, RunError> {
    let pairs: Vec<Pair> = (0..reps)
        .into_par_iter()
        .map(|i| {
            let s = seed_for(seed, i);
            Ok(Pair {
                replication: i,
                seed: s,
                msssn: run_scenario(cfg, s, System::Msssn, opts)?,
                flat: run_scenario(cfg, s, System::Flat, opts)?,
            })
        })
        .collect::<Result<_, RunError>>()?;
    Ok(summarize_pairs(pairs))
}

pub fn summarize_pairs(pairs: Vec<Pair>) -> Comparison {
    let m_rows: Vec<Vec<Option<f64>>> = pairs.iter().map(|p| metric_values(&p.msssn)).collect();
    let f_rows: Vec<Vec<Option<f64>>> = pairs.iter().map(|p| metric_values(&p.flat)).collect();
    let paired = METRICS
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let m: Vec<Option<f64>> = m_rows.iter().map(|r| r[j]).collect();
            let f: Vec<Option<f64>> = f_rows.iter().map(|r| r[j]).collect();
            (name.to_string(), paired_metric(&m, &f))
        })
        .collect();
    Comparison {
        msssn: stats(&pairs.iter().map(|p| &p.msssn).collect::<Vec<_>>()),
        flat: stats(&pairs.iter().map(|p| &p.flat).collect::<Vec<_>>()),
        paired,
        pairs,
    }
}

/// Plain-text `mean ± std` table of both systems.
pub fn table(c: &Comparison) -> String {
    let fmt = |s: &Stat| match (s.mean, s.std) {
        (Some(m), Some(d)) => format!("{m:.6} ± {d:.6}"),
        _ => "not_reached".to_string(),
    };
    let mut out = format!("{:<22} {:>28} {:>28} {:>9}\n", "metric", "msssn", "flat", "p_sign");
    for name in METRICS {
        out.push_str(&format!(
            "{:<22} {:>28} {:>28} {:>9.4}\n",
            name,
            fmt(&c.msssn[*name]),
            fmt(&c.flat[*name]),
            c.paired[*name].p_value
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct sum of binomial terms, no log-space tricks.
    fn sign_oracle(w: u64, l: u64) -> f64 {
        let n = w + l;
        let k = w.min(l);
        let mut c = 1.0f64;
        let mut tail = 0.0;
        for i in 0..=k {
            if i > 0 {
                c = c * (n - i + 1) as f64 / i as f64;
            }
            tail += c;
        }
        (2.0 * tail / 2f64.powi(n as i32)).min(1.0)
    }

    #[test]
    fn sign_test_values() {
        // 10-0: 2 / 1024.
        assert!((sign_test(10, 0) - 2.0 / 1024.0).abs() < 1e-15);
        // 8-2: 2·(1 + 10 + 45)/1024 = 112/1024.
        assert!((sign_test(8, 2) - 112.0 / 1024.0).abs() < 1e-15);
        assert_eq!(sign_test(5, 5), 1.0);
        assert_eq!(sign_test(0, 0), 1.0);
        for (w, l) in [(3, 7), (12, 1), (20, 20), (0, 30)] {
            assert!((sign_test(w, l) - sign_oracle(w, l)).abs() < 1e-12);
        }
    }

    #[test]
    fn stat_skips_not_reached() {
        let s = Stat::of([Some(1.0), None, Some(3.0)]);
        assert_eq!(s.n, 2);
        assert_eq!(s.mean, Some(2.0));
        assert!((s.std.unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!((s.min, s.max), (Some(1.0), Some(3.0)));
        assert_eq!(Stat::of([None]).mean, None);
    }

    #[test]
    fn paired_counts() {
        let p = paired_metric(&[Some(1.0), Some(2.0), None, Some(5.0)], &[Some(2.0), Some(2.0), Some(1.0), Some(4.0)]);
        assert_eq!((p.lower, p.higher, p.ties), (1, 1, 2));
        assert_eq!(p.deltas, vec![Some(-1.0), Some(0.0), None, Some(1.0)]);
    }

    #[test]
    fn seeds_are_consecutive() {
        assert_eq!(seed_for(7, 0), 7);
        assert_eq!(seed_for(7, 3), 10);
        assert_eq!(seed_for(u64::MAX, 1), 0);
    }
}
