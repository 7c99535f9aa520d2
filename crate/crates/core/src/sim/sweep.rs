//! Independent runs across seeds and parameter values, aggregated per value.
//! Runs share nothing and execute in parallel.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde_json::Value;

use crate::sim::engine::run;
use crate::sim::metrics::MetricsRecord;
use crate::sim::scenario::{with_param, ParamError, Scenario, Transport};
use crate::sim::stats;

pub const SAMPLES_HEADER: &str = "param,value,transport,seed,mean_throughput_bps";
pub const SWEEP_HEADER: &str =
    "param,value,transport,samples,mean_throughput_bps,sem_throughput_bps,delivery_rate,p90_latency_s";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub param: String,
    pub value: f64,
    pub transport: Transport,
    pub samples: usize,
    pub mean_throughput_bps: f64,
    pub sem_throughput_bps: Option<f64>,
    pub delivery_rate: f64,
    pub p90_latency_s: Option<f64>,
    /// (seed, mean throughput) per run, in seed order.
    pub per_seed: Vec<(u64, f64)>,
}

/// Seeds used for `count` samples starting at `base`.
pub fn seeds(base: u64, count: u32) -> Vec<u64> {
    (0..count as u64).map(|i| base.wrapping_add(i)).collect()
}

/// Runs `scenario` once per seed and folds the runs into one row.
pub fn aggregate(param: &str, value: f64, scenario: &Scenario, seeds: &[u64]) -> SweepRow {
    let runs: Vec<MetricsRecord> = seeds.par_iter().map(|s| run(scenario, *s)).collect();
    fold(param, value, scenario.run.transport, seeds, &runs)
}

fn fold(
    param: &str,
    value: f64,
    transport: Transport,
    seeds: &[u64],
    runs: &[MetricsRecord],
) -> SweepRow {
    let tput: Vec<f64> = runs
        .iter()
        .map(|r| r.summary().mean_throughput_bps)
        .collect();
    let requests: usize = runs.iter().map(|r| r.requests.len()).sum();
    let completed: usize = runs.iter().map(|r| r.summary().completed).sum();
    let latencies: Vec<f64> = runs.iter().flat_map(MetricsRecord::latencies).collect();
    SweepRow {
        param: param.to_string(),
        value,
        transport,
        samples: runs.len(),
        mean_throughput_bps: stats::mean(&tput).unwrap_or(0.0),
        sem_throughput_bps: stats::sem(&tput).ok(),
        delivery_rate: if requests == 0 {
            0.0
        } else {
            completed as f64 / requests as f64
        },
        p90_latency_s: stats::percentile(&latencies, 90.0).ok(),
        per_seed: seeds.iter().copied().zip(tput).collect(),
    }
}

/// Sweeps the numeric field at `param` over `values`.
pub fn param_sweep(
    base: &Value,
    param: &str,
    values: &[f64],
    seeds: &[u64],
) -> Result<Vec<SweepRow>, ParamError> {
    let scenarios = values
        .iter()
        .map(|v| with_param(base, param, *v).map(|s| (*v, s)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(scenarios
        .iter()
        .map(|(v, s)| aggregate(param, *v, s, seeds))
        .collect())
}

/// Speed sweep declared in the scenario's `run.speed_sweep` section: every
/// (transport, speed) pair with `seeds` consecutive seeds from `base_seed`.
/// Returns no rows when the section is absent.
pub fn speed_sweep(scenario: &Scenario, base_seed: u64) -> Vec<SweepRow> {
    let Some(spec) = &scenario.run.speed_sweep else {
        return Vec::new();
    };
    let seeds = seeds(base_seed, spec.seeds);
    let mut jobs = Vec::new();
    for t in &spec.transports {
        for v in &spec.speeds_mps {
            let mut s = scenario.clone();
            s.run.transport = *t;
            s.run.speed_sweep = None;
            s.workload.speed_mps = Some(*v);
            jobs.push((*v, s));
        }
    }
    let pairs: Vec<(usize, u64)> = (0..jobs.len())
        .flat_map(|j| seeds.iter().map(move |s| (j, *s)))
        .collect();
    let runs: Vec<MetricsRecord> = pairs
        .par_iter()
        .map(|(j, seed)| run(&jobs[*j].1, *seed))
        .collect();
    jobs.iter()
        .zip(runs.chunks(seeds.len()))
        .map(|((v, s), chunk)| fold("workload.speed_mps", *v, s.run.transport, &seeds, chunk))
        .collect()
}

pub fn to_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.6},{},{:.6},{}",
            r.param,
            r.value,
            r.transport,
            r.samples,
            r.mean_throughput_bps,
            opt(r.sem_throughput_bps),
            r.delivery_rate,
            opt(r.p90_latency_s)
        );
    }
    out
}

/// One line per (value, transport, seed) run.
pub fn samples_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SAMPLES_HEADER}\n");
    for r in rows {
        for (seed, tput) in &r.per_seed {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6}",
                r.param, r.value, r.transport, seed, tput
            );
        }
    }
    out
}
