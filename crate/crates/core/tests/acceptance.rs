//! End-to-end acceptance checks. Runs as a plain binary and prints one
//! PASS/FAIL line per criterion.

mod common;
mod oracles;

use std::time::{Duration, Instant};

use edgefabric::memory_module::NEIGHBOR_CAP;
use edgefabric::sim::metrics::JoinStatus;
use edgefabric::sim::stats::percentile;
use edgefabric::sim::sweep::speed_sweep;
use edgefabric::sim::{run, MetricsRecord, RequestStatus, Simulation, Transport};
use edgefabric::wire::{decode_frame, encode_frame};
use edgefabric::ModuleId;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

/// Name, check and optional wall-clock budget in seconds.
type Criterion = (&'static str, fn() -> Outcome, Option<u64>);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn id(raw: u64) -> ModuleId {
    ModuleId::new(raw).unwrap()
}

/// `(x, bytes/s)` per window once the reader has started moving.
fn moving_profile(record: &MetricsRecord, reader: ModuleId, start_s: f64) -> Vec<(f64, f64)> {
    record
        .positions
        .iter()
        .filter(|p| p.1 == reader)
        .zip(record.window_throughputs())
        .filter(|(p, _)| p.0 > start_s)
        .map(|(p, bps)| (p.2, bps))
        .collect()
}

fn latency_budget() -> Outcome {
    let scenario = common::load("track_30_modules");
    let record = run(&scenario, scenario.run.seed);
    let latencies: Vec<f64> = record
        .requests
        .iter()
        .filter(|r| {
            r.status == RequestStatus::Completed
                && r.payload_bytes <= 200
                && r.hops.is_some_and(|h| h <= 5)
        })
        .filter_map(|r| r.latency())
        .collect();
    match percentile(&latencies, 90.0) {
        Ok(p90) => outcome(
            p90 < 0.2,
            format!("p90 {:.1} ms over {} requests", p90 * 1e3, latencies.len()),
        ),
        Err(e) => outcome(false, e.to_string()),
    }
}

fn single_module_profile() -> Outcome {
    let scenario = common::load("fig4_single_module");
    let record = run(&scenario, scenario.run.seed);
    let trace = scenario
        .modules
        .iter()
        .find_map(|m| m.trace.as_ref())
        .expect("reader trace");
    let bins =
        edgefabric::sim::metrics::bin_mean(&moving_profile(&record, id(100), trace.start_s), 2.0);
    let range = scenario.radio.range_m;
    let rising: Vec<String> = bins
        .windows(2)
        .filter(|w| w[1].1 > w[0].1 * 1.05)
        .map(|w| format!("{:.0} m", w[1].0))
        .collect();
    let beyond: Vec<f64> = bins
        .iter()
        .filter(|b| b.0 - 1.0 >= range)
        .map(|b| b.1)
        .collect();
    let silent = !beyond.is_empty() && beyond.iter().all(|v| *v == 0.0);
    let shape: Vec<String> = bins.iter().map(|b| format!("{:.0}", b.1)).collect();
    outcome(
        rising.is_empty() && silent,
        format!(
            "bins [{}] B/s; rises at {rising:?}; {} bins beyond range, all zero: {silent}",
            shape.join(" "),
            beyond.len()
        ),
    )
}

fn two_module_valley() -> Outcome {
    let scenario = common::load("fig4_two_modules_16m");
    let record = run(&scenario, scenario.run.seed);
    let trace = scenario
        .modules
        .iter()
        .find_map(|m| m.trace.as_ref())
        .expect("reader trace");
    let bins =
        edgefabric::sim::metrics::bin_mean(&moving_profile(&record, id(100), trace.start_s), 1.0);
    if bins.len() < 3 {
        return outcome(false, "too few position bins");
    }
    let interior = &bins[1..bins.len() - 1];
    let (x, v) = interior
        .iter()
        .copied()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    let local = v < bins[0].1 && v < bins[bins.len() - 1].1;
    let placed = (6.0..=10.0).contains(&x);
    outcome(
        local && placed && scenario.radio.range_m < 16.0,
        format!(
            "minimum {v:.0} B/s at x={x:.1} m (edges {:.0}, {:.0})",
            bins[0].1,
            bins[bins.len() - 1].1
        ),
    )
}

fn speed_and_variance() -> Outcome {
    let scenario = common::load("fig6_speed_sweep");
    let spec = scenario.run.speed_sweep.as_ref().expect("sweep spec");
    let rows = speed_sweep(&scenario, scenario.run.seed);
    let of = |t: Transport| {
        let mut r: Vec<_> = rows.iter().filter(|r| r.transport == t).collect();
        r.sort_by(|a, b| a.value.total_cmp(&b.value));
        r
    };
    let (fabric, tcp) = (of(Transport::Fabric), of(Transport::Tcp));
    let enough = spec.seeds >= 5 && rows.iter().all(|r| r.samples >= 5);
    let falling = fabric
        .windows(2)
        .all(|w| w[1].mean_throughput_bps <= w[0].mean_throughput_bps);
    let mut noisier = true;
    let mut parts = Vec::new();
    for (f, t) in fabric.iter().zip(&tcp) {
        let (fs, ts) = (
            f.sem_throughput_bps.unwrap_or(f64::NAN),
            t.sem_throughput_bps.unwrap_or(f64::NAN),
        );
        // NaN (missing SEM) counts as a failure
        if f.value >= 1.0 && ts.partial_cmp(&fs) != Some(std::cmp::Ordering::Greater) {
            noisier = false;
        }
        parts.push(format!(
            "{} m/s fabric {:.0}±{fs:.0} tcp {:.0}±{ts:.0}",
            f.value, f.mean_throughput_bps, t.mean_throughput_bps
        ));
    }
    outcome(
        enough && falling && noisier && fabric.len() == tcp.len(),
        format!(
            "{}; fabric non-increasing: {falling}; tcp sem larger: {noisier}",
            parts.join(", ")
        ),
    )
}

fn join_threshold() -> Outcome {
    let base = common::load_value("join_pass_by");
    let scenario = common::build(base.clone());
    let fixed = scenario.protocol.beacon_interval_s == 0.5
        && scenario.protocol.contact_k == 2
        && scenario.radio.range_m == 20.0;
    let speeds = [2.0, 4.0, 6.0, 8.0, 10.0];
    let rates: Vec<f64> = speeds
        .iter()
        .map(|kmh| {
            let mut v = base.clone();
            v["workload"] = json!({"speed_mps": kmh / 3.6});
            let s = common::build(v);
            let ok = (0..100u64)
                .into_par_iter()
                .filter(|seed| {
                    run(&s, *seed)
                        .joins
                        .iter()
                        .any(|j| j.status == JoinStatus::Completed)
                })
                .count();
            ok as f64 / 100.0
        })
        .collect();
    let slow = speeds
        .iter()
        .zip(&rates)
        .filter(|(s, _)| **s <= 4.0)
        .all(|(_, r)| *r >= 0.9);
    let fast = speeds
        .iter()
        .zip(&rates)
        .filter(|(s, _)| **s >= 8.0)
        .all(|(_, r)| *r <= 0.5);
    // interpolated speed where the success rate falls through one half
    let crossover = speeds.windows(2).zip(rates.windows(2)).find_map(|(s, r)| {
        (r[0] >= 0.5 && r[1] < 0.5).then(|| s[0] + (r[0] - 0.5) / (r[0] - r[1]) * (s[1] - s[0]))
    });
    let within = crossover.is_some_and(|c| (4.0..=8.0).contains(&c));
    let table: Vec<String> = speeds
        .iter()
        .zip(&rates)
        .map(|(s, r)| format!("{s} km/h {r:.2}"))
        .collect();
    outcome(
        fixed && slow && fast && within,
        format!(
            "{}; crossover {}",
            table.join(", "),
            crossover.map_or("none".into(), |c| format!("{c:.1} km/h"))
        ),
    )
}

fn routing_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let meshes: Vec<_> = (0..100).map(|_| common::random_mesh(&mut rng)).collect();
    let failures: Vec<String> = meshes
        .into_par_iter()
        .enumerate()
        .filter_map(|(k, (value, points))| {
            let scenario = common::build(value);
            let dist = oracles::shortest_paths(
                points.len(),
                &oracles::disk_edges(&points, scenario.radio.range_m),
            );
            let d = oracles::diameter(&dist)?;
            let mut sim = Simulation::new(&scenario, k as u64);
            sim.run_until(common::convergence_time(&scenario, d));
            common::routes_match_oracle(&sim, &points, scenario.radio.range_m)
                .err()
                .map(|e| format!("mesh {k}: {e}"))
        })
        .collect();
    match failures.first() {
        None => outcome(
            true,
            "all 100 meshes match after 5 beacon intervals per hop of diameter",
        ),
        Some(first) => outcome(
            false,
            format!("{} of 100 meshes differ, first {first}", failures.len()),
        ),
    }
}

fn coherence_order() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut orders = vec![vec![]];
    for n in 0..4 {
        orders = orders
            .into_iter()
            .flat_map(|p: Vec<usize>| {
                (0..=p.len()).map(move |at| {
                    let mut q = p.clone();
                    q.insert(at, n);
                    q
                })
            })
            .collect();
    }
    let mut bad = 0;
    for _ in 0..200 {
        let writes = common::random_history(&mut rng, 4, 3, 3);
        let expected = oracles::lww_reference(common::CAPACITY, &writes);
        for order in &orders {
            if common::bytes_of(&common::apply_all(order.iter().map(|i| &writes[*i]))) != expected {
                bad += 1;
            }
        }
    }
    for _ in 0..100 {
        let mut writes = common::random_history(&mut rng, 50, 40, 5);
        let expected = oracles::lww_reference(common::CAPACITY, &writes);
        for _ in 0..10 {
            writes.shuffle(&mut rng);
            if common::bytes_of(&common::apply_all(&writes)) != expected {
                bad += 1;
            }
        }
    }
    outcome(
        bad == 0,
        format!(
            "{} orders of 4 writes x 200, 1000 shuffles of 50 writes; {bad} mismatches",
            orders.len()
        ),
    )
}

fn codec_soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let round_trip_failures = (0..10_000)
        .filter(|_| {
            let m = common::random_message(&mut rng);
            encode_frame(&m)
                .ok()
                .and_then(|f| decode_frame(f.as_bytes()).ok())
                .as_ref()
                != Some(&m)
        })
        .count();

    let golden: Vec<(String, Vec<u8>)> = include_str!("golden/frames.txt")
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| {
            let (name, hex) = l.split_once('|').expect("name | hex");
            (name.trim().to_string(), oracles::hex(hex))
        })
        .collect();
    let golden_failures = golden
        .iter()
        .filter(|(name, bytes)| {
            let m = common::golden_message(name);
            encode_frame(&m).map(|f| f.into_bytes()).as_ref() != Ok(bytes)
                || decode_frame(bytes).as_ref() != Ok(&m)
        })
        .count();

    let crashes = (0..100_000)
        .filter(|i| {
            let buf: Vec<u8> = if i % 2 == 0 {
                (0..rng.gen_range(0..96)).map(|_| rng.gen()).collect()
            } else {
                let mut f = golden[i % golden.len()].1.clone();
                let at = rng.gen_range(0..f.len());
                f[at] = rng.gen();
                f.truncate(rng.gen_range(0..=f.len()));
                f
            };
            std::panic::catch_unwind(|| {
                let _ = decode_frame(&buf);
            })
            .is_err()
        })
        .count();
    outcome(
        round_trip_failures == 0 && golden_failures == 0 && crashes == 0 && !golden.is_empty(),
        format!(
            "round trip {round_trip_failures}/10000 failed, fuzz {crashes}/100000 panicked, golden {golden_failures}/{} differ",
            golden.len()
        ),
    )
}

fn csvs(record: &MetricsRecord) -> String {
    [
        record.requests_csv(),
        record.throughput_csv(),
        record.joins_csv(),
        record.positions_csv(),
    ]
    .concat()
}

fn determinism() -> Outcome {
    let results: Vec<(&str, bool, bool)> = common::SHIPPED
        .par_iter()
        .map(|name| {
            let s = common::load(name);
            let a = csvs(&run(&s, s.run.seed));
            let b = csvs(&run(&s, s.run.seed));
            let c = csvs(&run(&s, s.run.seed + 1));
            (*name, a == b, a != c)
        })
        .collect();
    let unstable: Vec<&str> = results.iter().filter(|r| !r.1).map(|r| r.0).collect();
    let insensitive: Vec<&str> = results.iter().filter(|r| !r.2).map(|r| r.0).collect();
    outcome(
        unstable.is_empty() && insensitive.is_empty(),
        format!(
            "{} scenarios; not reproducible {unstable:?}; seed-insensitive {insensitive:?}",
            results.len()
        ),
    )
}

fn neighbor_cap() -> Outcome {
    let scenario = common::build(common::star(14));
    let record = run(&scenario, scenario.run.seed);
    let hub = record.max_neighbors.get(&id(1)).copied().unwrap_or(0);
    // leaves 2..=11 fill the table, 12 is the eleventh fresh peer
    let notices = record.table_full_notices.get(&id(12)).copied().unwrap_or(0);
    outcome(
        scenario.modules.len() == 15 && hub <= NEIGHBOR_CAP && notices > 0,
        format!("hub peak {hub} neighbors; eleventh peer got {notices} table-full errors"),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("latency budget", latency_budget, Some(30)),
        ("single-module profile", single_module_profile, None),
        ("two-module valley", two_module_valley, None),
        ("speed and variance", speed_and_variance, Some(300)),
        ("join speed threshold", join_threshold, None),
        ("routing oracle", routing_oracle, Some(60)),
        ("coherence order independence", coherence_order, None),
        ("codec soundness", codec_soundness, None),
        ("determinism", determinism, None),
        ("neighbor cap", neighbor_cap, None),
    ];
    // fuzzing reports panics itself
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check, budget)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let mut o = check();
        let took = started.elapsed();
        if let Some(limit) = budget {
            if took > Duration::from_secs(*limit) {
                o.pass = false;
                o.detail.push_str(&format!("; over the {limit} s budget"));
            }
        }
        failed += usize::from(!o.pass);
        println!(
            "criterion {:>2} {} {name}: {} [{:.1} s]",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            took.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
