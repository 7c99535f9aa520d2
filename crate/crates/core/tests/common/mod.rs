//! Scenario builders and checks shared by the integration tests.

#![allow(dead_code)]

use std::path::PathBuf;

use edgefabric::coherence::NvmStore;
use edgefabric::sim::{Scenario, Simulation};
use edgefabric::wire::{Body, ErrorReason, Message, RouteAdvert, TrafficClass};
use edgefabric::{FabricAddress, ModuleId, SimTime};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::oracles::{self, Write};

pub const SHIPPED: [&str; 7] = [
    "fig4_single_module",
    "fig4_two_modules_16m",
    "fig6_speed_sweep",
    "track_30_modules",
    "join_churn",
    "join_pass_by",
    "routing_convergence_12node",
];

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.json"))
}

pub fn load_value(name: &str) -> Value {
    let text = std::fs::read_to_string(scenario_path(name)).expect("shipped scenario");
    serde_json::from_str(&text).expect("valid json")
}

pub fn load(name: &str) -> Scenario {
    Scenario::from_value(load_value(name)).expect("shipped scenario validates")
}

pub fn build(value: Value) -> Scenario {
    Scenario::from_value(value).expect("test scenario validates")
}

/// Lattice pitch for random meshes. Orthogonal (10.5 m) and diagonal
/// (14.8 m) neighbours are in range; two steps (21 m) are not. Loss at
/// alpha 40 stays below 1e-5 on every in-range link.
const PITCH_M: f64 = 10.5;
const LATTICE: i32 = 5;

/// A connected static mesh of 4 to 12 bootstrapped modules on lattice
/// cells, grown by random 8-neighbourhood steps.
pub fn random_mesh<R: Rng>(rng: &mut R) -> (Value, Vec<(f64, f64)>) {
    let n = rng.gen_range(4..=12);
    let mut cells = vec![(rng.gen_range(0..LATTICE), rng.gen_range(0..LATTICE))];
    while cells.len() < n {
        let &(x, y) = cells.choose(rng).unwrap();
        let next = (x + rng.gen_range(-1..=1), y + rng.gen_range(-1..=1));
        if (0..LATTICE).contains(&next.0)
            && (0..LATTICE).contains(&next.1)
            && !cells.contains(&next)
        {
            cells.push(next);
        }
    }
    let points: Vec<(f64, f64)> = cells
        .iter()
        .map(|&(x, y)| (x as f64 * PITCH_M, y as f64 * PITCH_M))
        .collect();
    let modules: Vec<Value> = points
        .iter()
        .enumerate()
        .map(|(i, p)| json!({"id": i + 1, "position_m": [p.0, p.1], "bootstrap": true}))
        .collect();
    let value = json!({
        "modules": modules,
        "radio": {"range_m": 20.0, "alpha": 40.0},
        "run": {"duration_s": 120.0, "seed": 1}
    });
    (value, points)
}

/// Hub 1 at the origin with `leaves` modules on a 5 m circle, coming
/// online one per second.
pub fn star(leaves: usize) -> Value {
    let mut modules = vec![json!({"id": 1, "position_m": [0.0, 0.0], "bootstrap": true})];
    for i in 0..leaves {
        let a = i as f64 / leaves as f64 * std::f64::consts::TAU;
        modules.push(json!({
            "id": i + 2,
            "position_m": [5.0 * a.cos(), 5.0 * a.sin()],
            "online_s": 1.0 + i as f64,
        }));
    }
    json!({
        "modules": modules,
        "radio": {"range_m": 20.0, "alpha": 40.0},
        "run": {"duration_s": leaves as f64 + 15.0, "seed": 1}
    })
}

/// Time after which routes must match the oracle: five beacon intervals
/// per hop of the mesh diameter.
pub fn convergence_time(scenario: &Scenario, diameter: u32) -> SimTime {
    scenario.beacon_interval().times(5 * diameter as u64)
}

/// Compares every module's routing table with all-pairs shortest paths
/// over the unit-disk graph of `points` (module `i + 1` sits at
/// `points[i]`), both by advertised cost and by walking next hops.
pub fn routes_match_oracle(
    sim: &Simulation,
    points: &[(f64, f64)],
    range: f64,
) -> Result<(), String> {
    let n = points.len();
    let dist = oracles::shortest_paths(n, &oracles::disk_edges(points, range));
    let id = |i: usize| ModuleId::new(i as u64 + 1).unwrap();
    for (i, row) in dist.iter().enumerate() {
        let table = sim.module(id(i)).ok_or("missing module")?.routing();
        for j in (0..n).filter(|j| *j != i) {
            let want = row[j].map(|d| d as u16);
            let got = table.cost(id(j));
            if got != want {
                return Err(format!(
                    "cost {} -> {}: table {got:?}, oracle {want:?}",
                    i + 1,
                    j + 1
                ));
            }
            let Some(want) = want else { continue };
            let (mut at, mut hops) = (id(i), 0u16);
            while at != id(j) {
                at = sim
                    .module(at)
                    .unwrap()
                    .routing()
                    .next_hop(id(j), None)
                    .map_err(|e| format!("walk {} -> {}: {e} at {at}", i + 1, j + 1))?;
                hops += 1;
                if hops as usize > n {
                    return Err(format!("walk {} -> {}: loop", i + 1, j + 1));
                }
            }
            if hops != want {
                return Err(format!(
                    "walk {} -> {}: {hops} hops, oracle {want}",
                    i + 1,
                    j + 1
                ));
            }
        }
    }
    Ok(())
}

fn mid(raw: u64) -> ModuleId {
    ModuleId::new(raw).unwrap()
}

/// Message behind each line of `golden/frames.txt`.
pub fn golden_message(name: &str) -> Message {
    let m = |src, dst, ttl, class, request_id, body| Message {
        src: mid(src),
        dst: mid(dst),
        ttl,
        class,
        request_id,
        body,
    };
    match name {
        "beacon_empty" => m(
            1,
            0,
            1,
            TrafficClass::BestEffort,
            0,
            Body::Beacon { heard: vec![] },
        ),
        "store_request" => m(
            3,
            7,
            6,
            TrafficClass::Preferential,
            0x0102_0304_0506_0708,
            Body::StoreRequest {
                addr: FabricAddress {
                    module: mid(7),
                    offset: 0x10,
                },
                timestamp: 1000,
                data: vec![0xAA, 0xBB, 0xCC],
            },
        ),
        "route_update" => m(
            2,
            0,
            1,
            TrafficClass::BestEffort,
            0,
            Body::RouteUpdate {
                entries: vec![
                    RouteAdvert {
                        dst: mid(2),
                        cost: 0,
                        seq: 4,
                    },
                    RouteAdvert {
                        dst: mid(5),
                        cost: 1,
                        seq: 2,
                    },
                ],
            },
        ),
        "error_table_full" => m(
            1,
            9,
            4,
            TrafficClass::BestEffort,
            5,
            Body::Error {
                reason: ErrorReason::NeighborTableFull,
            },
        ),
        "load_request" => m(
            0xABCD_EF12_3456,
            1,
            5,
            TrafficClass::BestEffort,
            1,
            Body::LoadRequest {
                addr: FabricAddress {
                    module: mid(1),
                    offset: 0x200,
                },
                len: 200,
            },
        ),
        other => panic!("no message for golden vector {other}"),
    }
}

/// A random valid message of any kind.
pub fn random_message<R: Rng>(rng: &mut R) -> Message {
    let any_id = |rng: &mut R| mid(rng.gen_range(1..=ModuleId::MAX.get()));
    let ids = |rng: &mut R, n: usize| {
        (0..rng.gen_range(0..n))
            .map(|_| any_id(rng))
            .collect::<Vec<_>>()
    };
    let bytes = |rng: &mut R| {
        (0..rng.gen_range(0..300))
            .map(|_| rng.gen())
            .collect::<Vec<u8>>()
    };
    let body = match rng.gen_range(0..10) {
        0 => Body::Beacon {
            heard: ids(rng, 12),
        },
        1 => Body::JoinRequest,
        2 => Body::JoinAccept {
            members: ids(rng, 12),
        },
        3 => Body::Leave,
        4 => Body::RouteUpdate {
            entries: (0..rng.gen_range(0..20))
                .map(|_| RouteAdvert {
                    dst: any_id(rng),
                    cost: rng.gen(),
                    seq: rng.gen(),
                })
                .collect(),
        },
        5 => Body::LoadRequest {
            addr: FabricAddress {
                module: any_id(rng),
                offset: rng.gen(),
            },
            len: rng.gen(),
        },
        6 => Body::LoadResponse {
            data: bytes(rng),
            timestamp: rng.gen(),
        },
        7 => Body::StoreRequest {
            addr: FabricAddress {
                module: any_id(rng),
                offset: rng.gen(),
            },
            timestamp: rng.gen(),
            data: bytes(rng),
        },
        8 => Body::StoreAck,
        _ => Body::Error {
            reason: [
                ErrorReason::DestinationUnknown,
                ErrorReason::TtlExpired,
                ErrorReason::OffsetOutOfRange,
                ErrorReason::NeighborTableFull,
            ][rng.gen_range(0..4)],
        },
    };
    let dst = if body.kind().may_broadcast() && rng.gen_bool(0.5) {
        ModuleId::UNASSIGNED
    } else {
        mid(rng.gen_range(1..=ModuleId::MAX.get()))
    };
    Message {
        src: mid(rng.gen_range(1..=ModuleId::MAX.get())),
        dst,
        ttl: rng.gen(),
        class: if rng.gen() {
            TrafficClass::Preferential
        } else {
            TrafficClass::BestEffort
        },
        request_id: rng.gen(),
        body,
    }
}

/// Store size used by the coherence checks.
pub const CAPACITY: usize = 48;

pub fn apply_all<'a>(writes: impl IntoIterator<Item = &'a Write>) -> NvmStore {
    let mut store = NvmStore::new(CAPACITY as u64);
    for w in writes {
        store
            .apply_store(
                w.offset as u64,
                &w.data,
                w.ts,
                ModuleId::new(w.writer).unwrap(),
            )
            .unwrap();
    }
    store
}

pub fn bytes_of(store: &NvmStore) -> Vec<(u8, u64, u64)> {
    (0..CAPACITY as u64)
        .map(|i| {
            let (v, ts, w) = store.byte_at(i).unwrap();
            (v, ts, w.get())
        })
        .collect()
}

fn random_write(rng: &mut ChaCha8Rng, max_ts: u64, writers: u64) -> Write {
    let offset = rng.gen_range(0..CAPACITY - 1);
    let len = rng.gen_range(1..=(CAPACITY - offset).min(20));
    Write {
        offset,
        data: (0..len).map(|_| rng.gen()).collect(),
        ts: rng.gen_range(1..=max_ts),
        writer: rng.gen_range(1..=writers),
    }
}

/// `n` writes with distinct `(ts, writer)` keys; a writer never issues two
/// stores with the same timestamp. Timestamps still tie across writers.
pub fn random_history(rng: &mut ChaCha8Rng, n: usize, max_ts: u64, writers: u64) -> Vec<Write> {
    let mut out: Vec<Write> = Vec::new();
    while out.len() < n {
        let w = random_write(rng, max_ts, writers);
        if !out.iter().any(|o| (o.ts, o.writer) == (w.ts, w.writer)) {
            out.push(w);
        }
    }
    out
}
