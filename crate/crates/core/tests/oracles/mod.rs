//! Brute-force references used only by tests. Nothing here calls into the
//! crate under test.

#![allow(dead_code)]

/// Hop-count matrix; `None` marks a disconnected pair.
pub type Distances = Vec<Vec<Option<u32>>>;

/// Undirected unit-weight edges between points closer than `range`.
pub fn disk_edges(points: &[(f64, f64)], range: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let dx = points[i].0 - points[j].0;
            let dy = points[i].1 - points[j].1;
            if (dx * dx + dy * dy).sqrt() < range {
                edges.push((i, j));
            }
        }
    }
    edges
}

/// Floyd–Warshall over an unweighted undirected graph.
pub fn shortest_paths(n: usize, edges: &[(usize, usize)]) -> Distances {
    let mut d = vec![vec![None; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = Some(0);
    }
    for &(a, b) in edges {
        d[a][b] = Some(1);
        d[b][a] = Some(1);
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if let (Some(ik), Some(kj)) = (d[i][k], d[k][j]) {
                    if d[i][j].is_none_or(|ij| ik + kj < ij) {
                        d[i][j] = Some(ik + kj);
                    }
                }
            }
        }
    }
    d
}

pub fn diameter(d: &Distances) -> Option<u32> {
    d.iter().flatten().try_fold(0, |m, v| v.map(|v| m.max(v)))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Write {
    pub offset: usize,
    pub data: Vec<u8>,
    pub ts: u64,
    pub writer: u64,
}

/// Final `(value, ts, writer)` of every byte. Each byte independently takes
/// the write with the largest `(ts, writer)` covering it; untouched bytes
/// stay `(0, 0, 0)`.
pub fn lww_reference(capacity: usize, writes: &[Write]) -> Vec<(u8, u64, u64)> {
    (0..capacity)
        .map(|i| {
            let mut covering: Vec<&Write> = writes
                .iter()
                .filter(|w| w.offset <= i && i < w.offset + w.data.len())
                .collect();
            covering.sort_by_key(|w| (w.ts, w.writer));
            match covering.last() {
                Some(w) => (w.data[i - w.offset], w.ts, w.writer),
                None => (0, 0, 0),
            }
        })
        .collect()
}

/// Link throughput in bytes/s for a polynomial-decay radio.
pub fn throughput(t_max_bps: f64, range: f64, alpha: f64, d: f64) -> f64 {
    if d >= range {
        0.0
    } else {
        t_max_bps / 8.0 * (1.0 - (d / range).powf(alpha))
    }
}

pub fn loss(loss0: f64, range: f64, alpha: f64, d: f64) -> f64 {
    if d >= range {
        1.0
    } else {
        (loss0 + (1.0 - loss0) * (d / range).powf(alpha)).min(1.0)
    }
}

/// Nearest-rank percentile over an unsorted sample.
pub fn nearest_rank(samples: &[f64], p: f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((p / 100.0) * s.len() as f64).ceil().max(1.0) as usize;
    s[rank - 1]
}

/// Parses whitespace-separated hex pairs.
pub fn hex(s: &str) -> Vec<u8> {
    s.split_whitespace()
        .map(|b| u8::from_str_radix(b, 16).expect("hex byte"))
        .collect()
}
