//! Per-run measurements and their CSV forms.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::path::Path;

use crate::address::ModuleId;
use crate::sim::stats;
use crate::wire::TrafficClass;

pub const REQUESTS_HEADER: &str =
    "request_id,issued_at_s,completed_at_s,status,hops,payload_bytes,class";
pub const THROUGHPUT_HEADER: &str = "window_start_s,module_id,delivered_bytes";
pub const JOINS_HEADER: &str = "module_id,started_s,completed_s,status";
pub const POSITIONS_HEADER: &str = "time_s,module_id,x_m,y_m";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RequestStatus {
    Pending,
    Completed,
    TimedOut,
    Rejected,
}

impl RequestStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RequestStatus::Pending => "pending",
            RequestStatus::Completed => "completed",
            RequestStatus::TimedOut => "timed_out",
            RequestStatus::Rejected => "rejected",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RequestRow {
    pub request_id: u64,
    pub origin: ModuleId,
    pub issued_at: f64,
    pub completed_at: Option<f64>,
    pub status: RequestStatus,
    pub hops: Option<u8>,
    pub payload_bytes: usize,
    pub class: TrafficClass,
}

impl RequestRow {
    pub fn latency(&self) -> Option<f64> {
        self.completed_at.map(|c| c - self.issued_at)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JoinStatus {
    Completed,
    Failed,
    /// Still in progress when the run ended.
    Incomplete,
}

impl JoinStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            JoinStatus::Completed => "completed",
            JoinStatus::Failed => "failed",
            JoinStatus::Incomplete => "incomplete",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JoinRow {
    pub module: ModuleId,
    pub started: f64,
    pub finished: Option<f64>,
    pub status: JoinStatus,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrameCounters {
    pub sent: u64,
    pub delivered: u64,
    pub lost: u64,
    pub out_of_range: u64,
    pub queue_drops: u64,
    pub decode_errors: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsRecord {
    pub window_s: f64,
    pub duration_s: f64,
    pub requests: Vec<RequestRow>,
    /// window index -> module -> delivered payload bytes
    pub windows: BTreeMap<u64, BTreeMap<ModuleId, u64>>,
    /// Modules reported in throughput rows even when idle.
    pub throughput_modules: Vec<ModuleId>,
    pub joins: Vec<JoinRow>,
    pub positions: Vec<(f64, ModuleId, f64, f64)>,
    pub frames: FrameCounters,
    pub max_neighbors: BTreeMap<ModuleId, usize>,
    pub neighbor_rejections: BTreeMap<ModuleId, u64>,
    /// NeighborTableFull errors received, per receiving module.
    pub table_full_notices: BTreeMap<ModuleId, u64>,
    /// Largest radio hop count any request travelled.
    pub max_request_hops: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub requests: usize,
    pub completed: usize,
    pub timed_out: usize,
    pub rejected: usize,
    pub delivery_rate: f64,
    pub p90_latency_s: Option<f64>,
    pub mean_throughput_bps: f64,
    pub sem_throughput_bps: Option<f64>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

impl MetricsRecord {
    pub fn window_count(&self) -> u64 {
        (self.duration_s / self.window_s).ceil() as u64
    }

    pub fn count(&self, status: RequestStatus) -> usize {
        self.requests.iter().filter(|r| r.status == status).count()
    }

    /// Total delivered bytes per window (all modules), as bytes per second.
    pub fn window_throughputs(&self) -> Vec<f64> {
        (0..self.window_count())
            .map(|w| {
                let bytes: u64 = self.windows.get(&w).map(|m| m.values().sum()).unwrap_or(0);
                bytes as f64 / self.window_s
            })
            .collect()
    }

    pub fn delivered_bytes(&self, module: ModuleId) -> u64 {
        self.windows.values().filter_map(|m| m.get(&module)).sum()
    }

    /// Pairs the reader's x coordinate at each window midpoint with that
    /// window's total delivered throughput (bytes/s).
    pub fn position_profile(&self, reader: ModuleId) -> Vec<(f64, f64)> {
        let tput = self.window_throughputs();
        self.positions
            .iter()
            .filter(|p| p.1 == reader)
            .zip(tput)
            .map(|(p, bps)| (p.2, bps))
            .collect()
    }

    pub fn latencies(&self) -> Vec<f64> {
        self.requests
            .iter()
            .filter_map(RequestRow::latency)
            .collect()
    }

    pub fn summary(&self) -> Summary {
        let n = self.requests.len();
        let completed = self.count(RequestStatus::Completed);
        let tput = self.window_throughputs();
        Summary {
            requests: n,
            completed,
            timed_out: self.count(RequestStatus::TimedOut),
            rejected: self.count(RequestStatus::Rejected),
            delivery_rate: if n == 0 {
                0.0
            } else {
                completed as f64 / n as f64
            },
            p90_latency_s: stats::percentile(&self.latencies(), 90.0).ok(),
            mean_throughput_bps: stats::mean(&tput).unwrap_or(0.0),
            sem_throughput_bps: stats::sem(&tput).ok(),
        }
    }

    pub fn requests_csv(&self) -> String {
        let mut out = format!("{REQUESTS_HEADER}\n");
        for r in &self.requests {
            let _ = writeln!(
                out,
                "{},{:.6},{},{},{},{},{}",
                r.request_id,
                r.issued_at,
                fmt_opt(r.completed_at),
                r.status.as_str(),
                r.hops.map(|h| h.to_string()).unwrap_or_default(),
                r.payload_bytes,
                r.class.code()
            );
        }
        out
    }

    pub fn throughput_csv(&self) -> String {
        let mut out = format!("{THROUGHPUT_HEADER}\n");
        for w in 0..self.window_count() {
            for m in &self.throughput_modules {
                let bytes = self
                    .windows
                    .get(&w)
                    .and_then(|x| x.get(m))
                    .copied()
                    .unwrap_or(0);
                let _ = writeln!(out, "{:.6},{},{}", w as f64 * self.window_s, m, bytes);
            }
        }
        out
    }

    pub fn joins_csv(&self) -> String {
        let mut out = format!("{JOINS_HEADER}\n");
        for j in &self.joins {
            let completed = if j.status == JoinStatus::Completed {
                j.finished
            } else {
                None
            };
            let _ = writeln!(
                out,
                "{},{:.6},{},{}",
                j.module,
                j.started,
                fmt_opt(completed),
                j.status.as_str()
            );
        }
        out
    }

    pub fn positions_csv(&self) -> String {
        let mut out = format!("{POSITIONS_HEADER}\n");
        for (t, m, x, y) in &self.positions {
            let _ = writeln!(out, "{t:.6},{m},{x:.6},{y:.6}");
        }
        out
    }

    /// Writes `requests.csv`, `throughput.csv`, `joins.csv` and
    /// `positions.csv` into `dir`.
    pub fn write_csvs(&self, dir: &Path) -> io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("requests.csv"), self.requests_csv())?;
        std::fs::write(dir.join("throughput.csv"), self.throughput_csv())?;
        std::fs::write(dir.join("joins.csv"), self.joins_csv())?;
        std::fs::write(dir.join("positions.csv"), self.positions_csv())?;
        Ok(())
    }
}

impl Summary {
    pub fn line(&self) -> String {
        format!(
            "requests={} completed={} timed_out={} rejected={} delivery_rate={:.4} p90_latency_s={} throughput_bps={:.3} sem_bps={}",
            self.requests,
            self.completed,
            self.timed_out,
            self.rejected,
            self.delivery_rate,
            self.p90_latency_s.map(|v| format!("{v:.6}")).unwrap_or_else(|| "n/a".into()),
            self.mean_throughput_bps,
            self.sem_throughput_bps.map(|v| format!("{v:.3}")).unwrap_or_else(|| "n/a".into()),
        )
    }
}

/// Groups `(x, y)` samples into bins of `width` along x and averages y per
/// bin. Returns `(bin centre, mean)` in increasing x.
pub fn bin_mean(samples: &[(f64, f64)], width: f64) -> Vec<(f64, f64)> {
    let mut bins: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
    for (x, y) in samples {
        let b = bins.entry((x / width).floor() as i64).or_insert((0.0, 0));
        b.0 += y;
        b.1 += 1;
    }
    bins.into_iter()
        .map(|(k, (sum, n))| ((k as f64 + 0.5) * width, sum / n as f64))
        .collect()
}
