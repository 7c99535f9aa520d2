//! Figures rebuilt purely from run CSVs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use edgefabric::sim::metrics::bin_mean;
use edgefabric::sim::stats::{self, StatsError};
use thiserror::Error;

use crate::svg::{self, Panel, Series};
use crate::Figure;

/// Reader positions are grouped into bins this wide (metres).
const POSITION_BIN_M: f64 = 1.0;

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("{}: missing column `{column}`", file.display())]
    MissingColumn { file: PathBuf, column: String },
    #[error("{}: {source}", file.display())]
    Csv { file: PathBuf, source: csv::Error },
    #[error("{}: row {row}: `{value}` in column `{column}` is not a number", file.display())]
    BadValue {
        file: PathBuf,
        row: usize,
        column: String,
        value: String,
    },
    #[error("{transport} at {value}: {source}")]
    Stats {
        transport: String,
        value: String,
        source: StatsError,
    },
    #[error("{}: nothing to plot", .0.display())]
    NoData(PathBuf),
}

pub fn name(figure: Figure) -> &'static str {
    match figure {
        Figure::Fig4 => "fig4",
        Figure::Fig6 => "fig6",
        Figure::Latency => "latency",
    }
}

struct Table {
    file: PathBuf,
    headers: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn read(file: PathBuf) -> Result<Table, PlotError> {
        let csv_err = |source| PlotError::Csv {
            file: file.clone(),
            source,
        };
        let mut reader = csv::Reader::from_path(&file).map_err(csv_err)?;
        let headers = reader
            .headers()
            .map_err(csv_err)?
            .iter()
            .map(str::to_owned)
            .collect();
        let rows = reader
            .records()
            .collect::<Result<Vec<_>, _>>()
            .map_err(csv_err)?;
        Ok(Table {
            file,
            headers,
            rows,
        })
    }

    fn col(&self, column: &str) -> Result<usize, PlotError> {
        self.headers
            .iter()
            .position(|h| h == column)
            .ok_or_else(|| PlotError::MissingColumn {
                file: self.file.clone(),
                column: column.to_owned(),
            })
    }

    fn text(&self, column: &str) -> Result<Vec<String>, PlotError> {
        let c = self.col(column)?;
        Ok(self
            .rows
            .iter()
            .map(|r| r.get(c).unwrap_or("").to_owned())
            .collect())
    }

    /// Numeric column; empty cells become `None`.
    fn numbers(&self, column: &str) -> Result<Vec<Option<f64>>, PlotError> {
        let c = self.col(column)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let v = r.get(c).unwrap_or("").trim();
                if v.is_empty() {
                    return Ok(None);
                }
                v.parse().map(Some).map_err(|_| PlotError::BadValue {
                    file: self.file.clone(),
                    row: i + 2,
                    column: column.to_owned(),
                    value: v.to_owned(),
                })
            })
            .collect()
    }
}

pub fn render(dirs: &[PathBuf], figure: Figure) -> Result<String, PlotError> {
    let panels = match figure {
        Figure::Fig4 => dirs
            .iter()
            .map(|d| fig4_panel(d))
            .collect::<Result<Vec<_>, _>>()?,
        Figure::Fig6 => vec![fig6_panel(&dirs[0])?],
        Figure::Latency => vec![latency_panel(&dirs[0])?],
    };
    Ok(svg::render(&panels))
}

fn panel_title(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

/// Throughput against the reader's position, one point per position bin.
fn fig4_panel(dir: &Path) -> Result<Panel, PlotError> {
    let tput = Table::read(dir.join("throughput.csv"))?;
    let starts = tput.numbers("window_start_s")?;
    let bytes = tput.numbers("delivered_bytes")?;
    tput.col("module_id")?;
    let mut windows: Vec<(f64, f64)> = Vec::new();
    for (s, b) in starts.into_iter().zip(bytes) {
        let (s, b) = (s.unwrap_or(0.0), b.unwrap_or(0.0));
        match windows.last_mut() {
            Some(w) if w.0 == s => w.1 += b,
            _ => windows.push((s, b)),
        }
    }
    let width = match windows.as_slice() {
        [a, b, ..] => b.0 - a.0,
        _ => 1.0,
    };

    let pos = Table::read(dir.join("positions.csv"))?;
    let ids = pos.text("module_id")?;
    let xs = pos.numbers("x_m")?;
    pos.col("time_s")?;
    let reader = ids
        .first()
        .cloned()
        .ok_or_else(|| PlotError::NoData(pos.file.clone()))?;
    let reader_x = ids
        .iter()
        .zip(xs)
        .filter(|(id, _)| **id == reader)
        .map(|(_, x)| x.unwrap_or(0.0));

    let samples: Vec<(f64, f64)> = reader_x.zip(windows.iter().map(|w| w.1 / width)).collect();
    Ok(Panel {
        title: panel_title(dir),
        x_label: "reader position x (m)".into(),
        y_label: "throughput (bytes/s)".into(),
        series: vec![Series {
            label: format!("reader {reader}"),
            points: bin_mean(&samples, POSITION_BIN_M),
            errors: None,
        }],
        vlines: Vec::new(),
    })
}

/// Mean throughput against speed with SEM error bars, one series per
/// transport.
fn fig6_panel(dir: &Path) -> Result<Panel, PlotError> {
    let t = Table::read(dir.join("sweep_samples.csv"))?;
    let params = t.text("param")?;
    let values = t.numbers("value")?;
    let transports = t.text("transport")?;
    let tput = t.numbers("mean_throughput_bps")?;
    t.col("seed")?;

    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<(usize, u64), (f64, Vec<f64>)> = BTreeMap::new();
    for ((v, tr), y) in values.iter().zip(&transports).zip(&tput) {
        let ti = order.iter().position(|o| o == tr).unwrap_or_else(|| {
            order.push(tr.clone());
            order.len() - 1
        });
        let v = v.unwrap_or(0.0);
        groups
            .entry((ti, v.to_bits()))
            .or_insert((v, Vec::new()))
            .1
            .push(y.unwrap_or(0.0));
    }
    if groups.is_empty() {
        return Err(PlotError::NoData(t.file.clone()));
    }
    let mut series: Vec<Series> = order
        .iter()
        .map(|o| Series {
            label: o.clone(),
            errors: Some(Vec::new()),
            ..Series::default()
        })
        .collect();
    for ((ti, _), (v, ys)) in groups {
        let stats_err = |source| PlotError::Stats {
            transport: order[ti].clone(),
            value: v.to_string(),
            source,
        };
        let mean = stats::mean(&ys).map_err(stats_err)?;
        let sem = stats::sem(&ys).map_err(stats_err)?;
        series[ti].points.push((v, mean));
        series[ti].errors.as_mut().expect("set above").push(sem);
    }
    for s in &mut series {
        let mut idx: Vec<usize> = (0..s.points.len()).collect();
        idx.sort_by(|a, b| s.points[*a].0.total_cmp(&s.points[*b].0));
        let errors = s.errors.take().expect("set above");
        s.errors = Some(idx.iter().map(|i| errors[*i]).collect());
        s.points = idx.iter().map(|i| s.points[*i]).collect();
    }
    let param = params.first().cloned().unwrap_or_default();
    Ok(Panel {
        title: "throughput vs speed".into(),
        x_label: if param == "workload.speed_mps" {
            "speed (m/s)".into()
        } else {
            param
        },
        y_label: "mean throughput (bytes/s)".into(),
        series,
        vlines: Vec::new(),
    })
}

/// Empirical CDF of completed-request latency.
fn latency_panel(dir: &Path) -> Result<Panel, PlotError> {
    let t = Table::read(dir.join("requests.csv"))?;
    let issued = t.numbers("issued_at_s")?;
    let done = t.numbers("completed_at_s")?;
    t.col("status")?;
    let mut ms: Vec<f64> = issued
        .iter()
        .zip(&done)
        .filter_map(|(i, d)| Some((d.as_ref()? - i.as_ref()?) * 1e3))
        .collect();
    if ms.is_empty() {
        return Err(PlotError::NoData(t.file.clone()));
    }
    ms.sort_by(f64::total_cmp);
    let p90 = stats::percentile(&ms, 90.0).expect("non-empty");
    let n = ms.len() as f64;
    let points = ms
        .iter()
        .enumerate()
        .map(|(i, v)| (*v, (i + 1) as f64 / n))
        .collect();
    Ok(Panel {
        title: format!("latency CDF (n={})", ms.len()),
        x_label: "latency (ms)".into(),
        y_label: "fraction of requests".into(),
        series: vec![Series {
            label: "completed".into(),
            points,
            errors: None,
        }],
        vlines: vec![(p90, format!("p90 {p90:.1} ms")), (200.0, "200 ms".into())],
    })
}
