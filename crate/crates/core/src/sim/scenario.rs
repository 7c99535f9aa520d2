//! Scenario files: a strict JSON schema with five sections (`modules`,
//! `radio`, `protocol`, `workload`, `run`). Unknown keys are rejected.
//! Units: metres, seconds, bytes, bits per second.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::address::ModuleId;
use crate::memory_module::ProtocolConfig;
use crate::radio::{MobilityTrace, Position, RadioModel};
use crate::time::SimTime;
use crate::wire::HEADER_LEN;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub modules: Vec<ModuleSpec>,
    #[serde(default)]
    pub radio: RadioModel,
    #[serde(default)]
    pub protocol: ProtocolSpec,
    #[serde(default)]
    pub workload: WorkloadSpec,
    pub run: RunSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModuleSpec {
    pub id: u64,
    #[serde(default = "default_capacity")]
    pub capacity_bytes: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position_m: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<TraceSpec>,
    /// Default next hop for destinations missing from routing tables.
    #[serde(default)]
    pub gateway: bool,
    /// Starts as an overlay member without a join handshake.
    #[serde(default)]
    pub bootstrap: bool,
    #[serde(default)]
    pub online_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offline_s: Option<f64>,
}

fn default_capacity() -> u64 {
    1 << 20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSpec {
    pub waypoints_m: Vec<[f64; 2]>,
    pub speed_mps: f64,
    #[serde(default, rename = "loop")]
    pub looped: bool,
    #[serde(default)]
    pub start_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolSpec {
    pub beacon_interval_s: f64,
    pub contact_k: u32,
    pub ttl_max: u8,
    pub neighbor_cap: usize,
    pub liveness_intervals: u32,
    pub route_expiry_intervals: u32,
    /// Derived from the radio model when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub request_timeout_s: Option<f64>,
    /// Outbound frame queue length per module.
    pub queue_capacity: usize,
    /// Baseline transport: handshake retransmission timeout.
    pub tcp_syn_rto_s: f64,
    /// Baseline transport: data retransmission timeout.
    pub tcp_data_rto_s: f64,
    /// Baseline transport: access-point scan period.
    pub tcp_scan_interval_s: f64,
}

impl Default for ProtocolSpec {
    fn default() -> Self {
        ProtocolSpec {
            beacon_interval_s: 0.5,
            contact_k: 2,
            ttl_max: 8,
            neighbor_cap: crate::memory_module::NEIGHBOR_CAP,
            liveness_intervals: 3,
            route_expiry_intervals: 3,
            request_timeout_s: None,
            queue_capacity: 64,
            tcp_syn_rto_s: 1.0,
            tcp_data_rto_s: 0.2,
            tcp_scan_interval_s: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkloadSpec {
    /// Overrides the speed of every mobility trace when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub speed_mps: Option<f64>,
    pub streams: Vec<StreamSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Load,
    Store,
}

/// A periodic request stream issued by one module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamSpec {
    pub module: u64,
    pub op: OpKind,
    /// Replicas holding the record; each request goes to the best one.
    pub targets: Vec<u64>,
    #[serde(default)]
    pub offset: u64,
    pub payload_bytes: u32,
    #[serde(default)]
    pub class: u8,
    #[serde(default)]
    pub start_s: f64,
    pub interval_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transport {
    #[default]
    Fabric,
    Tcp,
}

impl fmt::Display for Transport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Transport::Fabric => "fabric",
            Transport::Tcp => "tcp",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub duration_s: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_window")]
    pub window_s: f64,
    #[serde(default)]
    pub transport: Transport,
    /// When present, `run` also sweeps mobile speed across transports.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed_sweep: Option<SpeedSweepSpec>,
}

fn default_seed() -> u64 {
    1
}

fn default_window() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedSweepSpec {
    pub speeds_mps: Vec<f64>,
    pub seeds: u32,
    #[serde(default = "both_transports")]
    pub transports: Vec<Transport>,
}

fn both_transports() -> Vec<Transport> {
    vec![Transport::Fabric, Transport::Tcp]
}

/// One schema violation with the dotted path of the offending field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{} schema violation(s): {}", .0.len(), join_errors(.0))]
    Schema(Vec<SchemaError>),
}

fn join_errors(errs: &[SchemaError]) -> String {
    errs.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

impl ScenarioError {
    fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        ScenarioError::Schema(vec![SchemaError {
            path: path.into(),
            message: message.into(),
        }])
    }
}

/// Parses raw text into a JSON tree; syntax errors only.
pub fn parse_value(text: &str) -> Result<Value, ScenarioError> {
    serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

impl Scenario {
    /// Parses and validates scenario text.
    pub fn from_json(text: &str) -> Result<Scenario, ScenarioError> {
        Self::from_value(parse_value(text)?)
    }

    pub fn from_value(value: Value) -> Result<Scenario, ScenarioError> {
        let scenario: Scenario = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            ScenarioError::schema(path, e.into_inner().to_string())
        })?;
        let errors = scenario.validate();
        if errors.is_empty() {
            Ok(scenario)
        } else {
            Err(ScenarioError::Schema(errors))
        }
    }

    /// Every semantic violation, in document order.
    pub fn validate(&self) -> Vec<SchemaError> {
        let mut errs = Vec::new();
        let mut err = |path: String, message: String| errs.push(SchemaError { path, message });
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;

        if self.modules.is_empty() {
            err("modules".into(), "at least one module is required".into());
        }
        let mut seen = BTreeSet::new();
        for (i, m) in self.modules.iter().enumerate() {
            let p = format!("modules[{i}]");
            if ModuleId::new(m.id)
                .map(|id| id.is_unassigned())
                .unwrap_or(true)
            {
                err(
                    format!("{p}.id"),
                    format!("module id {} must be in 1..2^48", m.id),
                );
            }
            if !seen.insert(m.id) {
                err(format!("{p}.id"), format!("duplicate module id {}", m.id));
            }
            if m.capacity_bytes == 0 {
                err(
                    format!("{p}.capacity_bytes"),
                    "capacity must be positive".into(),
                );
            }
            match (&m.position_m, &m.trace) {
                (Some(_), Some(_)) | (None, None) => err(
                    p.clone(),
                    "exactly one of position_m or trace is required".into(),
                ),
                (Some(pos), None) if !pos.iter().all(|c| c.is_finite()) => err(
                    format!("{p}.position_m"),
                    "coordinates must be finite".into(),
                ),
                (None, Some(t)) => {
                    if t.waypoints_m.is_empty() {
                        err(
                            format!("{p}.trace.waypoints_m"),
                            "at least one waypoint is required".into(),
                        );
                    }
                    if !t.waypoints_m.iter().flatten().all(|c| c.is_finite()) {
                        err(
                            format!("{p}.trace.waypoints_m"),
                            "coordinates must be finite".into(),
                        );
                    }
                    if !finite_nonneg(t.speed_mps) {
                        err(
                            format!("{p}.trace.speed_mps"),
                            format!("speed_mps must be >= 0, got {}", t.speed_mps),
                        );
                    }
                    if !finite_nonneg(t.start_s) {
                        err(format!("{p}.trace.start_s"), "start_s must be >= 0".into());
                    }
                }
                _ => {}
            }
            if !finite_nonneg(m.online_s) {
                err(format!("{p}.online_s"), "online_s must be >= 0".into());
            }
            if let Some(off) = m.offline_s {
                if !(off.is_finite() && off > m.online_s) {
                    err(
                        format!("{p}.offline_s"),
                        "offline_s must exceed online_s".into(),
                    );
                }
            }
        }

        let r = &self.radio;
        if !(r.range_m.is_finite() && r.range_m > 0.0) {
            err("radio.range_m".into(), "range_m must be positive".into());
        }
        if !(r.t_max_bps.is_finite() && r.t_max_bps > 0.0) {
            err(
                "radio.t_max_bps".into(),
                "t_max_bps must be positive".into(),
            );
        }
        if !(r.alpha.is_finite() && r.alpha > 0.0) {
            err("radio.alpha".into(), "alpha must be positive".into());
        }
        if r.mtu <= HEADER_LEN {
            err(
                "radio.mtu".into(),
                format!("mtu must exceed the {HEADER_LEN}-byte header"),
            );
        }
        if !finite_nonneg(r.base_latency_s) {
            err(
                "radio.base_latency_s".into(),
                "base_latency_s must be >= 0".into(),
            );
        }
        if !(0.0..=1.0).contains(&r.loss0) {
            err("radio.loss0".into(), "loss0 must lie in [0, 1]".into());
        }

        let pr = &self.protocol;
        if !(pr.beacon_interval_s.is_finite() && pr.beacon_interval_s > 0.0) {
            err(
                "protocol.beacon_interval_s".into(),
                "beacon_interval_s must be positive".into(),
            );
        }
        for (name, v) in [
            ("contact_k", pr.contact_k as usize),
            ("ttl_max", pr.ttl_max as usize),
            ("neighbor_cap", pr.neighbor_cap),
            ("liveness_intervals", pr.liveness_intervals as usize),
            ("route_expiry_intervals", pr.route_expiry_intervals as usize),
            ("queue_capacity", pr.queue_capacity),
        ] {
            if v == 0 {
                err(
                    format!("protocol.{name}"),
                    format!("{name} must be positive"),
                );
            }
        }
        if let Some(t) = pr.request_timeout_s {
            if !(t.is_finite() && t > 0.0) {
                err(
                    "protocol.request_timeout_s".into(),
                    "request_timeout_s must be positive".into(),
                );
            }
        }
        for (name, v) in [
            ("tcp_syn_rto_s", pr.tcp_syn_rto_s),
            ("tcp_data_rto_s", pr.tcp_data_rto_s),
            ("tcp_scan_interval_s", pr.tcp_scan_interval_s),
        ] {
            if !(v.is_finite() && v > 0.0) {
                err(
                    format!("protocol.{name}"),
                    format!("{name} must be positive"),
                );
            }
        }

        if let Some(s) = self.workload.speed_mps {
            if !finite_nonneg(s) {
                err(
                    "workload.speed_mps".into(),
                    format!("speed_mps must be >= 0, got {s}"),
                );
            }
        }
        for (i, s) in self.workload.streams.iter().enumerate() {
            let p = format!("workload.streams[{i}]");
            if !seen.contains(&s.module) {
                err(
                    format!("{p}.module"),
                    format!("unknown module {}", s.module),
                );
            }
            if s.targets.is_empty() {
                err(
                    format!("{p}.targets"),
                    "at least one target is required".into(),
                );
            }
            for t in &s.targets {
                match self.modules.iter().find(|m| m.id == *t) {
                    None => err(format!("{p}.targets"), format!("unknown module {t}")),
                    Some(m)
                        if s.offset.saturating_add(s.payload_bytes as u64) > m.capacity_bytes =>
                    {
                        err(
                            format!("{p}.offset"),
                            format!("offset + payload exceeds capacity of module {t}"),
                        )
                    }
                    _ => {}
                }
            }
            let biggest = s.payload_bytes as usize + HEADER_LEN + 26;
            if biggest > r.mtu {
                err(
                    format!("{p}.payload_bytes"),
                    format!("frame of {biggest} bytes exceeds mtu {}", r.mtu),
                );
            }
            if s.class > 1 {
                err(format!("{p}.class"), "class must be 0 or 1".into());
            }
            if !(s.interval_s.is_finite() && s.interval_s > 0.0) {
                err(
                    format!("{p}.interval_s"),
                    "interval_s must be positive".into(),
                );
            }
            if !finite_nonneg(s.start_s) {
                err(format!("{p}.start_s"), "start_s must be >= 0".into());
            }
        }

        let run = &self.run;
        if !(run.duration_s.is_finite() && run.duration_s > 0.0) {
            err(
                "run.duration_s".into(),
                "duration_s must be positive".into(),
            );
        }
        if !(run.window_s.is_finite() && run.window_s > 0.0) {
            err("run.window_s".into(), "window_s must be positive".into());
        }
        if let Some(sw) = &run.speed_sweep {
            if sw.speeds_mps.is_empty() || !sw.speeds_mps.iter().all(|v| finite_nonneg(*v)) {
                err(
                    "run.speed_sweep.speeds_mps".into(),
                    "speeds must be a non-empty list of values >= 0".into(),
                );
            }
            if sw.seeds == 0 {
                err(
                    "run.speed_sweep.seeds".into(),
                    "seeds must be positive".into(),
                );
            }
            if sw.transports.is_empty() {
                err(
                    "run.speed_sweep.transports".into(),
                    "at least one transport is required".into(),
                );
            }
        }
        errs
    }

    pub fn module_id(&self, raw: u64) -> ModuleId {
        ModuleId::from_low_bits(raw)
    }

    pub fn beacon_interval(&self) -> SimTime {
        SimTime::from_secs_f64(self.protocol.beacon_interval_s)
    }

    /// Twice the hop budget times the slowest single hop: a full MTU frame
    /// at zero-distance throughput plus fixed latency.
    pub fn request_timeout(&self) -> SimTime {
        let s = self.protocol.request_timeout_s.unwrap_or_else(|| {
            let per_hop =
                self.radio.base_latency_s + self.radio.mtu as f64 / (self.radio.t_max_bps / 8.0);
            2.0 * self.protocol.ttl_max as f64 * per_hop
        });
        SimTime::from_secs_f64(s)
    }

    pub fn protocol_config(&self) -> ProtocolConfig {
        let beacon = self.beacon_interval();
        ProtocolConfig {
            beacon_interval: beacon,
            contact_k: self.protocol.contact_k,
            ttl_max: self.protocol.ttl_max,
            neighbor_cap: self.protocol.neighbor_cap,
            liveness: beacon.times(self.protocol.liveness_intervals as u64),
            route_expiry: beacon.times(self.protocol.route_expiry_intervals as u64),
            request_timeout: self.request_timeout(),
        }
    }

    /// Trace of a mobile module with the workload speed override applied.
    pub fn trace_of(&self, spec: &TraceSpec) -> MobilityTrace {
        MobilityTrace {
            waypoints: spec
                .waypoints_m
                .iter()
                .map(|p| Position::new(p[0], p[1]))
                .collect(),
            speed_mps: self.workload.speed_mps.unwrap_or(spec.speed_mps),
            looped: spec.looped,
            start_s: spec.start_s,
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

#[derive(Debug, Error)]
pub enum ParamError {
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

/// Sets the numeric field at dotted `path` (e.g. `radio.range_m`) in a raw
/// scenario tree and re-validates it.
pub fn with_param(base: &Value, path: &str, value: f64) -> Result<Scenario, ParamError> {
    let unknown = || ParamError::UnknownParameter(path.to_string());
    // expand defaulted sections so their fields are addressable too
    let mut tree = match Scenario::from_value(base.clone()) {
        Ok(s) => serde_json::to_value(&s).expect("scenario serializes"),
        Err(_) => base.clone(),
    };
    let mut keys: Vec<&str> = path.split('.').collect();
    let last = keys.pop().filter(|k| !k.is_empty()).ok_or_else(unknown)?;
    let mut node = &mut tree;
    for k in keys {
        node = node.get_mut(k).ok_or_else(unknown)?;
    }
    let obj = node.as_object_mut().ok_or_else(unknown)?;
    if obj.get(last).is_some_and(|v| !v.is_number()) {
        return Err(unknown());
    }
    let num = if value.fract() == 0.0 && (0.0..9.0e15).contains(&value) {
        Value::from(value as u64)
    } else {
        serde_json::Number::from_f64(value)
            .map(Value::Number)
            .ok_or_else(unknown)?
    };
    obj.insert(last.to_string(), num);
    match Scenario::from_value(tree) {
        // a field the schema does not know is a bad parameter, not a bad file
        Err(ScenarioError::Schema(errs))
            if errs.iter().any(|e| e.message.contains("unknown field")) =>
        {
            Err(unknown())
        }
        other => Ok(other?),
    }
}
