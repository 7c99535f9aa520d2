//! The discrete-event loop.
//!
//! Events sit in a map keyed by `(time, insertion sequence)`, so equal-time
//! events run in the order they were scheduled. All randomness (beacon phase
//! and frame loss) comes from one ChaCha stream seeded per run.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::address::{FabricAddress, ModuleId};
use crate::memory_module::{Emission, Issued, Link, ModuleEvent, ModuleState, Operation, Step};
use crate::radio::{Delivery, Placement, Position, RadioModel};
use crate::sim::metrics::{JoinRow, JoinStatus, MetricsRecord, RequestRow, RequestStatus};
use crate::sim::scenario::{OpKind, Scenario, Transport};
use crate::tcp::{Segment, TcpAction, TcpClient};
use crate::time::SimTime;
use crate::wire::{decode_frame, encode_frame, Body, ErrorReason, TrafficClass};

#[derive(Debug, Clone)]
enum Event {
    BeaconTick(ModuleId),
    TxDone(ModuleId),
    Enqueue(ModuleId, Emission),
    FrameArrival {
        to: ModuleId,
        from: ModuleId,
        frame: Vec<u8>,
    },
    Timeout {
        module: ModuleId,
        local_id: u64,
    },
    WorkloadStep {
        stream: usize,
        n: u64,
    },
    TopologyChange {
        module: ModuleId,
        online: bool,
    },
    TcpArrival {
        to: ModuleId,
        from: ModuleId,
        segment: Segment,
    },
    TcpTick(ModuleId),
}

impl Event {
    /// Events that keep generating new traffic; they stop at the run's end.
    fn is_generator(&self) -> bool {
        matches!(
            self,
            Event::BeaconTick(_) | Event::WorkloadStep { .. } | Event::TopologyChange { .. }
        )
    }
}

#[derive(Debug, Clone)]
enum Payload {
    Frame(Vec<u8>),
    Tcp(Segment),
}

impl Payload {
    fn len(&self) -> usize {
        match self {
            Payload::Frame(f) => f.len(),
            Payload::Tcp(s) => s.wire_len(),
        }
    }
}

#[derive(Debug, Clone)]
struct Outgoing {
    to: Link,
    payload: Payload,
}

/// One radio transmitter with a two-class drop-tail queue.
#[derive(Debug, Clone, Default)]
struct Transmitter {
    /// Index 1 (preferential) drains before index 0.
    queues: [VecDeque<Outgoing>; 2],
    busy: bool,
}

impl Transmitter {
    fn len(&self) -> usize {
        self.queues[0].len() + self.queues[1].len()
    }

    fn pop(&mut self) -> Option<Outgoing> {
        self.queues[1]
            .pop_front()
            .or_else(|| self.queues[0].pop_front())
    }
}

#[derive(Debug, Clone)]
struct Node {
    state: ModuleState,
    online: bool,
    bootstrap: bool,
    capacity: u64,
    tx: Transmitter,
    open_join: Option<usize>,
}

#[derive(Debug, Clone, Copy)]
struct RequestKey {
    row: usize,
    target: ModuleId,
}

pub struct Simulation {
    scenario: Scenario,
    radio: RadioModel,
    placement: Placement,
    rng: ChaCha8Rng,
    now: SimTime,
    end: SimTime,
    drain_end: SimTime,
    seq: u64,
    queue: BTreeMap<(SimTime, u64), Event>,
    nodes: BTreeMap<ModuleId, Node>,
    gateway: Option<ModuleId>,
    transport: Transport,
    tcp_clients: BTreeMap<ModuleId, TcpClient>,
    access_points: BTreeSet<ModuleId>,
    requests: BTreeMap<(ModuleId, u64), RequestKey>,
    tcp_requests: BTreeMap<u64, RequestKey>,
    metrics: MetricsRecord,
}

impl Simulation {
    pub fn new(scenario: &Scenario, seed: u64) -> Self {
        let config = scenario.protocol_config();
        let mut placement = Placement::new();
        for m in &scenario.modules {
            let id = scenario.module_id(m.id);
            match (&m.trace, m.position_m) {
                (Some(t), _) => placement.attach(id, scenario.trace_of(t)),
                (None, Some(p)) => placement.place(id, Position::new(p[0], p[1])),
                (None, None) => placement.place(id, Position::default()),
            }
        }
        let gateway = scenario
            .modules
            .iter()
            .find(|m| m.gateway)
            .map(|m| scenario.module_id(m.id));
        let nodes = scenario
            .modules
            .iter()
            .map(|m| {
                let id = scenario.module_id(m.id);
                let state = ModuleState::new(id, m.capacity_bytes, config.clone(), m.bootstrap)
                    .with_gateway(gateway.filter(|g| *g != id));
                let node = Node {
                    state,
                    online: false,
                    bootstrap: m.bootstrap,
                    capacity: m.capacity_bytes,
                    tx: Transmitter::default(),
                    open_join: None,
                };
                (id, node)
            })
            .collect();

        let end = SimTime::from_secs_f64(scenario.run.duration_s);
        let transport = scenario.run.transport;
        let mut sim = Simulation {
            radio: scenario.radio,
            placement,
            rng: ChaCha8Rng::seed_from_u64(seed),
            now: SimTime::ZERO,
            end,
            drain_end: end + scenario.request_timeout() + SimTime::from_millis(1),
            seq: 0,
            queue: BTreeMap::new(),
            nodes,
            gateway,
            transport,
            tcp_clients: BTreeMap::new(),
            access_points: BTreeSet::new(),
            requests: BTreeMap::new(),
            tcp_requests: BTreeMap::new(),
            metrics: MetricsRecord {
                window_s: scenario.run.window_s,
                duration_s: scenario.run.duration_s,
                throughput_modules: scenario
                    .modules
                    .iter()
                    .map(|m| scenario.module_id(m.id))
                    .collect(),
                ..MetricsRecord::default()
            },
            scenario: scenario.clone(),
        };
        sim.metrics.throughput_modules.sort();

        if transport == Transport::Tcp {
            let origins: BTreeSet<ModuleId> = scenario
                .workload
                .streams
                .iter()
                .map(|s| scenario.module_id(s.module))
                .collect();
            let (syn, data) = (
                SimTime::from_secs_f64(scenario.protocol.tcp_syn_rto_s),
                SimTime::from_secs_f64(scenario.protocol.tcp_data_rto_s),
            );
            for id in sim.nodes.keys() {
                if origins.contains(id) {
                    sim.tcp_clients
                        .insert(*id, TcpClient::new(syn, data, scenario.request_timeout()));
                } else if !sim.placement.is_mobile(*id) {
                    sim.access_points.insert(*id);
                }
            }
        }

        for m in &scenario.modules {
            let id = scenario.module_id(m.id);
            sim.schedule(
                SimTime::from_secs_f64(m.online_s),
                Event::TopologyChange {
                    module: id,
                    online: true,
                },
            );
            if let Some(off) = m.offline_s {
                sim.schedule(
                    SimTime::from_secs_f64(off),
                    Event::TopologyChange {
                        module: id,
                        online: false,
                    },
                );
            }
        }
        for (i, s) in scenario.workload.streams.iter().enumerate() {
            sim.schedule(
                SimTime::from_secs_f64(s.start_s),
                Event::WorkloadStep { stream: i, n: 0 },
            );
        }
        sim
    }

    fn schedule(&mut self, at: SimTime, ev: Event) {
        debug_assert!(at >= self.now, "event scheduled in the past");
        self.seq += 1;
        self.queue.insert((at.max(self.now), self.seq), ev);
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn module(&self, id: ModuleId) -> Option<&ModuleState> {
        self.nodes.get(&id).map(|n| &n.state)
    }

    pub fn module_ids(&self) -> impl Iterator<Item = ModuleId> + '_ {
        self.nodes.keys().copied()
    }

    pub fn is_online(&self, id: ModuleId) -> bool {
        self.nodes.get(&id).is_some_and(|n| n.online)
    }

    pub fn metrics(&self) -> &MetricsRecord {
        &self.metrics
    }

    /// Processes every event scheduled at or before `until`.
    pub fn run_until(&mut self, until: SimTime) {
        while let Some(entry) = self.queue.first_entry() {
            let (at, _) = *entry.key();
            if at > until || at > self.drain_end {
                break;
            }
            let ev = entry.remove();
            self.now = at;
            if at > self.end && ev.is_generator() {
                continue;
            }
            self.dispatch(ev);
        }
        self.now = self.now.max(until.min(self.drain_end));
    }

    /// Runs to completion, including the drain period in which outstanding
    /// requests finish or time out.
    pub fn finish(mut self) -> MetricsRecord {
        self.run_until(self.drain_end);
        let end_s = self.end.as_secs_f64();
        for row in &mut self.metrics.requests {
            if row.status == RequestStatus::Pending {
                row.status = RequestStatus::TimedOut;
            }
            // served but never answered: no round trip to account for
            if row.status != RequestStatus::Completed {
                row.hops = None;
            }
        }
        let window = self.metrics.window_s;
        let mobile: Vec<ModuleId> = self.placement.mobile_ids().collect();
        for w in 0..self.metrics.window_count() {
            let t = ((w as f64 + 0.5) * window).min(end_s);
            for id in &mobile {
                let p = self.placement.position_at(*id, t).expect("placed");
                self.metrics.positions.push((t, *id, p.x, p.y));
            }
        }
        self.metrics.max_request_hops = self
            .metrics
            .requests
            .iter()
            .filter_map(|r| r.hops)
            .max()
            .unwrap_or(0);
        self.metrics
    }

    fn dispatch(&mut self, ev: Event) {
        match ev {
            Event::BeaconTick(id) => self.on_beacon(id),
            Event::TxDone(id) => {
                if let Some(n) = self.nodes.get_mut(&id) {
                    n.tx.busy = false;
                }
                self.start_tx(id);
            }
            Event::Enqueue(id, e) => self.enqueue_emission(id, e),
            Event::FrameArrival { to, from, frame } => self.on_arrival(to, from, &frame),
            Event::Timeout { module, local_id } => self.on_timeout(module, local_id),
            Event::WorkloadStep { stream, n } => self.on_workload(stream, n),
            Event::TopologyChange { module, online } => self.on_topology(module, online),
            Event::TcpArrival { to, from, segment } => self.on_tcp_arrival(to, from, segment),
            Event::TcpTick(id) => self.on_tcp_tick(id),
        }
    }

    fn on_topology(&mut self, id: ModuleId, online: bool) {
        let now = self.now;
        let interval = self.scenario.beacon_interval();
        let config = self.scenario.protocol_config();
        let gateway = self.gateway.filter(|g| *g != id);
        let Some(node) = self.nodes.get_mut(&id) else {
            return;
        };
        if node.online == online {
            return;
        }
        node.online = online;
        if !online {
            node.tx = Transmitter::default();
            if let Some(row) = node.open_join.take() {
                self.metrics.joins[row].status = JoinStatus::Failed;
                self.metrics.joins[row].finished = Some(now.as_secs_f64());
            }
            return;
        }
        if now > SimTime::ZERO {
            let next = node.state.next_request_id();
            node.state = ModuleState::new(id, node.capacity, config, node.bootstrap)
                .with_gateway(gateway)
                .with_first_request_id(next);
        }
        match self.transport {
            Transport::Fabric => {
                let phase = SimTime::from_nanos(self.rng.gen_range(0..interval.as_nanos().max(1)));
                self.schedule(now + phase, Event::BeaconTick(id));
            }
            Transport::Tcp => {
                if self.tcp_clients.contains_key(&id) {
                    self.schedule(now, Event::TcpTick(id));
                }
            }
        }
    }

    fn on_beacon(&mut self, id: ModuleId) {
        let now = self.now;
        let Some(node) = self.nodes.get_mut(&id) else {
            return;
        };
        if !node.online {
            return;
        }
        let step = node.state.on_tick(now);
        self.apply_step(id, step);
        self.schedule(now + self.scenario.beacon_interval(), Event::BeaconTick(id));
    }

    fn apply_step(&mut self, id: ModuleId, step: Step) {
        let now_s = self.now.as_secs_f64();
        let ttl_max = self.scenario.protocol.ttl_max;
        if let Some(node) = self.nodes.get(&id) {
            let count = node.state.neighbors().len();
            let max = self.metrics.max_neighbors.entry(id).or_insert(0);
            *max = (*max).max(count);
        }
        for ev in step.events {
            match ev {
                ModuleEvent::Completed {
                    request_id,
                    payload_bytes,
                } => {
                    if let Some(key) = self.requests.get(&(id, request_id)).copied() {
                        self.complete(key, payload_bytes, self.now);
                    }
                }
                ModuleEvent::Rejected { request_id, .. } => {
                    if let Some(key) = self.requests.get(&(id, request_id)) {
                        let row = &mut self.metrics.requests[key.row];
                        if row.status == RequestStatus::Pending {
                            row.status = RequestStatus::Rejected;
                        }
                    }
                }
                ModuleEvent::Served {
                    origin,
                    request_id,
                    ttl,
                } => {
                    if let Some(key) = self.requests.get(&(origin, request_id)) {
                        // radio hops: the first hop does not decrement the ttl
                        self.metrics.requests[key.row].hops = Some(ttl_max.saturating_sub(ttl) + 1);
                    }
                }
                ModuleEvent::JoinStarted => {
                    let row = self.metrics.joins.len();
                    self.metrics.joins.push(JoinRow {
                        module: id,
                        started: now_s,
                        finished: None,
                        status: JoinStatus::Incomplete,
                    });
                    if let Some(n) = self.nodes.get_mut(&id) {
                        n.open_join = Some(row);
                    }
                }
                ModuleEvent::JoinCompleted | ModuleEvent::JoinFailed => {
                    let status = if ev == ModuleEvent::JoinCompleted {
                        JoinStatus::Completed
                    } else {
                        JoinStatus::Failed
                    };
                    if let Some(row) = self.nodes.get_mut(&id).and_then(|n| n.open_join.take()) {
                        self.metrics.joins[row].status = status;
                        self.metrics.joins[row].finished = Some(now_s);
                    }
                }
                ModuleEvent::NeighborRejected(_) => {
                    *self.metrics.neighbor_rejections.entry(id).or_insert(0) += 1;
                }
            }
        }
        for e in step.emissions {
            if e.delay > SimTime::ZERO {
                let at = self.now + e.delay;
                self.schedule(at, Event::Enqueue(id, e));
            } else {
                self.enqueue_emission(id, e);
            }
        }
    }

    fn complete(&mut self, key: RequestKey, payload_bytes: usize, now: SimTime) {
        let row = &mut self.metrics.requests[key.row];
        if row.status != RequestStatus::Pending {
            return;
        }
        row.status = RequestStatus::Completed;
        row.completed_at = Some(now.as_secs_f64());
        if now < self.end {
            let w = (now.as_secs_f64() / self.metrics.window_s).floor() as u64;
            *self
                .metrics
                .windows
                .entry(w)
                .or_default()
                .entry(key.target)
                .or_insert(0) += payload_bytes as u64;
        }
    }

    fn enqueue_emission(&mut self, id: ModuleId, e: Emission) {
        let frame = match encode_frame(&e.msg) {
            Ok(f) => f.into_bytes(),
            Err(_) => {
                self.metrics.frames.queue_drops += 1;
                return;
            }
        };
        let class = e.msg.class;
        self.enqueue(
            id,
            Outgoing {
                to: e.to,
                payload: Payload::Frame(frame),
            },
            class,
        );
    }

    fn enqueue(&mut self, id: ModuleId, out: Outgoing, class: TrafficClass) {
        let cap = self.scenario.protocol.queue_capacity;
        let Some(node) = self.nodes.get_mut(&id) else {
            return;
        };
        if !node.online || node.tx.len() >= cap {
            self.metrics.frames.queue_drops += 1;
            return;
        }
        node.tx.queues[class.code() as usize].push_back(out);
        if !node.tx.busy {
            self.start_tx(id);
        }
    }

    fn distance(&self, a: ModuleId, b: ModuleId) -> f64 {
        self.placement
            .distance(a, b, self.now.as_secs_f64())
            .expect("every module is placed")
    }

    /// Offers one frame to the channel toward `to`; returns whether it will
    /// arrive and after how long.
    fn offer(&mut self, from: ModuleId, to: ModuleId, len: usize) -> Option<SimTime> {
        if !self.is_online(to) {
            self.metrics.frames.out_of_range += 1;
            return None;
        }
        let d = self.distance(from, to);
        match self.radio.frame_delay(d, len, &mut self.rng) {
            Ok(Delivery::After(s)) => Some(SimTime::from_secs_f64(s)),
            Ok(Delivery::Lost) => {
                self.metrics.frames.lost += 1;
                None
            }
            Err(_) => {
                self.metrics.frames.out_of_range += 1;
                None
            }
        }
    }

    fn start_tx(&mut self, id: ModuleId) {
        let now = self.now;
        let mtu = self.radio.mtu;
        let out = loop {
            let Some(node) = self.nodes.get_mut(&id) else {
                return;
            };
            if node.tx.busy || !node.online {
                return;
            }
            match node.tx.pop() {
                None => return,
                Some(o) if o.payload.len() > mtu => self.metrics.frames.queue_drops += 1,
                Some(o) => {
                    node.tx.busy = true;
                    break o;
                }
            }
        };
        let len = out.payload.len();
        self.metrics.frames.sent += 1;
        let busy = match out.to {
            Link::Broadcast => {
                let peers: Vec<ModuleId> = self
                    .nodes
                    .iter()
                    .filter(|(p, n)| **p != id && n.online)
                    .map(|(p, _)| *p)
                    .collect();
                for peer in peers {
                    if !self.radio.in_range(self.distance(id, peer)) {
                        continue;
                    }
                    if let Some(delay) = self.offer(id, peer, len) {
                        self.deliver(id, peer, &out.payload, now + delay);
                    }
                }
                self.radio.airtime(0.0, len)
            }
            Link::Neighbor(peer) => {
                let d = self.distance(id, peer);
                if let Some(delay) = self.offer(id, peer, len) {
                    self.deliver(id, peer, &out.payload, now + delay);
                }
                if self.radio.in_range(d) {
                    self.radio.airtime(d, len)
                } else {
                    self.radio.airtime(0.0, len)
                }
            }
        };
        self.schedule(now + SimTime::from_secs_f64(busy), Event::TxDone(id));
    }

    fn deliver(&mut self, from: ModuleId, to: ModuleId, payload: &Payload, at: SimTime) {
        let ev = match payload {
            Payload::Frame(f) => Event::FrameArrival {
                to,
                from,
                frame: f.clone(),
            },
            Payload::Tcp(s) => Event::TcpArrival {
                to,
                from,
                segment: *s,
            },
        };
        self.schedule(at, ev);
    }

    fn on_arrival(&mut self, to: ModuleId, from: ModuleId, frame: &[u8]) {
        let now = self.now;
        if !self.is_online(to) {
            return;
        }
        let msg = match decode_frame(frame) {
            Ok(m) => m,
            Err(_) => {
                self.metrics.frames.decode_errors += 1;
                return;
            }
        };
        self.metrics.frames.delivered += 1;
        if msg.dst == to
            && matches!(
                msg.body,
                Body::Error {
                    reason: ErrorReason::NeighborTableFull
                }
            )
        {
            *self.metrics.table_full_notices.entry(to).or_insert(0) += 1;
        }
        let step = self
            .nodes
            .get_mut(&to)
            .expect("online node exists")
            .state
            .on_frame(msg, from, now);
        self.apply_step(to, step);
    }

    fn on_timeout(&mut self, module: ModuleId, local_id: u64) {
        if let Some(n) = self.nodes.get_mut(&module) {
            n.state.on_timeout(local_id);
        }
        if let Some(key) = self.requests.get(&(module, local_id)) {
            let row = &mut self.metrics.requests[key.row];
            if row.status == RequestStatus::Pending {
                row.status = RequestStatus::TimedOut;
            }
        }
    }

    fn new_row(&mut self, origin: ModuleId, payload_bytes: usize, class: TrafficClass) -> usize {
        let row = self.metrics.requests.len();
        self.metrics.requests.push(RequestRow {
            request_id: row as u64 + 1,
            origin,
            issued_at: self.now.as_secs_f64(),
            completed_at: None,
            status: RequestStatus::Pending,
            hops: None,
            payload_bytes,
            class,
        });
        row
    }

    fn on_workload(&mut self, stream: usize, n: u64) {
        let now = self.now;
        let s = self.scenario.workload.streams[stream].clone();
        if s.count.is_some_and(|c| n >= c) {
            return;
        }
        let next = SimTime::from_secs_f64(s.start_s + (n + 1) as f64 * s.interval_s);
        self.schedule(next, Event::WorkloadStep { stream, n: n + 1 });

        let origin = self.scenario.module_id(s.module);
        if !self.is_online(origin) {
            return;
        }
        let class = TrafficClass::from_code(s.class).unwrap_or(TrafficClass::BestEffort);
        let targets: Vec<ModuleId> = s
            .targets
            .iter()
            .map(|t| self.scenario.module_id(*t))
            .collect();
        if self.transport == Transport::Tcp {
            let row = self.new_row(origin, s.payload_bytes as usize, class);
            let request_id = row as u64 + 1;
            let client = self
                .tcp_clients
                .get_mut(&origin)
                .expect("stream origins are tcp clients");
            let acts = client.submit(request_id, s.payload_bytes, now);
            // the access point is resolved when the response arrives
            self.tcp_requests.insert(
                request_id,
                RequestKey {
                    row,
                    target: origin,
                },
            );
            self.apply_tcp(origin, acts);
            return;
        }

        let node = &self.nodes[&origin];
        let target = node.state.best_replica(&targets).unwrap_or(targets[0]);
        let addr = FabricAddress {
            module: target,
            offset: s.offset,
        };
        let op = match s.op {
            OpKind::Load => Operation::Load {
                addr,
                len: s.payload_bytes,
            },
            OpKind::Store => Operation::Store {
                addr,
                data: vec![(n % 251) as u8; s.payload_bytes as usize],
            },
        };
        let row = self.new_row(origin, s.payload_bytes as usize, class);
        let issued = self
            .nodes
            .get_mut(&origin)
            .expect("checked")
            .state
            .initiate_request(op, class, now);
        match issued {
            Ok(Issued::Remote {
                request_id,
                emission,
                deadline,
            }) => {
                self.requests
                    .insert((origin, request_id), RequestKey { row, target });
                self.schedule(
                    deadline,
                    Event::Timeout {
                        module: origin,
                        local_id: request_id,
                    },
                );
                self.enqueue_emission(origin, emission);
            }
            Ok(Issued::Loopback {
                request_id,
                outcome,
            }) => {
                self.requests
                    .insert((origin, request_id), RequestKey { row, target });
                self.metrics.requests[row].hops = Some(0);
                match outcome {
                    Ok(bytes) => {
                        // local access costs one fixed processing latency
                        let at = now + SimTime::from_secs_f64(self.radio.base_latency_s);
                        self.complete(RequestKey { row, target }, bytes, at);
                    }
                    Err(_) => self.metrics.requests[row].status = RequestStatus::Rejected,
                }
            }
            Err(_) => self.metrics.requests[row].status = RequestStatus::Rejected,
        }
    }

    fn nearest_access_point(&self, client: ModuleId) -> Option<ModuleId> {
        self.access_points
            .iter()
            .filter(|ap| self.is_online(**ap))
            .map(|ap| (self.distance(client, *ap), *ap))
            .filter(|(d, _)| self.radio.in_range(*d))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(_, ap)| ap)
    }

    fn on_tcp_tick(&mut self, id: ModuleId) {
        let now = self.now;
        if !self.is_online(id) {
            return;
        }
        let nearest = if now <= self.end {
            Some(self.nearest_access_point(id))
        } else {
            None
        };
        let client = self
            .tcp_clients
            .get_mut(&id)
            .expect("tick only for clients");
        let mut acts = client.on_timer(now);
        if let Some(ap) = nearest {
            acts.extend(client.on_scan(ap, now));
        }
        self.apply_tcp(id, acts);
        let period = SimTime::from_secs_f64(self.scenario.protocol.tcp_scan_interval_s);
        self.schedule(now + period, Event::TcpTick(id));
    }

    fn on_tcp_arrival(&mut self, to: ModuleId, from: ModuleId, segment: Segment) {
        if !self.is_online(to) {
            return;
        }
        self.metrics.frames.delivered += 1;
        if self.access_points.contains(&to) {
            if let Some(reply) = segment.reply() {
                let out = Outgoing {
                    to: Link::Neighbor(from),
                    payload: Payload::Tcp(reply),
                };
                self.enqueue(to, out, TrafficClass::BestEffort);
            }
            return;
        }
        if let Segment::Response { request_id, .. } = segment {
            if let Some(key) = self.tcp_requests.get_mut(&request_id) {
                key.target = from;
                self.metrics.requests[key.row].hops = Some(1);
            }
        }
        let now = self.now;
        if let Some(client) = self.tcp_clients.get_mut(&to) {
            let acts = client.on_segment(from, segment, now);
            self.apply_tcp(to, acts);
        }
    }

    fn apply_tcp(&mut self, id: ModuleId, acts: Vec<TcpAction>) {
        for act in acts {
            match act {
                TcpAction::Send { to, segment } => {
                    let out = Outgoing {
                        to: Link::Neighbor(to),
                        payload: Payload::Tcp(segment),
                    };
                    self.enqueue(id, out, TrafficClass::BestEffort);
                }
                TcpAction::Completed { request_id, bytes } => {
                    if let Some(key) = self.tcp_requests.get(&request_id).copied() {
                        self.complete(key, bytes, self.now);
                    }
                }
                TcpAction::Dropped { request_id } | TcpAction::TimedOut { request_id } => {
                    if let Some(key) = self.tcp_requests.get(&request_id) {
                        let row = &mut self.metrics.requests[key.row];
                        if row.status == RequestStatus::Pending {
                            row.status = if matches!(act, TcpAction::Dropped { .. }) {
                                RequestStatus::Rejected
                            } else {
                                RequestStatus::TimedOut
                            };
                        }
                    }
                }
            }
        }
    }
}

/// Runs a scenario to completion with the given seed.
pub fn run(scenario: &Scenario, seed: u64) -> MetricsRecord {
    Simulation::new(scenario, seed).finish()
}
