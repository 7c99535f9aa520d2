//! Memory-module state machine: interface, addressing-request forwarder,
//! membership manager and the local NVM store.
//!
//! A module reacts to three stimuli: an incoming frame, its periodic beacon
//! tick, and the expiry of one of its own pending requests. Every reaction is
//! a deterministic function of the current state, the stimulus and the
//! simulated clock; cross-module effects are returned as [`Emission`]s.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::address::{FabricAddress, ModuleId};
use crate::coherence::{NvmStore, OffsetOutOfRange};
use crate::routing::RoutingTable;
use crate::time::SimTime;
use crate::wire::{Body, ErrorReason, Message, TrafficClass};

/// Neighbor table capacity of the memory interface.
pub const NEIGHBOR_CAP: usize = 10;

/// Full-scale value of the beacon reception estimate.
pub const QUALITY_SCALE: u32 = 1000;
/// Weight of the newest beacon slot in the reception estimate, per mille.
const QUALITY_GAIN: u32 = 250;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolConfig {
    pub beacon_interval: SimTime,
    /// Consecutive bidirectional beacons required before a neighbor is used
    /// as next hop.
    pub contact_k: u32,
    pub ttl_max: u8,
    pub neighbor_cap: usize,
    /// A neighbor not heard for this long is dropped.
    pub liveness: SimTime,
    pub route_expiry: SimTime,
    pub request_timeout: SimTime,
}

impl ProtocolConfig {
    /// Defaults derived from a beacon interval: liveness and route expiry
    /// are three intervals.
    pub fn with_beacon_interval(beacon_interval: SimTime) -> Self {
        ProtocolConfig {
            beacon_interval,
            contact_k: 2,
            ttl_max: 8,
            neighbor_cap: NEIGHBOR_CAP,
            liveness: beacon_interval.times(3),
            route_expiry: beacon_interval.times(3),
            request_timeout: SimTime::from_millis(1000),
        }
    }
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self::with_beacon_interval(SimTime::from_millis(500))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModuleError {
    #[error("neighbor table full, peer {0} rejected")]
    NeighborTableFull(ModuleId),
    #[error("module has not joined an overlay")]
    NotJoined,
    #[error("no route to module {0}")]
    NoRoute(ModuleId),
    #[error("peer id equals own id")]
    SelfNeighbor,
    #[error(transparent)]
    OffsetOutOfRange(#[from] OffsetOutOfRange),
}

/// Physical destination of an emission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Link {
    Broadcast,
    Neighbor(ModuleId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Emission {
    pub to: Link,
    pub msg: Message,
    /// Local processing delay before the frame enters the outbound queue.
    pub delay: SimTime,
}

impl Emission {
    fn now(to: Link, msg: Message) -> Self {
        Emission {
            to,
            msg,
            delay: SimTime::ZERO,
        }
    }
}

/// Observable side effects, consumed by the simulator's metrics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModuleEvent {
    /// A pending request got its response.
    Completed {
        request_id: u64,
        payload_bytes: usize,
    },
    /// A pending request was answered with an error.
    Rejected {
        request_id: u64,
        reason: ErrorReason,
    },
    /// A request addressed to this module was served; `ttl` as received.
    Served {
        origin: ModuleId,
        request_id: u64,
        ttl: u8,
    },
    JoinStarted,
    JoinCompleted,
    JoinFailed,
    NeighborRejected(ModuleId),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Step {
    pub emissions: Vec<Emission>,
    pub events: Vec<ModuleEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Neighbor {
    pub last_heard: SimTime,
    pub last_bidir: Option<SimTime>,
    /// Consecutive beacons in which the peer reported hearing us.
    pub contacts: u32,
    /// Smoothed fraction of the peer's beacons received, per mille.
    pub quality: u32,
    pub last_beacon: Option<SimTime>,
}

impl Neighbor {
    fn fresh(now: SimTime) -> Self {
        Neighbor {
            last_heard: now,
            last_bidir: None,
            contacts: 0,
            quality: QUALITY_SCALE / 2,
            last_beacon: None,
        }
    }

    /// Folds one received beacon into the reception estimate; each beacon
    /// slot skipped since the previous one counts as a miss.
    fn beacon_received(&mut self, now: SimTime, interval: SimTime) {
        let decay = |q: u32| q * (QUALITY_SCALE - QUALITY_GAIN) / QUALITY_SCALE;
        if let Some(last) = self.last_beacon {
            let slots = (now.saturating_sub(last).as_nanos() + interval.as_nanos() / 2)
                / interval.as_nanos().max(1);
            for _ in 1..slots.min(16) {
                self.quality = decay(self.quality);
            }
        }
        self.quality = decay(self.quality) + QUALITY_GAIN;
        self.last_beacon = Some(now);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Operation {
    Load { addr: FabricAddress, len: u32 },
    Store { addr: FabricAddress, data: Vec<u8> },
}

impl Operation {
    pub fn target(&self) -> FabricAddress {
        match self {
            Operation::Load { addr, .. } | Operation::Store { addr, .. } => *addr,
        }
    }

    pub fn payload_len(&self) -> usize {
        match self {
            Operation::Load { len, .. } => *len as usize,
            Operation::Store { data, .. } => data.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pending {
    pub target: ModuleId,
    pub issued_at: SimTime,
    pub deadline: SimTime,
    pub payload_len: usize,
    pub class: TrafficClass,
}

/// Result of issuing a request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Issued {
    /// Sent toward another module; a timeout must be scheduled at `deadline`.
    Remote {
        request_id: u64,
        emission: Emission,
        deadline: SimTime,
    },
    /// Served by the module's own store.
    Loopback {
        request_id: u64,
        outcome: Result<usize, OffsetOutOfRange>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModuleState {
    id: ModuleId,
    config: ProtocolConfig,
    gateway: Option<ModuleId>,
    store: NvmStore,
    neighbors: BTreeMap<ModuleId, Neighbor>,
    routing: RoutingTable,
    membership: BTreeSet<ModuleId>,
    joined: bool,
    join_accepted: bool,
    join_started: Option<SimTime>,
    own_seq: u32,
    next_request_id: u64,
    pending: BTreeMap<u64, Pending>,
}

impl ModuleState {
    /// A bootstrap module founds the overlay and is joined from the start.
    pub fn new(id: ModuleId, capacity: u64, config: ProtocolConfig, bootstrap: bool) -> Self {
        let routing = RoutingTable::new(id, config.route_expiry);
        let mut membership = BTreeSet::new();
        if bootstrap {
            membership.insert(id);
        }
        ModuleState {
            id,
            config,
            gateway: None,
            store: NvmStore::new(capacity),
            neighbors: BTreeMap::new(),
            routing,
            membership,
            joined: bootstrap,
            join_accepted: bootstrap,
            join_started: None,
            own_seq: 0,
            next_request_id: 1,
            pending: BTreeMap::new(),
        }
    }

    pub fn with_gateway(mut self, gateway: Option<ModuleId>) -> Self {
        self.gateway = gateway;
        self
    }

    /// Continues request numbering after a restart so ids never repeat.
    pub fn with_first_request_id(mut self, next: u64) -> Self {
        self.next_request_id = next.max(1);
        self
    }

    pub fn next_request_id(&self) -> u64 {
        self.next_request_id
    }

    pub fn id(&self) -> ModuleId {
        self.id
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.config
    }

    pub fn store(&self) -> &NvmStore {
        &self.store
    }

    pub fn routing(&self) -> &RoutingTable {
        &self.routing
    }

    pub fn neighbors(&self) -> &BTreeMap<ModuleId, Neighbor> {
        &self.neighbors
    }

    pub fn membership(&self) -> &BTreeSet<ModuleId> {
        &self.membership
    }

    pub fn pending(&self) -> &BTreeMap<u64, Pending> {
        &self.pending
    }

    pub fn is_joined(&self) -> bool {
        self.joined
    }

    pub fn own_seq(&self) -> u32 {
        self.own_seq
    }

    pub fn is_usable(&self, peer: ModuleId) -> bool {
        self.neighbors
            .get(&peer)
            .is_some_and(|n| n.contacts >= self.config.contact_k)
    }

    /// Inserts or refreshes a neighbor. A new peer arriving at a full table
    /// displaces the stalest entry only if that entry has outlived the
    /// liveness window.
    pub fn add_neighbor(&mut self, peer: ModuleId, now: SimTime) -> Result<(), ModuleError> {
        if peer == self.id {
            return Err(ModuleError::SelfNeighbor);
        }
        if let Some(n) = self.neighbors.get_mut(&peer) {
            n.last_heard = n.last_heard.max(now);
            return Ok(());
        }
        if self.neighbors.len() >= self.config.neighbor_cap {
            let (stalest, heard) = self
                .neighbors
                .iter()
                .map(|(id, n)| (*id, n.last_heard))
                .min_by_key(|(id, heard)| (*heard, *id))
                .expect("full table is non-empty");
            if now.saturating_sub(heard) <= self.config.liveness {
                return Err(ModuleError::NeighborTableFull(peer));
            }
            self.remove_neighbor(stalest);
        }
        self.neighbors.insert(peer, Neighbor::fresh(now));
        Ok(())
    }

    fn remove_neighbor(&mut self, peer: ModuleId) {
        self.neighbors.remove(&peer);
        self.routing.drop_via(peer);
    }

    /// Reads `len` bytes of the local store with their newest timestamp.
    pub fn local_load(&self, addr: FabricAddress, len: u32) -> Result<(Vec<u8>, u64), ModuleError> {
        debug_assert_eq!(addr.module, self.id);
        Ok(self.store.read_range(addr.offset, len as u64)?)
    }

    fn local_store(
        &mut self,
        addr: FabricAddress,
        data: &[u8],
        ts: u64,
        writer: ModuleId,
    ) -> Result<bool, ModuleError> {
        Ok(self.store.apply_store(addr.offset, data, ts, writer)?)
    }

    /// Next physical hop toward `dst`: routing table (gateway included),
    /// then `dst` itself when it is a direct neighbor, then a directly
    /// heard gateway.
    pub fn route_to(&self, dst: ModuleId) -> Option<ModuleId> {
        self.routing
            .next_hop(dst, self.gateway)
            .ok()
            .or_else(|| self.neighbors.contains_key(&dst).then_some(dst))
            .or_else(|| self.gateway.filter(|g| self.neighbors.contains_key(g)))
    }

    /// Picks which replica to address among `candidates`: self, then the
    /// usable neighbor with the best beacon reception, then the cheapest
    /// route.
    pub fn best_replica(&self, candidates: &[ModuleId]) -> Option<ModuleId> {
        if candidates.contains(&self.id) {
            return Some(self.id);
        }
        let neighbor = candidates
            .iter()
            .filter(|c| self.is_usable(**c))
            .max_by_key(|c| (self.neighbors[*c].quality, std::cmp::Reverse(**c)));
        if let Some(n) = neighbor {
            return Some(*n);
        }
        candidates
            .iter()
            .filter_map(|c| self.routing.cost(*c).map(|cost| (cost, *c)))
            .min()
            .map(|(_, c)| c)
    }

    fn message(
        &self,
        dst: ModuleId,
        ttl: u8,
        class: TrafficClass,
        request_id: u64,
        body: Body,
    ) -> Message {
        Message {
            src: self.id,
            dst,
            ttl,
            class,
            request_id,
            body,
        }
    }

    fn broadcast(&self, body: Body) -> Emission {
        Emission::now(
            Link::Broadcast,
            self.message(ModuleId::UNASSIGNED, 1, TrafficClass::BestEffort, 0, body),
        )
    }

    /// Sends a freshly originated message toward `dst`; dropped silently when
    /// no hop is known.
    fn originate(
        &self,
        dst: ModuleId,
        class: TrafficClass,
        request_id: u64,
        body: Body,
    ) -> Option<Emission> {
        let hop = self.route_to(dst)?;
        Some(Emission::now(
            Link::Neighbor(hop),
            self.message(dst, self.config.ttl_max, class, request_id, body),
        ))
    }

    fn check_join(&mut self, step: &mut Step) {
        if self.joined || !self.join_accepted {
            return;
        }
        if self.neighbors.keys().any(|n| self.is_usable(*n)) {
            self.joined = true;
            self.membership.insert(self.id);
            self.join_started = None;
            step.events.push(ModuleEvent::JoinCompleted);
        }
    }

    /// Periodic beacon: ages neighbors and routes, then announces itself.
    pub fn on_tick(&mut self, now: SimTime) -> Step {
        let mut step = Step::default();
        let liveness = self.config.liveness;
        let dead: Vec<ModuleId> = self
            .neighbors
            .iter()
            .filter(|(_, n)| now.saturating_sub(n.last_heard) > liveness)
            .map(|(id, _)| *id)
            .collect();
        for peer in dead {
            self.remove_neighbor(peer);
        }
        self.routing.expire(now);
        self.own_seq = self.own_seq.wrapping_add(1);

        let heard: Vec<ModuleId> = self.neighbors.keys().copied().collect();
        step.emissions.push(self.broadcast(Body::Beacon { heard }));
        if self.joined {
            let entries = self.routing.make_advertisement(self.own_seq, now);
            step.emissions
                .push(self.broadcast(Body::RouteUpdate { entries }));
            return step;
        }

        match (self.join_started, self.neighbors.is_empty()) {
            (None, false) => {
                self.join_started = Some(now);
                step.events.push(ModuleEvent::JoinStarted);
            }
            (Some(_), true) => {
                self.join_started = None;
                self.join_accepted = false;
                step.events.push(ModuleEvent::JoinFailed);
            }
            _ => {}
        }
        if self.join_started.is_some() && !self.join_accepted {
            step.emissions.push(self.broadcast(Body::JoinRequest));
        }
        step
    }

    /// Handles a decoded frame received over the link from `from`.
    pub fn on_frame(&mut self, msg: Message, from: ModuleId, now: SimTime) -> Step {
        let mut step = Step::default();
        if from == self.id || msg.src == self.id {
            return step;
        }
        if let Err(ModuleError::NeighborTableFull(peer)) = self.add_neighbor(from, now) {
            step.events.push(ModuleEvent::NeighborRejected(peer));
            if matches!(msg.body, Body::JoinRequest) {
                let reply = self.message(
                    peer,
                    1,
                    TrafficClass::BestEffort,
                    msg.request_id,
                    Body::Error {
                        reason: ErrorReason::NeighborTableFull,
                    },
                );
                step.emissions
                    .push(Emission::now(Link::Neighbor(peer), reply));
            }
            return step;
        }
        if !msg.is_broadcast() && msg.dst != self.id {
            self.forward(msg, &mut step);
            return step;
        }

        match msg.body {
            Body::Beacon { heard } => {
                let interval = self.config.beacon_interval;
                let n = self.neighbors.get_mut(&from).expect("just inserted");
                n.beacon_received(now, interval);
                if heard.contains(&self.id) {
                    // a gap of more than one and a half intervals breaks the run
                    let consecutive = n.last_bidir.is_some_and(|t| {
                        now.saturating_sub(t).as_nanos() <= interval.as_nanos() * 3 / 2
                    });
                    n.contacts = if consecutive {
                        n.contacts.saturating_add(1)
                    } else {
                        1
                    };
                    n.last_bidir = Some(now);
                } else {
                    n.contacts = 0;
                    n.last_bidir = None;
                    self.routing.drop_via(from);
                }
                self.check_join(&mut step);
            }
            Body::RouteUpdate { entries } => {
                if self.is_usable(from) {
                    self.routing.merge_update(from, &entries, 1, now);
                    if self.joined {
                        self.membership.extend(entries.iter().map(|e| e.dst));
                    }
                }
            }
            Body::JoinRequest => {
                if self.joined {
                    let members: Vec<ModuleId> = self.membership.iter().copied().collect();
                    let reply = self.message(
                        from,
                        1,
                        TrafficClass::BestEffort,
                        msg.request_id,
                        Body::JoinAccept { members },
                    );
                    step.emissions
                        .push(Emission::now(Link::Neighbor(from), reply));
                }
            }
            Body::JoinAccept { members } => {
                self.membership.extend(members);
                self.join_accepted = true;
                self.check_join(&mut step);
            }
            Body::Leave => {
                self.membership.remove(&msg.src);
                if self.neighbors.contains_key(&msg.src) {
                    self.remove_neighbor(msg.src);
                }
            }
            Body::LoadRequest { addr, len } => {
                step.events.push(ModuleEvent::Served {
                    origin: msg.src,
                    request_id: msg.request_id,
                    ttl: msg.ttl,
                });
                let body = match self.local_load(
                    FabricAddress {
                        module: self.id,
                        offset: addr.offset,
                    },
                    len,
                ) {
                    Ok((data, timestamp)) => Body::LoadResponse { data, timestamp },
                    Err(_) => Body::Error {
                        reason: ErrorReason::OffsetOutOfRange,
                    },
                };
                step.emissions
                    .extend(self.originate(msg.src, msg.class, msg.request_id, body));
            }
            Body::StoreRequest {
                addr,
                timestamp,
                data,
            } => {
                step.events.push(ModuleEvent::Served {
                    origin: msg.src,
                    request_id: msg.request_id,
                    ttl: msg.ttl,
                });
                let target = FabricAddress {
                    module: self.id,
                    offset: addr.offset,
                };
                let body = match self.local_store(target, &data, timestamp, msg.src) {
                    Ok(_) => Body::StoreAck,
                    Err(_) => Body::Error {
                        reason: ErrorReason::OffsetOutOfRange,
                    },
                };
                step.emissions
                    .extend(self.originate(msg.src, msg.class, msg.request_id, body));
            }
            Body::LoadResponse { data, .. } => {
                if self.pending.remove(&msg.request_id).is_some() {
                    step.events.push(ModuleEvent::Completed {
                        request_id: msg.request_id,
                        payload_bytes: data.len(),
                    });
                }
            }
            Body::StoreAck => {
                if let Some(p) = self.pending.remove(&msg.request_id) {
                    step.events.push(ModuleEvent::Completed {
                        request_id: msg.request_id,
                        payload_bytes: p.payload_len,
                    });
                }
            }
            Body::Error { reason } => {
                if self.pending.remove(&msg.request_id).is_some() {
                    step.events.push(ModuleEvent::Rejected {
                        request_id: msg.request_id,
                        reason,
                    });
                }
            }
        }
        step
    }

    /// Relays a unicast message addressed elsewhere.
    fn forward(&mut self, mut msg: Message, step: &mut Step) {
        let is_request = matches!(
            msg.body,
            Body::LoadRequest { .. } | Body::StoreRequest { .. }
        );
        let bounce = |this: &Self, reason: ErrorReason, msg: &Message| {
            this.originate(msg.src, msg.class, msg.request_id, Body::Error { reason })
        };
        if msg.ttl <= 1 {
            if is_request {
                step.emissions
                    .extend(bounce(self, ErrorReason::TtlExpired, &msg));
            }
            return;
        }
        match self.route_to(msg.dst) {
            Some(hop) => {
                msg.ttl -= 1;
                step.emissions.push(Emission::now(Link::Neighbor(hop), msg));
            }
            None if is_request => {
                step.emissions
                    .extend(bounce(self, ErrorReason::DestinationUnknown, &msg))
            }
            None => {}
        }
    }

    /// Issues a load or store. Requests for the module's own addresses are
    /// served locally without touching the radio.
    pub fn initiate_request(
        &mut self,
        op: Operation,
        class: TrafficClass,
        now: SimTime,
    ) -> Result<Issued, ModuleError> {
        if !self.joined {
            return Err(ModuleError::NotJoined);
        }
        let target = op.target();
        let request_id = self.next_request_id;

        if target.module == self.id {
            self.next_request_id += 1;
            let outcome = match &op {
                Operation::Load { addr, len } => self
                    .store
                    .read_range(addr.offset, *len as u64)
                    .map(|(d, _)| d.len()),
                Operation::Store { addr, data } => self
                    .store
                    .apply_store(addr.offset, data, now.as_millis(), self.id)
                    .map(|_| data.len()),
            };
            return Ok(Issued::Loopback {
                request_id,
                outcome,
            });
        }

        let hop = self
            .route_to(target.module)
            .ok_or(ModuleError::NoRoute(target.module))?;
        self.next_request_id += 1;
        let payload_len = op.payload_len();
        let body = match op {
            Operation::Load { addr, len } => Body::LoadRequest { addr, len },
            Operation::Store { addr, data } => Body::StoreRequest {
                addr,
                timestamp: now.as_millis(),
                data,
            },
        };
        let deadline = now + self.config.request_timeout;
        self.pending.insert(
            request_id,
            Pending {
                target: target.module,
                issued_at: now,
                deadline,
                payload_len,
                class,
            },
        );
        let msg = self.message(target.module, self.config.ttl_max, class, request_id, body);
        Ok(Issued::Remote {
            request_id,
            emission: Emission::now(Link::Neighbor(hop), msg),
            deadline,
        })
    }

    /// Expires a pending request. Returns whether it was still outstanding.
    pub fn on_timeout(&mut self, request_id: u64) -> bool {
        self.pending.remove(&request_id).is_some()
    }
}
