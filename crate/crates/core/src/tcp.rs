//! Connection-oriented baseline transport used for comparison runs.
//!
//! A mobile client attaches to the nearest fixed access point with a
//! three-message handshake and then exchanges request/response segments
//! with it. Whenever the nearest access point changes the connection is
//! torn down: in-flight requests fail and the handshake starts over.

use std::collections::{BTreeMap, VecDeque};

use crate::address::ModuleId;
use crate::time::SimTime;

/// Per-segment header overhead (link + network + transport), bytes.
pub const SEGMENT_OVERHEAD: usize = 60;
/// The SYN retransmission timeout doubles at most this many times.
pub const MAX_SYN_BACKOFF: u32 = 3;
/// Request segments carry an address and length on top of the header.
pub const REQUEST_BODY: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment {
    Syn,
    SynAck,
    Ack,
    Request { request_id: u64, len: u32 },
    Response { request_id: u64, len: u32 },
}

impl Segment {
    pub fn wire_len(&self) -> usize {
        SEGMENT_OVERHEAD
            + match self {
                Segment::Syn | Segment::SynAck | Segment::Ack => 0,
                Segment::Request { .. } => REQUEST_BODY,
                Segment::Response { len, .. } => *len as usize,
            }
    }

    /// Access-point side: stateless reply to a client segment.
    pub fn reply(&self) -> Option<Segment> {
        match *self {
            Segment::Syn => Some(Segment::SynAck),
            Segment::Request { request_id, len } => Some(Segment::Response { request_id, len }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TcpAction {
    Send {
        to: ModuleId,
        segment: Segment,
    },
    Completed {
        request_id: u64,
        bytes: usize,
    },
    /// Lost to a connection teardown.
    Dropped {
        request_id: u64,
    },
    TimedOut {
        request_id: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConnState {
    Idle,
    /// `attempts` SYNs sent so far; each retry doubles the wait.
    Handshaking {
        ap: ModuleId,
        retry_at: SimTime,
        attempts: u32,
    },
    Connected {
        ap: ModuleId,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Outstanding {
    len: u32,
    sent_at: SimTime,
    deadline: SimTime,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TcpClient {
    state: ConnState,
    syn_rto: SimTime,
    data_rto: SimTime,
    request_timeout: SimTime,
    outstanding: BTreeMap<u64, Outstanding>,
    backlog: VecDeque<(u64, u32, SimTime)>,
    handoffs: u32,
}

impl TcpClient {
    pub fn new(syn_rto: SimTime, data_rto: SimTime, request_timeout: SimTime) -> Self {
        TcpClient {
            state: ConnState::Idle,
            syn_rto,
            data_rto,
            request_timeout,
            outstanding: BTreeMap::new(),
            backlog: VecDeque::new(),
            handoffs: 0,
        }
    }

    pub fn state(&self) -> ConnState {
        self.state
    }

    pub fn handoffs(&self) -> u32 {
        self.handoffs
    }

    fn ap(&self) -> Option<ModuleId> {
        match self.state {
            ConnState::Idle => None,
            ConnState::Handshaking { ap, .. } | ConnState::Connected { ap } => Some(ap),
        }
    }

    fn teardown(&mut self, out: &mut Vec<TcpAction>) {
        for id in std::mem::take(&mut self.outstanding).into_keys() {
            out.push(TcpAction::Dropped { request_id: id });
        }
        self.state = ConnState::Idle;
    }

    /// Re-evaluates attachment against the currently nearest access point.
    pub fn on_scan(&mut self, nearest: Option<ModuleId>, now: SimTime) -> Vec<TcpAction> {
        let mut out = Vec::new();
        if self.ap() == nearest {
            return out;
        }
        if self.ap().is_some() {
            self.handoffs += 1;
            self.teardown(&mut out);
        }
        if let Some(ap) = nearest {
            self.state = ConnState::Handshaking {
                ap,
                retry_at: now + self.syn_rto,
                attempts: 1,
            };
            out.push(TcpAction::Send {
                to: ap,
                segment: Segment::Syn,
            });
        }
        out
    }

    pub fn submit(&mut self, request_id: u64, len: u32, now: SimTime) -> Vec<TcpAction> {
        let deadline = now + self.request_timeout;
        match self.state {
            ConnState::Connected { ap } => {
                self.outstanding.insert(
                    request_id,
                    Outstanding {
                        len,
                        sent_at: now,
                        deadline,
                    },
                );
                vec![TcpAction::Send {
                    to: ap,
                    segment: Segment::Request { request_id, len },
                }]
            }
            _ => {
                self.backlog.push_back((request_id, len, deadline));
                Vec::new()
            }
        }
    }

    pub fn on_segment(&mut self, from: ModuleId, segment: Segment, now: SimTime) -> Vec<TcpAction> {
        let mut out = Vec::new();
        match (self.state, segment) {
            (ConnState::Handshaking { ap, .. }, Segment::SynAck) if ap == from => {
                self.state = ConnState::Connected { ap };
                out.push(TcpAction::Send {
                    to: ap,
                    segment: Segment::Ack,
                });
                while let Some((request_id, len, deadline)) = self.backlog.pop_front() {
                    if deadline <= now {
                        out.push(TcpAction::TimedOut { request_id });
                        continue;
                    }
                    self.outstanding.insert(
                        request_id,
                        Outstanding {
                            len,
                            sent_at: now,
                            deadline,
                        },
                    );
                    out.push(TcpAction::Send {
                        to: ap,
                        segment: Segment::Request { request_id, len },
                    });
                }
            }
            (ConnState::Connected { ap }, Segment::Response { request_id, len })
                if ap == from && self.outstanding.remove(&request_id).is_some() =>
            {
                out.push(TcpAction::Completed {
                    request_id,
                    bytes: len as usize,
                });
            }
            _ => {}
        }
        out
    }

    /// Retransmissions and expiries due at `now`.
    pub fn on_timer(&mut self, now: SimTime) -> Vec<TcpAction> {
        let mut out = Vec::new();
        while self.backlog.front().is_some_and(|b| b.2 <= now) {
            let (request_id, ..) = self.backlog.pop_front().unwrap();
            out.push(TcpAction::TimedOut { request_id });
        }
        match self.state {
            ConnState::Handshaking {
                ap,
                retry_at,
                attempts,
            } if retry_at <= now => {
                let wait = self.syn_rto.times(1 << attempts.min(MAX_SYN_BACKOFF));
                self.state = ConnState::Handshaking {
                    ap,
                    retry_at: now + wait,
                    attempts: attempts + 1,
                };
                out.push(TcpAction::Send {
                    to: ap,
                    segment: Segment::Syn,
                });
            }
            ConnState::Connected { ap } => {
                let expired: Vec<u64> = self
                    .outstanding
                    .iter()
                    .filter(|(_, o)| o.deadline <= now)
                    .map(|(id, _)| *id)
                    .collect();
                for request_id in expired {
                    self.outstanding.remove(&request_id);
                    out.push(TcpAction::TimedOut { request_id });
                }
                for (request_id, o) in self.outstanding.iter_mut() {
                    if o.sent_at + self.data_rto <= now {
                        o.sent_at = now;
                        out.push(TcpAction::Send {
                            to: ap,
                            segment: Segment::Request {
                                request_id: *request_id,
                                len: o.len,
                            },
                        });
                    }
                }
            }
            _ => {}
        }
        out
    }
}
