//! Frame codec for every protocol message.
//!
//! Layout (all integers big-endian):
//!
//! | offset | size | field          |
//! |-------:|-----:|----------------|
//! | 0      | 2    | magic `ED 9E`  |
//! | 2      | 1    | version `01`   |
//! | 3      | 1    | kind           |
//! | 4      | 6    | src module id  |
//! | 10     | 6    | dst module id  |
//! | 16     | 1    | ttl            |
//! | 17     | 1    | traffic class  |
//! | 18     | 8    | request id     |
//! | 26     | 2    | payload length |
//! | 28     | var  | payload        |
//!
//! Payloads per kind:
//!
//! - `Beacon`: heard neighbor ids, 6 bytes each
//! - `JoinRequest`, `Leave`, `StoreAck`: empty
//! - `JoinAccept`: member ids, 6 bytes each
//! - `RouteUpdate`: entries of dst(6) cost(2) seq(4)
//! - `LoadRequest`: address(14) length(4)
//! - `LoadResponse`: timestamp(8) length(4) data
//! - `StoreRequest`: address(14) timestamp(8) length(4) data
//! - `Error`: reason code(1)

use thiserror::Error;

use crate::address::{FabricAddress, ModuleId, ENCODED_ADDRESS_LEN};

pub const MAGIC: [u8; 2] = [0xED, 0x9E];
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 28;
pub const MAX_PAYLOAD: usize = u16::MAX as usize;
pub const MAX_FRAME_LEN: usize = HEADER_LEN + MAX_PAYLOAD;

const ID_LEN: usize = 6;
const ROUTE_ENTRY_LEN: usize = ID_LEN + 2 + 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("payload of {0} bytes exceeds {MAX_PAYLOAD}")]
    PayloadTooLarge(usize),
    #[error("invalid message: {0}")]
    InvalidMessage(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("frame truncated: {0} bytes")]
    TruncatedFrame(usize),
    #[error("unknown message kind {0}")]
    UnknownKind(u8),
    #[error("declared payload length {declared} but {actual} bytes follow")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("malformed {kind:?} body")]
    MalformedBody { kind: MessageKind },
    #[error("invalid header field: {0}")]
    InvalidField(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MessageKind {
    Beacon = 0,
    JoinRequest = 1,
    JoinAccept = 2,
    Leave = 3,
    RouteUpdate = 4,
    LoadRequest = 5,
    LoadResponse = 6,
    StoreRequest = 7,
    StoreAck = 8,
    Error = 9,
}

impl MessageKind {
    pub fn from_code(code: u8) -> Option<Self> {
        use MessageKind::*;
        Some(match code {
            0 => Beacon,
            1 => JoinRequest,
            2 => JoinAccept,
            3 => Leave,
            4 => RouteUpdate,
            5 => LoadRequest,
            6 => LoadResponse,
            7 => StoreRequest,
            8 => StoreAck,
            9 => Error,
            _ => return None,
        })
    }

    /// Kinds that may be sent to the broadcast address (dst = 0).
    pub fn may_broadcast(self) -> bool {
        matches!(
            self,
            MessageKind::Beacon
                | MessageKind::RouteUpdate
                | MessageKind::JoinRequest
                | MessageKind::Leave
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum TrafficClass {
    #[default]
    BestEffort,
    Preferential,
}

impl TrafficClass {
    pub fn code(self) -> u8 {
        match self {
            TrafficClass::BestEffort => 0,
            TrafficClass::Preferential => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(TrafficClass::BestEffort),
            1 => Some(TrafficClass::Preferential),
            _ => None,
        }
    }
}

/// Reason codes carried by `Error` messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum ErrorReason {
    DestinationUnknown = 1,
    TtlExpired = 2,
    OffsetOutOfRange = 3,
    NeighborTableFull = 4,
}

impl ErrorReason {
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(ErrorReason::DestinationUnknown),
            2 => Some(ErrorReason::TtlExpired),
            3 => Some(ErrorReason::OffsetOutOfRange),
            4 => Some(ErrorReason::NeighborTableFull),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RouteAdvert {
    pub dst: ModuleId,
    pub cost: u16,
    pub seq: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Body {
    Beacon {
        heard: Vec<ModuleId>,
    },
    JoinRequest,
    JoinAccept {
        members: Vec<ModuleId>,
    },
    Leave,
    RouteUpdate {
        entries: Vec<RouteAdvert>,
    },
    LoadRequest {
        addr: FabricAddress,
        len: u32,
    },
    LoadResponse {
        data: Vec<u8>,
        timestamp: u64,
    },
    StoreRequest {
        addr: FabricAddress,
        timestamp: u64,
        data: Vec<u8>,
    },
    StoreAck,
    Error {
        reason: ErrorReason,
    },
}

impl Body {
    pub fn kind(&self) -> MessageKind {
        match self {
            Body::Beacon { .. } => MessageKind::Beacon,
            Body::JoinRequest => MessageKind::JoinRequest,
            Body::JoinAccept { .. } => MessageKind::JoinAccept,
            Body::Leave => MessageKind::Leave,
            Body::RouteUpdate { .. } => MessageKind::RouteUpdate,
            Body::LoadRequest { .. } => MessageKind::LoadRequest,
            Body::LoadResponse { .. } => MessageKind::LoadResponse,
            Body::StoreRequest { .. } => MessageKind::StoreRequest,
            Body::StoreAck => MessageKind::StoreAck,
            Body::Error { .. } => MessageKind::Error,
        }
    }

    fn encoded_len(&self) -> usize {
        match self {
            Body::Beacon { heard: ids } | Body::JoinAccept { members: ids } => ids.len() * ID_LEN,
            Body::JoinRequest | Body::Leave | Body::StoreAck => 0,
            Body::RouteUpdate { entries } => entries.len() * ROUTE_ENTRY_LEN,
            Body::LoadRequest { .. } => ENCODED_ADDRESS_LEN + 4,
            Body::LoadResponse { data, .. } => 8 + 4 + data.len(),
            Body::StoreRequest { data, .. } => ENCODED_ADDRESS_LEN + 8 + 4 + data.len(),
            Body::Error { .. } => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub src: ModuleId,
    /// `ModuleId::UNASSIGNED` addresses every module in radio range.
    pub dst: ModuleId,
    pub ttl: u8,
    pub class: TrafficClass,
    pub request_id: u64,
    pub body: Body,
}

impl Message {
    pub fn kind(&self) -> MessageKind {
        self.body.kind()
    }

    pub fn is_broadcast(&self) -> bool {
        self.dst.is_unassigned()
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.body.encoded_len()
    }

    fn check_ids(&self) -> Result<(), &'static str> {
        if self.src.is_unassigned() {
            return Err("src module id is 0");
        }
        if self.dst.is_unassigned() && !self.kind().may_broadcast() {
            return Err("dst module id is 0 on a unicast-only kind");
        }
        Ok(())
    }
}

/// Encoded bytes of one message.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Frame(Vec<u8>);

impl Frame {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }
}

fn data_len_u32(len: usize) -> Result<u32, EncodeError> {
    u32::try_from(len).map_err(|_| EncodeError::PayloadTooLarge(len))
}

pub fn encode_frame(msg: &Message) -> Result<Frame, EncodeError> {
    msg.check_ids().map_err(EncodeError::InvalidMessage)?;
    let payload_len = msg.body.encoded_len();
    if payload_len > MAX_PAYLOAD {
        return Err(EncodeError::PayloadTooLarge(payload_len));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + payload_len);
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(msg.kind() as u8);
    out.extend_from_slice(&msg.src.to_be_bytes());
    out.extend_from_slice(&msg.dst.to_be_bytes());
    out.push(msg.ttl);
    out.push(msg.class.code());
    out.extend_from_slice(&msg.request_id.to_be_bytes());
    out.extend_from_slice(&(payload_len as u16).to_be_bytes());

    match &msg.body {
        Body::Beacon { heard: ids } | Body::JoinAccept { members: ids } => {
            for id in ids {
                out.extend_from_slice(&id.to_be_bytes());
            }
        }
        Body::JoinRequest | Body::Leave | Body::StoreAck => {}
        Body::RouteUpdate { entries } => {
            for e in entries {
                out.extend_from_slice(&e.dst.to_be_bytes());
                out.extend_from_slice(&e.cost.to_be_bytes());
                out.extend_from_slice(&e.seq.to_be_bytes());
            }
        }
        Body::LoadRequest { addr, len } => {
            out.extend_from_slice(&addr.encode());
            out.extend_from_slice(&len.to_be_bytes());
        }
        Body::LoadResponse { data, timestamp } => {
            out.extend_from_slice(&timestamp.to_be_bytes());
            out.extend_from_slice(&data_len_u32(data.len())?.to_be_bytes());
            out.extend_from_slice(data);
        }
        Body::StoreRequest {
            addr,
            timestamp,
            data,
        } => {
            out.extend_from_slice(&addr.encode());
            out.extend_from_slice(&timestamp.to_be_bytes());
            out.extend_from_slice(&data_len_u32(data.len())?.to_be_bytes());
            out.extend_from_slice(data);
        }
        Body::Error { reason } => out.push(*reason as u8),
    }
    debug_assert_eq!(out.len(), HEADER_LEN + payload_len);
    Ok(Frame(out))
}

/// Bounds-checked big-endian reader over a body slice.
struct Cursor<'a> {
    buf: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        if self.buf.len() < n {
            return None;
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Some(head)
    }

    fn id(&mut self) -> Option<ModuleId> {
        self.take(ID_LEN)
            .map(|b| ModuleId::from_be_bytes(b.try_into().unwrap()))
    }

    fn u16(&mut self) -> Option<u16> {
        self.take(2)
            .map(|b| u16::from_be_bytes(b.try_into().unwrap()))
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4)
            .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8)
            .map(|b| u64::from_be_bytes(b.try_into().unwrap()))
    }

    fn addr(&mut self) -> Option<FabricAddress> {
        self.take(ENCODED_ADDRESS_LEN)
            .and_then(|b| FabricAddress::decode(b).ok())
    }

    fn data(&mut self) -> Option<Vec<u8>> {
        let n = self.u32()? as usize;
        self.take(n).map(<[u8]>::to_vec)
    }

    fn finished(&self) -> bool {
        self.buf.is_empty()
    }
}

fn decode_body(kind: MessageKind, payload: &[u8]) -> Option<Body> {
    let mut c = Cursor { buf: payload };
    let body = match kind {
        MessageKind::Beacon | MessageKind::JoinAccept => {
            if !payload.len().is_multiple_of(ID_LEN) {
                return None;
            }
            let ids = (0..payload.len() / ID_LEN)
                .map(|_| c.id())
                .collect::<Option<Vec<_>>>()?;
            if kind == MessageKind::Beacon {
                Body::Beacon { heard: ids }
            } else {
                Body::JoinAccept { members: ids }
            }
        }
        MessageKind::JoinRequest => Body::JoinRequest,
        MessageKind::Leave => Body::Leave,
        MessageKind::StoreAck => Body::StoreAck,
        MessageKind::RouteUpdate => {
            if !payload.len().is_multiple_of(ROUTE_ENTRY_LEN) {
                return None;
            }
            let entries = (0..payload.len() / ROUTE_ENTRY_LEN)
                .map(|_| {
                    Some(RouteAdvert {
                        dst: c.id()?,
                        cost: c.u16()?,
                        seq: c.u32()?,
                    })
                })
                .collect::<Option<Vec<_>>>()?;
            Body::RouteUpdate { entries }
        }
        MessageKind::LoadRequest => Body::LoadRequest {
            addr: c.addr()?,
            len: c.u32()?,
        },
        MessageKind::LoadResponse => {
            let timestamp = c.u64()?;
            Body::LoadResponse {
                data: c.data()?,
                timestamp,
            }
        }
        MessageKind::StoreRequest => {
            let addr = c.addr()?;
            let timestamp = c.u64()?;
            Body::StoreRequest {
                addr,
                timestamp,
                data: c.data()?,
            }
        }
        MessageKind::Error => Body::Error {
            reason: ErrorReason::from_code(c.take(1)?[0])?,
        },
    };
    c.finished().then_some(body)
}

pub fn decode_frame(bytes: &[u8]) -> Result<Message, DecodeError> {
    if bytes.len() < 2 {
        return Err(DecodeError::TruncatedFrame(bytes.len()));
    }
    if bytes[..2] != MAGIC {
        return Err(DecodeError::BadMagic);
    }
    if bytes.len() < 3 {
        return Err(DecodeError::TruncatedFrame(bytes.len()));
    }
    if bytes[2] != VERSION {
        return Err(DecodeError::BadVersion(bytes[2]));
    }
    if bytes.len() < HEADER_LEN {
        return Err(DecodeError::TruncatedFrame(bytes.len()));
    }
    let kind = MessageKind::from_code(bytes[3]).ok_or(DecodeError::UnknownKind(bytes[3]))?;
    let declared = u16::from_be_bytes([bytes[26], bytes[27]]) as usize;
    let actual = bytes.len() - HEADER_LEN;
    if declared != actual {
        return Err(DecodeError::LengthMismatch { declared, actual });
    }

    let src = ModuleId::from_be_bytes(bytes[4..10].try_into().unwrap());
    let dst = ModuleId::from_be_bytes(bytes[10..16].try_into().unwrap());
    let ttl = bytes[16];
    let class =
        TrafficClass::from_code(bytes[17]).ok_or(DecodeError::InvalidField("traffic class"))?;
    let request_id = u64::from_be_bytes(bytes[18..26].try_into().unwrap());
    let body =
        decode_body(kind, &bytes[HEADER_LEN..]).ok_or(DecodeError::MalformedBody { kind })?;

    let msg = Message {
        src,
        dst,
        ttl,
        class,
        request_id,
        body,
    };
    msg.check_ids().map_err(DecodeError::InvalidField)?;
    Ok(msg)
}
