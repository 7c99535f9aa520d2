//! Fabric-wide addressing.
//!
//! Every byte in the fabric is named by the module that holds it (a 48-bit,
//! MAC-like identifier) and a byte offset into that module's store. Hosts see
//! remote records through one extra virtual address bit above their hardware
//! address width.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Length of the canonical on-wire address encoding.
pub const ENCODED_ADDRESS_LEN: usize = 14;

const MODULE_ID_MASK: u64 = (1 << 48) - 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AddressError {
    #[error("offset {offset} is outside module capacity {capacity}")]
    OffsetOutOfRange { offset: u64, capacity: u64 },
    #[error("module id 0 is reserved")]
    ReservedModuleId,
    #[error("module id {0:#x} does not fit in 48 bits")]
    ModuleIdTooWide(u64),
    #[error("local address {addr:#x} is outside a {hw_bits}+1 bit space")]
    AddressOutOfSpace { addr: u64, hw_bits: u32 },
    #[error("remote offset {0:#x} is not mapped")]
    UnmappedRemote(u64),
    #[error("remote map ranges overlap or are empty")]
    OverlappingRanges,
    #[error("need {ENCODED_ADDRESS_LEN} bytes, got {0}")]
    TruncatedAddress(usize),
}

/// 48-bit module identifier. Zero means "unassigned" (or broadcast on the wire).
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(try_from = "u64", into = "u64")]
pub struct ModuleId(u64);

impl ModuleId {
    pub const UNASSIGNED: ModuleId = ModuleId(0);
    pub const MAX: ModuleId = ModuleId(MODULE_ID_MASK);

    pub fn new(raw: u64) -> Result<Self, AddressError> {
        if raw > MODULE_ID_MASK {
            return Err(AddressError::ModuleIdTooWide(raw));
        }
        Ok(ModuleId(raw))
    }

    /// Builds an id from the low 48 bits of `raw`.
    pub const fn from_low_bits(raw: u64) -> Self {
        ModuleId(raw & MODULE_ID_MASK)
    }

    pub const fn get(self) -> u64 {
        self.0
    }

    pub const fn is_unassigned(self) -> bool {
        self.0 == 0
    }

    pub fn to_be_bytes(self) -> [u8; 6] {
        let b = self.0.to_be_bytes();
        [b[2], b[3], b[4], b[5], b[6], b[7]]
    }

    pub fn from_be_bytes(b: [u8; 6]) -> Self {
        ModuleId(u64::from_be_bytes([
            0, 0, b[0], b[1], b[2], b[3], b[4], b[5],
        ]))
    }
}

impl TryFrom<u64> for ModuleId {
    type Error = AddressError;
    fn try_from(raw: u64) -> Result<Self, Self::Error> {
        ModuleId::new(raw)
    }
}

impl From<ModuleId> for u64 {
    fn from(id: ModuleId) -> u64 {
        id.0
    }
}

impl fmt::Display for ModuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A globally unique memory location: module plus byte offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FabricAddress {
    pub module: ModuleId,
    pub offset: u64,
}

impl FabricAddress {
    /// Checked constructor. The offset must fall inside `capacity`.
    pub fn new(module: ModuleId, offset: u64, capacity: u64) -> Result<Self, AddressError> {
        if module.is_unassigned() {
            return Err(AddressError::ReservedModuleId);
        }
        if offset >= capacity {
            return Err(AddressError::OffsetOutOfRange { offset, capacity });
        }
        Ok(FabricAddress { module, offset })
    }

    pub fn encode(&self) -> [u8; ENCODED_ADDRESS_LEN] {
        let mut out = [0u8; ENCODED_ADDRESS_LEN];
        out[..6].copy_from_slice(&self.module.to_be_bytes());
        out[6..].copy_from_slice(&self.offset.to_be_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, AddressError> {
        if bytes.len() < ENCODED_ADDRESS_LEN {
            return Err(AddressError::TruncatedAddress(bytes.len()));
        }
        let mut id = [0u8; 6];
        id.copy_from_slice(&bytes[..6]);
        let mut off = [0u8; 8];
        off.copy_from_slice(&bytes[6..ENCODED_ADDRESS_LEN]);
        Ok(FabricAddress {
            module: ModuleId::from_be_bytes(id),
            offset: u64::from_be_bytes(off),
        })
    }
}

impl fmt::Display for FabricAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:012x}:{:#x}", self.module.get(), self.offset)
    }
}

/// One contiguous slice of the remote region mapped onto a fabric range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RemoteRange {
    pub start: u64,
    pub len: u64,
    pub target: FabricAddress,
}

/// Result of translating a host-local address.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Translation {
    Local(u64),
    Remote(FabricAddress),
}

/// A host address space with one extra bit above `hw_bits` that redirects
/// into the fabric.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalAddressSpace {
    hw_bits: u32,
    remote_map: Vec<RemoteRange>,
}

impl LocalAddressSpace {
    /// `ranges` may be given in any order; they are sorted and checked for
    /// overlap.
    pub fn new(hw_bits: u32, mut ranges: Vec<RemoteRange>) -> Result<Self, AddressError> {
        assert!(hw_bits < 63, "hw_bits must leave room for the remote bit");
        ranges.sort_by_key(|r| r.start);
        let remote_limit = 1u64 << hw_bits;
        for (i, r) in ranges.iter().enumerate() {
            let end = r
                .start
                .checked_add(r.len)
                .ok_or(AddressError::OverlappingRanges)?;
            if r.len == 0 || end > remote_limit {
                return Err(AddressError::OverlappingRanges);
            }
            if let Some(next) = ranges.get(i + 1) {
                if end > next.start {
                    return Err(AddressError::OverlappingRanges);
                }
            }
        }
        Ok(LocalAddressSpace {
            hw_bits,
            remote_map: ranges,
        })
    }

    pub fn hw_bits(&self) -> u32 {
        self.hw_bits
    }

    pub fn ranges(&self) -> &[RemoteRange] {
        &self.remote_map
    }

    pub fn translate(&self, local_addr: u64) -> Result<Translation, AddressError> {
        let remote_bit = 1u64 << self.hw_bits;
        if local_addr >= remote_bit << 1 {
            return Err(AddressError::AddressOutOfSpace {
                addr: local_addr,
                hw_bits: self.hw_bits,
            });
        }
        if local_addr & remote_bit == 0 {
            return Ok(Translation::Local(local_addr));
        }
        let rel = local_addr - remote_bit;
        // last range starting at or before `rel`
        let idx = self.remote_map.partition_point(|r| r.start <= rel);
        let range = idx
            .checked_sub(1)
            .map(|i| &self.remote_map[i])
            .filter(|r| rel - r.start < r.len)
            .ok_or(AddressError::UnmappedRemote(rel))?;
        Ok(Translation::Remote(FabricAddress {
            module: range.target.module,
            offset: range.target.offset + (rel - range.start),
        }))
    }
}
