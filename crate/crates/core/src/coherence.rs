//! Timestamped last-write-wins byte store.
//!
//! Each byte is owned by the write with the greatest `(timestamp, writer)`
//! pair. Unwritten bytes are owned by `(0, 0)` and read as zero. Records are
//! kept as maximal runs of bytes sharing an owner, so two stores holding the
//! same bytes compare equal regardless of the order writes arrived in.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::address::ModuleId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("range {offset}+{len} exceeds capacity {capacity}")]
pub struct OffsetOutOfRange {
    pub offset: u64,
    pub len: u64,
    pub capacity: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub data: Vec<u8>,
    pub ts: u64,
    pub writer: ModuleId,
}

impl Record {
    fn key(&self) -> (u64, ModuleId) {
        (self.ts, self.writer)
    }

    fn slice(&self, rel_start: u64, rel_end: u64) -> Record {
        Record {
            data: self.data[rel_start as usize..rel_end as usize].to_vec(),
            ts: self.ts,
            writer: self.writer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NvmStore {
    capacity: u64,
    records: BTreeMap<u64, Record>,
}

impl NvmStore {
    pub fn new(capacity: u64) -> Self {
        NvmStore {
            capacity,
            records: BTreeMap::new(),
        }
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    /// Start offsets and records, in address order.
    pub fn records(&self) -> impl Iterator<Item = (u64, &Record)> {
        self.records.iter().map(|(s, r)| (*s, r))
    }

    fn check(&self, offset: u64, len: u64) -> Result<u64, OffsetOutOfRange> {
        offset
            .checked_add(len)
            .filter(|end| *end <= self.capacity)
            .ok_or(OffsetOutOfRange {
                offset,
                len,
                capacity: self.capacity,
            })
    }

    /// Starts of records intersecting `[offset, end)`.
    fn overlapping(&self, offset: u64, end: u64) -> Vec<u64> {
        let mut starts = Vec::new();
        if let Some((s, r)) = self.records.range(..offset).next_back() {
            if s + r.data.len() as u64 > offset {
                starts.push(*s);
            }
        }
        starts.extend(self.records.range(offset..end).map(|(s, _)| *s));
        starts
    }

    /// Applies a timestamped write. Returns whether any byte changed owner.
    pub fn apply_store(
        &mut self,
        offset: u64,
        data: &[u8],
        ts: u64,
        writer: ModuleId,
    ) -> Result<bool, OffsetOutOfRange> {
        let end = self.check(offset, data.len() as u64)?;
        if data.is_empty() {
            return Ok(false);
        }
        let incoming = Record {
            data: data.to_vec(),
            ts,
            writer,
        };
        let key = incoming.key();
        let wins_unwritten = key > (0, ModuleId::UNASSIGNED);
        let in_slice = |a: u64, b: u64| incoming.slice(a - offset, b - offset);

        let mut pieces: Vec<(u64, Record)> = Vec::new();
        let mut applied = false;
        let mut cursor = offset;
        for start in self.overlapping(offset, end) {
            let rec = self.records.remove(&start).expect("listed record");
            let rec_end = start + rec.data.len() as u64;
            if start < offset {
                pieces.push((start, rec.slice(0, offset - start)));
            }
            let ov_start = start.max(offset);
            let ov_end = rec_end.min(end);
            if cursor < ov_start && wins_unwritten {
                pieces.push((cursor, in_slice(cursor, ov_start)));
                applied = true;
            }
            if key > rec.key() {
                pieces.push((ov_start, in_slice(ov_start, ov_end)));
                applied = true;
            } else {
                pieces.push((ov_start, rec.slice(ov_start - start, ov_end - start)));
            }
            if rec_end > end {
                pieces.push((end, rec.slice(end - start, rec_end - start)));
            }
            cursor = ov_end;
        }
        if cursor < end && wins_unwritten {
            pieces.push((cursor, in_slice(cursor, end)));
            applied = true;
        }

        let lo = pieces.first().map(|p| p.0).unwrap_or(offset);
        let hi = pieces
            .last()
            .map(|(s, r)| s + r.data.len() as u64)
            .unwrap_or(end);
        for (s, r) in pieces {
            self.records.insert(s, r);
        }
        self.coalesce(lo, hi);
        Ok(applied)
    }

    /// Merges contiguous runs with the same owner around `[lo, hi)`.
    fn coalesce(&mut self, lo: u64, hi: u64) {
        let first = self
            .records
            .range(..lo)
            .next_back()
            .map(|(s, _)| *s)
            .unwrap_or(lo);
        let mut starts: Vec<u64> = self.records.range(first..=hi).map(|(s, _)| *s).collect();
        starts.reverse();
        // walk right-to-left, folding each record into its left neighbour
        for pair in starts.windows(2) {
            let (right, left) = (pair[0], pair[1]);
            let l = &self.records[&left];
            let r = &self.records[&right];
            if left + l.data.len() as u64 == right && l.key() == r.key() {
                let r = self.records.remove(&right).unwrap();
                self.records
                    .get_mut(&left)
                    .unwrap()
                    .data
                    .extend_from_slice(&r.data);
            }
        }
    }

    /// Reconstructs `len` bytes at `offset` with the largest timestamp seen
    /// in that range (0 if untouched).
    pub fn read_range(&self, offset: u64, len: u64) -> Result<(Vec<u8>, u64), OffsetOutOfRange> {
        let end = self.check(offset, len)?;
        if len == 0 {
            return Ok((Vec::new(), 0));
        }
        let mut out = vec![0u8; len as usize];
        let mut max_ts = 0;
        for start in self.overlapping(offset, end) {
            let rec = &self.records[&start];
            let rec_end = start + rec.data.len() as u64;
            let a = start.max(offset);
            let b = rec_end.min(end);
            out[(a - offset) as usize..(b - offset) as usize]
                .copy_from_slice(&rec.data[(a - start) as usize..(b - start) as usize]);
            max_ts = max_ts.max(rec.ts);
        }
        Ok((out, max_ts))
    }

    /// Owner of one byte: `(value, ts, writer)`.
    pub fn byte_at(&self, offset: u64) -> Option<(u8, u64, ModuleId)> {
        if offset >= self.capacity {
            return None;
        }
        let hit = self
            .records
            .range(..=offset)
            .next_back()
            .filter(|(s, r)| offset < **s + r.data.len() as u64);
        Some(match hit {
            Some((s, r)) => (r.data[(offset - s) as usize], r.ts, r.writer),
            None => (0, 0, ModuleId::UNASSIGNED),
        })
    }
}
