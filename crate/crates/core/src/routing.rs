//! Destination-sequenced distance-vector routing over the module mesh.
//!
//! Each module advertises itself with a sequence number that grows once per
//! beacon interval, plus every route it currently holds. A route is replaced
//! by a fresher sequence number, or by an equal sequence number with a
//! strictly lower cost.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::address::ModuleId;
use crate::time::SimTime;
use crate::wire::RouteAdvert;

/// Cost value treated as unreachable.
pub const INFINITE_COST: u16 = u16::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("no route to module {0}")]
pub struct NoRoute(pub ModuleId);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RouteEntry {
    pub next_hop: ModuleId,
    pub cost: u16,
    pub seq: u32,
    pub learned_at: SimTime,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutingTable {
    own: ModuleId,
    expiry: SimTime,
    entries: BTreeMap<ModuleId, RouteEntry>,
    /// Highest sequence number of each dropped route. Only strictly newer
    /// adverts may bring the destination back.
    floors: BTreeMap<ModuleId, u32>,
}

impl RoutingTable {
    pub fn new(own: ModuleId, expiry: SimTime) -> Self {
        RoutingTable {
            own,
            expiry,
            entries: BTreeMap::new(),
            floors: BTreeMap::new(),
        }
    }

    pub fn own_id(&self) -> ModuleId {
        self.own
    }

    pub fn entries(&self) -> impl Iterator<Item = (ModuleId, &RouteEntry)> {
        self.entries.iter().map(|(d, e)| (*d, e))
    }

    pub fn get(&self, dst: ModuleId) -> Option<&RouteEntry> {
        self.entries.get(&dst)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Cost to `dst`; 0 for the table's own module.
    pub fn cost(&self, dst: ModuleId) -> Option<u16> {
        if dst == self.own {
            return Some(0);
        }
        self.entries.get(&dst).map(|e| e.cost)
    }

    fn drop_entry(&mut self, dst: ModuleId) {
        if let Some(e) = self.entries.remove(&dst) {
            let floor = self.floors.entry(dst).or_insert(0);
            *floor = (*floor).max(e.seq);
        }
    }

    /// Drops entries not refreshed within the expiry window.
    pub fn expire(&mut self, now: SimTime) -> bool {
        let stale: Vec<ModuleId> = self
            .entries
            .iter()
            .filter(|(_, e)| now.saturating_sub(e.learned_at) > self.expiry)
            .map(|(d, _)| *d)
            .collect();
        for d in &stale {
            self.drop_entry(*d);
        }
        !stale.is_empty()
    }

    /// Drops every route whose next hop is `neighbor`.
    pub fn drop_via(&mut self, neighbor: ModuleId) -> bool {
        let via: Vec<ModuleId> = self
            .entries
            .iter()
            .filter(|(_, e)| e.next_hop == neighbor)
            .map(|(d, _)| *d)
            .collect();
        for d in &via {
            self.drop_entry(*d);
        }
        !via.is_empty()
    }

    /// Merges an advertisement heard from neighbor `from`. Returns whether the
    /// table changed.
    pub fn merge_update(
        &mut self,
        from: ModuleId,
        advert: &[RouteAdvert],
        link_cost: u16,
        now: SimTime,
    ) -> bool {
        let mut changed = self.expire(now);
        for a in advert {
            if a.dst == self.own || a.dst.is_unassigned() {
                continue;
            }
            let total = a.cost.saturating_add(link_cost);
            if total == INFINITE_COST {
                continue;
            }
            if self.floors.get(&a.dst).is_some_and(|f| a.seq <= *f) {
                continue;
            }
            let adopt = match self.entries.get(&a.dst) {
                None => true,
                Some(e) if a.seq > e.seq => {
                    // A fresher sequence number over a longer path is held back
                    // until the incumbent path stops delivering fresh numbers,
                    // so a slow shortest path is not displaced by a race.
                    total <= e.cost || e.next_hop == from || a.seq >= e.seq.saturating_add(2)
                }
                Some(e) if a.seq == e.seq => {
                    total < e.cost
                        || (total == e.cost && e.learned_at == now && from < e.next_hop)
                        || (e.next_hop == from && total != e.cost)
                }
                Some(_) => false,
            };
            if adopt {
                self.entries.insert(
                    a.dst,
                    RouteEntry {
                        next_hop: from,
                        cost: total,
                        seq: a.seq,
                        learned_at: now,
                    },
                );
                changed = true;
            }
        }
        changed
    }

    /// Next hop toward `dst`, falling back to the route toward `gateway`.
    pub fn next_hop(&self, dst: ModuleId, gateway: Option<ModuleId>) -> Result<ModuleId, NoRoute> {
        if let Some(e) = self.entries.get(&dst) {
            return Ok(e.next_hop);
        }
        gateway
            .filter(|g| *g != self.own && *g != dst)
            .and_then(|g| self.entries.get(&g))
            .map(|e| e.next_hop)
            .ok_or(NoRoute(dst))
    }

    /// Self entry followed by every live route, in destination order.
    pub fn make_advertisement(&self, own_seq: u32, now: SimTime) -> Vec<RouteAdvert> {
        let mut out = vec![RouteAdvert {
            dst: self.own,
            cost: 0,
            seq: own_seq,
        }];
        out.extend(
            self.entries
                .iter()
                .filter(|(_, e)| now.saturating_sub(e.learned_at) <= self.expiry)
                .map(|(d, e)| RouteAdvert {
                    dst: *d,
                    cost: e.cost,
                    seq: e.seq,
                }),
        );
        out
    }
}
