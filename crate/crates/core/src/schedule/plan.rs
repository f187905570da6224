//! Mutable production plan: every entry indexed by resource and by product,
//! with a normalization pass that restores the schedule invariants after a
//! mutation by pushing entries right.
//!
//! Invariants maintained at quiescence:
//! - product chains are contiguous: `release` of entry `k` equals `start` of
//!   entry `k+1` (a resource holds the part until the next one takes it);
//! - the work spans of one resource do not overlap and keep the resource's
//!   gap `delta` between the end of one entry and the start of the next;
//!   holds are not exclusive (a held part waits in the resource's tray), so
//!   the precedence graph stays acyclic and pushes always settle;
//! - entries only ever move later, never earlier, and their relative order
//!   per resource is preserved.

use super::{
    EventSpec, ProductId, ProductSchedule, ProductState, ResourceId, ResourceSchedule,
    ScheduledEvent, Span, Tick,
};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct EntryId(pub u64);

#[derive(Clone, Debug)]
pub struct PlanEntry {
    pub id: EntryId,
    pub event: EventSpec,
    pub product: ProductId,
    pub resource: ResourceId,
    pub start: Tick,
    pub end: Tick,
    /// When the product leaves the resource; `>= end`, covers holds.
    pub release: Tick,
    /// Set once execution has started the entry: its times are facts and the
    /// normalizer must not move them (release may still stretch).
    pub pinned: bool,
}

impl PlanEntry {
    pub fn work_span(&self) -> Span {
        Span::new(self.start, self.end)
    }

    pub fn dur(&self) -> Tick {
        self.end - self.start
    }
}

#[derive(Clone, Debug)]
pub struct ProductPlan {
    pub product: ProductId,
    pub initial_state: ProductState,
    /// Release tick of the product into the system; entry 0 cannot start earlier.
    pub arrival: Tick,
    pub chain: Vec<EntryId>,
}

#[derive(Clone, Debug, Default)]
pub struct PlanState {
    next_id: u64,
    entries: BTreeMap<EntryId, PlanEntry>,
    resources: BTreeMap<ResourceId, Vec<EntryId>>,
    deltas: BTreeMap<ResourceId, Tick>,
    products: BTreeMap<ProductId, ProductPlan>,
    pending: BTreeSet<EntryId>,
}

impl PlanState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a resource with the gap it must keep between operations
    /// (machines use the scenario delta, robots zero).
    pub fn add_resource(&mut self, resource: impl Into<ResourceId>, delta: Tick) {
        let resource = resource.into();
        self.resources.entry(resource.clone()).or_default();
        self.deltas.insert(resource, delta);
    }

    pub fn add_product(
        &mut self,
        product: impl Into<ProductId>,
        initial_state: ProductState,
        arrival: Tick,
    ) {
        let product = product.into();
        self.products.insert(
            product.clone(),
            ProductPlan {
                product,
                initial_state,
                arrival,
                chain: Vec::new(),
            },
        );
    }

    pub fn delta_of(&self, resource: &ResourceId) -> Tick {
        self.deltas.get(resource).copied().unwrap_or(0)
    }

    pub fn entry(&self, id: EntryId) -> Option<&PlanEntry> {
        self.entries.get(&id)
    }

    pub fn product(&self, product: &ProductId) -> Option<&ProductPlan> {
        self.products.get(product)
    }

    pub fn products(&self) -> impl Iterator<Item = &ProductPlan> {
        self.products.values()
    }

    pub fn resource_ids(&self) -> impl Iterator<Item = &ResourceId> {
        self.resources.keys()
    }

    pub fn resource_entry_ids(&self, resource: &ResourceId) -> &[EntryId] {
        self.resources.get(resource).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Position of an entry in its product chain.
    pub fn chain_pos(&self, id: EntryId) -> Option<usize> {
        let e = self.entries.get(&id)?;
        self.products
            .get(&e.product)?
            .chain
            .iter()
            .position(|&x| x == id)
    }

    fn resource_pos(&self, id: EntryId) -> Option<(ResourceId, usize)> {
        let e = self.entries.get(&id)?;
        let pos = self
            .resources
            .get(&e.resource)?
            .iter()
            .position(|&x| x == id)?;
        Some((e.resource.clone(), pos))
    }

    /// Append an entry at the end of a product's chain (initial construction).
    pub fn append_entry(
        &mut self,
        product: &ProductId,
        event: EventSpec,
        resource: &ResourceId,
        start: Tick,
        dur: Tick,
    ) -> EntryId {
        let pos = self.products.get(product).map(|p| p.chain.len()).unwrap_or(0);
        self.insert_entry_at(product, pos, event, resource, start, dur)
    }

    /// Splice an entry into a product chain at `chain_pos`.
    pub fn insert_entry_at(
        &mut self,
        product: &ProductId,
        chain_pos: usize,
        event: EventSpec,
        resource: &ResourceId,
        start: Tick,
        dur: Tick,
    ) -> EntryId {
        assert!(dur > 0, "entry duration must be positive");
        let id = EntryId(self.next_id);
        self.next_id += 1;
        let entry = PlanEntry {
            id,
            event,
            product: product.clone(),
            resource: resource.clone(),
            start,
            end: start + dur,
            release: start + dur,
            pinned: false,
        };
        self.entries.insert(id, entry);

        let plan = self
            .products
            .get_mut(product)
            .unwrap_or_else(|| panic!("unknown product {product}"));
        plan.chain.insert(chain_pos, id);

        let seq = self
            .resources
            .get_mut(resource)
            .unwrap_or_else(|| panic!("unknown resource {resource}"));
        let at = seq.partition_point(|&other| {
            let o = &self.entries[&other];
            (o.start, other) < (start, id)
        });
        seq.insert(at, id);

        // The new entry and both chain neighbors need their constraints and
        // releases re-examined, as does whatever follows on the resource.
        self.seed(id);
        self.seed_chain_neighbors(product, chain_pos);
        self.seed_resource_successor(id);
        id
    }

    /// Remove an entry from the plan entirely.
    pub fn remove_entry(&mut self, id: EntryId) -> Option<PlanEntry> {
        let entry = self.entries.remove(&id)?;
        if let Some(plan) = self.products.get_mut(&entry.product) {
            if let Some(pos) = plan.chain.iter().position(|&x| x == id) {
                plan.chain.remove(pos);
                // The predecessor's release and the successor's hold context change.
                self.seed_chain_neighbors(&entry.product.clone(), pos);
            }
        }
        if let Some(seq) = self.resources.get_mut(&entry.resource) {
            seq.retain(|&x| x != id);
        }
        self.pending.remove(&id);
        Some(entry)
    }

    /// Force an entry's start (used to apply an insertion shift). Length is
    /// preserved; the normalizer propagates the consequences. Pinned entries
    /// are execution facts and never move.
    pub fn push_entry_to(&mut self, id: EntryId, new_start: Tick) {
        let (dur, old_start) = match self.entries.get(&id) {
            Some(e) if !e.pinned => (e.dur(), e.start),
            _ => return,
        };
        if new_start <= old_start {
            return;
        }
        {
            let e = self.entries.get_mut(&id).unwrap();
            e.start = new_start;
            e.end = new_start + dur;
            e.release = e.release.max(e.end);
        }
        self.seed(id);
        self.seed_resource_successor(id);
        self.resort(id);
        if let Some(pos) = self.chain_pos(id) {
            let product = self.entries[&id].product.clone();
            self.seed_chain_neighbors(&product, pos);
            if let Some(plan) = self.products.get(&product) {
                if pos + 1 < plan.chain.len() {
                    self.seed(plan.chain[pos + 1]);
                }
            }
        }
        self.seed_resource_successor(id);
    }

    /// Record execution facts: the entry ran (or is running) at these times.
    pub fn pin_times(&mut self, id: EntryId, start: Tick, end: Tick) {
        let Some(e) = self.entries.get_mut(&id) else { return };
        e.start = start;
        e.end = end;
        e.release = e.release.max(end);
        e.pinned = true;
        self.seed(id);
        self.seed_resource_successor(id);
        self.resort(id);
        if let Some(pos) = self.chain_pos(id) {
            let product = self.entries[&id].product.clone();
            self.seed_chain_neighbors(&product, pos);
            if let Some(plan) = self.products.get(&product) {
                if pos + 1 < plan.chain.len() {
                    self.seed(plan.chain[pos + 1]);
                }
            }
        }
        self.seed_resource_successor(id);
    }

    fn seed(&mut self, id: EntryId) {
        if self.entries.contains_key(&id) {
            self.pending.insert(id);
        }
    }

    fn seed_chain_neighbors(&mut self, product: &ProductId, pos: usize) {
        let Some(plan) = self.products.get(product) else { return };
        let mut ids = Vec::new();
        if pos > 0 {
            if let Some(&prev) = plan.chain.get(pos - 1) {
                ids.push(prev);
            }
        }
        if let Some(&here) = plan.chain.get(pos) {
            ids.push(here);
        }
        for id in ids {
            self.seed(id);
        }
    }

    fn seed_resource_successor(&mut self, id: EntryId) {
        if let Some((resource, pos)) = self.resource_pos(id) {
            if let Some(&succ) = self.resources[&resource].get(pos + 1) {
                self.seed(succ);
            }
        }
    }

    /// Keep a resource's sequence sorted by (start, id) after `id` moved
    /// right: the resource simply serves a delayed entry later. Without this
    /// a stale sequence position makes every later entry wait for the
    /// delayed one, and interlocked products can push each other forever.
    fn resort(&mut self, id: EntryId) {
        let Some((resource, mut pos)) = self.resource_pos(id) else { return };
        let key = {
            let e = &self.entries[&id];
            (e.start, e.id)
        };
        while let Some(&next) = self.resources[&resource].get(pos + 1) {
            let next_key = {
                let e = &self.entries[&next];
                (e.start, e.id)
            };
            if next_key >= key {
                break;
            }
            let seq = self.resources.get_mut(&resource).unwrap();
            seq.swap(pos, pos + 1);
            pos += 1;
            // The bubbled entry gains a new predecessor; whatever now
            // follows it must respect its end.
            self.seed(id);
            if let Some(&after) = self.resources[&resource].get(pos + 1) {
                self.seed(after);
            }
        }
    }

    /// Drain the worklist until every entry satisfies its constraints.
    /// Entries only move right, so this terminates.
    pub fn normalize(&mut self) {
        let mut steps: u64 = 0;
        while let Some(id) = self.pending.pop_first() {
            self.process(id);
            steps += 1;
            if steps > 10_000_000 {
                panic!(
                    "normalize did not quiesce after {steps} steps; last entry {:?}\nbinding chain:\n{}",
                    self.entries.get(&id),
                    self.binding_chain(id, 120)
                );
            }
        }
    }

    /// Debug helper: walk the binding constraints backwards from an entry.
    fn binding_chain(&self, id: EntryId, hops: usize) -> String {
        let mut out = String::new();
        let mut cur = id;
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..hops {
            if !seen.insert(cur) {
                out.push_str(&format!("  CYCLE back to {cur:?}\n"));
                break;
            }
            let Some(e) = self.entries.get(&cur) else { break };
            out.push_str(&format!(
                "  {:?} {} on {} prod {} [{}, {}) rel {}\n",
                e.id, e.event.id, e.resource, e.product, e.start, e.end, e.release
            ));
            let pos = self.chain_pos(cur);
            let req_prod = pos.and_then(|p| {
                if p == 0 {
                    None
                } else {
                    self.products[&e.product].chain.get(p - 1).copied()
                }
            });
            let req_res = self.resource_pos(cur).and_then(|(r, rp)| {
                if rp == 0 {
                    None
                } else {
                    self.resources[&r].get(rp - 1).copied()
                }
            });
            // Follow whichever predecessor binds the current start.
            let next = match (req_prod, req_res) {
                (Some(p), Some(r)) => {
                    let pe = &self.entries[&p];
                    let re = &self.entries[&r];
                    if pe.end >= re.end { p } else { r }
                }
                (Some(p), None) => p,
                (None, Some(r)) => r,
                (None, None) => break,
            };
            cur = next;
        }
        out
    }

    fn process(&mut self, id: EntryId) {
        let Some(entry) = self.entries.get(&id) else { return };
        let product = entry.product.clone();
        let resource = entry.resource.clone();
        let pinned = entry.pinned;
        let dur = entry.dur();
        let cur_start = entry.start;
        let cur_release = entry.release;

        let plan = &self.products[&product];
        let pos = match plan.chain.iter().position(|&x| x == id) {
            Some(p) => p,
            None => return,
        };

        let req_prod = if pos == 0 {
            plan.arrival
        } else {
            self.entries[&plan.chain[pos - 1]].end
        };

        let seq = &self.resources[&resource];
        let rpos = seq.iter().position(|&x| x == id).expect("entry in resource seq");
        let req_res = if rpos == 0 {
            0
        } else {
            let pred = &self.entries[&seq[rpos - 1]];
            pred.end.saturating_add(self.delta_of(&resource))
        };

        let new_start = if pinned {
            cur_start
        } else {
            cur_start.max(req_prod).max(req_res)
        };
        let new_end = if pinned {
            self.entries[&id].end
        } else {
            new_start + dur
        };

        let next_start = plan
            .chain
            .get(pos + 1)
            .map(|nid| self.entries[nid].start);
        let new_release = match next_start {
            Some(ns) => new_end.max(ns),
            None => new_end,
        };

        let moved = new_start != cur_start;
        let release_changed = new_release != cur_release;
        if !moved && !release_changed {
            return;
        }

        {
            let e = self.entries.get_mut(&id).unwrap();
            e.start = new_start;
            e.end = new_end;
            e.release = new_release;
        }

        if moved {
            self.seed_resource_successor(id);
            self.resort(id);
            let plan = &self.products[&product];
            if pos > 0 {
                let prev = plan.chain[pos - 1];
                self.seed(prev);
            }
            if let Some(&next) = self.products[&product].chain.get(pos + 1) {
                self.seed(next);
            }
        }
        if moved || release_changed {
            self.seed_resource_successor(id);
        }
    }

    /// Per-entry work spans of one resource clipped to `[from, horizon)`,
    /// sorted, without merging. Holds (release past end) do not occupy the
    /// resource; they only pin the product timeline.
    pub fn entry_spans(&self, resource: &ResourceId, from: Tick, horizon: Tick) -> Vec<(EntryId, Span)> {
        let Some(seq) = self.resources.get(resource) else {
            return Vec::new();
        };
        let mut spans: Vec<(EntryId, Span)> = seq
            .iter()
            .map(|id| &self.entries[id])
            .filter(|e| e.end > from && e.start < horizon)
            .map(|e| (e.id, Span::new(e.start.max(from), e.end.min(horizon))))
            .filter(|(_, s)| !s.is_empty())
            .collect();
        spans.sort_by_key(|&(id, s)| (s.lo, s.hi, id));
        spans
    }

    pub fn resource_schedule(&self, resource: &ResourceId) -> ResourceSchedule {
        let mut rs = ResourceSchedule::new(resource.clone());
        if let Some(seq) = self.resources.get(resource) {
            rs.entries = seq.iter().map(|id| self.materialize(&self.entries[id])).collect();
            rs.entries.sort_by_key(|e| (e.start, e.end));
        }
        rs
    }

    pub fn all_resource_schedules(&self) -> Vec<ResourceSchedule> {
        self.resources
            .keys()
            .map(|r| self.resource_schedule(r))
            .collect()
    }

    pub fn product_schedule(&self, product: &ProductId) -> Option<ProductSchedule> {
        let plan = self.products.get(product)?;
        let entries: Vec<ScheduledEvent> = plan
            .chain
            .iter()
            .map(|id| self.materialize(&self.entries[id]))
            .collect();
        // Best-effort state sequence: fold as far as the events apply. The
        // validator re-folds independently and reports mismatches.
        let mut states = vec![plan.initial_state.clone()];
        let mut cur = plan.initial_state.clone();
        for e in &entries {
            match super::apply_transition(&cur, &e.event) {
                Ok(next) => {
                    states.push(next.clone());
                    cur = next;
                }
                Err(_) => break,
            }
        }
        Some(ProductSchedule {
            product: product.clone(),
            entries,
            states,
        })
    }

    pub fn all_product_schedules(&self) -> Vec<ProductSchedule> {
        self.products
            .keys()
            .filter_map(|p| self.product_schedule(p))
            .collect()
    }

    fn materialize(&self, e: &PlanEntry) -> ScheduledEvent {
        ScheduledEvent {
            event: e.event.clone(),
            product: e.product.clone(),
            resource: e.resource.clone(),
            start: e.start,
            end: e.end,
            release: e.release,
        }
    }

    /// All gap requirements, for the validator.
    pub fn deltas(&self) -> &BTreeMap<ResourceId, Tick> {
        &self.deltas
    }
}
