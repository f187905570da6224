//! Applying a chosen candidate to the live plan: withdraw the replaced span,
//! apply the allowed shift on each bidding resource, splice the new legs into
//! the product chain and let the normalizer restore the invariants.

use super::CandidateSchedule;
use crate::schedule::{EntryId, PlanState, ProductId};
use std::ops::Range;

#[derive(Clone, Debug, Default)]
pub struct CommitOutcome {
    pub removed: Vec<EntryId>,
    pub inserted: Vec<EntryId>,
    pub shifted: Vec<EntryId>,
}

/// Replace `range` of the product's chain with the candidate's legs.
///
/// The caller is responsible for having sent the removal notices and informs;
/// this performs the plan surgery only.
pub fn commit_candidate(
    plan: &mut PlanState,
    product: &ProductId,
    range: Range<usize>,
    candidate: &CandidateSchedule,
) -> CommitOutcome {
    let chain = plan
        .product(product)
        .map(|p| p.chain.clone())
        .unwrap_or_default();
    let removed: Vec<EntryId> = chain[range.clone()].to_vec();
    for id in &removed {
        plan.remove_entry(*id);
    }

    let mut shifted = Vec::new();
    for shift in &candidate.shifts {
        plan.push_entry_to(shift.entry, shift.new_start);
        shifted.push(shift.entry);
    }

    let mut inserted = Vec::new();
    for (k, leg) in candidate.events.iter().enumerate() {
        let id = plan.insert_entry_at(
            product,
            range.start + k,
            leg.event.clone(),
            &leg.resource,
            leg.start,
            leg.end - leg.start,
        );
        inserted.push(id);
    }

    plan.normalize();
    CommitOutcome {
        removed,
        inserted,
        shifted,
    }
}
