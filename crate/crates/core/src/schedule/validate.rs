//! Whole-schedule validation. Violations are data, not errors: an empty
//! report means the production schedule is consistent.

use super::{apply_transition, ProductId, ProductSchedule, ResourceId, ResourceSchedule, Span, Tick};
use std::collections::BTreeMap;
use std::fmt;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    /// Two occupied spans of one resource intersect.
    ResourceOverlap {
        resource: ResourceId,
        first: Span,
        second: Span,
    },
    /// Consecutive entries of a resource are closer than its required gap.
    MissingGap {
        resource: ResourceId,
        gap: Tick,
        required: Tick,
        at: Tick,
    },
    /// A product's timeline is broken: one entry releases at `release` but
    /// the next starts at `next_start`.
    TimelineBreak {
        product: ProductId,
        index: usize,
        release: Tick,
        next_start: Tick,
    },
    /// An entry's event does not apply to the state the previous entries
    /// produce, or the stored state sequence disagrees with the fold.
    TransitionMismatch { product: ProductId, index: usize },
    /// An entry with a nonpositive span.
    DegenerateEntry {
        resource: ResourceId,
        product: ProductId,
        start: Tick,
        end: Tick,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ResourceOverlap { resource, first, second } => write!(
                f,
                "resource {resource}: [{},{}) overlaps [{},{})",
                first.lo, first.hi, second.lo, second.hi
            ),
            Violation::MissingGap { resource, gap, required, at } => write!(
                f,
                "resource {resource}: gap {gap} < required {required} at tick {at}"
            ),
            Violation::TimelineBreak { product, index, release, next_start } => write!(
                f,
                "product {product}: entry {index} releases at {release} but entry {} starts at {next_start}",
                index + 1
            ),
            Violation::TransitionMismatch { product, index } => {
                write!(f, "product {product}: transition mismatch at entry {index}")
            }
            Violation::DegenerateEntry { resource, product, start, end } => write!(
                f,
                "resource {resource} / product {product}: degenerate entry [{start},{end})"
            ),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_valid() {
            return write!(f, "schedule valid");
        }
        writeln!(f, "{} violation(s):", self.violations.len())?;
        for v in &self.violations {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

/// Check every resource schedule for overlaps and missing gaps, and every
/// product schedule for timeline breaks and transition mismatches.
///
/// `deltas` gives the per-resource required gap between consecutive entries;
/// resources absent from the map require none.
pub fn validate_production_schedule(
    resources: &[ResourceSchedule],
    products: &[ProductSchedule],
    deltas: &BTreeMap<ResourceId, Tick>,
) -> ValidationReport {
    let mut violations = Vec::new();

    for rs in resources {
        let required = deltas.get(&rs.resource).copied().unwrap_or(0);
        let mut spans: Vec<Span> = Vec::new();
        for e in &rs.entries {
            if e.start >= e.end || e.release < e.end {
                violations.push(Violation::DegenerateEntry {
                    resource: rs.resource.clone(),
                    product: e.product.clone(),
                    start: e.start,
                    end: e.end,
                });
                continue;
            }
            spans.push(e.work_span());
        }
        spans.sort();
        for w in spans.windows(2) {
            let (a, b) = (w[0], w[1]);
            if a.overlaps(&b) {
                violations.push(Violation::ResourceOverlap {
                    resource: rs.resource.clone(),
                    first: a,
                    second: b,
                });
            } else {
                let gap = b.lo - a.hi;
                if gap < required {
                    violations.push(Violation::MissingGap {
                        resource: rs.resource.clone(),
                        gap,
                        required,
                        at: a.hi,
                    });
                }
            }
        }
    }

    for ps in products {
        for (index, w) in ps.entries.windows(2).enumerate() {
            if w[0].release != w[1].start {
                violations.push(Violation::TimelineBreak {
                    product: ps.product.clone(),
                    index,
                    release: w[0].release,
                    next_start: w[1].start,
                });
            }
        }

        if let Some(initial) = ps.states.first() {
            let mut cur = initial.clone();
            for (index, e) in ps.entries.iter().enumerate() {
                match apply_transition(&cur, &e.event) {
                    Ok(next) => {
                        if let Some(stored) = ps.states.get(index + 1) {
                            if stored != &next {
                                violations.push(Violation::TransitionMismatch {
                                    product: ps.product.clone(),
                                    index,
                                });
                            }
                        }
                        cur = next;
                    }
                    Err(_) => {
                        violations.push(Violation::TransitionMismatch {
                            product: ps.product.clone(),
                            index,
                        });
                        break;
                    }
                }
            }
            if ps.states.len() != ps.entries.len() + 1
                && !violations
                    .iter()
                    .any(|v| matches!(v, Violation::TransitionMismatch { product, .. } if product == &ps.product))
            {
                violations.push(Violation::TransitionMismatch {
                    product: ps.product.clone(),
                    index: ps.states.len().saturating_sub(1),
                });
            }
        }
    }

    ValidationReport { violations }
}
