//! Earliest feasible insertion of a new event into a resource schedule,
//! allowing at most one existing entry to shift right.
//!
//! The scan walks insertion positions in time order: before the first busy
//! span, between any two, and after the last. At position `k` the new event
//! may start anywhere from `delta` past the previous span's end up to the
//! position's latest feasible start `t_max`: starting later than span `k`'s
//! begin pushes that span right, and the pushed span must still fit in front
//! of whatever follows it (the next span, or the end of the scanned horizon)
//! with `delta` gaps on both sides. Positions whose `t_max` is exceeded are
//! skipped and the scan moves to the next one. With a positive `delta` the
//! positions coincide with the resource's idle windows.

use super::{ScheduleError, Span, Tick};

/// Latest feasible start within an insertion position. `Infinite` when no
/// scheduled span lies after it, so a late start delays nobody.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TMax {
    Finite(Tick),
    Infinite,
}

impl TMax {
    pub fn is_infinite(&self) -> bool {
        matches!(self, TMax::Infinite)
    }

    pub fn as_finite(&self) -> Option<Tick> {
        match self {
            TMax::Finite(t) => Some(*t),
            TMax::Infinite => None,
        }
    }
}

/// Right-shift of one pre-existing busy span required by an insertion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Shift {
    /// Index into the `busy` slice passed to [`earliest_start`].
    pub busy_index: usize,
    /// New begin of the shifted span; its length is unchanged.
    pub new_lo: Tick,
}

/// Result of a feasible insertion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Insertion {
    pub start: Tick,
    pub shifted: Option<Shift>,
    pub t_max: TMax,
    /// Index of the busy span bounding `t_max` (the one allowed to shift),
    /// when the chosen position has one.
    pub posterior: Option<usize>,
}

/// Find the earliest start `>= t` for a `dur`-tick event.
///
/// `idle` are the resource's idle windows within the scanned horizon and
/// `busy` the *per-entry* work spans (unmerged, sorted, non-overlapping);
/// together they tile the horizon. `delta` is the gap the resource keeps
/// between consecutive operations. The returned start respects
/// `start >= previous span end + delta` (or the window edge at the front),
/// shifts at most the single span directly after the chosen position, and
/// never moves any span beyond that one.
///
/// Errors with [`ScheduleError::NoFeasibleSlot`] when no position admits the
/// insertion, which only happens when the schedule is occupied flush to the
/// end of the scanned horizon.
pub fn earliest_start(
    idle: &[Span],
    busy: &[Span],
    t: Tick,
    delta: Tick,
    dur: Tick,
) -> Result<Insertion, ScheduleError> {
    assert!(dur > 0, "earliest_start: dur must be positive");
    debug_assert!(idle.windows(2).all(|w| w[0].hi <= w[1].lo), "idle not sorted");
    debug_assert!(busy.windows(2).all(|w| w[0].hi <= w[1].lo), "busy not sorted");

    let no_slot = || ScheduleError::NoFeasibleSlot { requested: t, dur };

    let from = match (idle.first(), busy.first()) {
        (Some(i), Some(b)) => i.lo.min(b.lo),
        (Some(i), None) => i.lo,
        (None, Some(b)) => b.lo,
        (None, None) => return Err(no_slot()),
    };
    let horizon = idle
        .last()
        .map(|s| s.hi)
        .into_iter()
        .chain(busy.last().map(|s| s.hi))
        .max()
        .unwrap();

    for k in 0..=busy.len() {
        let edge = if k == 0 { from } else { busy[k - 1].hi };
        let start = t.max(edge.saturating_add(delta));

        let Some(blue) = busy.get(k) else {
            // Tail position: the resource is free past its last span.
            return Ok(Insertion {
                start,
                shifted: None,
                t_max: TMax::Infinite,
                posterior: None,
            });
        };

        // A start at or past blue's far edge belongs to a later position.
        if start >= blue.hi.saturating_add(delta) {
            continue;
        }

        // Latest start that leaves blue in place.
        let no_move_bound = blue
            .lo
            .checked_sub(delta)
            .and_then(|v| v.checked_sub(dur));

        // Latest start that shifts blue right: the pushed span must stop in
        // front of the next busy span, or the end of the trailing idle
        // window when blue is the last span. A blue flush against the
        // horizon cannot move.
        let shift_bound = match busy.get(k + 1) {
            Some(green) => Some(green.lo),
            None if blue.hi < horizon => Some(horizon),
            None => None,
        }
        .and_then(|t_next| {
            t_next
                .checked_sub(delta)
                .and_then(|v| v.checked_sub(blue.len()))
                .and_then(|v| v.checked_sub(delta))
                .and_then(|v| v.checked_sub(dur))
        });

        let t_max = match (no_move_bound, shift_bound) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };

        match t_max {
            Some(t_max) if start <= t_max => {
                let insertion_end = start + dur;
                let shifted = if insertion_end.saturating_add(delta) > blue.lo {
                    Some(Shift {
                        busy_index: k,
                        new_lo: insertion_end + delta,
                    })
                } else {
                    None
                };
                return Ok(Insertion {
                    start,
                    shifted,
                    t_max: TMax::Finite(t_max),
                    posterior: Some(k),
                });
            }
            _ => continue,
        }
    }

    Err(no_slot())
}

#[cfg(test)]
mod tests {
    use super::*;

    // Shared fixture: busy [10,20) and [30,40) scanned over [0, 100).
    fn fixture() -> (Vec<Span>, Vec<Span>) {
        let busy = vec![Span::new(10, 20), Span::new(30, 40)];
        let idle = vec![Span::new(0, 10), Span::new(20, 30), Span::new(40, 100)];
        (idle, busy)
    }

    #[test]
    fn first_window_low_request() {
        let (idle, busy) = fixture();
        let ins = earliest_start(&idle, &busy, 0, 1, 5).unwrap();
        assert_eq!(ins.start, 1);
        assert_eq!(ins.t_max, TMax::Finite(13)); // 30 - 1 - 10 - 1 - 5
        assert_eq!(ins.shifted, None); // [1,6) leaves the gap to 10 intact
    }

    #[test]
    fn first_window_mid_request_shifts_next_span() {
        let (idle, busy) = fixture();
        let ins = earliest_start(&idle, &busy, 5, 1, 5).unwrap();
        assert_eq!(ins.start, 5);
        assert_eq!(ins.t_max, TMax::Finite(13));
        // [5,10) + gap forces [10,20) to begin at 11.
        assert_eq!(
            ins.shifted,
            Some(Shift {
                busy_index: 0,
                new_lo: 11
            })
        );
    }

    #[test]
    fn request_past_first_window_recurses() {
        let (idle, busy) = fixture();
        let ins = earliest_start(&idle, &busy, 15, 1, 5).unwrap();
        assert_eq!(ins.start, 21);
        assert_eq!(ins.t_max, TMax::Finite(83)); // 100 - 1 - 10 - 1 - 5
        assert_eq!(ins.shifted, None); // [21,26) fits in front of [30,40)
    }

    #[test]
    fn start_in_last_window_is_unbounded() {
        let (idle, busy) = fixture();
        let ins = earliest_start(&idle, &busy, 60, 1, 5).unwrap();
        assert_eq!(ins.start, 60);
        assert_eq!(ins.t_max, TMax::Infinite);
        assert_eq!(ins.shifted, None);
    }

    #[test]
    fn empty_schedule_starts_at_delta() {
        let idle = vec![Span::new(0, 50)];
        let ins = earliest_start(&idle, &[], 0, 10, 5).unwrap();
        assert_eq!(ins.start, 10);
        assert_eq!(ins.t_max, TMax::Infinite);
    }

    #[test]
    fn busy_flush_to_horizon_appends_after() {
        let idle: Vec<Span> = vec![];
        let busy = vec![Span::new(0, 50)];
        let ins = earliest_start(&idle, &busy, 0, 1, 5).unwrap();
        assert_eq!(ins.start, 51);
        assert_eq!(ins.t_max, TMax::Infinite);
    }

    #[test]
    fn nothing_to_scan_is_infeasible() {
        assert!(matches!(
            earliest_start(&[], &[], 0, 1, 5),
            Err(ScheduleError::NoFeasibleSlot { .. })
        ));
    }

    #[test]
    fn adjacent_spans_with_zero_delta_block_shifting() {
        // Two back-to-back entries: shifting the first would move both,
        // so insertion before them must fit without any shift.
        let busy = vec![Span::new(10, 20), Span::new(20, 30)];
        let idle = vec![Span::new(0, 10), Span::new(30, 60)];
        let ins = earliest_start(&idle, &busy, 0, 0, 5).unwrap();
        assert_eq!(ins.start, 0);
        assert_eq!(ins.t_max, TMax::Finite(5)); // 20 - 0 - 10 - 0 - 5
    }

    #[test]
    fn boundary_position_between_adjacent_spans_is_found() {
        // With zero delta an insertion may start exactly where one span ends
        // and displace the next, even though no idle window separates them.
        let busy = vec![Span::new(10, 20), Span::new(20, 30)];
        let idle = vec![Span::new(0, 10), Span::new(30, 60)];
        let ins = earliest_start(&idle, &busy, 6, 0, 5).unwrap();
        assert_eq!(ins.start, 20);
        assert_eq!(
            ins.shifted,
            Some(Shift {
                busy_index: 1,
                new_lo: 25
            })
        );
    }

    #[test]
    fn request_beyond_horizon_is_allowed_in_open_tail() {
        let (idle, busy) = fixture();
        let ins = earliest_start(&idle, &busy, 500, 1, 5).unwrap();
        assert_eq!(ins.start, 500);
        assert_eq!(ins.t_max, TMax::Infinite);
    }
}
