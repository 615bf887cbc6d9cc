//! Per-thread counters of engine entry points.
//!
//! Writers (the service, the admin CLI) are expected to route every ballot
//! change and every submission through the engine. Tests read these
//! counters to confirm that no second validation path exists.

use std::cell::Cell;

thread_local! {
    static VALIDATIONS: Cell<u64> = const { Cell::new(0) };
    static TRANSITIONS: Cell<u64> = const { Cell::new(0) };
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ProbeCounts {
    /// Calls to `validate_ballot`.
    pub validations: u64,
    /// Draft transitions attempted through the engine.
    pub transitions: u64,
}

impl ProbeCounts {
    /// Counts accumulated since `earlier` was taken.
    pub fn since(self, earlier: ProbeCounts) -> ProbeCounts {
        ProbeCounts {
            validations: self.validations - earlier.validations,
            transitions: self.transitions - earlier.transitions,
        }
    }
}

pub fn snapshot() -> ProbeCounts {
    ProbeCounts {
        validations: VALIDATIONS.with(Cell::get),
        transitions: TRANSITIONS.with(Cell::get),
    }
}

pub(crate) fn record_validation() {
    VALIDATIONS.with(|c| c.set(c.get() + 1));
}

pub(crate) fn record_transition() {
    TRANSITIONS.with(|c| c.set(c.get() + 1));
}
