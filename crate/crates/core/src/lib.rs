//! Core of a participatory budgeting voting platform.
//!
//! * [`election`]: elections, projects and ballot method configuration.
//! * [`ballot`]: the ballot state machine (token cost accounting, validated
//!   draft transitions, submission checks) for all six ballot methods.
//! * [`tally`]: per-method score aggregation and winner selection under the
//!   monetary budget, plus CSV export.
//! * [`store`]: the append-only, checksummed vote log.
//! * [`synth`]: seeded synthetic ballots.

pub mod ballot;
pub mod election;
pub mod probe;
pub mod store;
pub mod synth;
pub mod tally;

pub use ballot::{
    apply_delta, apply_edit, ballot_cost, budget_status, build_ranking, max_affordable,
    token_cost, validate_ballot, Allocation, BallotViolation, BudgetStatus, Edit, Payload,
};
pub use election::{
    parse_config, validate_config, ConfigViolation, ElectionConfig, Method, MethodSpec,
    ParseError, Project, ProjectId, UiVariant,
};
pub use store::{StoreError, VoteRecord, VoteStore};
pub use tally::{
    result_report, select_winners, select_winners_exact, select_winners_greedy, tally,
    ScoreBoard, SelectionRule, TallyError, TallyResult, DEFAULT_WORK_BOUND,
};
