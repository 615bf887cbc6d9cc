//! Ballot state machine.
//!
//! Every operation here is a pure function over immutable values. Drafts of
//! distributional ballots (cumulative, quadratic) only change through
//! [`apply_delta`], which refuses any transition that would overspend the
//! token budget, exceed a per-project cap or drive a count negative. The
//! other methods change through [`apply_edit`], which keeps the same
//! guarantee for their own limits.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::election::{ElectionConfig, Method, MethodSpec, MissingParameter, ProjectId};
use crate::probe;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Payload {
    /// Tokens per project. Zero entries are never stored.
    Tokens(BTreeMap<ProjectId, u64>),
    Approved(BTreeSet<ProjectId>),
    Ranking(Vec<ProjectId>),
    /// Raw `(winner, loser)` outcomes in the order they were recorded.
    Comparisons(Vec<(ProjectId, ProjectId)>),
}

/// A voter's ballot content, draft or submitted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "AllocationWire", into = "AllocationWire")]
pub struct Allocation {
    method: Method,
    payload: Payload,
}

impl Allocation {
    pub fn empty(method: Method) -> Self {
        let payload = match method {
            Method::Cumulative | Method::Quadratic => Payload::Tokens(BTreeMap::new()),
            Method::KApproval | Method::Knapsack => Payload::Approved(BTreeSet::new()),
            Method::KRanking => Payload::Ranking(Vec::new()),
            Method::Pairwise => Payload::Comparisons(Vec::new()),
        };
        Allocation { method, payload }
    }

    /// Token ballot; zero counts are dropped and repeated ids are summed.
    pub fn tokens<I, P>(method: Method, entries: I) -> Self
    where
        I: IntoIterator<Item = (P, u64)>,
        P: Into<ProjectId>,
    {
        assert!(method.is_distributional(), "{method} does not use tokens");
        let mut map = BTreeMap::new();
        for (project, tokens) in entries {
            *map.entry(project.into()).or_insert(0) += tokens;
        }
        map.retain(|_, t| *t > 0);
        Allocation {
            method,
            payload: Payload::Tokens(map),
        }
    }

    pub fn approved<I, P>(method: Method, projects: I) -> Self
    where
        I: IntoIterator<Item = P>,
        P: Into<ProjectId>,
    {
        assert!(
            matches!(method, Method::KApproval | Method::Knapsack),
            "{method} does not use approval sets"
        );
        Allocation {
            method,
            payload: Payload::Approved(projects.into_iter().map(Into::into).collect()),
        }
    }

    /// Unchecked ranking; see [`build_ranking`] for the validated path.
    pub fn ranking<I, P>(projects: I) -> Self
    where
        I: IntoIterator<Item = P>,
        P: Into<ProjectId>,
    {
        Allocation {
            method: Method::KRanking,
            payload: Payload::Ranking(projects.into_iter().map(Into::into).collect()),
        }
    }

    pub fn comparisons<I, P>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (P, P)>,
        P: Into<ProjectId>,
    {
        Allocation {
            method: Method::Pairwise,
            payload: Payload::Comparisons(
                pairs
                    .into_iter()
                    .map(|(w, l)| (w.into(), l.into()))
                    .collect(),
            ),
        }
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn payload(&self) -> &Payload {
        &self.payload
    }

    /// Tokens currently on `project`; 0 for non-token ballots.
    pub fn tokens_on(&self, project: &ProjectId) -> u64 {
        match &self.payload {
            Payload::Tokens(map) => map.get(project).copied().unwrap_or(0),
            _ => 0,
        }
    }

    pub fn is_empty(&self) -> bool {
        match &self.payload {
            Payload::Tokens(m) => m.is_empty(),
            Payload::Approved(s) => s.is_empty(),
            Payload::Ranking(r) => r.is_empty(),
            Payload::Comparisons(c) => c.is_empty(),
        }
    }

    /// Every project id the ballot mentions, with repeats.
    fn referenced(&self) -> Vec<&ProjectId> {
        match &self.payload {
            Payload::Tokens(m) => m.keys().collect(),
            Payload::Approved(s) => s.iter().collect(),
            Payload::Ranking(r) => r.iter().collect(),
            Payload::Comparisons(c) => c.iter().flat_map(|(w, l)| [w, l]).collect(),
        }
    }
}

/// JSON form: `{method, tokens?, approved?, ranking?, comparisons?}` with
/// exactly the payload field that matches `method`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AllocationWire {
    method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tokens: Option<BTreeMap<ProjectId, u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    approved: Option<Vec<ProjectId>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ranking: Option<Vec<ProjectId>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    comparisons: Option<Vec<(ProjectId, ProjectId)>>,
}

impl From<Allocation> for AllocationWire {
    fn from(alloc: Allocation) -> Self {
        let mut wire = AllocationWire {
            method: alloc.method,
            tokens: None,
            approved: None,
            ranking: None,
            comparisons: None,
        };
        match alloc.payload {
            Payload::Tokens(m) => wire.tokens = Some(m),
            Payload::Approved(s) => wire.approved = Some(s.into_iter().collect()),
            Payload::Ranking(r) => wire.ranking = Some(r),
            Payload::Comparisons(c) => wire.comparisons = Some(c),
        }
        wire
    }
}

impl TryFrom<AllocationWire> for Allocation {
    type Error = String;

    fn try_from(wire: AllocationWire) -> Result<Self, Self::Error> {
        let method = wire.method;
        let expected = match method {
            Method::Cumulative | Method::Quadratic => "tokens",
            Method::KApproval | Method::Knapsack => "approved",
            Method::KRanking => "ranking",
            Method::Pairwise => "comparisons",
        };
        let present: Vec<&str> = [
            ("tokens", wire.tokens.is_some()),
            ("approved", wire.approved.is_some()),
            ("ranking", wire.ranking.is_some()),
            ("comparisons", wire.comparisons.is_some()),
        ]
        .into_iter()
        .filter_map(|(name, p)| p.then_some(name))
        .collect();
        if present != [expected] {
            return Err(format!(
                "a {method} allocation carries exactly the `{expected}` field, found {present:?}"
            ));
        }

        let payload = if let Some(mut tokens) = wire.tokens {
            tokens.retain(|_, t| *t > 0);
            Payload::Tokens(tokens)
        } else if let Some(approved) = wire.approved {
            let len = approved.len();
            let set: BTreeSet<_> = approved.into_iter().collect();
            if set.len() != len {
                return Err("`approved` lists a project more than once".into());
            }
            Payload::Approved(set)
        } else if let Some(ranking) = wire.ranking {
            Payload::Ranking(ranking)
        } else {
            Payload::Comparisons(wire.comparisons.unwrap_or_default())
        };
        Ok(Allocation { method, payload })
    }
}

/// Spent and remaining budget of a distributional ballot, in cost units.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetStatus {
    pub spent: u64,
    pub budget: u64,
    pub remaining: u64,
}

/// A rejected transition or a rule a ballot breaks.
///
/// The same codes are used for edit feedback and for submission checks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, Error)]
#[serde(tag = "code", rename_all = "snake_case")]
pub enum BallotViolation {
    #[error("this operation is not available for {method} ballots")]
    UnsupportedMethod { method: Method },
    #[error("ballot is a {found} ballot but the election uses {expected}")]
    MethodMismatch { expected: Method, found: Method },
    #[error("election method is missing `{field}`")]
    MissingParameter { field: String },
    #[error("project {project} is not part of this election")]
    UnknownProject { project: ProjectId },
    #[error("this would cost {cost} but only {budget} is available")]
    BudgetExceeded { cost: u64, budget: u64 },
    #[error("project {project} cannot go below zero tokens")]
    NegativeTokens { project: ProjectId, tokens: i64 },
    #[error("project {project} can hold at most {cap} tokens")]
    CapExceeded {
        project: ProjectId,
        tokens: u64,
        cap: u64,
    },
    #[error("ballot costs {cost}, more than the budget of {budget}")]
    OverBudget { cost: u64, budget: u64 },
    #[error("the ballot is empty")]
    EmptyBallot,
    #[error("{count} projects approved but at most {k} are allowed")]
    TooManyApprovals { count: usize, k: u32 },
    #[error("project {project} was selected more than once")]
    DuplicateSelection { project: ProjectId },
    #[error("{count} projects selected but at most {k} may be ranked")]
    TooManySelections { count: usize, k: u32 },
    #[error("approved projects cost {cost}, more than the budget of {budget}")]
    KnapsackOverBudget { cost: u64, budget: u64 },
    #[error("project {project} cannot be compared with itself")]
    SelfComparison { project: ProjectId },
    #[error("projects {first} and {second} were already compared")]
    DuplicatePair { first: ProjectId, second: ProjectId },
}

impl BallotViolation {
    /// Stable snake_case code, identical to the serialized `code` tag.
    pub fn code(&self) -> &'static str {
        match self {
            BallotViolation::UnsupportedMethod { .. } => "unsupported_method",
            BallotViolation::MethodMismatch { .. } => "method_mismatch",
            BallotViolation::MissingParameter { .. } => "missing_parameter",
            BallotViolation::UnknownProject { .. } => "unknown_project",
            BallotViolation::BudgetExceeded { .. } => "budget_exceeded",
            BallotViolation::NegativeTokens { .. } => "negative_tokens",
            BallotViolation::CapExceeded { .. } => "cap_exceeded",
            BallotViolation::OverBudget { .. } => "over_budget",
            BallotViolation::EmptyBallot => "empty_ballot",
            BallotViolation::TooManyApprovals { .. } => "too_many_approvals",
            BallotViolation::DuplicateSelection { .. } => "duplicate_selection",
            BallotViolation::TooManySelections { .. } => "too_many_selections",
            BallotViolation::KnapsackOverBudget { .. } => "knapsack_over_budget",
            BallotViolation::SelfComparison { .. } => "self_comparison",
            BallotViolation::DuplicatePair { .. } => "duplicate_pair",
        }
    }
}

impl From<MissingParameter> for BallotViolation {
    fn from(m: MissingParameter) -> Self {
        BallotViolation::MissingParameter {
            field: m.0.to_owned(),
        }
    }
}

type BallotResult<T> = Result<T, BallotViolation>;

fn require_distributional(spec: &MethodSpec) -> BallotResult<u64> {
    if !spec.method.is_distributional() {
        return Err(BallotViolation::UnsupportedMethod {
            method: spec.method,
        });
    }
    Ok(spec.require_token_budget()?)
}

fn require_method(spec: &MethodSpec, alloc: &Allocation) -> BallotResult<()> {
    if alloc.method != spec.method {
        return Err(BallotViolation::MethodMismatch {
            expected: spec.method,
            found: alloc.method,
        });
    }
    Ok(())
}

fn require_project(election: &ElectionConfig, project: &ProjectId) -> BallotResult<()> {
    if election.has_project(project) {
        Ok(())
    } else {
        Err(BallotViolation::UnknownProject {
            project: project.clone(),
        })
    }
}

fn token_map(alloc: &Allocation) -> &BTreeMap<ProjectId, u64> {
    match &alloc.payload {
        Payload::Tokens(m) => m,
        _ => unreachable!("distributional allocation without a token map"),
    }
}

/// Cost of placing `tokens` on one project: linear for cumulative ballots,
/// the square for quadratic ones.
pub fn token_cost(spec: &MethodSpec, tokens: u64) -> BallotResult<u64> {
    match spec.method {
        Method::Cumulative => Ok(tokens),
        Method::Quadratic => Ok(tokens.saturating_mul(tokens)),
        method => Err(BallotViolation::UnsupportedMethod { method }),
    }
}

pub fn ballot_cost(spec: &MethodSpec, alloc: &Allocation) -> BallotResult<u64> {
    token_cost(spec, 0)?;
    require_method(spec, alloc)?;
    token_map(alloc).values().try_fold(0u64, |acc, &t| {
        Ok(acc.saturating_add(token_cost(spec, t)?))
    })
}

pub fn budget_status(spec: &MethodSpec, alloc: &Allocation) -> BallotResult<BudgetStatus> {
    let budget = require_distributional(spec)?;
    let spent = ballot_cost(spec, alloc)?;
    if spent > budget {
        return Err(BallotViolation::OverBudget {
            cost: spent,
            budget,
        });
    }
    Ok(BudgetStatus {
        spent,
        budget,
        remaining: budget - spent,
    })
}

/// Largest token count `project` could hold, everything else unchanged,
/// without overspending or passing the per-project cap.
pub fn max_affordable(
    election: &ElectionConfig,
    alloc: &Allocation,
    project: &ProjectId,
) -> BallotResult<u64> {
    let spec = &election.method_spec;
    let budget = require_distributional(spec)?;
    require_method(spec, alloc)?;
    require_project(election, project)?;

    let current = alloc.tokens_on(project);
    let others = ballot_cost(spec, alloc)? - token_cost(spec, current)?;
    let room = budget.saturating_sub(others);
    let tokens = match spec.method {
        Method::Quadratic => room.isqrt(),
        _ => room,
    };
    Ok(match spec.per_project_cap {
        Some(cap) => tokens.min(cap),
        None => tokens,
    })
}

/// Changes the tokens on `project` by `delta`, returning the new allocation.
/// The input is left untouched.
pub fn apply_delta(
    election: &ElectionConfig,
    alloc: &Allocation,
    project: &ProjectId,
    delta: i64,
) -> BallotResult<Allocation> {
    probe::record_transition();
    let spec = &election.method_spec;
    let budget = require_distributional(spec)?;
    require_method(spec, alloc)?;
    require_project(election, project)?;

    let current = alloc.tokens_on(project);
    let next = i128::from(current) + i128::from(delta);
    if next < 0 {
        return Err(BallotViolation::NegativeTokens {
            project: project.clone(),
            tokens: i64::try_from(next).unwrap_or(i64::MIN),
        });
    }
    let next = u64::try_from(next).unwrap_or(u64::MAX);
    if let Some(cap) = spec.per_project_cap {
        if next > cap {
            return Err(BallotViolation::CapExceeded {
                project: project.clone(),
                tokens: next,
                cap,
            });
        }
    }
    let cost = (ballot_cost(spec, alloc)? - token_cost(spec, current)?)
        .saturating_add(token_cost(spec, next)?);
    if cost > budget {
        return Err(BallotViolation::BudgetExceeded { cost, budget });
    }

    let mut map = token_map(alloc).clone();
    if next == 0 {
        map.remove(project);
    } else {
        map.insert(project.clone(), next);
    }
    Ok(Allocation {
        method: alloc.method,
        payload: Payload::Tokens(map),
    })
}

/// Turns the ordered selections of the ranking step into a k-ranking ballot.
pub fn build_ranking(election: &ElectionConfig, steps: &[ProjectId]) -> BallotResult<Allocation> {
    probe::record_transition();
    let spec = &election.method_spec;
    if spec.method != Method::KRanking {
        return Err(BallotViolation::UnsupportedMethod {
            method: spec.method,
        });
    }
    let k = spec.require_k()?;
    if steps.len() > k as usize {
        return Err(BallotViolation::TooManySelections {
            count: steps.len(),
            k,
        });
    }
    let mut seen = BTreeSet::new();
    for project in steps {
        require_project(election, project)?;
        if !seen.insert(project) {
            return Err(BallotViolation::DuplicateSelection {
                project: project.clone(),
            });
        }
    }
    Ok(Allocation::ranking(steps.iter().cloned()))
}

/// A single change a voter makes to a draft.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Edit {
    /// Add or remove tokens (cumulative, quadratic).
    Delta { project: ProjectId, delta: i64 },
    /// Add a project to the approval set (k_approval, knapsack).
    Approve { project: ProjectId },
    /// Drop a project from the approval set.
    Withdraw { project: ProjectId },
    /// Replace the ranking with these ordered selections (k_ranking).
    Rank { steps: Vec<ProjectId> },
    /// Record a head-to-head outcome (pairwise).
    Compare { winner: ProjectId, loser: ProjectId },
    /// Forget the outcome recorded for this pair, in either orientation.
    Uncompare { winner: ProjectId, loser: ProjectId },
    /// Start over with an empty draft.
    Clear,
}

/// Applies one [`Edit`] to a draft. Successful results always satisfy the
/// method's limits; only emptiness is left to [`validate_ballot`].
pub fn apply_edit(
    election: &ElectionConfig,
    alloc: &Allocation,
    edit: &Edit,
) -> BallotResult<Allocation> {
    let spec = &election.method_spec;
    require_method(spec, alloc)?;
    let unsupported = || {
        Err(BallotViolation::UnsupportedMethod {
            method: spec.method,
        })
    };
    match edit {
        Edit::Delta { project, delta } => apply_delta(election, alloc, project, *delta),
        Edit::Rank { steps } => build_ranking(election, steps),
        Edit::Clear => Ok(Allocation::empty(spec.method)),
        Edit::Approve { project } | Edit::Withdraw { project } => {
            probe::record_transition();
            let Payload::Approved(set) = &alloc.payload else {
                return unsupported();
            };
            require_project(election, project)?;
            let mut set = set.clone();
            if matches!(edit, Edit::Withdraw { .. }) {
                set.remove(project);
            } else if set.insert(project.clone()) {
                check_approvals(election, &set)?;
            }
            Ok(Allocation {
                method: alloc.method,
                payload: Payload::Approved(set),
            })
        }
        Edit::Compare { winner, loser } | Edit::Uncompare { winner, loser } => {
            probe::record_transition();
            let Payload::Comparisons(pairs) = &alloc.payload else {
                return unsupported();
            };
            require_project(election, winner)?;
            require_project(election, loser)?;
            let same_pair =
                |(w, l): &(ProjectId, ProjectId)| (w == winner && l == loser) || (w == loser && l == winner);
            let mut pairs = pairs.clone();
            if matches!(edit, Edit::Uncompare { .. }) {
                pairs.retain(|p| !same_pair(p));
            } else {
                if winner == loser {
                    return Err(BallotViolation::SelfComparison {
                        project: winner.clone(),
                    });
                }
                if pairs.iter().any(same_pair) {
                    return Err(BallotViolation::DuplicatePair {
                        first: winner.clone(),
                        second: loser.clone(),
                    });
                }
                pairs.push((winner.clone(), loser.clone()));
            }
            Ok(Allocation {
                method: alloc.method,
                payload: Payload::Comparisons(pairs),
            })
        }
    }
}

fn check_approvals(election: &ElectionConfig, set: &BTreeSet<ProjectId>) -> BallotResult<()> {
    match election.method() {
        Method::KApproval => {
            let k = election.method_spec.require_k()?;
            if set.len() > k as usize {
                return Err(BallotViolation::TooManyApprovals {
                    count: set.len(),
                    k,
                });
            }
        }
        Method::Knapsack => {
            let cost = knapsack_cost(election, set);
            if cost > election.monetary_budget {
                return Err(BallotViolation::KnapsackOverBudget {
                    cost,
                    budget: election.monetary_budget,
                });
            }
        }
        _ => {}
    }
    Ok(())
}

fn knapsack_cost(election: &ElectionConfig, set: &BTreeSet<ProjectId>) -> u64 {
    set.iter()
        .filter_map(|id| election.project(id))
        .fold(0u64, |acc, p| acc.saturating_add(p.cost))
}

/// Checks a complete ballot against the election's rules. An empty list
/// means the ballot may be submitted.
pub fn validate_ballot(election: &ElectionConfig, alloc: &Allocation) -> Vec<BallotViolation> {
    probe::record_validation();
    let spec = &election.method_spec;
    let mut violations = Vec::new();
    if let Err(v) = require_method(spec, alloc) {
        violations.push(v);
        return violations;
    }

    let mut unknown = BTreeSet::new();
    for project in alloc.referenced() {
        if !election.has_project(project) && unknown.insert(project) {
            violations.push(BallotViolation::UnknownProject {
                project: project.clone(),
            });
        }
    }
    if alloc.is_empty() {
        violations.push(BallotViolation::EmptyBallot);
    }

    match &alloc.payload {
        Payload::Tokens(map) => match require_distributional(spec) {
            Err(v) => violations.push(v),
            Ok(budget) => {
                if let Some(cap) = spec.per_project_cap {
                    for (project, &tokens) in map {
                        if tokens > cap {
                            violations.push(BallotViolation::CapExceeded {
                                project: project.clone(),
                                tokens,
                                cap,
                            });
                        }
                    }
                }
                match ballot_cost(spec, alloc) {
                    Ok(cost) if cost > budget => {
                        violations.push(BallotViolation::BudgetExceeded { cost, budget })
                    }
                    Ok(_) => {}
                    Err(v) => violations.push(v),
                }
            }
        },
        Payload::Approved(set) => {
            if let Err(v) = check_approvals(election, set) {
                violations.push(v);
            }
        }
        Payload::Ranking(ranking) => match spec.require_k() {
            Err(m) => violations.push(m.into()),
            Ok(k) => {
                if ranking.len() > k as usize {
                    violations.push(BallotViolation::TooManySelections {
                        count: ranking.len(),
                        k,
                    });
                }
                let mut seen = BTreeSet::new();
                for project in ranking {
                    if !seen.insert(project) {
                        violations.push(BallotViolation::DuplicateSelection {
                            project: project.clone(),
                        });
                    }
                }
            }
        },
        Payload::Comparisons(pairs) => {
            let mut seen = BTreeSet::new();
            for (winner, loser) in pairs {
                if winner == loser {
                    violations.push(BallotViolation::SelfComparison {
                        project: winner.clone(),
                    });
                    continue;
                }
                let key = if winner < loser {
                    (winner, loser)
                } else {
                    (loser, winner)
                };
                if !seen.insert(key) {
                    violations.push(BallotViolation::DuplicatePair {
                        first: winner.clone(),
                        second: loser.clone(),
                    });
                }
            }
        }
    }
    violations
}
