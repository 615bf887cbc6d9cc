//! Score aggregation and budget-constrained winner selection.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ballot::{Allocation, Payload};
use crate::election::{ElectionConfig, Method, MissingParameter, Project, ProjectId};

/// Work bound for [`select_winners_exact`], in DP cell steps.
pub const DEFAULT_WORK_BOUND: u64 = 100_000_000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreBoard {
    /// Every election project, including those nobody supported.
    pub scores: BTreeMap<ProjectId, u64>,
    pub ballot_count: u64,
}

impl ScoreBoard {
    pub fn zeroed<'a>(projects: impl IntoIterator<Item = &'a ProjectId>) -> Self {
        ScoreBoard {
            scores: projects.into_iter().map(|p| (p.clone(), 0)).collect(),
            ballot_count: 0,
        }
    }

    pub fn score(&self, project: &ProjectId) -> u64 {
        self.scores.get(project).copied().unwrap_or(0)
    }

    /// Project ids by score descending, ties by ascending id.
    pub fn ordering(&self) -> Vec<ProjectId> {
        let mut ids: Vec<_> = self.scores.keys().cloned().collect();
        ids.sort_by(|a, b| self.score(b).cmp(&self.score(a)).then_with(|| a.cmp(b)));
        ids
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    Greedy,
    Exact,
}

impl std::str::FromStr for SelectionRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "greedy" => Ok(SelectionRule::Greedy),
            "exact" => Ok(SelectionRule::Exact),
            other => Err(format!("unknown selection rule {other:?} (expected greedy or exact)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TallyResult {
    pub scoreboard: ScoreBoard,
    pub ordering: Vec<ProjectId>,
    /// Funded projects, listed in `ordering` order.
    pub winners: Vec<ProjectId>,
    pub winners_cost: u64,
    pub selection_rule: SelectionRule,
    /// Project details for reporting, in election order.
    pub projects: Vec<Project>,
}

impl TallyResult {
    pub fn total_score(&self) -> u64 {
        self.winners.iter().map(|p| self.scoreboard.score(p)).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum TallyError {
    #[error("ballot {index} is a {found} ballot but the election uses {expected}")]
    MethodMismatch {
        index: usize,
        expected: Method,
        found: Method,
    },
    #[error("exact selection needs {work} cell steps, above the bound of {bound}")]
    InstanceTooLarge { work: u64, bound: u64 },
    #[error(transparent)]
    MissingParameter(#[from] MissingParameter),
}

/// Sums per-project support over `ballots`.
///
/// Distributional ballots contribute their tokens (not their cost). Approval
/// and knapsack ballots give one point per approved project. A k-ranking
/// ballot gives its i-th choice `k - i + 1` points. Pairwise ballots give a
/// point to the winner of each recorded comparison.
pub fn tally(election: &ElectionConfig, ballots: &[Allocation]) -> Result<ScoreBoard, TallyError> {
    let method = election.method();
    let k = match method {
        Method::KRanking => u64::from(election.method_spec.require_k()?),
        _ => 0,
    };
    let mut board = ScoreBoard::zeroed(election.project_ids());
    for (index, ballot) in ballots.iter().enumerate() {
        if ballot.method() != method {
            return Err(TallyError::MethodMismatch {
                index,
                expected: method,
                found: ballot.method(),
            });
        }
        let mut credit = |project: &ProjectId, points: u64| {
            if let Some(score) = board.scores.get_mut(project) {
                *score += points;
            }
        };
        match ballot.payload() {
            Payload::Tokens(map) => map.iter().for_each(|(p, &t)| credit(p, t)),
            Payload::Approved(set) => set.iter().for_each(|p| credit(p, 1)),
            Payload::Ranking(ranking) => {
                for (position, project) in ranking.iter().enumerate() {
                    credit(project, k.saturating_sub(position as u64));
                }
            }
            Payload::Comparisons(pairs) => pairs.iter().for_each(|(winner, _)| credit(winner, 1)),
        }
        board.ballot_count += 1;
    }
    Ok(board)
}

fn cost_of(projects: &[Project], id: &ProjectId) -> u64 {
    projects
        .iter()
        .find(|p| &p.id == id)
        .map_or(0, |p| p.cost)
}

fn finish(
    scoreboard: &ScoreBoard,
    projects: &[Project],
    ordering: Vec<ProjectId>,
    chosen: &BTreeSet<&ProjectId>,
    rule: SelectionRule,
) -> TallyResult {
    let winners: Vec<ProjectId> = ordering.iter().filter(|p| chosen.contains(p)).cloned().collect();
    let winners_cost = winners.iter().map(|p| cost_of(projects, p)).sum();
    TallyResult {
        scoreboard: scoreboard.clone(),
        ordering,
        winners,
        winners_cost,
        selection_rule: rule,
        projects: projects.to_vec(),
    }
}

/// Walks projects in score order and funds each one that still fits.
pub fn select_winners_greedy(
    scoreboard: &ScoreBoard,
    projects: &[Project],
    monetary_budget: u64,
) -> TallyResult {
    let ordering = scoreboard.ordering();
    let mut remaining = monetary_budget;
    let mut chosen = BTreeSet::new();
    for id in &ordering {
        let cost = cost_of(projects, id);
        if cost <= remaining {
            remaining -= cost;
            chosen.insert(id);
        }
    }
    finish(scoreboard, projects, ordering.clone(), &chosen, SelectionRule::Greedy)
}

/// Score-maximising project set under the budget (0/1 knapsack).
///
/// Among sets with the same total score the cheaper one wins, then the set
/// whose ascending id list is lexicographically smallest.
pub fn select_winners_exact(
    scoreboard: &ScoreBoard,
    projects: &[Project],
    monetary_budget: u64,
    work_bound: u64,
) -> Result<TallyResult, TallyError> {
    let mut items: Vec<(&ProjectId, u64, u64)> = projects
        .iter()
        .map(|p| (&p.id, scoreboard.score(&p.id), p.cost))
        .collect();
    items.sort_by(|a, b| a.0.cmp(b.0));

    let total_cost = items.iter().fold(0u64, |acc, it| acc.saturating_add(it.2));
    let capacity = monetary_budget.min(total_cost);
    let work = (items.len() as u64).saturating_mul(capacity.saturating_add(1));
    if work > work_bound {
        return Err(TallyError::InstanceTooLarge {
            work,
            bound: work_bound,
        });
    }
    let width = capacity as usize + 1;

    // best[c] = (score, cost) of the best set drawn from the items after the
    // current one with capacity c. Filled back to front so the reconstruction
    // can walk ids in ascending order and prefer taking the smaller id.
    let mut best = vec![(0u64, 0u64); width];
    let mut take = vec![false; items.len() * width];
    for (i, &(_, score, cost)) in items.iter().enumerate().rev() {
        let mut next = best.clone();
        for c in 0..width {
            if cost > c as u64 {
                continue;
            }
            let rest = best[c - cost as usize];
            let with = (rest.0 + score, rest.1 + cost);
            let without = best[c];
            let better = with.0 > without.0 || (with.0 == without.0 && with.1 < without.1);
            let tied = with == without && without != (0, 0);
            if better || tied {
                next[c] = with;
                take[i * width + c] = true;
            }
        }
        best = next;
    }

    let mut chosen = BTreeSet::new();
    let mut c = capacity as usize;
    for (i, &(id, _, cost)) in items.iter().enumerate() {
        if take[i * width + c] {
            chosen.insert(id);
            c -= cost as usize;
        }
    }
    Ok(finish(
        scoreboard,
        projects,
        scoreboard.ordering(),
        &chosen,
        SelectionRule::Exact,
    ))
}

pub fn select_winners(
    scoreboard: &ScoreBoard,
    projects: &[Project],
    monetary_budget: u64,
    rule: SelectionRule,
) -> Result<TallyResult, TallyError> {
    match rule {
        SelectionRule::Greedy => Ok(select_winners_greedy(scoreboard, projects, monetary_budget)),
        SelectionRule::Exact => {
            select_winners_exact(scoreboard, projects, monetary_budget, DEFAULT_WORK_BOUND)
        }
    }
}

/// CSV export: `project_id,title,cost,score,rank,winner`, one row per
/// project in ranking order, LF line endings.
pub fn result_report(result: &TallyResult) -> String {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    writer
        .write_record(["project_id", "title", "cost", "score", "rank", "winner"])
        .expect("in-memory csv write");
    let winners: BTreeSet<_> = result.winners.iter().collect();
    for (rank, id) in result.ordering.iter().enumerate() {
        let (title, cost) = result
            .projects
            .iter()
            .find(|p| &p.id == id)
            .map_or(("", 0), |p| (p.title.as_str(), p.cost));
        writer
            .write_record([
                id.as_str(),
                title,
                &cost.to_string(),
                &result.scoreboard.score(id).to_string(),
                &(rank + 1).to_string(),
                if winners.contains(id) { "true" } else { "false" },
            ])
            .expect("in-memory csv write");
    }
    let bytes = writer.into_inner().expect("in-memory csv flush");
    String::from_utf8(bytes).expect("csv of utf-8 fields is utf-8")
}
