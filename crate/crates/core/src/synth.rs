//! Random valid ballots for demos and load tests.
//!
//! Ballots are produced as edit sequences and folded through
//! [`apply_edit`], so every generated ballot went through the same
//! transitions a live voter's draft would.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use crate::ballot::{apply_edit, max_affordable, Allocation, Edit};
use crate::election::{ElectionConfig, Method, ProjectId};

/// A generated ballot and the edits that built it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SyntheticBallot {
    pub edits: Vec<Edit>,
    pub allocation: Allocation,
}

/// Draws one non-empty ballot that satisfies the election's rules, or
/// `None` when no valid ballot exists (a knapsack election where every
/// project costs more than the budget).
pub fn synthetic_ballot<R: Rng + ?Sized>(
    election: &ElectionConfig,
    rng: &mut R,
) -> Option<SyntheticBallot> {
    let ids: Vec<ProjectId> = election.project_ids().cloned().collect();
    let mut draft = Allocation::empty(election.method());
    let mut edits = Vec::new();
    let mut push = |draft: &mut Allocation, edit: Edit| -> bool {
        match apply_edit(election, draft, &edit) {
            Ok(next) => {
                *draft = next;
                edits.push(edit);
                true
            }
            Err(_) => false,
        }
    };

    match election.method() {
        Method::Cumulative | Method::Quadratic => {
            let picks = rng.random_range(1..=ids.len());
            for _ in 0..picks {
                let room: Vec<(&ProjectId, u64)> = ids
                    .iter()
                    .filter_map(|p| {
                        let max = max_affordable(election, &draft, p).ok()?;
                        let current = draft.tokens_on(p);
                        (max > current).then_some((p, max - current))
                    })
                    .collect();
                let Some(&(project, headroom)) = room.choose(rng) else {
                    break;
                };
                let delta = rng.random_range(1..=headroom) as i64;
                push(&mut draft, Edit::Delta { project: project.clone(), delta });
            }
        }
        Method::KApproval | Method::KRanking => {
            let k = election.method_spec.k.unwrap_or(1) as usize;
            let count = rng.random_range(1..=k.min(ids.len()));
            let chosen: Vec<ProjectId> = ids.choose_multiple(rng, count).cloned().collect();
            if election.method() == Method::KRanking {
                push(&mut draft, Edit::Rank { steps: chosen });
            } else {
                for project in chosen {
                    push(&mut draft, Edit::Approve { project });
                }
            }
        }
        Method::Knapsack => {
            let mut order = ids.clone();
            order.shuffle(rng);
            let wanted = rng.random_range(1..=ids.len());
            let mut approved = 0;
            for project in order {
                if approved == wanted {
                    break;
                }
                if push(&mut draft, Edit::Approve { project }) {
                    approved += 1;
                }
            }
        }
        Method::Pairwise => {
            let mut pairs: Vec<(usize, usize)> = (0..ids.len())
                .flat_map(|i| (i + 1..ids.len()).map(move |j| (i, j)))
                .collect();
            pairs.shuffle(rng);
            let count = rng.random_range(1..=pairs.len().min(10));
            for &(i, j) in &pairs[..count] {
                let (winner, loser) = if rng.random_bool(0.5) { (i, j) } else { (j, i) };
                push(
                    &mut draft,
                    Edit::Compare {
                        winner: ids[winner].clone(),
                        loser: ids[loser].clone(),
                    },
                );
            }
        }
    }

    (!draft.is_empty()).then_some(SyntheticBallot {
        edits,
        allocation: draft,
    })
}
