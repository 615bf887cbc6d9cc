use std::collections::BTreeMap;

use pb_core::{
    budget_status, max_affordable, Allocation, BallotViolation, BudgetStatus, ElectionConfig,
    ProjectId,
};
use serde::{Deserialize, Serialize};

/// Structured, human-readable reason an edit was refused.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feedback {
    pub code: String,
    pub message: String,
    pub detail: BallotViolation,
}

impl From<BallotViolation> for Feedback {
    fn from(v: BallotViolation) -> Self {
        Feedback {
            code: v.code().to_owned(),
            message: v.to_string(),
            detail: v,
        }
    }
}

/// Server-held draft for one voter in one election.
#[derive(Debug, Default)]
pub(crate) struct Session {
    pub draft: Option<Allocation>,
    pub last_error: Option<Feedback>,
}

impl Session {
    pub fn draft(&mut self, election: &ElectionConfig) -> &Allocation {
        self.draft
            .get_or_insert_with(|| Allocation::empty(election.method()))
    }
}

/// What the voter interface renders after every request.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionState {
    pub election_id: String,
    pub voter_id: String,
    pub draft: Allocation,
    /// Cost-unit budget of distributional ballots; absent otherwise.
    pub budget: Option<BudgetStatus>,
    /// Highest token count each project could hold right now.
    pub max_affordable: Option<BTreeMap<ProjectId, u64>>,
    pub last_error: Option<Feedback>,
}

impl SessionState {
    pub(crate) fn build(
        election: &ElectionConfig,
        voter_id: &str,
        draft: &Allocation,
        last_error: Option<Feedback>,
    ) -> Result<Self, BallotViolation> {
        let (budget, affordable) = if election.method().is_distributional() {
            let status = budget_status(&election.method_spec, draft)?;
            let affordable = election
                .project_ids()
                .map(|p| Ok((p.clone(), max_affordable(election, draft, p)?)))
                .collect::<Result<BTreeMap<_, _>, BallotViolation>>()?;
            (Some(status), Some(affordable))
        } else {
            (None, None)
        };
        Ok(SessionState {
            election_id: election.id.clone(),
            voter_id: voter_id.to_owned(),
            draft: draft.clone(),
            budget,
            max_affordable: affordable,
            last_error,
        })
    }
}
