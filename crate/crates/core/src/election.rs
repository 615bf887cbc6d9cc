//! Election definitions shared by the ballot engine, tallying and the store.
//!
//! An [`ElectionConfig`] is parsed from a strict JSON document
//! ([`parse_config`]) and then checked with [`validate_config`]. Parsing only
//! establishes structure; every semantic rule (unique project ids, method
//! parameters matching the method, `k` not exceeding the project count, ...)
//! is reported by validation as a list of [`ConfigViolation`]s.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Opaque project identifier, unique within an election.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProjectId(String);

impl ProjectId {
    pub fn new(id: impl Into<String>) -> Self {
        ProjectId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ProjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ProjectId {
    fn from(s: &str) -> Self {
        ProjectId(s.to_owned())
    }
}

impl From<String> for ProjectId {
    fn from(s: String) -> Self {
        ProjectId(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Project {
    pub id: ProjectId,
    pub title: String,
    /// Cost in minor currency units.
    pub cost: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

impl Project {
    pub fn new(id: impl Into<ProjectId>, title: impl Into<String>, cost: u64) -> Self {
        Project {
            id: id.into(),
            title: title.into(),
            cost,
            description: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    KApproval,
    KRanking,
    Knapsack,
    Pairwise,
    Cumulative,
    Quadratic,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::KApproval,
        Method::KRanking,
        Method::Knapsack,
        Method::Pairwise,
        Method::Cumulative,
        Method::Quadratic,
    ];

    /// Cumulative and quadratic ballots spread a token budget over projects.
    pub fn is_distributional(self) -> bool {
        matches!(self, Method::Cumulative | Method::Quadratic)
    }

    pub fn uses_k(self) -> bool {
        matches!(self, Method::KApproval | Method::KRanking)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::KApproval => "k_approval",
            Method::KRanking => "k_ranking",
            Method::Knapsack => "knapsack",
            Method::Pairwise => "pairwise",
            Method::Cumulative => "cumulative",
            Method::Quadratic => "quadratic",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Ballot method plus its parameters.
///
/// Parameters are optional at the type level so that a config carrying the
/// wrong set of parameters can still be parsed and then reported on by
/// [`validate_config`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    #[serde(rename = "type")]
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_budget: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_project_cap: Option<u64>,
}

impl MethodSpec {
    pub fn cumulative(token_budget: u64) -> Self {
        Self::distributional(Method::Cumulative, token_budget)
    }

    pub fn quadratic(token_budget: u64) -> Self {
        Self::distributional(Method::Quadratic, token_budget)
    }

    fn distributional(method: Method, token_budget: u64) -> Self {
        MethodSpec {
            method,
            token_budget: Some(token_budget),
            k: None,
            per_project_cap: None,
        }
    }

    pub fn k_approval(k: u32) -> Self {
        Self::with_k(Method::KApproval, k)
    }

    pub fn k_ranking(k: u32) -> Self {
        Self::with_k(Method::KRanking, k)
    }

    fn with_k(method: Method, k: u32) -> Self {
        MethodSpec {
            method,
            token_budget: None,
            k: Some(k),
            per_project_cap: None,
        }
    }

    pub fn knapsack() -> Self {
        Self::bare(Method::Knapsack)
    }

    pub fn pairwise() -> Self {
        Self::bare(Method::Pairwise)
    }

    fn bare(method: Method) -> Self {
        MethodSpec {
            method,
            token_budget: None,
            k: None,
            per_project_cap: None,
        }
    }

    pub fn with_cap(mut self, cap: u64) -> Self {
        self.per_project_cap = Some(cap);
        self
    }

    /// Token budget of a distributional method.
    pub fn require_token_budget(&self) -> Result<u64, MissingParameter> {
        self.token_budget.ok_or(MissingParameter("token_budget"))
    }

    pub fn require_k(&self) -> Result<u32, MissingParameter> {
        self.k.ok_or(MissingParameter("k"))
    }
}

/// A method parameter the operation needed was absent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
#[error("method parameter `{0}` is missing")]
pub struct MissingParameter(pub &'static str);

/// Voter interface layout. Serialized as the letters `A` to `D`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UiVariant {
    #[serde(rename = "A")]
    None,
    #[serde(rename = "B")]
    TopBar,
    #[serde(rename = "C")]
    SideBar,
    #[serde(rename = "D")]
    TopAndSideBar,
}

impl UiVariant {
    pub fn has_top_bar(self) -> bool {
        matches!(self, UiVariant::TopBar | UiVariant::TopAndSideBar)
    }

    pub fn has_side_bar(self) -> bool {
        matches!(self, UiVariant::SideBar | UiVariant::TopAndSideBar)
    }
}

fn default_open() -> bool {
    true
}

fn is_open(open: &bool) -> bool {
    *open
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElectionConfig {
    pub id: String,
    pub name: String,
    /// Funds available for winning projects, in minor currency units.
    pub monetary_budget: u64,
    #[serde(rename = "method")]
    pub method_spec: MethodSpec,
    pub ui_variant: UiVariant,
    pub projects: Vec<Project>,
    /// Omitted from documents while the election is open.
    #[serde(default = "default_open", skip_serializing_if = "is_open")]
    pub open: bool,
}

impl ElectionConfig {
    pub fn method(&self) -> Method {
        self.method_spec.method
    }

    pub fn project(&self, id: &ProjectId) -> Option<&Project> {
        self.projects.iter().find(|p| &p.id == id)
    }

    pub fn has_project(&self, id: &ProjectId) -> bool {
        self.project(id).is_some()
    }

    pub fn project_ids(&self) -> impl Iterator<Item = &ProjectId> {
        self.projects.iter().map(|p| &p.id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("election config serializes")
    }
}

/// One broken rule found by [`validate_config`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, Error)]
#[serde(tag = "code", rename_all = "snake_case")]
pub enum ConfigViolation {
    #[error("election id {id:?} must be non-empty and use only ASCII letters, digits, '-' or '_'")]
    InvalidElectionId { id: String },
    #[error("an election needs at least 2 projects, found {count}")]
    TooFewProjects { count: usize },
    #[error("project id {id:?} appears more than once")]
    DuplicateProjectId { id: ProjectId },
    #[error("monetary budget must be positive")]
    MonetaryBudgetNotPositive,
    #[error("method {method} requires `{field}`")]
    MissingParameter { method: Method, field: String },
    #[error("method {method} does not take `{field}`")]
    UnexpectedParameter { method: Method, field: String },
    #[error("token budget must be positive")]
    TokenBudgetNotPositive,
    #[error("k must be positive")]
    KNotPositive,
    #[error("k = {k} exceeds the number of projects ({projects})")]
    KExceedsProjects { k: u32, projects: usize },
    #[error("per-project cap must be positive")]
    CapNotPositive,
    #[error("per-project cap {cap} exceeds the token budget {token_budget}")]
    CapExceedsBudget { cap: u64, token_budget: u64 },
}

impl ConfigViolation {
    /// The configuration field the violation is about.
    pub fn field(&self) -> &str {
        match self {
            ConfigViolation::InvalidElectionId { .. } => "id",
            ConfigViolation::TooFewProjects { .. } | ConfigViolation::DuplicateProjectId { .. } => {
                "projects"
            }
            ConfigViolation::MonetaryBudgetNotPositive => "monetary_budget",
            ConfigViolation::MissingParameter { field, .. }
            | ConfigViolation::UnexpectedParameter { field, .. } => field,
            ConfigViolation::TokenBudgetNotPositive => "token_budget",
            ConfigViolation::KNotPositive | ConfigViolation::KExceedsProjects { .. } => "k",
            ConfigViolation::CapNotPositive | ConfigViolation::CapExceedsBudget { .. } => {
                "per_project_cap"
            }
        }
    }
}

/// Election ids double as log file names, so they are kept to a safe charset.
fn valid_election_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

/// Checks every semantic rule of a parsed config. An empty list means the
/// config is valid.
pub fn validate_config(config: &ElectionConfig) -> Vec<ConfigViolation> {
    let mut violations = Vec::new();

    if !valid_election_id(&config.id) {
        violations.push(ConfigViolation::InvalidElectionId {
            id: config.id.clone(),
        });
    }
    if config.projects.len() < 2 {
        violations.push(ConfigViolation::TooFewProjects {
            count: config.projects.len(),
        });
    }
    let mut seen = BTreeSet::new();
    let mut reported = BTreeSet::new();
    for project in &config.projects {
        if !seen.insert(&project.id) && reported.insert(&project.id) {
            violations.push(ConfigViolation::DuplicateProjectId {
                id: project.id.clone(),
            });
        }
    }
    if config.monetary_budget == 0 {
        violations.push(ConfigViolation::MonetaryBudgetNotPositive);
    }

    let spec = &config.method_spec;
    let method = spec.method;
    let mut presence = |field: &str, present: bool, wanted: bool| {
        if wanted && !present {
            violations.push(ConfigViolation::MissingParameter {
                method,
                field: field.to_owned(),
            });
        } else if !wanted && present {
            violations.push(ConfigViolation::UnexpectedParameter {
                method,
                field: field.to_owned(),
            });
        }
    };
    presence(
        "token_budget",
        spec.token_budget.is_some(),
        method.is_distributional(),
    );
    presence("k", spec.k.is_some(), method.uses_k());
    // The cap is optional for distributional methods and forbidden elsewhere.
    if spec.per_project_cap.is_some() && !method.is_distributional() {
        presence("per_project_cap", true, false);
    }

    if let Some(budget) = spec.token_budget {
        if budget == 0 {
            violations.push(ConfigViolation::TokenBudgetNotPositive);
        }
    }
    if let Some(k) = spec.k {
        if k == 0 {
            violations.push(ConfigViolation::KNotPositive);
        } else if k as usize > config.projects.len() {
            violations.push(ConfigViolation::KExceedsProjects {
                k,
                projects: config.projects.len(),
            });
        }
    }
    if let Some(cap) = spec.per_project_cap {
        if cap == 0 {
            violations.push(ConfigViolation::CapNotPositive);
        } else if let Some(token_budget) = spec.token_budget {
            if cap > token_budget {
                violations.push(ConfigViolation::CapExceedsBudget { cap, token_budget });
            }
        }
    }

    violations
}

/// A configuration document that could not be read into an [`ElectionConfig`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message} (field `{field}`, line {line}, column {column})")]
pub struct ParseError {
    /// Dotted path to the offending field, e.g. `method.token_budget`.
    /// `.` when the problem is at the document root.
    pub field: String,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

/// Parses a configuration document. Semantic checks are left to
/// [`validate_config`].
pub fn parse_config(text: &str) -> Result<ElectionConfig, ParseError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let result: Result<ElectionConfig, _> = serde_path_to_error::deserialize(de);
    result.map_err(|err| {
        let path = err.path().to_string();
        let inner = err.into_inner();
        let message = inner.to_string();
        // serde reports a missing field against its parent; name the field itself.
        let field = match missing_field(&message) {
            Some(name) if path == "." => name.to_owned(),
            Some(name) => format!("{path}.{name}"),
            None => path,
        };
        ParseError {
            field,
            line: inner.line(),
            column: inner.column(),
            message,
        }
    })
}

fn missing_field(message: &str) -> Option<&str> {
    let rest = message.strip_prefix("missing field `")?;
    rest.split('`').next()
}
