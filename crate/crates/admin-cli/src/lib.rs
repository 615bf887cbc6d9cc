//! Operator commands for participatory budgeting elections.
//!
//! Commands run either against a running service (the default) or, with
//! `--offline`, directly against the data directory through the same engine
//! and store the service uses.

mod online;

use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use pb_core::synth::synthetic_ballot;
use pb_core::{
    parse_config, result_report, select_winners, tally, ElectionConfig, SelectionRule,
    StoreError, TallyError, TallyResult, VoteStore,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Parser, Debug)]
#[command(name = "pbadmin", version, about = "Participatory budgeting election administration")]
pub struct Cli {
    /// Work on the data directory in-process instead of calling the service.
    #[arg(long, global = true)]
    pub offline: bool,

    /// Data directory for --offline mode.
    #[arg(long, global = true, env = "PB_DATA_DIR", default_value = "pb-data")]
    pub data_dir: PathBuf,

    /// Base URL of the service.
    #[arg(long, global = true, env = "PB_SERVER_URL", default_value = "http://127.0.0.1:8080")]
    pub server: String,

    /// Admin bearer token for the service.
    #[arg(long, global = true, env = "PB_ADMIN_TOKEN", hide_env_values = true)]
    pub token: Option<String>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Create an election from a configuration file and print its id.
    Create {
        #[arg(long)]
        config: PathBuf,
    },
    /// Stop accepting ballots for an election.
    Close {
        #[arg(long)]
        election: String,
    },
    /// Tally an election and write the result as CSV.
    Tally {
        #[arg(long)]
        election: String,
        #[arg(long, default_value = "greedy")]
        rule: SelectionRule,
        #[arg(long)]
        out: PathBuf,
    },
    /// Append seeded synthetic ballots to an open election.
    GenBallots {
        #[arg(long)]
        election: String,
        #[arg(long)]
        n: u64,
        #[arg(long)]
        seed: u64,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid election config:\n{}", .0.join("\n"))]
    InvalidConfig(Vec<String>),
    #[error("unknown election {0:?}")]
    UnknownElection(String),
    #[error("election {0:?} is closed")]
    ElectionClosed(String),
    #[error("{0}")]
    Rejected(String),
    #[error("{0}")]
    InstanceTooLarge(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 2,
            CliError::InstanceTooLarge(_) => 3,
            _ => 1,
        }
    }
}

impl From<StoreError> for CliError {
    fn from(err: StoreError) -> Self {
        match err {
            StoreError::UnknownElection(id) => CliError::UnknownElection(id),
            StoreError::ElectionClosed(id) => CliError::ElectionClosed(id),
            StoreError::InvalidConfig(violations) => CliError::InvalidConfig(
                violations
                    .iter()
                    .map(|v| format!("{}: {v}", v.field()))
                    .collect(),
            ),
            StoreError::Conflict(id) => CliError::Rejected(format!("election {id:?} already exists")),
            StoreError::ValidationFailed(v) => CliError::Rejected(format!("ballot rejected: {v:?}")),
            err @ (StoreError::CorruptLog { .. } | StoreError::Storage(_)) => {
                CliError::Io(err.to_string())
            }
        }
    }
}

impl From<TallyError> for CliError {
    fn from(err: TallyError) -> Self {
        match err {
            TallyError::InstanceTooLarge { .. } => CliError::InstanceTooLarge(err.to_string()),
            other => CliError::Rejected(other.to_string()),
        }
    }
}

/// What a successful command prints on stdout.
#[derive(Debug, PartialEq, Eq)]
pub enum Outcome {
    Created(String),
    Closed(String),
    Tallied { out: PathBuf, winners: usize },
    Generated(u64),
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Outcome::Created(id) => write!(f, "{id}"),
            Outcome::Closed(id) => write!(f, "closed {id}"),
            Outcome::Tallied { out, winners } => {
                write!(f, "wrote {} ({winners} winners)", out.display())
            }
            Outcome::Generated(n) => write!(f, "appended {n} ballots"),
        }
    }
}

/// Voter id for the `index`-th synthetic ballot of a seed.
pub fn synthetic_voter(seed: u64, index: u64) -> String {
    format!("gen-{seed}-{index:06}")
}

/// Draws the seeded ballot stream for an election and hands each ballot to
/// `sink` with its voter id.
pub(crate) fn for_each_synthetic<F>(
    election: &ElectionConfig,
    n: u64,
    seed: u64,
    mut sink: F,
) -> Result<u64, CliError>
where
    F: FnMut(String, pb_core::synth::SyntheticBallot) -> Result<(), CliError>,
{
    if !election.open {
        return Err(CliError::ElectionClosed(election.id.clone()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for index in 0..n {
        let ballot = synthetic_ballot(election, &mut rng).ok_or_else(|| {
            CliError::Rejected(format!(
                "no valid {} ballot exists for election {:?}",
                election.method(),
                election.id
            ))
        })?;
        sink(synthetic_voter(seed, index), ballot)?;
    }
    Ok(n)
}

fn read_config_text(path: &std::path::Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write_report(out: &std::path::Path, result: &TallyResult) -> Result<Outcome, CliError> {
    fs::write(out, result_report(result))
        .map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    Ok(Outcome::Tallied {
        out: out.to_owned(),
        winners: result.winners.len(),
    })
}

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    if cli.offline {
        run_offline(cli)
    } else {
        online::run(cli)
    }
}

fn run_offline(cli: &Cli) -> Result<Outcome, CliError> {
    // Read the config before touching the data directory so a missing file
    // is reported as such.
    let config_text = match &cli.command {
        Command::Create { config } => Some(read_config_text(config)?),
        _ => None,
    };
    let store = VoteStore::open(&cli.data_dir)?;
    match &cli.command {
        Command::Create { .. } => {
            let text = config_text.unwrap_or_default();
            let config = parse_config(&text)
                .map_err(|e| CliError::InvalidConfig(vec![format!("{}: {e}", e.field)]))?;
            let id = config.id.clone();
            store.create_election(config)?;
            Ok(Outcome::Created(id))
        }
        Command::Close { election } => {
            store.close_election(election)?;
            Ok(Outcome::Closed(election.clone()))
        }
        Command::Tally {
            election,
            rule,
            out,
        } => {
            let config = store.election(election)?;
            let ballots = store.effective_ballots(election)?;
            let board = tally(&config, &ballots)?;
            let result = select_winners(&board, &config.projects, config.monetary_budget, *rule)?;
            write_report(out, &result)
        }
        Command::GenBallots { election, n, seed } => {
            let config = store.election(election)?;
            let count = for_each_synthetic(&config, *n, *seed, |voter, ballot| {
                store.append_vote(election, &voter, ballot.allocation)?;
                Ok(())
            })?;
            Ok(Outcome::Generated(count))
        }
    }
}
