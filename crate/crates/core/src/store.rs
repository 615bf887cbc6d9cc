//! Append-only vote log.
//!
//! Each election lives in two files inside the data directory:
//!
//! * `<id>.election.json`: the election configuration document.
//! * `<id>.votes.log`: one LF-terminated record per submitted ballot,
//!   `<sequence>,<crc32 hex>,<json payload>`. The checksum covers the
//!   payload bytes.
//!
//! Replaying a log rebuilds the in-memory state. A final record that is
//! incomplete or fails its checksum is treated as a torn write: it is
//! dropped with a warning and cut from the file. Any damage before the final
//! record is reported as [`StoreError::CorruptLog`].

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use log::warn;
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ballot::{validate_ballot, Allocation, BallotViolation};
use crate::election::{parse_config, validate_config, ConfigViolation, ElectionConfig};

const CONFIG_SUFFIX: &str = ".election.json";
const LOG_SUFFIX: &str = ".votes.log";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub election_id: String,
    pub voter_id: String,
    pub allocation: Allocation,
    /// Position in the election's log, starting at 0.
    pub sequence: u64,
    /// Wall-clock time of the append. Informational only.
    pub submitted_at: DateTime<Utc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordPayload {
    election_id: String,
    voter_id: String,
    allocation: Allocation,
    submitted_at: DateTime<Utc>,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown election {0:?}")]
    UnknownElection(String),
    #[error("election {0:?} already exists")]
    Conflict(String),
    #[error("invalid election config: {0:?}")]
    InvalidConfig(Vec<ConfigViolation>),
    #[error("election {0:?} is closed")]
    ElectionClosed(String),
    #[error("ballot rejected: {0:?}")]
    ValidationFailed(Vec<BallotViolation>),
    #[error("corrupt log {path}: record {line}: {reason}")]
    CorruptLog {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("storage failure: {0}")]
    Storage(#[from] io::Error),
}

pub type StoreResult<T> = Result<T, StoreError>;

/// Records recovered from a log file.
#[derive(Debug)]
pub struct Replayed {
    pub records: Vec<VoteRecord>,
    /// Byte length of the intact prefix.
    pub valid_len: u64,
    /// Whether a torn final record was dropped.
    pub torn: bool,
}

fn checksum(payload: &[u8]) -> u32 {
    crc32fast::hash(payload)
}

fn encode_record(record: &VoteRecord) -> String {
    let payload = serde_json::to_string(&RecordPayload {
        election_id: record.election_id.clone(),
        voter_id: record.voter_id.clone(),
        allocation: record.allocation.clone(),
        submitted_at: record.submitted_at,
    })
    .expect("vote payload serializes");
    format!(
        "{},{:08x},{}\n",
        record.sequence,
        checksum(payload.as_bytes()),
        payload
    )
}

fn decode_record(line: &[u8], expected_sequence: u64) -> Result<VoteRecord, String> {
    let line = std::str::from_utf8(line).map_err(|e| format!("not utf-8: {e}"))?;
    let mut parts = line.splitn(3, ',');
    let (Some(seq), Some(crc), Some(payload)) = (parts.next(), parts.next(), parts.next()) else {
        return Err("expected `sequence,checksum,payload`".into());
    };
    let sequence: u64 = seq.parse().map_err(|_| format!("bad sequence {seq:?}"))?;
    let crc = u32::from_str_radix(crc, 16).map_err(|_| format!("bad checksum {crc:?}"))?;
    if crc != checksum(payload.as_bytes()) {
        return Err("checksum mismatch".into());
    }
    if sequence != expected_sequence {
        return Err(format!("sequence {sequence}, expected {expected_sequence}"));
    }
    let payload: RecordPayload =
        serde_json::from_str(payload).map_err(|e| format!("bad payload: {e}"))?;
    Ok(VoteRecord {
        election_id: payload.election_id,
        voter_id: payload.voter_id,
        allocation: payload.allocation,
        sequence,
        submitted_at: payload.submitted_at,
    })
}

/// Reads every record of a log file without modifying it.
pub fn read_log(path: &Path) -> StoreResult<Replayed> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    let mut records = Vec::new();
    let mut offset = 0usize;
    let mut line_no = 0usize;
    while offset < bytes.len() {
        let rest = &bytes[offset..];
        let (line, terminated) = match rest.iter().position(|&b| b == b'\n') {
            Some(end) => (&rest[..end], true),
            None => (rest, false),
        };
        let consumed = line.len() + usize::from(terminated);
        let is_last = offset + consumed == bytes.len();
        line_no += 1;

        let decoded = if terminated {
            decode_record(line, records.len() as u64)
        } else {
            Err("record is not newline-terminated".to_owned())
        };
        match decoded {
            Ok(record) => records.push(record),
            Err(reason) if is_last => {
                warn!(
                    "{}: dropping torn final record {line_no} ({reason})",
                    path.display()
                );
                return Ok(Replayed {
                    records,
                    valid_len: offset as u64,
                    torn: true,
                });
            }
            Err(reason) => {
                return Err(StoreError::CorruptLog {
                    path: path.to_owned(),
                    line: line_no,
                    reason,
                })
            }
        }
        offset += consumed;
    }
    Ok(Replayed {
        records,
        valid_len: bytes.len() as u64,
        torn: false,
    })
}

struct ElectionLog {
    config: ElectionConfig,
    records: Vec<VoteRecord>,
    log_path: PathBuf,
    file: File,
    len: u64,
}

impl ElectionLog {
    fn load(config: ElectionConfig, log_path: PathBuf) -> StoreResult<Self> {
        let replayed = read_log(&log_path)?;
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)?;
        if replayed.torn {
            file.set_len(replayed.valid_len)?;
            file.sync_data()?;
        }
        if let Some(stray) = replayed
            .records
            .iter()
            .find(|r| r.election_id != config.id)
        {
            return Err(StoreError::CorruptLog {
                path: log_path,
                line: stray.sequence as usize + 1,
                reason: format!("record belongs to election {:?}", stray.election_id),
            });
        }
        Ok(ElectionLog {
            config,
            records: replayed.records,
            log_path,
            file,
            len: replayed.valid_len,
        })
    }

    fn append(&mut self, record: &VoteRecord) -> io::Result<()> {
        let line = encode_record(record);
        let written = self
            .file
            .write_all(line.as_bytes())
            .and_then(|()| self.file.sync_data());
        if let Err(e) = written {
            // Leave no partial record behind for the next append to extend.
            let _ = self.file.set_len(self.len);
            return Err(e);
        }
        self.len += line.len() as u64;
        Ok(())
    }
}

/// Durable store of elections and their submitted ballots.
///
/// Appends to one election are serialized; different elections proceed
/// independently.
pub struct VoteStore {
    dir: PathBuf,
    elections: RwLock<BTreeMap<String, Arc<Mutex<ElectionLog>>>>,
}

impl VoteStore {
    /// Opens (creating if needed) a data directory and replays every
    /// election found in it.
    pub fn open(dir: impl Into<PathBuf>) -> StoreResult<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        let mut elections = BTreeMap::new();
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            let Some(id) = path
                .file_name()
                .and_then(|n| n.to_str())
                .and_then(|n| n.strip_suffix(CONFIG_SUFFIX))
            else {
                continue;
            };
            let config = read_config_file(&path)?;
            if config.id != id {
                return Err(StoreError::Storage(io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("{} holds election {:?}", path.display(), config.id),
                )));
            }
            let log = ElectionLog::load(config, dir.join(format!("{id}{LOG_SUFFIX}")))?;
            elections.insert(id.to_owned(), Arc::new(Mutex::new(log)));
        }
        Ok(VoteStore {
            dir,
            elections: RwLock::new(elections),
        })
    }

    pub fn data_dir(&self) -> &Path {
        &self.dir
    }

    pub fn log_path(&self, election_id: &str) -> PathBuf {
        self.dir.join(format!("{election_id}{LOG_SUFFIX}"))
    }

    fn config_path(&self, election_id: &str) -> PathBuf {
        self.dir.join(format!("{election_id}{CONFIG_SUFFIX}"))
    }

    fn log(&self, election_id: &str) -> StoreResult<Arc<Mutex<ElectionLog>>> {
        self.elections
            .read()
            .get(election_id)
            .cloned()
            .ok_or_else(|| StoreError::UnknownElection(election_id.to_owned()))
    }

    /// Validates and persists a new, open election.
    pub fn create_election(&self, mut config: ElectionConfig) -> StoreResult<()> {
        let violations = validate_config(&config);
        if !violations.is_empty() {
            return Err(StoreError::InvalidConfig(violations));
        }
        config.open = true;
        let mut elections = self.elections.write();
        if elections.contains_key(&config.id) || self.config_path(&config.id).exists() {
            return Err(StoreError::Conflict(config.id));
        }
        let log_path = self.log_path(&config.id);
        if log_path.exists() {
            return Err(StoreError::Conflict(config.id));
        }
        write_config_file(&self.config_path(&config.id), &config)?;
        let log = ElectionLog::load(config.clone(), log_path)?;
        elections.insert(config.id, Arc::new(Mutex::new(log)));
        Ok(())
    }

    /// Stops accepting ballots for an election. Closing twice is a no-op.
    pub fn close_election(&self, election_id: &str) -> StoreResult<()> {
        let log = self.log(election_id)?;
        let mut log = log.lock();
        if log.config.open {
            let mut closed = log.config.clone();
            closed.open = false;
            write_config_file(&self.config_path(election_id), &closed)?;
            log.config = closed;
        }
        Ok(())
    }

    pub fn election(&self, election_id: &str) -> StoreResult<ElectionConfig> {
        Ok(self.log(election_id)?.lock().config.clone())
    }

    pub fn election_ids(&self) -> Vec<String> {
        self.elections.read().keys().cloned().collect()
    }

    /// Validates a ballot and appends it durably, returning its record.
    pub fn append_vote(
        &self,
        election_id: &str,
        voter_id: &str,
        allocation: Allocation,
    ) -> StoreResult<VoteRecord> {
        let log = self.log(election_id)?;
        let mut log = log.lock();
        if !log.config.open {
            return Err(StoreError::ElectionClosed(election_id.to_owned()));
        }
        let violations = validate_ballot(&log.config, &allocation);
        if !violations.is_empty() {
            return Err(StoreError::ValidationFailed(violations));
        }
        let record = VoteRecord {
            election_id: election_id.to_owned(),
            voter_id: voter_id.to_owned(),
            allocation,
            sequence: log.records.len() as u64,
            submitted_at: Utc::now(),
        };
        log.append(&record)?;
        log.records.push(record.clone());
        Ok(record)
    }

    /// All records of an election in append order.
    pub fn records(&self, election_id: &str) -> StoreResult<Vec<VoteRecord>> {
        Ok(self.log(election_id)?.lock().records.clone())
    }

    /// Latest ballot of every voter, keyed and ordered by voter id.
    pub fn effective_votes(&self, election_id: &str) -> StoreResult<BTreeMap<String, Allocation>> {
        let log = self.log(election_id)?;
        let log = log.lock();
        let mut latest = BTreeMap::new();
        for record in &log.records {
            latest.insert(record.voter_id.clone(), record.allocation.clone());
        }
        Ok(latest)
    }

    /// One ballot per voter (their latest), in ascending voter id order.
    pub fn effective_ballots(&self, election_id: &str) -> StoreResult<Vec<Allocation>> {
        Ok(self.effective_votes(election_id)?.into_values().collect())
    }

    /// Rebuilds one election's state from its files on disk.
    pub fn replay(&self, election_id: &str) -> StoreResult<()> {
        let log = self.log(election_id)?;
        let mut log = log.lock();
        let config = read_config_file(&self.config_path(election_id))?;
        *log = ElectionLog::load(config, log.log_path.clone())?;
        Ok(())
    }
}

fn read_config_file(path: &Path) -> StoreResult<ElectionConfig> {
    let text = fs::read_to_string(path)?;
    parse_config(&text).map_err(|e| {
        StoreError::Storage(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("{}: {e}", path.display()),
        ))
    })
}

fn write_config_file(path: &Path, config: &ElectionConfig) -> io::Result<()> {
    let tmp = path.with_extension("json.tmp");
    {
        let mut file = File::create(&tmp)?;
        file.write_all(config.to_json().as_bytes())?;
        file.write_all(b"\n")?;
        file.sync_all()?;
    }
    fs::rename(tmp, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::election::{Method, MethodSpec, Project, UiVariant};

    fn config(id: &str) -> ElectionConfig {
        ElectionConfig {
            id: id.into(),
            name: "Store test".into(),
            monetary_budget: 100,
            method_spec: MethodSpec::cumulative(5),
            ui_variant: UiVariant::SideBar,
            projects: vec![Project::new("p1", "One", 10), Project::new("p2", "Two", 20)],
            open: true,
        }
    }

    fn ballot(p1: u64, p2: u64) -> Allocation {
        Allocation::tokens(Method::Cumulative, [("p1", p1), ("p2", p2)])
    }

    #[test]
    fn sequences_start_at_zero_and_increase() {
        let dir = tempfile::tempdir().unwrap();
        let store = VoteStore::open(dir.path()).unwrap();
        store.create_election(config("e1")).unwrap();
        assert_eq!(store.append_vote("e1", "v1", ballot(1, 0)).unwrap().sequence, 0);
        assert_eq!(store.append_vote("e1", "v2", ballot(0, 2)).unwrap().sequence, 1);
    }

    #[test]
    fn closed_election_rejects_votes() {
        let dir = tempfile::tempdir().unwrap();
        let store = VoteStore::open(dir.path()).unwrap();
        store.create_election(config("e1")).unwrap();
        store.close_election("e1").unwrap();
        assert!(matches!(
            store.append_vote("e1", "v1", ballot(1, 0)),
            Err(StoreError::ElectionClosed(_))
        ));
        // Closed state survives a restart.
        let reopened = VoteStore::open(dir.path()).unwrap();
        assert!(!reopened.election("e1").unwrap().open);
    }

    #[test]
    fn invalid_ballots_and_configs_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let store = VoteStore::open(dir.path()).unwrap();
        let mut bad = config("bad");
        bad.projects.pop();
        assert!(matches!(store.create_election(bad), Err(StoreError::InvalidConfig(_))));

        store.create_election(config("e1")).unwrap();
        assert!(matches!(store.create_election(config("e1")), Err(StoreError::Conflict(_))));
        match store.append_vote("e1", "v1", ballot(4, 2)) {
            Err(StoreError::ValidationFailed(v)) => assert_eq!(v[0].code(), "budget_exceeded"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            store.append_vote("nope", "v1", ballot(1, 0)),
            Err(StoreError::UnknownElection(_))
        ));
        assert!(store.records("e1").unwrap().is_empty());
    }

    #[test]
    fn latest_vote_wins_in_voter_order() {
        let dir = tempfile::tempdir().unwrap();
        let store = VoteStore::open(dir.path()).unwrap();
        store.create_election(config("e1")).unwrap();
        assert!(store.effective_ballots("e1").unwrap().is_empty());
        store.append_vote("e1", "v2", ballot(1, 0)).unwrap();
        store.append_vote("e1", "v1", ballot(2, 0)).unwrap();
        store.append_vote("e1", "v2", ballot(0, 3)).unwrap();
        assert_eq!(
            store.effective_ballots("e1").unwrap(),
            vec![ballot(2, 0), ballot(0, 3)]
        );

        for n in 1..=5 {
            store.append_vote("e1", "solo", ballot(n, 0)).unwrap();
        }
        assert_eq!(store.effective_votes("e1").unwrap()["solo"], ballot(5, 0));
    }

    #[test]
    fn replay_restores_state() {
        let dir = tempfile::tempdir().unwrap();
        let before = {
            let store = VoteStore::open(dir.path()).unwrap();
            store.create_election(config("e1")).unwrap();
            store.append_vote("e1", "v1", ballot(1, 1)).unwrap();
            store.append_vote("e1", "v2", ballot(0, 5)).unwrap();
            store.records("e1").unwrap()
        };
        let store = VoteStore::open(dir.path()).unwrap();
        assert_eq!(store.records("e1").unwrap(), before);
        store.replay("e1").unwrap();
        assert_eq!(store.records("e1").unwrap(), before);
        assert_eq!(store.append_vote("e1", "v3", ballot(1, 0)).unwrap().sequence, 2);
    }

    #[test]
    fn torn_final_record_is_dropped_and_cut() {
        let dir = tempfile::tempdir().unwrap();
        let path;
        let clean_len;
        {
            let store = VoteStore::open(dir.path()).unwrap();
            store.create_election(config("e1")).unwrap();
            store.append_vote("e1", "v1", ballot(1, 1)).unwrap();
            path = store.log_path("e1");
            clean_len = fs::metadata(&path).unwrap().len();
            store.append_vote("e1", "v2", ballot(2, 1)).unwrap();
        }
        // Chop the second record in half.
        let full = fs::read(&path).unwrap();
        let cut = clean_len as usize + (full.len() - clean_len as usize) / 2;
        fs::write(&path, &full[..cut]).unwrap();

        let store = VoteStore::open(dir.path()).unwrap();
        assert_eq!(store.effective_ballots("e1").unwrap(), vec![ballot(1, 1)]);
        assert_eq!(fs::metadata(&path).unwrap().len(), clean_len);
        assert_eq!(store.append_vote("e1", "v2", ballot(2, 1)).unwrap().sequence, 1);
        drop(store);
        let store = VoteStore::open(dir.path()).unwrap();
        assert_eq!(store.records("e1").unwrap().len(), 2);
    }

    #[test]
    fn corrupt_middle_record_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path;
        {
            let store = VoteStore::open(dir.path()).unwrap();
            store.create_election(config("e1")).unwrap();
            for v in ["v1", "v2", "v3"] {
                store.append_vote("e1", v, ballot(1, 0)).unwrap();
            }
            path = store.log_path("e1");
        }
        let text = fs::read_to_string(&path).unwrap();
        let damaged = text.replacen("\"v2\"", "\"vX\"", 1);
        fs::write(&path, damaged).unwrap();
        match VoteStore::open(dir.path()) {
            Err(StoreError::CorruptLog { line, reason, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(reason, "checksum mismatch");
            }
            Err(other) => panic!("unexpected {other:?}"),
            Ok(_) => panic!("corrupt log accepted"),
        }
    }

    #[test]
    fn record_line_format() {
        let record = VoteRecord {
            election_id: "e1".into(),
            voter_id: "v1".into(),
            allocation: ballot(1, 0),
            sequence: 7,
            submitted_at: DateTime::from_timestamp(0, 0).unwrap(),
        };
        let line = encode_record(&record);
        let payload = r#"{"election_id":"e1","voter_id":"v1","allocation":{"method":"cumulative","tokens":{"p1":1}},"submitted_at":"1970-01-01T00:00:00Z"}"#;
        assert_eq!(line, format!("7,{:08x},{payload}\n", crc32fast::hash(payload.as_bytes())));
        assert_eq!(decode_record(line.trim_end().as_bytes(), 7).unwrap(), record);
        assert!(decode_record(line.trim_end().as_bytes(), 8).is_err());
    }
}
