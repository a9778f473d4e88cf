//! Durable ledger records.
//!
//! Each record is one hex line encoding
//! `type (1) || token id (32) || role (1) || amount (u64 BE) || seq (u64 BE)`.
//! Events are appended to `ledger.log`; every `snapshot_every` events the full
//! record set is written, sorted, to `ledger.snapshot` and the log is
//! truncated. Reopening replays the snapshot followed by any log records with
//! a higher sequence number.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::Role;
use crate::blind::token::TokenId;

pub const RECORD_LEN: usize = 1 + 32 + 1 + 8 + 8;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("ledger i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt ledger record on line {line}: {reason}")]
    Corrupt { line: usize, reason: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventType {
    BsClaimPaid = 1,
    EsClaimPaid = 2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LedgerRecord {
    pub event: EventType,
    pub token: TokenId,
    pub role: Role,
    pub amount: u64,
    pub seq: u64,
}

impl LedgerRecord {
    pub fn to_bytes(&self) -> [u8; RECORD_LEN] {
        let mut out = [0u8; RECORD_LEN];
        out[0] = self.event as u8;
        out[1..33].copy_from_slice(&self.token.0);
        out[33] = self.role.code();
        out[34..42].copy_from_slice(&self.amount.to_be_bytes());
        out[42..50].copy_from_slice(&self.seq.to_be_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, &'static str> {
        if bytes.len() != RECORD_LEN {
            return Err("wrong record length");
        }
        let event = match bytes[0] {
            1 => EventType::BsClaimPaid,
            2 => EventType::EsClaimPaid,
            _ => return Err("unknown event type"),
        };
        let role = Role::from_code(bytes[33]).ok_or("unknown role")?;
        Ok(Self {
            event,
            token: TokenId(bytes[1..33].try_into().expect("32 bytes")),
            role,
            amount: u64::from_be_bytes(bytes[34..42].try_into().expect("8 bytes")),
            seq: u64::from_be_bytes(bytes[42..50].try_into().expect("8 bytes")),
        })
    }

    pub fn to_line(&self) -> String {
        hex::encode(self.to_bytes())
    }
}

fn read_records(path: &Path) -> Result<Vec<LedgerRecord>, LogError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bytes = hex::decode(line).map_err(|_| LogError::Corrupt { line: i + 1, reason: "not hex" })?;
        out.push(LedgerRecord::from_bytes(&bytes).map_err(|reason| LogError::Corrupt { line: i + 1, reason })?);
    }
    Ok(out)
}

#[derive(Debug)]
pub struct LedgerLog {
    dir: PathBuf,
    log: File,
    since_snapshot: usize,
    snapshot_every: usize,
}

impl LedgerLog {
    pub fn log_path(dir: &Path) -> PathBuf {
        dir.join("ledger.log")
    }

    pub fn snapshot_path(dir: &Path) -> PathBuf {
        dir.join("ledger.snapshot")
    }

    /// Opens (creating if needed) the ledger in `dir` and returns all durable
    /// records in sequence order.
    pub fn open(dir: &Path, snapshot_every: usize) -> Result<(Self, Vec<LedgerRecord>), LogError> {
        fs::create_dir_all(dir)?;
        let mut records = read_records(&Self::snapshot_path(dir))?;
        let high = records.iter().map(|r| r.seq).max();
        records.extend(read_records(&Self::log_path(dir))?.into_iter().filter(|r| Some(r.seq) > high));
        records.sort_by_key(|r| r.seq);
        let log = OpenOptions::new().create(true).append(true).open(Self::log_path(dir))?;
        let since_snapshot = records.iter().filter(|r| Some(r.seq) > high).count();
        Ok((Self { dir: dir.to_owned(), log, since_snapshot, snapshot_every: snapshot_every.max(1) }, records))
    }

    /// Appends one record; `all` is consulted only when a snapshot is due.
    pub fn append(&mut self, record: &LedgerRecord, all: &[LedgerRecord]) -> Result<(), LogError> {
        writeln!(self.log, "{}", record.to_line())?;
        self.log.flush()?;
        self.since_snapshot += 1;
        if self.since_snapshot >= self.snapshot_every {
            self.snapshot(all)?;
        }
        Ok(())
    }

    pub fn snapshot(&mut self, all: &[LedgerRecord]) -> Result<(), LogError> {
        let mut sorted = all.to_vec();
        sorted.sort();
        let tmp = self.dir.join("ledger.snapshot.tmp");
        {
            let mut f = File::create(&tmp)?;
            for r in &sorted {
                writeln!(f, "{}", r.to_line())?;
            }
            f.sync_all()?;
        }
        fs::rename(&tmp, Self::snapshot_path(&self.dir))?;
        self.log = OpenOptions::new().create(true).write(true).truncate(true).open(Self::log_path(&self.dir))?;
        self.log = OpenOptions::new().append(true).open(Self::log_path(&self.dir))?;
        self.since_snapshot = 0;
        Ok(())
    }
}
