//! Spend tracking and payment claims.
//!
//! [`SpentSet`] is the base station's "token seen" set. [`ClaimLedger`] is the
//! FA's record of which roles have been paid for which token. Both serialize
//! mutations behind a mutex so a check and the matching mark happen
//! atomically.

pub mod log;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use self::log::{EventType, LedgerLog, LedgerRecord, LogError};
use crate::blind::token::{Token, TokenId};
use crate::blind::BlindPublicKey;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Bs,
    Es,
    Sp,
}

impl Role {
    pub fn code(self) -> u8 {
        match self {
            Role::Bs => 1,
            Role::Es => 2,
            Role::Sp => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Role::Bs),
            2 => Some(Role::Es),
            3 => Some(Role::Sp),
            _ => None,
        }
    }
}

/// Amount paid to each role per served token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Payments {
    pub bs: u64,
    pub es: u64,
    pub sp: u64,
}

impl Default for Payments {
    fn default() -> Self {
        Self { bs: 1, es: 8, sp: 1 }
    }
}

impl Payments {
    pub fn total(&self) -> u64 {
        self.bs + self.es + self.sp
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("token already spent")]
pub struct DoubleSpend;

/// Set of spent token ids with atomic check-and-mark.
#[derive(Debug, Default)]
pub struct SpentSet {
    inner: Mutex<BTreeSet<TokenId>>,
}

impl SpentSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn mark_spent(&self, id: &TokenId) -> Result<(), DoubleSpend> {
        if self.inner.lock().expect("spent set poisoned").insert(*id) {
            Ok(())
        } else {
            Err(DoubleSpend)
        }
    }

    pub fn contains(&self, id: &TokenId) -> bool {
        self.inner.lock().expect("spent set poisoned").contains(id)
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("spent set poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum ClaimError {
    #[error("token signature does not verify")]
    InvalidSignature,
    #[error("token already claimed by this role")]
    AlreadyClaimed,
    #[error("token is not valid for the claimed service type")]
    WrongServiceType,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClaimFlag {
    Fresh,
    Unclaimed,
    Claimed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClaimRecord {
    pub token: TokenId,
    pub f_bs: ClaimFlag,
    pub f_es: ClaimFlag,
    /// Learned from the first successful ES claim.
    pub s_type: Option<String>,
    pub paid: BTreeMap<Role, u64>,
}

impl ClaimRecord {
    fn new(token: TokenId) -> Self {
        // The FA never sees a token before its first claim, so a record is
        // created already past `Fresh`.
        Self { token, f_bs: ClaimFlag::Unclaimed, f_es: ClaimFlag::Unclaimed, s_type: None, paid: BTreeMap::new() }
    }

    pub fn total_paid(&self) -> u64 {
        self.paid.values().sum()
    }
}

#[derive(Debug, Default)]
struct LedgerState {
    records: BTreeMap<TokenId, ClaimRecord>,
    history: Vec<LedgerRecord>,
    next_seq: u64,
    log: Option<LedgerLog>,
}

impl LedgerState {
    fn apply(&mut self, record: LedgerRecord) {
        let entry = self.records.entry(record.token).or_insert_with(|| ClaimRecord::new(record.token));
        match record.role {
            Role::Bs => entry.f_bs = ClaimFlag::Claimed,
            Role::Es => entry.f_es = ClaimFlag::Claimed,
            Role::Sp => {}
        }
        *entry.paid.entry(record.role).or_insert(0) += record.amount;
        self.next_seq = self.next_seq.max(record.seq + 1);
        self.history.push(record);
    }

    fn commit(&mut self, event: EventType, token: TokenId, role: Role, amount: u64) -> Result<(), LogError> {
        let record = LedgerRecord { event, token, role, amount, seq: self.next_seq };
        let before = self.records.get(&token).cloned();
        self.apply(record);
        if let Some(log) = self.log.as_mut() {
            if let Err(e) = log.append(&record, &self.history) {
                self.history.pop();
                self.next_seq = record.seq;
                match before {
                    Some(b) => self.records.insert(token, b),
                    None => self.records.remove(&token),
                };
                return Err(e);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error(transparent)]
    Claim(#[from] ClaimError),
    #[error(transparent)]
    Log(#[from] LogError),
}

/// The FA's authoritative claim ledger.
#[derive(Debug)]
pub struct ClaimLedger {
    payments: Payments,
    state: Mutex<LedgerState>,
}

impl ClaimLedger {
    pub fn in_memory(payments: Payments) -> Self {
        Self { payments, state: Mutex::new(LedgerState::default()) }
    }

    /// Opens a durable ledger in `dir`, replaying any existing records.
    pub fn open(dir: &Path, payments: Payments, snapshot_every: usize) -> Result<Self, LogError> {
        let (log, records) = LedgerLog::open(dir, snapshot_every)?;
        let mut state = LedgerState::default();
        for r in records {
            state.apply(r);
        }
        state.log = Some(log);
        Ok(Self { payments, state: Mutex::new(state) })
    }

    pub fn payments(&self) -> Payments {
        self.payments
    }

    /// Pays the BS for relaying `token` if the platform half verifies and no
    /// BS claim has been paid for it yet.
    pub fn process_bs_claim(&self, token: &Token, pk_p: &BlindPublicKey) -> Result<u64, LedgerError> {
        if !token.verify_agnostic(pk_p) {
            return Err(ClaimError::InvalidSignature.into());
        }
        let id = token.id();
        let mut state = self.state.lock().expect("ledger poisoned");
        if state.records.get(&id).is_some_and(|r| r.f_bs == ClaimFlag::Claimed) {
            return Err(ClaimError::AlreadyClaimed.into());
        }
        state.commit(EventType::BsClaimPaid, id, Role::Bs, self.payments.bs)?;
        Ok(self.payments.bs)
    }

    /// Pays the ES and the SP if the service half verifies under the key of
    /// `s_type`. A signature that verifies under another registered service
    /// key is reported as [`ClaimError::WrongServiceType`].
    pub fn process_es_claim(
        &self,
        s_type: &str,
        token: &Token,
        service_keys: &BTreeMap<String, BlindPublicKey>,
    ) -> Result<u64, LedgerError> {
        let valid = service_keys.get(s_type).is_some_and(|pk| token.verify_service(pk));
        if !valid {
            let other = service_keys.iter().any(|(name, pk)| name != s_type && token.verify_service(pk));
            let err = if other || !service_keys.contains_key(s_type) {
                ClaimError::WrongServiceType
            } else {
                ClaimError::InvalidSignature
            };
            return Err(err.into());
        }
        let id = token.id();
        let mut state = self.state.lock().expect("ledger poisoned");
        if state.records.get(&id).is_some_and(|r| r.f_es == ClaimFlag::Claimed) {
            return Err(ClaimError::AlreadyClaimed.into());
        }
        state.commit(EventType::EsClaimPaid, id, Role::Es, self.payments.es)?;
        state.commit(EventType::EsClaimPaid, id, Role::Sp, self.payments.sp)?;
        state.records.get_mut(&id).expect("just committed").s_type = Some(s_type.to_owned());
        Ok(self.payments.es + self.payments.sp)
    }

    pub fn record(&self, id: &TokenId) -> Option<ClaimRecord> {
        self.state.lock().expect("ledger poisoned").records.get(id).cloned()
    }

    pub fn records(&self) -> Vec<ClaimRecord> {
        self.state.lock().expect("ledger poisoned").records.values().cloned().collect()
    }

    /// Every payment event in commit order.
    pub fn history(&self) -> Vec<LedgerRecord> {
        self.state.lock().expect("ledger poisoned").history.clone()
    }

    pub fn total_paid(&self, role: Role) -> u64 {
        self.state.lock().expect("ledger poisoned").history.iter().filter(|r| r.role == role).map(|r| r.amount).sum()
    }

    /// Canonical bytes of the full ledger state, for equality checks.
    pub fn fingerprint(&self) -> Vec<u8> {
        let state = self.state.lock().expect("ledger poisoned");
        let mut out = Vec::new();
        for r in &state.history {
            out.extend_from_slice(&r.to_bytes());
        }
        for rec in state.records.values() {
            out.extend_from_slice(&rec.token.0);
            out.push(rec.f_bs as u8);
            out.push(rec.f_es as u8);
            out.extend_from_slice(rec.s_type.as_deref().unwrap_or("").as_bytes());
            out.push(0);
        }
        out
    }
}
