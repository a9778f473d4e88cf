//! Executable reference model of registration, offloading and claiming.
//!
//! The model tracks three tables: services (`T_s`), puzzles (`T_p`) and
//! tokens (`T_t`). Identifiers are opaque integers; the conformance harness
//! translates real tokens and puzzle bytes into them.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type IdealToken = u64;
pub type IdealPuzzle = u64;
pub type Uid = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Flag {
    Fresh,
    Unclaimed,
    Claimed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TsEntry {
    pub spid: String,
    pub sname: String,
    pub esid: Option<String>,
    pub bsid: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TpEntry {
    pub puzzle: IdealPuzzle,
    pub spid: String,
    pub sname: String,
    pub ver: u64,
    pub used: bool,
    pub esid: String,
    pub bsid: String,
    /// Entry this one was rerandomized from.
    pub parent: Option<IdealPuzzle>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TtEntry {
    pub token: IdealToken,
    pub spid: String,
    pub sname: String,
    pub es: (Option<String>, Flag),
    pub bs: (Option<String>, Flag),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IdealEvent {
    RegisterSp { spid: String, sname: String },
    /// `allow` is the SP's answer to the eligibility question.
    RegisterEs { spid: String, sname: String, esid: String, allow: bool },
    /// `allow` is the BS's answer.
    RegisterPuzzle { spid: String, sname: String, esid: String, bsid: String, puzzle: IdealPuzzle, allow: bool },
    /// `allow` is the FA's verdict on the payment.
    RegisterUser { spid: String, sname: String, token: IdealToken, allow: bool },
    OffloadStart { uid: Uid, bsid: String, honest: bool },
    OffloadSubmit { uid: Uid, token: IdealToken, puzzle: IdealPuzzle },
    /// The user never answered the list.
    OffloadSilent { uid: Uid },
    ClaimBs { bsid: String, token: IdealToken },
    ClaimEs { esid: String, spid: String, sname: String, token: IdealToken },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ListedPuzzle {
    pub puzzle: IdealPuzzle,
    /// `(spid, sname)`, revealed to honest users only.
    pub service: Option<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IdealReply {
    Success,
    /// Registration repeated; carries the existing entry.
    Exists(TsEntry),
    Fail,
    List(Vec<ListedPuzzle>),
    InvalidToken,
    InvalidPuzzle,
    /// Request forwarded to this ES.
    Forwarded(String),
    UserAbort,
    SuccessClaimed,
}

#[derive(Debug, Clone)]
pub struct IdealModel {
    ts: Vec<TsEntry>,
    tp: BTreeMap<IdealPuzzle, TpEntry>,
    tt: BTreeMap<IdealToken, TtEntry>,
    user_ver: BTreeMap<Uid, u64>,
    next_puzzle: IdealPuzzle,
    forwarded: u64,
    rng: ChaCha20Rng,
}

impl IdealModel {
    /// `seed` drives list permutations; fresh puzzle identifiers are drawn
    /// above every identifier the harness supplies at registration.
    pub fn new(seed: u64) -> Self {
        Self {
            ts: Vec::new(),
            tp: BTreeMap::new(),
            tt: BTreeMap::new(),
            user_ver: BTreeMap::new(),
            next_puzzle: 1 << 32,
            forwarded: 0,
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    pub fn services(&self) -> &[TsEntry] {
        &self.ts
    }

    pub fn puzzles(&self) -> &BTreeMap<IdealPuzzle, TpEntry> {
        &self.tp
    }

    pub fn tokens(&self) -> &BTreeMap<IdealToken, TtEntry> {
        &self.tt
    }

    pub fn forwarded(&self) -> u64 {
        self.forwarded
    }

    /// Versions whose entries were marked used; one per forwarded request.
    pub fn used_versions(&self) -> BTreeSet<u64> {
        self.tp.values().filter(|e| e.used).map(|e| e.ver).collect()
    }

    pub fn apply(&mut self, event: &IdealEvent) -> IdealReply {
        match event {
            IdealEvent::RegisterSp { spid, sname } => self.register_sp(spid, sname),
            IdealEvent::RegisterEs { spid, sname, esid, allow } => self.register_es(spid, sname, esid, *allow),
            IdealEvent::RegisterPuzzle { spid, sname, esid, bsid, puzzle, allow } => {
                self.register_puzzle(spid, sname, esid, bsid, *puzzle, *allow)
            }
            IdealEvent::RegisterUser { spid, sname, token, allow } => self.register_user(spid, sname, *token, *allow),
            IdealEvent::OffloadStart { uid, bsid, honest } => self.offload_start(*uid, bsid, *honest),
            IdealEvent::OffloadSubmit { uid, token, puzzle } => self.offload_submit(*uid, *token, *puzzle),
            IdealEvent::OffloadSilent { .. } => IdealReply::UserAbort,
            IdealEvent::ClaimBs { bsid, token } => self.claim_bs(bsid, *token),
            IdealEvent::ClaimEs { esid, spid, sname, token } => self.claim_es(esid, spid, sname, *token),
        }
    }

    fn register_sp(&mut self, spid: &str, sname: &str) -> IdealReply {
        let entry = TsEntry { spid: spid.into(), sname: sname.into(), esid: None, bsid: None };
        if let Some(existing) = self.ts.iter().find(|t| **t == entry) {
            return IdealReply::Exists(existing.clone());
        }
        self.ts.push(entry);
        IdealReply::Success
    }

    fn register_es(&mut self, spid: &str, sname: &str, esid: &str, allow: bool) -> IdealReply {
        let known = |t: &&TsEntry| t.spid == spid && t.sname == sname;
        if let Some(existing) = self.ts.iter().find(|t| known(t) && t.esid.as_deref() == Some(esid)) {
            return IdealReply::Exists(existing.clone());
        }
        if !allow || !self.ts.iter().any(|t| known(&t)) {
            return IdealReply::Fail;
        }
        self.ts.push(TsEntry { spid: spid.into(), sname: sname.into(), esid: Some(esid.into()), bsid: None });
        IdealReply::Success
    }

    fn register_puzzle(
        &mut self,
        spid: &str,
        sname: &str,
        esid: &str,
        bsid: &str,
        puzzle: IdealPuzzle,
        allow: bool,
    ) -> IdealReply {
        let entry = self
            .ts
            .iter_mut()
            .find(|t| t.spid == spid && t.sname == sname && t.esid.as_deref() == Some(esid));
        let Some(entry) = entry.filter(|_| allow) else {
            return IdealReply::Fail;
        };
        entry.bsid = Some(bsid.into());
        self.tp.insert(
            puzzle,
            TpEntry {
                puzzle,
                spid: spid.into(),
                sname: sname.into(),
                ver: 0,
                used: false,
                esid: esid.into(),
                bsid: bsid.into(),
                parent: None,
            },
        );
        IdealReply::Success
    }

    fn register_user(&mut self, spid: &str, sname: &str, token: IdealToken, allow: bool) -> IdealReply {
        let registered = self.ts.iter().any(|t| t.spid == spid && t.sname == sname);
        if !allow || !registered || self.tt.contains_key(&token) {
            return IdealReply::Fail;
        }
        self.tt.insert(
            token,
            TtEntry {
                token,
                spid: spid.into(),
                sname: sname.into(),
                es: (None, Flag::Fresh),
                bs: (None, Flag::Fresh),
            },
        );
        IdealReply::Success
    }

    fn newest_version(&self, bsid: &str) -> Option<u64> {
        self.tp.values().filter(|e| e.bsid == bsid).map(|e| e.ver).max()
    }

    fn offload_start(&mut self, uid: Uid, bsid: &str, honest: bool) -> IdealReply {
        let Some(newest) = self.newest_version(bsid) else {
            self.user_ver.remove(&uid);
            return IdealReply::List(Vec::new());
        };
        let batch: Vec<TpEntry> =
            self.tp.values().filter(|e| e.bsid == bsid && e.ver == newest).cloned().collect();
        let mut list = Vec::with_capacity(batch.len());
        for old in batch {
            let id = self.next_puzzle;
            self.next_puzzle += 1;
            let fresh = TpEntry { puzzle: id, ver: newest + 1, used: false, parent: Some(old.puzzle), ..old };
            list.push(ListedPuzzle {
                puzzle: id,
                service: honest.then(|| (fresh.spid.clone(), fresh.sname.clone())),
            });
            self.tp.insert(id, fresh);
        }
        list.shuffle(&mut self.rng);
        self.user_ver.insert(uid, newest + 1);
        IdealReply::List(list)
    }

    fn offload_submit(&mut self, uid: Uid, token: IdealToken, puzzle: IdealPuzzle) -> IdealReply {
        let fresh = self
            .tt
            .get(&token)
            .is_some_and(|t| t.es == (None, Flag::Fresh) && t.bs == (None, Flag::Fresh));
        if !fresh {
            return IdealReply::InvalidToken;
        }
        let Some(&ver) = self.user_ver.get(&uid) else {
            return IdealReply::InvalidPuzzle;
        };
        let Some(entry) = self.tp.get(&puzzle).filter(|e| e.ver == ver && !e.used) else {
            return IdealReply::InvalidPuzzle;
        };
        let (esid, bsid) = (entry.esid.clone(), entry.bsid.clone());
        for e in self.tp.values_mut().filter(|e| e.ver == ver) {
            e.used = true;
        }
        let t = self.tt.get_mut(&token).expect("checked above");
        t.es = (Some(esid.clone()), Flag::Unclaimed);
        t.bs = (Some(bsid), Flag::Unclaimed);
        self.forwarded += 1;
        IdealReply::Forwarded(esid)
    }

    fn claim_bs(&mut self, bsid: &str, token: IdealToken) -> IdealReply {
        match self.tt.get_mut(&token) {
            Some(t) if t.bs.0.as_deref() == Some(bsid) && t.bs.1 == Flag::Unclaimed => {
                t.bs.1 = Flag::Claimed;
                IdealReply::SuccessClaimed
            }
            _ => IdealReply::InvalidToken,
        }
    }

    fn claim_es(&mut self, esid: &str, spid: &str, sname: &str, token: IdealToken) -> IdealReply {
        match self.tt.get_mut(&token) {
            Some(t)
                if t.spid == spid
                    && t.sname == sname
                    && t.es.0.as_deref() == Some(esid)
                    && t.es.1 == Flag::Unclaimed =>
            {
                t.es.1 = Flag::Claimed;
                IdealReply::SuccessClaimed
            }
            _ => IdealReply::InvalidToken,
        }
    }
}
