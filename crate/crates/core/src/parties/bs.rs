//! Base station: holds the puzzle map, hands every offload session a freshly
//! rerandomized and permuted batch, validates the user's choice and relays
//! the request to the owning ES. It never learns which service a puzzle is
//! for.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha20Rng;

use super::{fresh_session_id, Outbound, Party};
use crate::blind::token::{Token, TokenId};
use crate::blind::BlindPublicKey;
use crate::ledger::SpentSet;
use crate::puzzle::{puzzle_rerandomize, Puzzle, PuzzleParams};
use crate::wire::{Envelope, Message, PartyId, RejectReason, SessionId};

/// Registration slot of an ES: `(esid, slot)`.
pub type Origin = (String, u32);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PuzzleMapEntry {
    pub esid: String,
    pub slot: u32,
    pub version: u64,
    pub used: bool,
    /// Puzzle this one was rerandomized from; `None` for a registration.
    pub parent: Option<Vec<u8>>,
    pub session: Option<SessionId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchState {
    Open,
    /// A puzzle of the batch was accepted and the request relayed.
    Used,
    /// Retired after a reject or abort in its session.
    Retired,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BsSession {
    pub user: PartyId,
    pub version: u64,
    pub puzzles: Vec<Vec<u8>>,
    pub state: BatchState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BsStep {
    Init,
    Submit,
    Abort,
}

/// One BS decision, in handling order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BsDecision {
    pub session: SessionId,
    pub step: BsStep,
    /// `Ok(Some(esid))` for a relayed request, `Ok(None)` for a served list
    /// or an acknowledged abort.
    pub outcome: Result<Option<String>, RejectReason>,
    /// Puzzle the user submitted, if any.
    pub puzzle: Option<Vec<u8>>,
    pub token: Option<TokenId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClaimOutcome {
    pub token: TokenId,
    pub status: u8,
    pub amount: u64,
}

#[derive(Debug)]
pub struct BaseStation {
    pk_p: BlindPublicKey,
    params: PuzzleParams,
    p_map: BTreeMap<Vec<u8>, PuzzleMapEntry>,
    registered: BTreeMap<Origin, Vec<u8>>,
    /// Newest batch; the next session's list is derived from it.
    latest: Vec<Vec<u8>>,
    version: u64,
    sessions: BTreeMap<SessionId, BsSession>,
    spent: SpentSet,
    relays: BTreeMap<SessionId, (PartyId, SessionId)>,
    forwarded: Vec<Token>,
    claimed_upto: usize,
    pending_claims: BTreeMap<SessionId, TokenId>,
    claims: Vec<ClaimOutcome>,
    decisions: Vec<BsDecision>,
    rng: ChaCha20Rng,
}

impl BaseStation {
    pub fn new(pk_p: BlindPublicKey, params: PuzzleParams, rng: ChaCha20Rng) -> Self {
        Self {
            pk_p,
            params,
            p_map: BTreeMap::new(),
            registered: BTreeMap::new(),
            latest: Vec::new(),
            version: 0,
            sessions: BTreeMap::new(),
            spent: SpentSet::new(),
            relays: BTreeMap::new(),
            forwarded: Vec::new(),
            claimed_upto: 0,
            pending_claims: BTreeMap::new(),
            claims: Vec::new(),
            decisions: Vec::new(),
            rng,
        }
    }

    pub fn p_map(&self) -> &BTreeMap<Vec<u8>, PuzzleMapEntry> {
        &self.p_map
    }

    pub fn latest_version(&self) -> u64 {
        self.version
    }

    pub fn latest_batch(&self) -> &[Vec<u8>] {
        &self.latest
    }

    pub fn session(&self, sid: &SessionId) -> Option<&BsSession> {
        self.sessions.get(sid)
    }

    pub fn decisions(&self) -> &[BsDecision] {
        &self.decisions
    }

    pub fn forwarded(&self) -> &[Token] {
        &self.forwarded
    }

    pub fn claims(&self) -> &[ClaimOutcome] {
        &self.claims
    }

    pub fn spent_count(&self) -> usize {
        self.spent.len()
    }

    /// Registration origin of any puzzle the BS has handed out.
    pub fn origin_of(&self, puzzle: &[u8]) -> Option<Origin> {
        self.p_map.get(puzzle).map(|e| (e.esid.clone(), e.slot))
    }

    /// Claims payment for every relayed token not yet claimed.
    pub fn claim_all(&mut self) -> Vec<Outbound> {
        let tokens: Vec<Token> = self.forwarded[self.claimed_upto..].to_vec();
        self.claimed_upto = self.forwarded.len();
        tokens.iter().map(|t| self.claim(&t.to_bytes())).collect()
    }

    /// A claim for arbitrary token bytes.
    pub fn claim(&mut self, token: &[u8]) -> Outbound {
        let sid = fresh_session_id(&mut self.rng);
        if let Ok(t) = Token::from_bytes(token) {
            self.pending_claims.insert(sid, t.id());
        }
        Outbound::new(PartyId::Fa, sid, Message::ClaimBs { bsid: "bs".into(), token: token.to_vec() })
    }

    fn register_puzzle(&mut self, esid: String, slot: u32, bytes: Vec<u8>) -> Result<(), RejectReason> {
        Puzzle::from_bytes(&bytes, &self.params).map_err(|_| RejectReason::Malformed)?;
        if self.p_map.contains_key(&bytes) {
            return Err(RejectReason::Conflict);
        }
        self.p_map.insert(
            bytes.clone(),
            PuzzleMapEntry { esid: esid.clone(), slot, version: 0, used: false, parent: None, session: None },
        );
        self.registered.insert((esid, slot), bytes);
        // Registrations form the version-0 list that the next batch starts from.
        self.latest = self.registered.values().cloned().collect();
        Ok(())
    }

    /// Verifies the platform half and that the token is unspent.
    fn check_token(&self, token: &[u8]) -> Result<Token, RejectReason> {
        let token = Token::from_bytes(token).map_err(|_| RejectReason::InvalidToken)?;
        if !token.verify_agnostic(&self.pk_p) {
            return Err(RejectReason::InvalidToken);
        }
        if self.spent.contains(&token.id()) {
            return Err(RejectReason::DoubleSpend);
        }
        Ok(token)
    }

    fn build_batch(&mut self, sid: SessionId, user: PartyId) -> Result<(u64, Vec<Vec<u8>>), RejectReason> {
        if self.latest.is_empty() {
            return Err(RejectReason::NoProviders);
        }
        if self.sessions.contains_key(&sid) {
            return Err(RejectReason::Unexpected);
        }
        self.version += 1;
        let version = self.version;
        let mut batch = Vec::with_capacity(self.latest.len());
        for old in &self.latest {
            let puzzle = Puzzle::from_bytes(old, &self.params).expect("stored puzzles decode");
            let fresh = puzzle_rerandomize(&self.params, &puzzle, &mut self.rng).expect("same params").to_bytes();
            let parent = &self.p_map[old];
            let entry = PuzzleMapEntry {
                esid: parent.esid.clone(),
                slot: parent.slot,
                version,
                used: false,
                parent: Some(old.clone()),
                session: Some(sid),
            };
            self.p_map.insert(fresh.clone(), entry);
            batch.push(fresh);
        }
        batch.shuffle(&mut self.rng);
        self.latest = batch.clone();
        self.sessions.insert(sid, BsSession { user, version, puzzles: batch.clone(), state: BatchState::Open });
        Ok((version, batch))
    }

    fn validate(&mut self, sid: SessionId, token: &[u8], puzzle: &[u8]) -> Result<(Token, String), RejectReason> {
        let token = self.check_token(token)?;
        let session = self.sessions.get(&sid).ok_or(RejectReason::UnknownPuzzle)?;
        if !session.puzzles.iter().any(|p| p == puzzle) {
            return Err(RejectReason::UnknownPuzzle);
        }
        match session.state {
            BatchState::Retired => return Err(RejectReason::StaleList),
            BatchState::Used => return Err(RejectReason::PuzzleReplay),
            BatchState::Open => {}
        }
        if session.puzzles.iter().any(|p| self.p_map[p].used) {
            return Err(RejectReason::PuzzleReplay);
        }
        self.spent.mark_spent(&token.id()).map_err(|_| RejectReason::DoubleSpend)?;
        let session = self.sessions.get_mut(&sid).expect("checked above");
        session.state = BatchState::Used;
        for p in &session.puzzles {
            self.p_map.get_mut(p).expect("batch puzzles are mapped").used = true;
        }
        Ok((token, self.p_map[puzzle].esid.clone()))
    }

    fn retire(&mut self, sid: &SessionId) {
        if let Some(s) = self.sessions.get_mut(sid) {
            if s.state == BatchState::Open {
                s.state = BatchState::Retired;
            }
        }
    }

    fn record(&mut self, session: SessionId, step: BsStep, outcome: Result<Option<String>, RejectReason>, puzzle: Option<Vec<u8>>, token: Option<TokenId>) {
        self.decisions.push(BsDecision { session, step, outcome, puzzle, token });
    }
}

impl Party for BaseStation {
    fn id(&self) -> PartyId {
        PartyId::Bs
    }

    fn handle(&mut self, from: &PartyId, envelope: Envelope) -> Vec<Outbound> {
        let sid = envelope.session_id;
        match envelope.message {
            Message::EsPuzzleRegister { esid, slot, puzzle } => {
                let status = match self.register_puzzle(esid, slot, puzzle) {
                    Ok(()) => 0,
                    Err(r) => r.code(),
                };
                vec![Outbound::new(from.clone(), sid, Message::Ack { status, detail: Vec::new() })]
            }
            Message::OffloadInit { token } => {
                let token_id = Token::from_bytes(&token).ok().map(|t| t.id());
                let result = self.check_token(&token).and_then(|_| self.build_batch(sid, from.clone()));
                match result {
                    Ok((version, puzzles)) => {
                        self.record(sid, BsStep::Init, Ok(None), None, token_id);
                        vec![Outbound::new(from.clone(), sid, Message::PuzzleList { version, puzzles })]
                    }
                    Err(reason) => {
                        self.record(sid, BsStep::Init, Err(reason), None, token_id);
                        vec![Outbound::reject(from.clone(), sid, reason, "offload refused")]
                    }
                }
            }
            Message::OffloadRequest { token, puzzle, ciphertext } => {
                let token_id = Token::from_bytes(&token).ok().map(|t| t.id());
                match self.validate(sid, &token, &puzzle) {
                    Ok((token, esid)) => {
                        self.version += 1;
                        self.record(sid, BsStep::Submit, Ok(Some(esid.clone())), Some(puzzle), token_id);
                        let relay = fresh_session_id(&mut self.rng);
                        self.relays.insert(relay, (from.clone(), sid));
                        let token_bytes = token.to_bytes();
                        self.forwarded.push(token);
                        vec![Outbound::new(PartyId::Es(esid), relay, Message::ForwardToEs { token: token_bytes, ciphertext })]
                    }
                    Err(reason) => {
                        self.retire(&sid);
                        self.version += 1;
                        self.record(sid, BsStep::Submit, Err(reason), Some(puzzle), token_id);
                        vec![Outbound::reject(from.clone(), sid, reason, "offload request refused")]
                    }
                }
            }
            Message::UserAbort => {
                self.retire(&sid);
                self.version += 1;
                self.record(sid, BsStep::Abort, Ok(None), None, None);
                Vec::new()
            }
            Message::EsResponse { ciphertext } if matches!(from, PartyId::Es(_)) => match self.relays.remove(&sid) {
                Some((user, user_sid)) => vec![Outbound::new(user, user_sid, Message::ResponseToUser { ciphertext })],
                None => Vec::new(),
            },
            Message::Reject { reason, detail } if matches!(from, PartyId::Es(_)) => match self.relays.remove(&sid) {
                Some((user, user_sid)) => vec![Outbound::new(user, user_sid, Message::Reject { reason, detail })],
                None => Vec::new(),
            },
            Message::ClaimResult { status, amount } if *from == PartyId::Fa => {
                if let Some(token) = self.pending_claims.remove(&sid) {
                    self.claims.push(ClaimOutcome { token, status, amount });
                }
                Vec::new()
            }
            other => super::unexpected("BS", from, sid, &other),
        }
    }
}
