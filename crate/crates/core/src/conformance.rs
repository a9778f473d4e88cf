//! Drives the real parties and the ideal model with the same event trace and
//! compares their decisions event by event.
//!
//! The harness keeps the translation table between real objects (token ids,
//! puzzle bytes, BS sessions) and ideal identifiers. Puzzles are translated
//! through their rerandomization lineage: a fresh real puzzle maps to the
//! ideal child of its parent's ideal identifier.
//!
//! Two situations have no faithful ideal counterpart and are never generated:
//! a BS or ES claiming a token it was never handed, and a second submission
//! into a session the BS already refused or saw aborted (the real BS retires
//! that batch, the model keeps it open).

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::blind::token::{Token, TokenId};
use crate::config::{EdgeServerConfig, ScenarioConfig, ServiceConfig};
use crate::ideal::{IdealEvent, IdealModel, IdealPuzzle, IdealReply, IdealToken, Uid};
use crate::parties::bs::BsStep;
use crate::parties::es::EsEvent;
use crate::parties::fresh_session_id;
use crate::parties::sp::SpEvent;
use crate::parties::user::TokenOutcome;
use crate::parties::Outbound;
use crate::puzzle::Scheme;
use crate::sim::{SimError, SystemKeys, World, WorldOptions};
use crate::wire::{Message, PartyId, RejectReason, SessionId};
use crate::workload::Workload;

/// Which token an event uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenSel {
    /// The n-th token bought in this trace.
    Bought(usize),
    /// Random bytes shaped like a token.
    Forged(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PuzzlePick {
    /// Entry of the session's own list.
    Own(usize),
    /// Entry of another session's list.
    Other { session: usize, index: usize },
    /// Bytes the BS never issued.
    Garbage(u64),
}

/// One trace event, expressed against harness state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum Step {
    Buy { user: u32, service: String, paid: bool },
    /// A user running the protocol as written, with a bought token.
    Honest { token: usize },
    /// A malicious user opening a session and keeping the list.
    Open { token: TokenSel },
    Submit { session: usize, pick: PuzzlePick, token: TokenSel },
    /// The user walks away from the list.
    Silent { session: usize },
    ClaimBs { token: TokenSel },
    ClaimEs { esid: String, service: String, token: TokenSel },
}

/// Decision vocabulary shared by both sides.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decision {
    Success,
    Fail,
    List(usize),
    InvalidToken,
    InvalidPuzzle,
    Forwarded(String),
    Abort,
    Claimed,
    /// The real stack produced something with no ideal counterpart.
    Unmapped(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepResult {
    pub step: Option<Step>,
    pub real: Vec<Decision>,
    pub ideal: Vec<Decision>,
}

impl StepResult {
    pub fn agrees(&self) -> bool {
        self.real == self.ideal
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceOutcome {
    pub results: Vec<StepResult>,
    /// Used ideal batches versus forwarded requests.
    pub conservation: (u64, u64),
}

impl TraceOutcome {
    pub fn mismatches(&self) -> impl Iterator<Item = (usize, &StepResult)> {
        self.results.iter().enumerate().filter(|(_, r)| !r.agrees())
    }

    pub fn conforms(&self) -> bool {
        self.mismatches().next().is_none() && self.conservation.0 == self.conservation.1
    }

    pub fn decisions(&self) -> usize {
        self.results.iter().map(|r| r.real.len()).sum()
    }
}

#[derive(Debug, Clone)]
struct Bought {
    user: u32,
    wallet: usize,
    service: String,
    token: Token,
    ideal: IdealToken,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SessionState {
    Open,
    /// The BS relayed a request; replays are still meaningful.
    Served,
    Closed,
}

#[derive(Debug, Clone)]
struct Session {
    sid: SessionId,
    uid: Uid,
    list: Vec<Vec<u8>>,
    state: SessionState,
}

pub struct Harness {
    world: World,
    model: IdealModel,
    bought: Vec<Bought>,
    sessions: Vec<Session>,
    puzzles: BTreeMap<Vec<u8>, IdealPuzzle>,
    forged: BTreeMap<TokenId, IdealToken>,
    next_token: IdealToken,
    next_uid: Uid,
    relayed_bs: Vec<usize>,
    served: BTreeMap<String, Vec<usize>>,
    results: Vec<StepResult>,
}

const BSID: &str = "bs";
/// Users that buy tokens; malicious traffic is sent from user 1 as well.
const USERS: u32 = 3;

fn real_offload(reason: RejectReason) -> Decision {
    match reason {
        RejectReason::InvalidToken | RejectReason::DoubleSpend => Decision::InvalidToken,
        RejectReason::UnknownPuzzle | RejectReason::PuzzleReplay | RejectReason::StaleList => Decision::InvalidPuzzle,
        RejectReason::NoProviders => Decision::Abort,
        other => Decision::Unmapped(other.to_string()),
    }
}

fn ideal_decision(reply: &IdealReply) -> Decision {
    match reply {
        IdealReply::Success | IdealReply::Exists(_) => Decision::Success,
        IdealReply::Fail => Decision::Fail,
        IdealReply::List(l) if l.is_empty() => Decision::Abort,
        IdealReply::List(l) => Decision::List(l.len()),
        IdealReply::InvalidToken => Decision::InvalidToken,
        IdealReply::InvalidPuzzle => Decision::InvalidPuzzle,
        IdealReply::Forwarded(es) => Decision::Forwarded(es.clone()),
        IdealReply::UserAbort => Decision::Abort,
        IdealReply::SuccessClaimed => Decision::Claimed,
    }
}

fn claim_decision(status: u8) -> Decision {
    if status == 0 {
        Decision::Claimed
    } else {
        Decision::InvalidToken
    }
}

fn forged_token(seed: u64, modulus_len: usize) -> Token {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut bytes = |n: usize| {
        let mut v = vec![0u8; n];
        rng.fill_bytes(&mut v);
        v
    };
    let m1 = bytes(32).try_into().expect("32 bytes");
    let sig1 = bytes(modulus_len);
    let m2 = bytes(32).try_into().expect("32 bytes");
    let sig2 = bytes(modulus_len);
    Token { m1, sig1, m2, sig2 }
}

impl Harness {
    /// Builds the world, runs registration on both sides and compares it.
    pub fn new(config: ScenarioConfig, keys: Arc<SystemKeys>, model_seed: u64) -> Result<Self, SimError> {
        let world = World::new(config, keys, WorldOptions::default())?;
        let mut h = Self {
            world,
            model: IdealModel::new(model_seed),
            bought: Vec::new(),
            sessions: Vec::new(),
            puzzles: BTreeMap::new(),
            forged: BTreeMap::new(),
            next_token: 1,
            next_uid: 1,
            relayed_bs: Vec::new(),
            served: BTreeMap::new(),
            results: Vec::new(),
        };
        h.register()?;
        Ok(h)
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn model(&self) -> &IdealModel {
        &self.model
    }

    fn record(&mut self, step: Option<Step>, real: Vec<Decision>, ideal: Vec<Decision>) {
        self.results.push(StepResult { step, real, ideal });
    }

    fn register(&mut self) -> Result<(), SimError> {
        self.world.register()?;
        let config = self.world.config().clone();
        for spid in config.providers() {
            let sp = self.world.sp(&spid).expect("configured provider");
            let real = if sp.events().contains(&SpEvent::RegisteredWithFa) { Decision::Success } else { Decision::Fail };
            let ideal = self.model.apply(&IdealEvent::RegisterSp { spid: spid.clone(), sname: sp.sname().to_owned() });
            self.record(None, vec![real], vec![ideal_decision(&ideal)]);
        }
        for es_cfg in &config.edge_servers {
            for sname in &es_cfg.services {
                let svc = config.service(sname).expect("validated");
                let es = self.world.es(&es_cfg.id).expect("configured edge server");
                let real = if es.services().contains_key(sname) { Decision::Success } else { Decision::Fail };
                let ideal = self.model.apply(&IdealEvent::RegisterEs {
                    spid: svc.provider.clone(),
                    sname: sname.clone(),
                    esid: es_cfg.id.clone(),
                    allow: svc.allow.contains(&es_cfg.id),
                });
                self.record(None, vec![real], vec![ideal_decision(&ideal)]);
            }
        }
        // Version-0 puzzles, in BS registration order.
        let mut registered: Vec<(String, u32, Vec<u8>)> = self
            .world
            .bs()
            .p_map()
            .iter()
            .filter(|(_, e)| e.version == 0)
            .map(|(bytes, e)| (e.esid.clone(), e.slot, bytes.clone()))
            .collect();
        registered.sort();
        for (i, (esid, slot, bytes)) in registered.into_iter().enumerate() {
            let es = self.world.es(&esid).expect("registered by a known ES");
            let (sname, svc) = es.services().iter().find(|(_, s)| s.slots.contains(&slot)).expect("slot belongs to a service");
            let accepted = es.events().contains(&EsEvent::PuzzleAccepted { slot });
            let ideal_id = i as IdealPuzzle + 1;
            self.puzzles.insert(bytes, ideal_id);
            let ideal = self.model.apply(&IdealEvent::RegisterPuzzle {
                spid: svc.spid.clone(),
                sname: sname.clone(),
                esid,
                bsid: BSID.into(),
                puzzle: ideal_id,
                allow: true,
            });
            let real = if accepted { Decision::Success } else { Decision::Fail };
            self.record(None, vec![real], vec![ideal_decision(&ideal)]);
        }
        Ok(())
    }

    fn fresh_ideal_token(&mut self) -> IdealToken {
        self.next_token += 1;
        self.next_token
    }

    fn modulus_len(&self) -> usize {
        self.world.keys().platform.public.modulus_len()
    }

    /// Real token and its ideal identifier.
    fn resolve(&mut self, sel: TokenSel) -> Option<(Token, IdealToken)> {
        match sel {
            TokenSel::Bought(i) => self.bought.get(i).map(|b| (b.token.clone(), b.ideal)),
            TokenSel::Forged(seed) => {
                let token = forged_token(seed, self.modulus_len());
                let ideal = match self.forged.get(&token.id()) {
                    Some(&id) => id,
                    None => {
                        let id = self.fresh_ideal_token();
                        self.forged.insert(token.id(), id);
                        id
                    }
                };
                Some((token, ideal))
            }
        }
    }

    /// Ideal identifiers of a fresh real list, via lineage.
    fn translate_list(&mut self, list: &[Vec<u8>], reply: &IdealReply) -> Result<(), String> {
        let IdealReply::List(ideal_list) = reply else {
            return Err(format!("model answered {reply:?}"));
        };
        let mut child_of = BTreeMap::new();
        for p in ideal_list {
            let parent = self.model.puzzles()[&p.puzzle].parent.expect("listed puzzles are rerandomized");
            child_of.insert(parent, p.puzzle);
        }
        for bytes in list {
            let entry = &self.world.bs().p_map()[bytes];
            let parent = entry.parent.as_ref().and_then(|p| self.puzzles.get(p)).copied();
            let child = parent.and_then(|p| child_of.get(&p)).copied();
            match child {
                Some(c) => {
                    self.puzzles.insert(bytes.clone(), c);
                }
                None => return Err("real and ideal batches have different lineage".into()),
            }
        }
        Ok(())
    }

    fn ideal_puzzle_of(&mut self, bytes: &[u8]) -> IdealPuzzle {
        match self.puzzles.get(bytes) {
            Some(&id) => id,
            // Never issued: an identifier the model has no entry for.
            None => u64::MAX - self.puzzles.len() as u64,
        }
    }

    fn decisions_since(&self, mark: usize) -> Vec<crate::parties::bs::BsDecision> {
        self.world.bs().decisions()[mark..].to_vec()
    }

    /// Applies one step to both sides.
    pub fn apply(&mut self, step: &Step) -> Result<(), SimError> {
        let (real, ideal) = match step {
            Step::Buy { user, service, paid } => self.buy(*user, service, *paid)?,
            Step::Honest { token } => self.honest(*token)?,
            Step::Open { token } => self.open(*token)?,
            Step::Submit { session, pick, token } => self.submit(*session, *pick, *token)?,
            Step::Silent { session } => self.silent(*session)?,
            Step::ClaimBs { token } => self.claim_bs(*token)?,
            Step::ClaimEs { esid, service, token } => self.claim_es(esid, service, *token)?,
        };
        self.record(Some(step.clone()), real, ideal);
        Ok(())
    }

    fn buy(&mut self, user: u32, service: &str, paid: bool) -> Result<(Vec<Decision>, Vec<Decision>), SimError> {
        let spid = self.world.config().service(service).map(|s| s.provider.clone()).unwrap_or_default();
        let u = self.world.user_mut(user).expect("trace users exist");
        let before = u.wallet().len();
        let payment = if paid { format!("pay-{}", self.next_token).into_bytes() } else { Vec::new() };
        let out = u.request_token(service, &payment).expect("service in directory");
        self.world.send(&PartyId::User(user), out);
        self.world.pump()?;
        let u = self.world.user(user).expect("trace users exist");
        let issued = matches!(u.token_results().last(), Some((_, TokenOutcome::Issued)));
        let token = issued.then(|| u.wallet()[before].token.clone());
        let ideal_id = self.fresh_ideal_token();
        if let Some(token) = token {
            self.bought.push(Bought { user, wallet: before, service: service.to_owned(), token, ideal: ideal_id });
        }
        let reply = self.model.apply(&IdealEvent::RegisterUser {
            spid,
            sname: service.to_owned(),
            token: ideal_id,
            allow: paid,
        });
        let real = if issued { Decision::Success } else { Decision::Fail };
        Ok((vec![real], vec![ideal_decision(&reply)]))
    }

    /// Real init rejected on the token: the model is asked the same token
    /// question through a submission that carries no list.
    fn early_token_verdict(&mut self, ideal_token: IdealToken) -> Decision {
        self.next_uid += 1;
        let reply = self.model.apply(&IdealEvent::OffloadSubmit { uid: u64::MAX, token: ideal_token, puzzle: 0 });
        ideal_decision(&reply)
    }

    fn start_ideal(&mut self, honest: bool) -> (Uid, IdealReply) {
        let uid = self.next_uid;
        self.next_uid += 1;
        (uid, self.model.apply(&IdealEvent::OffloadStart { uid, bsid: BSID.into(), honest }))
    }

    fn honest(&mut self, index: usize) -> Result<(Vec<Decision>, Vec<Decision>), SimError> {
        let b = self.bought[index].clone();
        let mark = self.world.bs().decisions().len();
        let u = self.world.user_mut(b.user).expect("buyer exists");
        let (sid, out) = u.start_with(b.wallet, b"honest job").expect("wallet entry");
        self.world.send(&PartyId::User(b.user), out);
        self.world.pump()?;
        let decisions = self.decisions_since(mark);
        let init = decisions.iter().find(|d| d.session == sid && d.step == BsStep::Init).cloned();
        let mut real = Vec::new();
        let mut ideal = Vec::new();
        match init.map(|d| d.outcome) {
            Some(Err(reason)) => {
                let r = real_offload(reason);
                real.push(r.clone());
                if r == Decision::InvalidToken {
                    ideal.push(self.early_token_verdict(b.ideal));
                } else {
                    let (_, reply) = self.start_ideal(true);
                    ideal.push(ideal_decision(&reply));
                }
                return Ok((real, ideal));
            }
            None => return Ok((vec![Decision::Unmapped("no init decision".into())], ideal)),
            Some(Ok(_)) => {}
        }
        let list = self.world.bs().session(&sid).expect("opened").puzzles.clone();
        real.push(Decision::List(list.len()));
        let (uid, reply) = self.start_ideal(true);
        ideal.push(ideal_decision(&reply));
        if let Err(e) = self.translate_list(&list, &reply) {
            real.push(Decision::Unmapped(e));
            return Ok((real, ideal));
        }
        let session = self.world.user(b.user).expect("buyer exists").session(&sid).expect("started").clone();
        let after = self.decisions_since(mark);
        let last = after.iter().rev().find(|d| d.session == sid && d.step != BsStep::Init).cloned();
        match (session.choice, last) {
            (None, Some(d)) if d.step == BsStep::Abort => {
                real.push(Decision::Abort);
                ideal.push(ideal_decision(&self.model.apply(&IdealEvent::OffloadSilent { uid })));
            }
            (Some(choice), Some(d)) if d.step == BsStep::Submit => {
                real.push(match d.outcome {
                    Ok(Some(esid)) => Decision::Forwarded(esid),
                    Ok(None) => Decision::Unmapped("submit without relay".into()),
                    Err(r) => real_offload(r),
                });
                let puzzle = self.ideal_puzzle_of(&session.list[choice]);
                // The honest user must have picked one of its own service's puzzles.
                let own = match &reply {
                    IdealReply::List(l) => l
                        .iter()
                        .find(|p| p.puzzle == puzzle)
                        .and_then(|p| p.service.as_ref())
                        .is_some_and(|(_, sname)| *sname == b.service),
                    _ => false,
                };
                let reply = self.model.apply(&IdealEvent::OffloadSubmit { uid, token: b.ideal, puzzle });
                ideal.push(if own { ideal_decision(&reply) } else { Decision::Unmapped("off-service choice".into()) });
                if matches!(real.last(), Some(Decision::Forwarded(_))) {
                    self.note_relay(index, &sid);
                }
            }
            other => real.push(Decision::Unmapped(format!("honest session ended oddly: {other:?}"))),
        }
        self.sessions.push(Session { sid, uid, list, state: SessionState::Closed });
        Ok((real, ideal))
    }

    /// Remembers who holds a relayed token, for claim generation.
    fn note_relay(&mut self, bought: usize, _sid: &SessionId) {
        self.relayed_bs.push(bought);
        let id = self.bought[bought].token.id();
        for (esid, es) in self.world.edge_servers() {
            if es.served().iter().any(|s| s.token.id() == id) {
                self.served.entry(esid.clone()).or_default().push(bought);
            }
        }
    }

    fn open(&mut self, sel: TokenSel) -> Result<(Vec<Decision>, Vec<Decision>), SimError> {
        let (token, ideal_token) = self.resolve(sel).expect("generator picks existing tokens");
        let sid = fresh_session_id(&mut self.harness_rng());
        let mark = self.world.bs().decisions().len();
        self.world.send(&PartyId::User(1), Outbound::new(PartyId::Bs, sid, Message::OffloadInit { token: token.to_bytes() }));
        self.world.pump()?;
        let decision = self.decisions_since(mark).into_iter().find(|d| d.session == sid);
        match decision.map(|d| d.outcome) {
            Some(Ok(_)) => {
                let list = self.world.bs().session(&sid).expect("opened").puzzles.clone();
                let (uid, reply) = self.start_ideal(false);
                let mut real = vec![Decision::List(list.len())];
                if let Err(e) = self.translate_list(&list, &reply) {
                    real.push(Decision::Unmapped(e));
                }
                self.sessions.push(Session { sid, uid, list, state: SessionState::Open });
                Ok((real, vec![ideal_decision(&reply)]))
            }
            Some(Err(reason)) => {
                let r = real_offload(reason);
                let ideal = if r == Decision::InvalidToken {
                    self.early_token_verdict(ideal_token)
                } else {
                    let (_, reply) = self.start_ideal(false);
                    ideal_decision(&reply)
                };
                self.sessions.push(Session { sid, uid: u64::MAX, list: Vec::new(), state: SessionState::Closed });
                Ok((vec![r], vec![ideal]))
            }
            None => Ok((vec![Decision::Unmapped("no init decision".into())], Vec::new())),
        }
    }

    /// Session ids for crafted traffic; derived from harness progress so
    /// replays stay deterministic.
    fn harness_rng(&self) -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(0x5e55_1000 + self.results.len() as u64)
    }

    fn submit(&mut self, index: usize, pick: PuzzlePick, sel: TokenSel) -> Result<(Vec<Decision>, Vec<Decision>), SimError> {
        let (token, ideal_token) = self.resolve(sel).expect("generator picks existing tokens");
        let session = self.sessions[index].clone();
        let garbage = |seed: u64| {
            let mut v = vec![0u8; self.world.keys().params.puzzle_len()];
            ChaCha20Rng::seed_from_u64(seed).fill_bytes(&mut v);
            v
        };
        let from = |list: &[Vec<u8>], i: usize| (!list.is_empty()).then(|| list[i % list.len()].clone());
        let puzzle = match pick {
            PuzzlePick::Own(i) => from(&session.list, i),
            PuzzlePick::Other { session: j, index: i } => from(&self.sessions[j].list, i),
            PuzzlePick::Garbage(seed) => Some(garbage(seed)),
        }
        .unwrap_or_else(|| garbage(index as u64));
        let mark = self.world.bs().decisions().len();
        let ct = vec![0u8; 48];
        self.world.send(
            &PartyId::User(1),
            Outbound::new(PartyId::Bs, session.sid, Message::OffloadRequest { token: token.to_bytes(), puzzle: puzzle.clone(), ciphertext: ct }),
        );
        self.world.pump()?;
        let decision = self.decisions_since(mark).into_iter().find(|d| d.session == session.sid && d.step == BsStep::Submit);
        let real = match decision.map(|d| d.outcome) {
            Some(Ok(Some(esid))) => Decision::Forwarded(esid),
            Some(Ok(None)) | None => Decision::Unmapped("no submit decision".into()),
            Some(Err(r)) => real_offload(r),
        };
        let ideal_puzzle = self.ideal_puzzle_of(&puzzle);
        let reply = self.model.apply(&IdealEvent::OffloadSubmit { uid: session.uid, token: ideal_token, puzzle: ideal_puzzle });
        self.sessions[index].state = match (&real, session.state) {
            (Decision::Forwarded(_), _) | (_, SessionState::Served) => SessionState::Served,
            _ => SessionState::Closed,
        };
        if let (Decision::Forwarded(_), TokenSel::Bought(b)) = (&real, sel) {
            self.note_relay(b, &session.sid);
        }
        Ok((vec![real], vec![ideal_decision(&reply)]))
    }

    fn silent(&mut self, index: usize) -> Result<(Vec<Decision>, Vec<Decision>), SimError> {
        let session = self.sessions[index].clone();
        self.world.send(&PartyId::User(1), Outbound::new(PartyId::Bs, session.sid, Message::UserAbort));
        self.world.pump()?;
        let last = self.world.bs().decisions().last().cloned();
        let real = match last {
            Some(d) if d.session == session.sid && d.step == BsStep::Abort => Decision::Abort,
            other => Decision::Unmapped(format!("abort not recorded: {other:?}")),
        };
        if session.state == SessionState::Open {
            self.sessions[index].state = SessionState::Closed;
        }
        let reply = self.model.apply(&IdealEvent::OffloadSilent { uid: session.uid });
        Ok((vec![real], vec![ideal_decision(&reply)]))
    }

    fn claim_bs(&mut self, sel: TokenSel) -> Result<(Vec<Decision>, Vec<Decision>), SimError> {
        let (token, ideal_token) = self.resolve(sel).expect("generator picks existing tokens");
        let before = self.world.bs().claims().len();
        let out = self.world.bs_mut().claim(&token.to_bytes());
        self.world.send(&PartyId::Bs, out);
        self.world.pump()?;
        let real = match self.world.bs().claims().get(before) {
            Some(c) => claim_decision(c.status),
            // Unparseable tokens never leave a pending claim behind.
            None => Decision::InvalidToken,
        };
        let reply = self.model.apply(&IdealEvent::ClaimBs { bsid: BSID.into(), token: ideal_token });
        Ok((vec![real], vec![ideal_decision(&reply)]))
    }

    fn claim_es(&mut self, esid: &str, service: &str, sel: TokenSel) -> Result<(Vec<Decision>, Vec<Decision>), SimError> {
        let (token, ideal_token) = self.resolve(sel).expect("generator picks existing tokens");
        let spid = self.world.config().service(service).map(|s| s.provider.clone()).unwrap_or_default();
        let es = self.world.es_mut(esid).expect("configured edge server");
        let out = es.claim(service, &token.to_bytes());
        self.world.send(&PartyId::Es(esid.to_owned()), out);
        self.world.pump()?;
        let real = match self.world.es(esid).expect("exists").events().last() {
            Some(EsEvent::Claim { status, .. }) => claim_decision(*status),
            other => Decision::Unmapped(format!("no claim result: {other:?}")),
        };
        let reply = self.model.apply(&IdealEvent::ClaimEs {
            esid: esid.to_owned(),
            spid,
            sname: service.to_owned(),
            token: ideal_token,
        });
        Ok((vec![real], vec![ideal_decision(&reply)]))
    }

    /// A random next step that stays inside the comparable fragment.
    pub fn random_step(&self, rng: &mut impl Rng) -> Step {
        let config = self.world.config();
        let services: Vec<&String> = config.services.iter().map(|s| &s.name).collect();
        let any_token = |rng: &mut dyn RngCore, bought: usize| {
            if bought == 0 || rng.gen_ratio(1, 6) {
                TokenSel::Forged(rng.next_u64())
            } else {
                TokenSel::Bought(rng.gen_range(0..bought))
            }
        };
        let listed: Vec<usize> = (0..self.sessions.len()).filter(|&i| !self.sessions[i].list.is_empty()).collect();
        let live: Vec<usize> =
            (0..self.sessions.len()).filter(|&i| self.sessions[i].state != SessionState::Closed).collect();
        loop {
            match rng.gen_range(0..100) {
                0..=24 => {
                    return Step::Buy {
                        user: rng.gen_range(1..=USERS),
                        service: services[rng.gen_range(0..services.len())].clone(),
                        paid: !rng.gen_ratio(1, 8),
                    }
                }
                25..=44 if !self.bought.is_empty() => {
                    return Step::Honest { token: rng.gen_range(0..self.bought.len()) };
                }
                45..=57 => return Step::Open { token: any_token(rng, self.bought.len()) },
                58..=77 if !live.is_empty() => {
                    let session = live[rng.gen_range(0..live.len())];
                    let pick = match rng.gen_range(0..10) {
                        0..=6 => PuzzlePick::Own(rng.gen_range(0..16)),
                        7..=8 if !listed.is_empty() => {
                            PuzzlePick::Other { session: listed[rng.gen_range(0..listed.len())], index: rng.gen_range(0..16) }
                        }
                        _ => PuzzlePick::Garbage(rng.next_u64()),
                    };
                    return Step::Submit { session, pick, token: any_token(rng, self.bought.len()) };
                }
                78..=83 if !live.is_empty() => return Step::Silent { session: live[rng.gen_range(0..live.len())] },
                84..=91 => {
                    let token = if self.relayed_bs.is_empty() || rng.gen_ratio(1, 5) {
                        TokenSel::Forged(rng.next_u64())
                    } else {
                        TokenSel::Bought(self.relayed_bs[rng.gen_range(0..self.relayed_bs.len())])
                    };
                    return Step::ClaimBs { token };
                }
                92..=99 => {
                    let holders: Vec<(&String, &Vec<usize>)> = self.served.iter().collect();
                    if holders.is_empty() {
                        continue;
                    }
                    let (esid, tokens) = holders[rng.gen_range(0..holders.len())];
                    let token = if rng.gen_ratio(1, 5) {
                        TokenSel::Forged(rng.next_u64())
                    } else {
                        TokenSel::Bought(tokens[rng.gen_range(0..tokens.len())])
                    };
                    let service = match token {
                        TokenSel::Bought(b) if rng.gen_ratio(3, 4) => self.bought[b].service.clone(),
                        _ => services[rng.gen_range(0..services.len())].clone(),
                    };
                    return Step::ClaimEs { esid: esid.clone(), service, token };
                }
                _ => {}
            }
        }
    }

    pub fn finish(self) -> TraceOutcome {
        let used = self.model.used_versions().len() as u64;
        TraceOutcome { results: self.results, conservation: (used, self.model.forwarded()) }
    }
}

/// A small random topology over services `s1..s3` and servers `e1..e4`. Some
/// offers are outside the provider's allow list so refusals are exercised.
pub fn random_topology(rng: &mut impl Rng, scheme: Scheme, seed: u64) -> ScenarioConfig {
    let n_services = rng.gen_range(1..=3);
    let n_es = rng.gen_range(1..=4);
    let es_ids: Vec<String> = (1..=n_es).map(|i| format!("e{i}")).collect();
    let mut services = Vec::new();
    for s in 1..=n_services {
        let allow = es_ids.iter().filter(|_| rng.gen_ratio(2, 3)).cloned().collect();
        services.push(ServiceConfig { name: format!("s{s}"), provider: format!("sp{s}"), workload: Workload::Echo, allow });
    }
    let mut edge_servers = Vec::new();
    for id in &es_ids {
        let mut offered: Vec<String> =
            services.iter().filter(|_| rng.gen_ratio(1, 2)).map(|s| s.name.clone()).collect();
        if offered.is_empty() {
            offered.push(services[rng.gen_range(0..services.len())].name.clone());
        }
        edge_servers.push(EdgeServerConfig { id: id.clone(), services: offered, weight: rng.gen_range(1..=2) });
    }
    let mut cfg = ScenarioConfig::two_service_topology(scheme, seed, 0, 0);
    cfg.services = services;
    cfg.edge_servers = edge_servers;
    cfg.users = USERS;
    cfg
}

/// Whether any ES ends up with at least one puzzle at the BS.
fn has_provider(cfg: &ScenarioConfig) -> bool {
    cfg.edge_servers
        .iter()
        .any(|e| e.services.iter().any(|s| cfg.service(s).is_some_and(|svc| svc.allow.contains(&e.id))))
}

/// Generates and runs one random trace of `len` events. Returns the steps
/// (for replay) and the outcome.
pub fn random_trace(
    keys: &Arc<SystemKeys>,
    seed: u64,
    len: usize,
) -> Result<(ScenarioConfig, Vec<Step>, TraceOutcome), SimError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let cfg = loop {
        let cfg = random_topology(&mut rng, keys.scheme, seed);
        // The real BS checks the token before noticing an empty list; the
        // model cannot, so traces always have a provider.
        if has_provider(&cfg) {
            break cfg;
        }
    };
    let mut harness = Harness::new(cfg.clone(), keys.clone(), seed)?;
    let mut steps = Vec::with_capacity(len);
    for _ in 0..len {
        let step = harness.random_step(&mut rng);
        harness.apply(&step)?;
        steps.push(step);
    }
    Ok((cfg, steps, harness.finish()))
}

/// Replays a recorded trace.
pub fn replay(keys: &Arc<SystemKeys>, cfg: ScenarioConfig, seed: u64, steps: &[Step]) -> Result<TraceOutcome, SimError> {
    let mut harness = Harness::new(cfg, keys.clone(), seed)?;
    for step in steps {
        harness.apply(step)?;
    }
    Ok(harness.finish())
}

/// One JSON object per line.
pub fn write_trace(steps: &[Step]) -> String {
    steps.iter().map(|s| serde_json::to_string(s).expect("steps serialize") + "\n").collect()
}

pub fn read_trace(text: &str) -> Result<Vec<Step>, serde_json::Error> {
    text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}

/// Keys for trace runs: one set shared by every trace.
pub fn trace_keys(scheme: Scheme, seed: u64) -> Result<Arc<SystemKeys>, SimError> {
    let names: Vec<String> = (1..=3).map(|i| format!("s{i}")).collect();
    Ok(Arc::new(SystemKeys::generate(scheme, crate::SecurityLevel::Bits128, seed, &names)?))
}
