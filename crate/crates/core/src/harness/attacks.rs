//! Scripted attacks against the real parties. Each run sets up fresh tokens
//! and checks that every malicious step is refused for the expected reason.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_bigint::BigUint;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::report::Report;
use crate::blind::token::Token;
use crate::config::ScenarioConfig;
use crate::parties::bs::BsStep;
use crate::parties::es::EsEvent;
use crate::parties::{fresh_session_id, Outbound};
use crate::sim::{SessionOutcome, SimError, SystemKeys, World, WorldOptions};
use crate::wire::{Message, PartyId, RejectReason, SessionId};

pub const DEFAULT_RUNS: u32 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Attack {
    /// One token, two concurrent sessions, a later third session and a second BS claim.
    DoubleSpend,
    /// Random bytes shaped like a token, at init and at submit.
    ForgedToken,
    /// Resubmitting an already answered puzzle with a new token.
    PuzzleReplay,
    /// Submitting from a list after aborting it.
    StaleBatch,
    /// ES claims a token under another service.
    WrongServiceClaim,
    /// ES claims the same token twice.
    DuplicateClaim,
    /// ES re-claims with `sig2 + n`, which has the same residue.
    InflatedClaim,
}

impl Attack {
    pub const ALL: [Attack; 7] = [
        Attack::DoubleSpend,
        Attack::ForgedToken,
        Attack::PuzzleReplay,
        Attack::StaleBatch,
        Attack::WrongServiceClaim,
        Attack::DuplicateClaim,
        Attack::InflatedClaim,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Attack::DoubleSpend => "double-spend",
            Attack::ForgedToken => "forged-token",
            Attack::PuzzleReplay => "puzzle-replay",
            Attack::StaleBatch => "stale-batch",
            Attack::WrongServiceClaim => "wrong-service-claim",
            Attack::DuplicateClaim => "duplicate-claim",
            Attack::InflatedClaim => "inflated-claim",
        }
    }
}

impl fmt::Display for Attack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Attack {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Attack::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| format!("unknown attack `{s}`"))
    }
}

/// What a party did with one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Observed {
    Accepted,
    Rejected(RejectReason),
    /// No decision was recorded at all.
    Missing,
}

impl fmt::Display for Observed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Observed::Accepted => f.write_str("accepted"),
            Observed::Rejected(r) => write!(f, "rejected:{r}"),
            Observed::Missing => f.write_str("missing"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Check {
    pub step: &'static str,
    pub expected: Observed,
    pub observed: Observed,
}

impl Check {
    pub fn holds(&self) -> bool {
        self.expected == self.observed
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackResult {
    pub attack: Attack,
    pub runs: u32,
    /// Runs in which every check held.
    pub defeated: u32,
    /// `(step, observed)` counts, for the report.
    pub observed: BTreeMap<(String, String), u64>,
    /// Checks that failed, first few only.
    pub failures: Vec<(u32, Check)>,
}

impl AttackResult {
    pub fn all_defeated(&self) -> bool {
        self.defeated == self.runs
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackReport {
    pub results: Vec<AttackResult>,
}

impl AttackReport {
    pub fn all_defeated(&self) -> bool {
        self.results.iter().all(AttackResult::all_defeated)
    }

    pub fn get(&self, attack: Attack) -> Option<&AttackResult> {
        self.results.iter().find(|r| r.attack == attack)
    }
}

const MAX_FAILURES: usize = 5;

struct Runner {
    world: World,
    rng: ChaCha20Rng,
    next_uid: u32,
}

impl Runner {
    fn uid(&mut self) -> u32 {
        let users = self.world.config().users;
        self.next_uid = self.next_uid % users + 1;
        self.next_uid
    }

    fn buy(&mut self, uid: u32, service: &str) -> Result<usize, AttackError> {
        self.world.buy_token(uid, service)?.map_err(|code| AttackError::Setup(format!("token refused with {code}")))
    }

    fn token(&self, uid: u32, index: usize) -> Token {
        self.world.user(uid).expect("known user").wallet()[index].token.clone()
    }

    /// Buys a token and runs an honest session with it.
    fn served(&mut self, uid: u32, service: &str) -> Result<(usize, SessionId, String), AttackError> {
        let index = self.buy(uid, service)?;
        let (sid, outcome) = self.world.offload_with(uid, index, b"attack setup")?;
        match outcome {
            SessionOutcome::Completed { served_by, .. } => Ok((index, sid, served_by)),
            other => Err(AttackError::Setup(format!("honest session ended {}", other.label()))),
        }
    }

    fn bs_decision(&self, sid: &SessionId, step: BsStep) -> Observed {
        match self.world.bs().decisions().iter().rev().find(|d| &d.session == sid && d.step == step) {
            Some(d) => match &d.outcome {
                Ok(_) => Observed::Accepted,
                Err(r) => Observed::Rejected(*r),
            },
            None => Observed::Missing,
        }
    }

    fn crafted(&mut self, uid: u32, sid: SessionId, message: Message) -> Result<(), AttackError> {
        self.world.send(&PartyId::User(uid), Outbound::new(PartyId::Bs, sid, message));
        self.world.pump()?;
        Ok(())
    }

    /// Opens a BS session the user party does not know about, so nothing is
    /// submitted automatically. Returns the list.
    fn open(&mut self, uid: u32, token: &Token) -> Result<(SessionId, Vec<Vec<u8>>), AttackError> {
        let sid = fresh_session_id(&mut self.rng);
        self.crafted(uid, sid, Message::OffloadInit { token: token.to_bytes() })?;
        let list = self.world.bs().session(&sid).map(|s| s.puzzles.clone()).unwrap_or_default();
        Ok((sid, list))
    }

    fn submit(&mut self, uid: u32, sid: SessionId, token: &Token, puzzle: Vec<u8>) -> Result<Observed, AttackError> {
        let mut ciphertext = vec![0u8; 48];
        self.rng.fill_bytes(&mut ciphertext);
        self.crafted(uid, sid, Message::OffloadRequest { token: token.to_bytes(), puzzle, ciphertext })?;
        Ok(self.bs_decision(&sid, BsStep::Submit))
    }

    fn bs_claim(&mut self, token: &Token) -> Result<Observed, AttackError> {
        let before = self.world.bs().claims().len();
        let out = self.world.bs_mut().claim(&token.to_bytes());
        self.world.send(&PartyId::Bs, out);
        self.world.pump()?;
        Ok(match self.world.bs().claims().get(before) {
            Some(c) => status(c.status),
            None => Observed::Missing,
        })
    }

    fn es_claim(&mut self, esid: &str, service: &str, token: &[u8]) -> Result<Observed, AttackError> {
        let es = self.world.es_mut(esid).ok_or_else(|| AttackError::Setup(format!("no edge server `{esid}`")))?;
        let before = es.events().len();
        let out = es.claim(service, token);
        self.world.send(&PartyId::Es(esid.to_owned()), out);
        self.world.pump()?;
        let events = &self.world.es(esid).expect("exists").events()[before..];
        Ok(match events.iter().find_map(|e| if let EsEvent::Claim { status: s, .. } = e { Some(*s) } else { None }) {
            Some(s) => status(s),
            None => Observed::Missing,
        })
    }

    fn forged(&mut self) -> Token {
        let len = self.world.keys().platform.public.modulus_len();
        let mut bytes = |n: usize| {
            let mut v = vec![0u8; n];
            self.rng.fill_bytes(&mut v);
            v
        };
        Token {
            m1: bytes(32).try_into().expect("32 bytes"),
            sig1: bytes(len),
            m2: bytes(32).try_into().expect("32 bytes"),
            sig2: bytes(len),
        }
    }

    fn run(&mut self, attack: Attack) -> Result<Vec<Check>, AttackError> {
        use Observed::{Accepted, Rejected};
        let uid = self.uid();
        let check = |step, expected, observed| Check { step, expected, observed };
        Ok(match attack {
            Attack::DoubleSpend => {
                let index = self.buy(uid, "s1")?;
                let user = self.world.user_mut(uid).expect("known user");
                let (a, first) = user.start_with(index, b"first").expect("in wallet");
                let (b, second) = user.start_with(index, b"second").expect("in wallet");
                self.world.send(&PartyId::User(uid), first);
                self.world.send(&PartyId::User(uid), second);
                self.world.pump()?;
                let (c, _) = self.world.offload_with(uid, index, b"third")?;
                let token = self.token(uid, index);
                vec![
                    check("first-submit", Accepted, self.bs_decision(&a, BsStep::Submit)),
                    check("concurrent-submit", Rejected(RejectReason::DoubleSpend), self.bs_decision(&b, BsStep::Submit)),
                    check("later-init", Rejected(RejectReason::DoubleSpend), self.bs_decision(&c, BsStep::Init)),
                    check("first-bs-claim", Accepted, self.bs_claim(&token)?),
                    check("second-bs-claim", Rejected(RejectReason::AlreadyClaimed), self.bs_claim(&token)?),
                ]
            }
            Attack::ForgedToken => {
                let forged = self.forged();
                let (at_init, _) = self.open(uid, &forged)?;
                let index = self.buy(uid, "s1")?;
                let (sid, list) = self.open(uid, &self.token(uid, index))?;
                let puzzle = list.first().cloned().unwrap_or_default();
                let forged = self.forged();
                vec![
                    check("forged-init", Rejected(RejectReason::InvalidToken), self.bs_decision(&at_init, BsStep::Init)),
                    check("honest-init", Accepted, self.bs_decision(&sid, BsStep::Init)),
                    check("forged-submit", Rejected(RejectReason::InvalidToken), self.submit(uid, sid, &forged, puzzle)?),
                ]
            }
            Attack::PuzzleReplay => {
                let (_, sid, _) = self.served(uid, "s1")?;
                let session = self.world.user(uid).expect("known user").session(&sid).expect("started").clone();
                let chosen = session.list[session.choice.expect("submitted")].clone();
                let index = self.buy(uid, "s1")?;
                let fresh = self.token(uid, index);
                vec![check("replayed-puzzle", Rejected(RejectReason::PuzzleReplay), self.submit(uid, sid, &fresh, chosen)?)]
            }
            Attack::StaleBatch => {
                let index = self.buy(uid, "s2")?;
                let token = self.token(uid, index);
                let (sid, list) = self.open(uid, &token)?;
                self.crafted(uid, sid, Message::UserAbort)?;
                let puzzle = list.first().cloned().unwrap_or_default();
                vec![
                    check("abort", Accepted, self.bs_decision(&sid, BsStep::Abort)),
                    check("stale-submit", Rejected(RejectReason::StaleList), self.submit(uid, sid, &token, puzzle)?),
                ]
            }
            Attack::WrongServiceClaim => {
                let (index, _, esid) = self.served(uid, "s1")?;
                let token = self.token(uid, index).to_bytes();
                vec![
                    check("claim-as-s2", Rejected(RejectReason::WrongServiceType), self.es_claim(&esid, "s2", &token)?),
                    check("claim-as-s1", Accepted, self.es_claim(&esid, "s1", &token)?),
                ]
            }
            Attack::DuplicateClaim => {
                let (index, _, esid) = self.served(uid, "s2")?;
                let token = self.token(uid, index).to_bytes();
                vec![
                    check("first-claim", Accepted, self.es_claim(&esid, "s2", &token)?),
                    check("second-claim", Rejected(RejectReason::AlreadyClaimed), self.es_claim(&esid, "s2", &token)?),
                ]
            }
            Attack::InflatedClaim => {
                let (index, _, esid) = self.served(uid, "s1")?;
                let token = self.token(uid, index);
                let first = self.es_claim(&esid, "s1", &token.to_bytes())?;
                let n = self.world.keys().services["s1"].keypair.public.modulus().clone();
                let mut inflated = token.clone();
                inflated.sig2 = (BigUint::from_bytes_be(&token.sig2) + n).to_bytes_be();
                if inflated.sig2.len() < token.sig2.len() {
                    inflated.sig2.insert(0, 0);
                }
                vec![
                    check("first-claim", Accepted, first),
                    check(
                        "inflated-claim",
                        Rejected(RejectReason::InvalidSignature),
                        self.es_claim(&esid, "s1", &inflated.to_bytes())?,
                    ),
                ]
            }
        })
    }
}

fn status(code: u8) -> Observed {
    if code == 0 {
        return Observed::Accepted;
    }
    RejectReason::from_code(code).map(Observed::Rejected).unwrap_or(Observed::Missing)
}

#[derive(Debug, thiserror::Error)]
pub enum AttackError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("attack setup failed: {0}")]
    Setup(String),
}

/// Runs each attack `runs` times in its own registered world built from
/// `config`, which must offer services `s1` and `s2`.
pub fn run_attacks(config: &ScenarioConfig, attacks: &[Attack], runs: u32) -> Result<AttackReport, AttackError> {
    let keys = Arc::new(SystemKeys::for_config(config)?);
    run_attacks_with(config, keys, attacks, runs)
}

pub fn run_attacks_with(
    config: &ScenarioConfig,
    keys: Arc<SystemKeys>,
    attacks: &[Attack],
    runs: u32,
) -> Result<AttackReport, AttackError> {
    let seed = config.seed.unwrap_or(0);
    let mut results = Vec::new();
    for &attack in attacks {
        let mut world = World::new(config.clone(), keys.clone(), WorldOptions::default())?;
        world.register()?;
        let rng = ChaCha20Rng::seed_from_u64(seed ^ (0xa77a_c000 + attack as u64));
        let mut runner = Runner { world, rng, next_uid: 0 };
        let mut result =
            AttackResult { attack, runs, defeated: 0, observed: BTreeMap::new(), failures: Vec::new() };
        for run in 0..runs {
            let checks = runner.run(attack)?;
            if checks.iter().all(Check::holds) {
                result.defeated += 1;
            }
            for c in checks {
                *result.observed.entry((c.step.to_owned(), c.observed.to_string())).or_insert(0) += 1;
                if !c.holds() && result.failures.len() < MAX_FAILURES {
                    result.failures.push((run, c));
                }
            }
        }
        results.push(result);
    }
    Ok(AttackReport { results })
}

impl Report for AttackReport {
    fn title(&self) -> String {
        "attack runs".into()
    }

    fn summary(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = self
            .results
            .iter()
            .map(|r| (r.attack.name().to_owned(), format!("{}/{} defeated", r.defeated, r.runs)))
            .collect();
        for r in &self.results {
            for (run, c) in &r.failures {
                out.push((
                    format!("{}.run{run}.{}", r.attack, c.step),
                    format!("expected {}, got {}", c.expected, c.observed),
                ));
            }
        }
        out.push(("verdict".into(), if self.all_defeated() { "pass" } else { "fail" }.into()));
        out
    }

    fn header(&self) -> Vec<&'static str> {
        vec!["attack", "step", "observed", "count"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.results
            .iter()
            .flat_map(|r| {
                r.observed
                    .iter()
                    .map(|((step, obs), n)| vec![r.attack.to_string(), step.clone(), obs.clone(), n.to_string()])
            })
            .collect()
    }
}
