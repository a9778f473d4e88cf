//! User: buys tokens, picks a puzzle of its service from the BS list and
//! submits an encrypted request.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use super::{fresh_session_id, Outbound, Party};
use crate::blind::token::{token_finalize, token_request_build, Token, TokenSecret};
use crate::blind::BlindPublicKey;
use crate::puzzle::{encode_solution, puzzle_match, Puzzle, PuzzleParams, PuzzleTrapdoor};
use crate::symmetric::{encode_request, open, seal, ServiceKey};
use crate::wire::{Envelope, Message, PartyId, RejectReason, SessionId};

/// What a user obtains with a token for one service.
#[derive(Debug, Clone)]
pub struct Credentials {
    pub service_key: ServiceKey,
    pub public_key: BlindPublicKey,
    pub params: PuzzleParams,
    pub trapdoor: PuzzleTrapdoor,
}

#[derive(Debug, Clone)]
pub struct OwnedToken {
    pub s_type: String,
    pub token: Token,
    pub credentials: Credentials,
    pub used: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Pending,
    Completed(Vec<u8>),
    Rejected(RejectReason),
    /// No puzzle in the list belonged to the service.
    Aborted,
}

#[derive(Debug, Clone)]
pub struct UserSession {
    pub s_type: String,
    pub token: Token,
    pub data: Vec<u8>,
    pub list: Vec<Vec<u8>>,
    pub version: Option<u64>,
    /// Index into `list` of the submitted puzzle.
    pub choice: Option<usize>,
    /// How many entries of `list` opened under the service key.
    pub matching: usize,
    pub outcome: Outcome,
    credentials: Credentials,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenOutcome {
    Issued,
    Refused(u8),
    /// The FA's signatures did not verify.
    Invalid,
}

#[derive(Debug)]
pub struct User {
    uid: u32,
    pk_p: BlindPublicKey,
    directory: BTreeMap<String, BlindPublicKey>,
    pending_tokens: BTreeMap<SessionId, (String, TokenSecret)>,
    token_results: Vec<(String, TokenOutcome)>,
    wallet: Vec<OwnedToken>,
    sessions: BTreeMap<SessionId, UserSession>,
    rng: ChaCha20Rng,
}

impl User {
    /// `directory` holds the public key of each service the user may buy.
    pub fn new(uid: u32, pk_p: BlindPublicKey, directory: BTreeMap<String, BlindPublicKey>, rng: ChaCha20Rng) -> Self {
        Self {
            uid,
            pk_p,
            directory,
            pending_tokens: BTreeMap::new(),
            token_results: Vec::new(),
            wallet: Vec::new(),
            sessions: BTreeMap::new(),
            rng,
        }
    }

    pub fn uid(&self) -> u32 {
        self.uid
    }

    pub fn wallet(&self) -> &[OwnedToken] {
        &self.wallet
    }

    pub fn token_results(&self) -> &[(String, TokenOutcome)] {
        &self.token_results
    }

    pub fn sessions(&self) -> &BTreeMap<SessionId, UserSession> {
        &self.sessions
    }

    pub fn session(&self, sid: &SessionId) -> Option<&UserSession> {
        self.sessions.get(sid)
    }

    /// `None` if the service is not in the directory.
    pub fn request_token(&mut self, s_type: &str, payment: &[u8]) -> Option<Outbound> {
        let pk_s = self.directory.get(s_type)?;
        let (secret, blinded) = token_request_build(&self.pk_p, pk_s, &mut self.rng).ok()?;
        let sid = fresh_session_id(&mut self.rng);
        self.pending_tokens.insert(sid, (s_type.to_owned(), secret));
        Some(Outbound::new(
            PartyId::Fa,
            sid,
            Message::TokenRequest {
                s_type: s_type.to_owned(),
                blinded_agnostic: blinded.agnostic,
                blinded_specific: blinded.specific,
                payment: payment.to_vec(),
            },
        ))
    }

    /// Spends the first unused token for `s_type`. `None` if there is none.
    pub fn start_offload(&mut self, s_type: &str, data: &[u8]) -> Option<(SessionId, Outbound)> {
        let owned = self.wallet.iter_mut().find(|t| !t.used && t.s_type == s_type)?;
        owned.used = true;
        let (token, credentials) = (owned.token.clone(), owned.credentials.clone());
        Some(self.start_with_token(s_type, token, credentials, data))
    }

    /// Starts a session with an explicit token, spent or not. Lets the attack
    /// harness replay tokens.
    pub fn start_with(&mut self, wallet_index: usize, data: &[u8]) -> Option<(SessionId, Outbound)> {
        let owned = self.wallet.get(wallet_index)?.clone();
        self.wallet[wallet_index].used = true;
        Some(self.start_with_token(&owned.s_type, owned.token, owned.credentials, data))
    }

    fn start_with_token(&mut self, s_type: &str, token: Token, credentials: Credentials, data: &[u8]) -> (SessionId, Outbound) {
        let sid = fresh_session_id(&mut self.rng);
        let out = Outbound::new(PartyId::Bs, sid, Message::OffloadInit { token: token.to_bytes() });
        self.sessions.insert(
            sid,
            UserSession {
                s_type: s_type.to_owned(),
                token,
                data: data.to_vec(),
                list: Vec::new(),
                version: None,
                choice: None,
                matching: 0,
                outcome: Outcome::Pending,
                credentials,
            },
        );
        (sid, out)
    }

    fn finish_token(&mut self, sid: SessionId, msg: Message) {
        let Some((s_type, secret)) = self.pending_tokens.remove(&sid) else { return };
        let Message::TokenIssue {
            status: 0,
            blind_sig_agnostic,
            blind_sig_specific,
            service_key,
            service_public_key,
            puzzle_params,
            trapdoor,
        } = msg
        else {
            let status = match msg {
                Message::TokenIssue { status, .. } | Message::Reject { reason: status, .. } => status,
                _ => RejectReason::Unexpected.code(),
            };
            self.token_results.push((s_type, TokenOutcome::Refused(status)));
            return;
        };
        let pk_s = &self.directory[&s_type];
        let decoded = (|| {
            let announced = BlindPublicKey::from_bytes(&service_public_key).ok()?;
            if &announced != pk_s {
                return None;
            }
            let params = PuzzleParams::from_bytes(&puzzle_params).ok()?;
            let trapdoor = PuzzleTrapdoor::from_bytes(&trapdoor).ok()?;
            let token = token_finalize(&secret, &blind_sig_agnostic, &blind_sig_specific, &self.pk_p, pk_s).ok()?;
            Some((token, params, trapdoor))
        })();
        match decoded {
            Some((token, params, trapdoor)) => {
                let credentials =
                    Credentials { service_key: ServiceKey(service_key), public_key: pk_s.clone(), params, trapdoor };
                self.wallet.push(OwnedToken { s_type: s_type.clone(), token, credentials, used: false });
                self.token_results.push((s_type, TokenOutcome::Issued));
            }
            None => self.token_results.push((s_type, TokenOutcome::Invalid)),
        }
    }

    fn choose(&mut self, sid: SessionId, version: u64, puzzles: Vec<Vec<u8>>) -> Vec<Outbound> {
        let Some(session) = self.sessions.get_mut(&sid) else { return Vec::new() };
        if session.outcome != Outcome::Pending || session.version.is_some() {
            return Vec::new();
        }
        let creds = &session.credentials;
        let solution = encode_solution(&creds.service_key.solution_digest(), &creds.params);
        let matches: Vec<usize> = puzzles
            .iter()
            .enumerate()
            .filter(|(_, bytes)| {
                Puzzle::from_bytes(bytes, &creds.params)
                    .ok()
                    .and_then(|z| puzzle_match(&creds.params, &creds.trapdoor, &solution, &z).ok())
                    .unwrap_or(false)
            })
            .map(|(i, _)| i)
            .collect();
        session.version = Some(version);
        session.matching = matches.len();
        session.list = puzzles;
        if matches.is_empty() {
            session.outcome = Outcome::Aborted;
            return vec![Outbound::new(PartyId::Bs, sid, Message::UserAbort)];
        }
        let pick = matches[self.rng.gen_range(0..matches.len())];
        session.choice = Some(pick);
        let ciphertext =
            seal(&session.credentials.service_key, &encode_request(&session.s_type, &session.data), &mut self.rng);
        vec![Outbound::new(
            PartyId::Bs,
            sid,
            Message::OffloadRequest { token: session.token.to_bytes(), puzzle: session.list[pick].clone(), ciphertext },
        )]
    }
}

impl Party for User {
    fn id(&self) -> PartyId {
        PartyId::User(self.uid)
    }

    fn handle(&mut self, from: &PartyId, envelope: Envelope) -> Vec<Outbound> {
        let sid = envelope.session_id;
        match envelope.message {
            msg @ Message::TokenIssue { .. } if *from == PartyId::Fa => {
                self.finish_token(sid, msg);
                Vec::new()
            }
            msg @ Message::Reject { .. } if *from == PartyId::Fa => {
                self.finish_token(sid, msg);
                Vec::new()
            }
            Message::PuzzleList { version, puzzles } if *from == PartyId::Bs => self.choose(sid, version, puzzles),
            Message::ResponseToUser { ciphertext } if *from == PartyId::Bs => {
                if let Some(s) = self.sessions.get_mut(&sid) {
                    s.outcome = match open(&s.credentials.service_key, &ciphertext) {
                        Ok(resp) => Outcome::Completed(resp),
                        Err(_) => Outcome::Rejected(RejectReason::BadCiphertext),
                    };
                }
                Vec::new()
            }
            Message::Reject { reason, .. } if *from == PartyId::Bs => {
                if let Some(s) = self.sessions.get_mut(&sid) {
                    s.outcome = Outcome::Rejected(RejectReason::from_code(reason).unwrap_or(RejectReason::Unexpected));
                }
                Vec::new()
            }
            other => super::unexpected("User", from, sid, &other),
        }
    }
}
