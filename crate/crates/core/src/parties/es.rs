//! Edge server: obtains service credentials from SPs, publishes puzzles at the
//! BS, serves forwarded requests and claims payment.

use std::collections::BTreeMap;

use rand_chacha::ChaCha20Rng;

use super::{fresh_session_id, Outbound, Party};
use crate::blind::token::{Token, TokenId};
use crate::blind::BlindPublicKey;
use crate::puzzle::{encode_solution, puzzle_gen, PuzzleParams, PuzzleTrapdoor};
use crate::symmetric::{decode_request, open, seal, ServiceKey};
use crate::wire::{Envelope, Message, PartyId, RejectReason, SessionId};
use crate::workload::Workload;

#[derive(Debug, Clone)]
pub struct EsService {
    pub spid: String,
    pub service_key: ServiceKey,
    pub public_key: BlindPublicKey,
    pub workload: Workload,
    pub params: PuzzleParams,
    pub trapdoor: PuzzleTrapdoor,
    pub slots: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServedToken {
    pub s_type: String,
    pub token: Token,
    pub claimed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EsEvent {
    Credentials { s_type: String },
    CredentialsRefused { spid: String, reason: u8 },
    PuzzleAccepted { slot: u32 },
    PuzzleRefused { slot: u32, reason: u8 },
    Served { s_type: String, token: TokenId },
    Refused { reason: RejectReason },
    Claim { s_type: String, token: Option<TokenId>, status: u8, amount: u64 },
}

#[derive(Debug)]
pub struct EdgeServer {
    esid: String,
    weight: u32,
    services: BTreeMap<String, EsService>,
    next_slot: u32,
    served: Vec<ServedToken>,
    pending_claims: BTreeMap<SessionId, (String, Option<TokenId>)>,
    pending_slots: BTreeMap<SessionId, u32>,
    events: Vec<EsEvent>,
    rng: ChaCha20Rng,
}

impl EdgeServer {
    /// `weight` is the number of puzzles published per service.
    pub fn new(esid: impl Into<String>, weight: u32, rng: ChaCha20Rng) -> Self {
        Self {
            esid: esid.into(),
            weight: weight.max(1),
            services: BTreeMap::new(),
            next_slot: 0,
            served: Vec::new(),
            pending_claims: BTreeMap::new(),
            pending_slots: BTreeMap::new(),
            events: Vec::new(),
            rng,
        }
    }

    pub fn esid(&self) -> &str {
        &self.esid
    }

    pub fn services(&self) -> &BTreeMap<String, EsService> {
        &self.services
    }

    pub fn served(&self) -> &[ServedToken] {
        &self.served
    }

    pub fn events(&self) -> &[EsEvent] {
        &self.events
    }

    pub fn register_with_sp(&mut self, spid: &str, s_type: &str) -> Outbound {
        Outbound::new(
            PartyId::Sp(spid.to_owned()),
            fresh_session_id(&mut self.rng),
            Message::EsRegisterRequest { esid: self.esid.clone(), reg_info: Vec::new(), s_type: s_type.to_owned() },
        )
    }

    /// One freshly generated puzzle per slot of every held service.
    pub fn register_with_bs(&mut self) -> Vec<Outbound> {
        let mut out = Vec::new();
        let names: Vec<String> = self.services.keys().cloned().collect();
        for name in names {
            let svc = &self.services[&name];
            let solution = encode_solution(&svc.service_key.solution_digest(), &svc.params);
            let slots = svc.slots.clone();
            let params = svc.params.clone();
            for slot in slots {
                let puzzle = puzzle_gen(&params, &solution, &mut self.rng).expect("solution encoded under these params");
                let sid = fresh_session_id(&mut self.rng);
                self.pending_slots.insert(sid, slot);
                out.push(Outbound::new(
                    PartyId::Bs,
                    sid,
                    Message::EsPuzzleRegister { esid: self.esid.clone(), slot, puzzle: puzzle.to_bytes() },
                ));
            }
        }
        out
    }

    /// Claims every served token not yet claimed.
    pub fn claim_all(&mut self) -> Vec<Outbound> {
        let mut out = Vec::new();
        for i in 0..self.served.len() {
            if self.served[i].claimed {
                continue;
            }
            self.served[i].claimed = true;
            let (s_type, token) = (self.served[i].s_type.clone(), self.served[i].token.clone());
            out.push(self.claim(&s_type, &token.to_bytes()));
        }
        out
    }

    /// A claim for arbitrary `(s_type, token)`; used by honest claiming and
    /// by the attack harness.
    pub fn claim(&mut self, s_type: &str, token: &[u8]) -> Outbound {
        let sid = fresh_session_id(&mut self.rng);
        let id = Token::from_bytes(token).ok().map(|t| t.id());
        self.pending_claims.insert(sid, (s_type.to_owned(), id));
        Outbound::new(
            PartyId::Fa,
            sid,
            Message::ClaimEs { esid: self.esid.clone(), s_type: s_type.to_owned(), token: token.to_vec() },
        )
    }

    fn accept_credentials(&mut self, spid: String, msg: Message) -> Result<String, String> {
        let Message::EsCredentials { s_type, service_key, public_key, workload, puzzle_params, trapdoor, .. } = msg else {
            unreachable!("called with credentials only");
        };
        let public_key = BlindPublicKey::from_bytes(&public_key).map_err(|e| e.to_string())?;
        let workload: Workload = workload.parse()?;
        let params = PuzzleParams::from_bytes(&puzzle_params).map_err(|e| e.to_string())?;
        let trapdoor = PuzzleTrapdoor::from_bytes(&trapdoor).map_err(|e| e.to_string())?;
        let slots = match self.services.get(&s_type) {
            Some(existing) => existing.slots.clone(),
            None => {
                let first = self.next_slot;
                self.next_slot += self.weight;
                (first..first + self.weight).collect()
            }
        };
        self.services.insert(
            s_type.clone(),
            EsService { spid, service_key: ServiceKey(service_key), public_key, workload, params, trapdoor, slots },
        );
        Ok(s_type)
    }

    fn serve(&mut self, token: &[u8], ciphertext: &[u8]) -> Result<Vec<u8>, RejectReason> {
        let token = Token::from_bytes(token).map_err(|_| RejectReason::WrongService)?;
        let (s_type, svc) = self
            .services
            .iter()
            .find(|(_, svc)| token.verify_service(&svc.public_key))
            .ok_or(RejectReason::WrongService)?;
        let plaintext = open(&svc.service_key, ciphertext).map_err(|_| RejectReason::BadCiphertext)?;
        let (requested, data) = decode_request(&plaintext).map_err(|_| RejectReason::BadCiphertext)?;
        if &requested != s_type {
            return Err(RejectReason::WrongService);
        }
        let result = svc.workload.run(&data);
        let response = seal(&svc.service_key, &result, &mut self.rng);
        let s_type = s_type.clone();
        self.events.push(EsEvent::Served { s_type: s_type.clone(), token: token.id() });
        self.served.push(ServedToken { s_type, token, claimed: false });
        Ok(response)
    }
}

impl Party for EdgeServer {
    fn id(&self) -> PartyId {
        PartyId::Es(self.esid.clone())
    }

    fn handle(&mut self, from: &PartyId, envelope: Envelope) -> Vec<Outbound> {
        let sid = envelope.session_id;
        match (from, envelope.message) {
            (PartyId::Sp(spid), msg @ Message::EsCredentials { status: 0, .. }) => {
                match self.accept_credentials(spid.clone(), msg) {
                    Ok(s_type) => self.events.push(EsEvent::Credentials { s_type }),
                    Err(e) => {
                        log::warn!("unusable credentials from {spid}: {e}");
                        self.events.push(EsEvent::CredentialsRefused {
                            spid: spid.clone(),
                            reason: RejectReason::Malformed.code(),
                        });
                    }
                }
                Vec::new()
            }
            (PartyId::Sp(spid), Message::EsCredentials { status, .. } | Message::Reject { reason: status, .. }) => {
                self.events.push(EsEvent::CredentialsRefused { spid: spid.clone(), reason: status });
                Vec::new()
            }
            (PartyId::Bs, Message::Ack { status, .. }) => {
                if let Some(slot) = self.pending_slots.remove(&sid) {
                    self.events.push(if status == 0 {
                        EsEvent::PuzzleAccepted { slot }
                    } else {
                        EsEvent::PuzzleRefused { slot, reason: status }
                    });
                }
                Vec::new()
            }
            (PartyId::Bs, Message::ForwardToEs { token, ciphertext }) => match self.serve(&token, &ciphertext) {
                Ok(ct) => vec![Outbound::new(PartyId::Bs, sid, Message::EsResponse { ciphertext: ct })],
                Err(reason) => {
                    self.events.push(EsEvent::Refused { reason });
                    vec![Outbound::reject(PartyId::Bs, sid, reason, "request not served")]
                }
            },
            (PartyId::Bs, Message::Reject { reason, .. }) => {
                if let Some(slot) = self.pending_slots.remove(&sid) {
                    self.events.push(EsEvent::PuzzleRefused { slot, reason });
                }
                Vec::new()
            }
            (PartyId::Fa, Message::ClaimResult { status, amount }) => {
                let (s_type, token) = self.pending_claims.remove(&sid).unwrap_or_default();
                self.events.push(EsEvent::Claim { s_type, token, status, amount });
                Vec::new()
            }
            (_, other) => super::unexpected("ES", from, sid, &other),
        }
    }
}
