//! Financial authority: registers services, sells tokens, settles claims.

use std::collections::{BTreeMap, BTreeSet};

use super::{pack_puzzle_material, Outbound, Party};
use crate::blind::token::Token;
use crate::blind::{blind_sign, BlindKeyPair, BlindPublicKey, BlindSecretKey, KeyRole};
use crate::ledger::{ClaimError, ClaimLedger, LedgerError};
use crate::puzzle::{PuzzleParams, PuzzleTrapdoor};
use crate::symmetric::ServiceKey;
use crate::wire::{Envelope, Message, PartyId, RejectReason};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceRecord {
    pub spid: String,
    pub sname: String,
    pub service_key: ServiceKey,
    pub public_key: BlindPublicKey,
    secret_key: BlindSecretKey,
}

/// Which payment vouchers the FA accepts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VoucherPolicy {
    /// Each listed voucher is accepted once.
    AllowList(BTreeSet<Vec<u8>>),
    /// Any non-empty voucher, each accepted once.
    AnyOnce,
}

/// What the FA learned from one token sale. Only blinded values were seen,
/// so nothing here links to the unblinded token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IssuanceRecord {
    pub seq: u64,
    pub s_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FaEvent {
    SpRegistered { sname: String, fresh: bool },
    SpRejected { sname: String },
    TokenIssued { s_type: String },
    TokenRefused { s_type: String, reason: RejectReason },
    BsClaim { from: PartyId, result: Result<u64, ClaimError> },
    EsClaim { from: PartyId, s_type: String, result: Result<u64, ClaimError> },
}

#[derive(Debug)]
pub struct FinancialAuthority {
    platform: BlindKeyPair,
    puzzle_params: PuzzleParams,
    trapdoor: PuzzleTrapdoor,
    services: BTreeMap<String, ServiceRecord>,
    service_keys: BTreeMap<String, BlindPublicKey>,
    vouchers: VoucherPolicy,
    spent_vouchers: BTreeSet<Vec<u8>>,
    ledger: ClaimLedger,
    issued: Vec<IssuanceRecord>,
    events: Vec<FaEvent>,
}

impl FinancialAuthority {
    pub fn new(
        platform: BlindKeyPair,
        puzzle_params: PuzzleParams,
        trapdoor: PuzzleTrapdoor,
        vouchers: VoucherPolicy,
        ledger: ClaimLedger,
    ) -> Self {
        Self {
            platform,
            puzzle_params,
            trapdoor,
            services: BTreeMap::new(),
            service_keys: BTreeMap::new(),
            vouchers,
            spent_vouchers: BTreeSet::new(),
            ledger,
            issued: Vec::new(),
            events: Vec::new(),
        }
    }

    pub fn platform_public_key(&self) -> &BlindPublicKey {
        &self.platform.public
    }

    pub fn puzzle_params(&self) -> &PuzzleParams {
        &self.puzzle_params
    }

    pub fn ledger(&self) -> &ClaimLedger {
        &self.ledger
    }

    pub fn services(&self) -> &BTreeMap<String, ServiceRecord> {
        &self.services
    }

    pub fn issued(&self) -> &[IssuanceRecord] {
        &self.issued
    }

    pub fn events(&self) -> &[FaEvent] {
        &self.events
    }

    fn material(&self) -> Vec<u8> {
        pack_puzzle_material(&self.puzzle_params, &self.trapdoor)
    }

    fn register_sp(
        &mut self,
        spid: String,
        sname: String,
        service_key: [u8; 32],
        public_key: &[u8],
        secret_key: &[u8],
    ) -> Result<bool, (RejectReason, String)> {
        let pk = BlindPublicKey::from_bytes(public_key)
            .map_err(|e| (RejectReason::Malformed, format!("service public key: {e}")))?;
        let sk = BlindSecretKey::from_bytes(secret_key, &pk)
            .map_err(|e| (RejectReason::Malformed, format!("service secret key: {e}")))?;
        if let Some(existing) = self.services.get(&sname) {
            if existing.spid == spid && existing.service_key.0 == service_key && existing.public_key == pk {
                return Ok(false);
            }
            return Err((RejectReason::Conflict, format!("service `{sname}` is already registered with other keys")));
        }
        self.service_keys.insert(sname.clone(), pk.clone());
        self.services.insert(
            sname.clone(),
            ServiceRecord { spid, sname, service_key: ServiceKey(service_key), public_key: pk, secret_key: sk },
        );
        Ok(true)
    }

    fn accept_voucher(&self, payment: &[u8]) -> bool {
        if payment.is_empty() || self.spent_vouchers.contains(payment) {
            return false;
        }
        match &self.vouchers {
            VoucherPolicy::AllowList(set) => set.contains(payment),
            VoucherPolicy::AnyOnce => true,
        }
    }

    fn issue(&mut self, s_type: &str, agnostic: &[u8], specific: &[u8], payment: &[u8]) -> Result<Message, RejectReason> {
        let record = self.services.get(s_type).ok_or(RejectReason::UnknownService)?;
        if !self.accept_voucher(payment) {
            return Err(RejectReason::InvalidPayment);
        }
        let sig1 = blind_sign(&self.platform.public, &self.platform.secret, agnostic).map_err(|_| RejectReason::Malformed)?;
        let sig2 = blind_sign(&record.public_key, &record.secret_key, specific).map_err(|_| RejectReason::Malformed)?;
        let msg = Message::TokenIssue {
            status: 0,
            blind_sig_agnostic: sig1,
            blind_sig_specific: sig2,
            service_key: record.service_key.0,
            service_public_key: record.public_key.to_bytes(),
            puzzle_params: self.puzzle_params.to_bytes(),
            trapdoor: self.trapdoor.to_bytes(),
        };
        self.spent_vouchers.insert(payment.to_vec());
        self.issued.push(IssuanceRecord { seq: self.issued.len() as u64, s_type: s_type.to_owned() });
        Ok(msg)
    }

    fn claim_status(result: &Result<u64, LedgerError>) -> Result<u64, ClaimError> {
        match result {
            Ok(amount) => Ok(*amount),
            Err(LedgerError::Claim(e)) => Err(*e),
            Err(LedgerError::Log(e)) => {
                // A ledger that cannot persist must not pay.
                log::error!("ledger write failed: {e}");
                Err(ClaimError::InvalidSignature)
            }
        }
    }

    fn claim_reply(result: &Result<u64, ClaimError>) -> Message {
        match result {
            Ok(amount) => Message::ClaimResult { status: 0, amount: *amount },
            Err(e) => Message::ClaimResult { status: claim_reason(*e).code(), amount: 0 },
        }
    }
}

pub fn claim_reason(e: ClaimError) -> RejectReason {
    match e {
        ClaimError::InvalidSignature => RejectReason::InvalidSignature,
        ClaimError::AlreadyClaimed => RejectReason::AlreadyClaimed,
        ClaimError::WrongServiceType => RejectReason::WrongServiceType,
    }
}

impl Party for FinancialAuthority {
    fn id(&self) -> PartyId {
        PartyId::Fa
    }

    fn handle(&mut self, from: &PartyId, envelope: Envelope) -> Vec<Outbound> {
        let sid = envelope.session_id;
        match envelope.message {
            Message::SpRegister { spid, sname, service_key, public_key, secret_key } => {
                match self.register_sp(spid, sname.clone(), service_key, &public_key, &secret_key) {
                    Ok(fresh) => {
                        self.events.push(FaEvent::SpRegistered { sname, fresh });
                        vec![Outbound::new(from.clone(), sid, Message::Ack { status: 0, detail: self.material() })]
                    }
                    Err((reason, detail)) => {
                        self.events.push(FaEvent::SpRejected { sname });
                        vec![Outbound::reject(from.clone(), sid, reason, detail)]
                    }
                }
            }
            Message::TokenRequest { s_type, blinded_agnostic, blinded_specific, payment } => {
                match self.issue(&s_type, &blinded_agnostic, &blinded_specific, &payment) {
                    Ok(msg) => {
                        self.events.push(FaEvent::TokenIssued { s_type });
                        vec![Outbound::new(from.clone(), sid, msg)]
                    }
                    Err(reason) => {
                        self.events.push(FaEvent::TokenRefused { s_type: s_type.clone(), reason });
                        vec![Outbound::reject(from.clone(), sid, reason, format!("token request for `{s_type}`"))]
                    }
                }
            }
            Message::ClaimBs { token, .. } => {
                let result = match Token::from_bytes(&token) {
                    Ok(t) => Self::claim_status(&self.ledger.process_bs_claim(&t, &self.platform.public)),
                    Err(_) => Err(ClaimError::InvalidSignature),
                };
                self.events.push(FaEvent::BsClaim { from: from.clone(), result });
                vec![Outbound::new(from.clone(), sid, Self::claim_reply(&result))]
            }
            Message::ClaimEs { s_type, token, .. } => {
                let result = match Token::from_bytes(&token) {
                    Ok(t) => Self::claim_status(&self.ledger.process_es_claim(&s_type, &t, &self.service_keys)),
                    Err(_) => Err(ClaimError::InvalidSignature),
                };
                self.events.push(FaEvent::EsClaim { from: from.clone(), s_type, result });
                vec![Outbound::new(from.clone(), sid, Self::claim_reply(&result))]
            }
            other => super::unexpected("FA", from, sid, &other),
        }
    }
}

/// Returns the key role a service keypair should carry.
pub fn service_role(sname: &str) -> KeyRole {
    KeyRole::Service(sname.to_owned())
}
