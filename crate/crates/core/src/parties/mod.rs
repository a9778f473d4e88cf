//! The five protocol roles as message-driven state machines.
//!
//! A party never touches the network. [`Party::handle`] consumes one inbound
//! envelope and returns the envelopes to send, so the same code runs under
//! the deterministic loopback pump, one thread per party, or TCP.

pub mod bs;
pub mod es;
pub mod fa;
pub mod sp;
pub mod user;

use rand::RngCore;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::puzzle::{PuzzleError, PuzzleParams, PuzzleTrapdoor};
use crate::wire::{Envelope, Message, PartyId, RejectReason, SessionId};

pub use bs::BaseStation;
pub use es::EdgeServer;
pub use fa::FinancialAuthority;
pub use sp::ServiceProvider;
pub use user::User;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outbound {
    pub to: PartyId,
    pub envelope: Envelope,
}

impl Outbound {
    pub fn new(to: PartyId, session_id: SessionId, message: Message) -> Self {
        Self { to, envelope: Envelope::new(session_id, message) }
    }

    pub fn reject(to: PartyId, session_id: SessionId, reason: RejectReason, detail: impl Into<String>) -> Self {
        Self::new(to, session_id, Message::reject(reason, detail))
    }
}

pub trait Party: Send {
    fn id(&self) -> PartyId;

    fn handle(&mut self, from: &PartyId, envelope: Envelope) -> Vec<Outbound>;
}

/// Deterministic per-party RNG derived from a scenario seed and a label.
pub fn party_rng(seed: u64, label: &str) -> ChaCha20Rng {
    use rand::SeedableRng;
    let digest = Sha256::new().chain_update(seed.to_be_bytes()).chain_update(label.as_bytes()).finalize();
    ChaCha20Rng::from_seed(digest.into())
}

pub fn fresh_session_id(rng: &mut impl RngCore) -> SessionId {
    let mut sid = [0u8; 16];
    rng.fill_bytes(&mut sid);
    sid
}

/// Puzzle parameters and trapdoor as carried in an SP registration ack:
/// two u32-length-prefixed fields.
pub fn pack_puzzle_material(params: &PuzzleParams, trapdoor: &PuzzleTrapdoor) -> Vec<u8> {
    let mut out = Vec::new();
    for field in [params.to_bytes(), trapdoor.to_bytes()] {
        out.extend_from_slice(&(field.len() as u32).to_be_bytes());
        out.extend_from_slice(&field);
    }
    out
}

pub fn unpack_puzzle_material(bytes: &[u8]) -> Result<(PuzzleParams, PuzzleTrapdoor), PuzzleError> {
    let mut r = crate::wire::codec::Reader::new(bytes);
    let bad = |_| PuzzleError::WrongLength { expected: 0, actual: bytes.len() };
    let params = r.bytes().map_err(bad)?;
    let trapdoor = r.bytes().map_err(bad)?;
    r.finish().map_err(bad)?;
    Ok((PuzzleParams::from_bytes(&params)?, PuzzleTrapdoor::from_bytes(&trapdoor)?))
}

/// Status byte for a result.
pub fn status_of(result: Result<(), RejectReason>) -> u8 {
    match result {
        Ok(()) => 0,
        Err(r) => r.code(),
    }
}

/// Reply to a message a party has no handler for. Replies, acks and rejects
/// are dropped rather than answered, so two parties can never bounce
/// rejections back and forth.
pub fn unexpected(role: &str, from: &PartyId, session_id: SessionId, message: &Message) -> Vec<Outbound> {
    match message {
        Message::Reject { .. } | Message::Ack { .. } | Message::ClaimResult { .. } => Vec::new(),
        other => vec![Outbound::reject(
            from.clone(),
            session_id,
            RejectReason::Unexpected,
            format!("{role} does not handle {:?}", other.msg_type()),
        )],
    }
}
