//! Protocol messages, their byte format, and transports.
//!
//! A frame is
//!
//! ```text
//! "SA2F" | version (1) | msg_type (1) | session_id (16) | payload_len (u32 BE) | payload
//! ```
//!
//! Payload fields appear in a fixed order per message type. Integers are big
//! endian, byte strings and strings carry a u32 length prefix, lists a u32
//! item count.

pub mod codec;
pub mod tcp;
pub mod transport;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use self::codec::{Reader, Writer};

pub const MAGIC: [u8; 4] = *b"SA2F";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 4 + 1 + 1 + 16 + 4;
pub const MAX_PAYLOAD: usize = 16 * 1024 * 1024;

pub type SessionId = [u8; 16];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("frame truncated")]
    Truncated,
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported protocol version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown message type {0}")]
    UnknownMessageType(u8),
    #[error("payload of {0} bytes exceeds the 16 MiB limit")]
    PayloadTooLarge(usize),
    #[error("payload length field says {declared}, frame carries {actual}")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("trailing bytes after the last field")]
    TrailingBytes,
    #[error("string field is not valid UTF-8")]
    InvalidUtf8,
    #[error("transport: {0}")]
    Io(String),
}

impl From<std::io::Error> for WireError {
    fn from(e: std::io::Error) -> Self {
        WireError::Io(e.to_string())
    }
}

/// Protocol participant address.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PartyId {
    Fa,
    Bs,
    Sp(String),
    Es(String),
    User(u32),
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartyId::Fa => f.write_str("fa"),
            PartyId::Bs => f.write_str("bs"),
            PartyId::Sp(name) => write!(f, "sp:{name}"),
            PartyId::Es(name) => write!(f, "es:{name}"),
            PartyId::User(n) => write!(f, "user:{n}"),
        }
    }
}

impl FromStr for PartyId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            None if s == "fa" => Ok(PartyId::Fa),
            None if s == "bs" => Ok(PartyId::Bs),
            Some(("sp", name)) if !name.is_empty() => Ok(PartyId::Sp(name.to_owned())),
            Some(("es", name)) if !name.is_empty() => Ok(PartyId::Es(name.to_owned())),
            Some(("user", n)) => n.parse().map(PartyId::User).map_err(|_| format!("bad user number in `{s}`")),
            _ => Err(format!("unknown party `{s}` (expected fa, bs, sp:NAME, es:NAME or user:N)")),
        }
    }
}

impl TryFrom<String> for PartyId {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<PartyId> for String {
    fn from(p: PartyId) -> String {
        p.to_string()
    }
}

/// Reason codes carried by `Reject`, `Ack` and `ClaimResult`. Zero means
/// success wherever a status byte is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    InvalidToken = 1,
    DoubleSpend = 2,
    UnknownPuzzle = 3,
    PuzzleReplay = 4,
    StaleList = 5,
    NoProviders = 6,
    WrongService = 7,
    BadCiphertext = 8,
    InvalidPayment = 9,
    UnknownService = 10,
    NotEligible = 11,
    Conflict = 12,
    Unexpected = 13,
    InvalidSignature = 14,
    AlreadyClaimed = 15,
    WrongServiceType = 16,
    UnknownSession = 17,
    Malformed = 18,
}

impl RejectReason {
    pub const ALL: [RejectReason; 18] = [
        RejectReason::InvalidToken,
        RejectReason::DoubleSpend,
        RejectReason::UnknownPuzzle,
        RejectReason::PuzzleReplay,
        RejectReason::StaleList,
        RejectReason::NoProviders,
        RejectReason::WrongService,
        RejectReason::BadCiphertext,
        RejectReason::InvalidPayment,
        RejectReason::UnknownService,
        RejectReason::NotEligible,
        RejectReason::Conflict,
        RejectReason::Unexpected,
        RejectReason::InvalidSignature,
        RejectReason::AlreadyClaimed,
        RejectReason::WrongServiceType,
        RejectReason::UnknownSession,
        RejectReason::Malformed,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.code() == code)
    }

    /// Decodes a status byte: `Ok(())` for zero.
    pub fn from_status(status: u8) -> Result<(), Option<Self>> {
        if status == 0 {
            Ok(())
        } else {
            Err(Self::from_code(status))
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_owned));
        f.write_str(s.as_deref().unwrap_or("unknown"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MessageType {
    SpRegister = 1,
    EsRegisterRequest = 2,
    EsCredentials = 3,
    EsPuzzleRegister = 4,
    TokenRequest = 5,
    TokenIssue = 6,
    OffloadInit = 7,
    PuzzleList = 8,
    OffloadRequest = 9,
    UserAbort = 10,
    ForwardToEs = 11,
    EsResponse = 12,
    ResponseToUser = 13,
    ClaimBs = 14,
    ClaimEs = 15,
    ClaimResult = 16,
    Ack = 17,
    Reject = 18,
}

impl MessageType {
    pub const ALL: [MessageType; 18] = [
        MessageType::SpRegister,
        MessageType::EsRegisterRequest,
        MessageType::EsCredentials,
        MessageType::EsPuzzleRegister,
        MessageType::TokenRequest,
        MessageType::TokenIssue,
        MessageType::OffloadInit,
        MessageType::PuzzleList,
        MessageType::OffloadRequest,
        MessageType::UserAbort,
        MessageType::ForwardToEs,
        MessageType::EsResponse,
        MessageType::ResponseToUser,
        MessageType::ClaimBs,
        MessageType::ClaimEs,
        MessageType::ClaimResult,
        MessageType::Ack,
        MessageType::Reject,
    ];

    pub fn from_code(code: u8) -> Result<Self, WireError> {
        Self::ALL.into_iter().find(|t| *t as u8 == code).ok_or(WireError::UnknownMessageType(code))
    }
}

/// Every protocol message. Tokens, keys and puzzles travel in their own
/// canonical encodings and are parsed by the receiving party, so a
/// malformed token is a protocol-level rejection rather than a framing error.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    /// SP → FA: service key and service signing keypair.
    SpRegister { spid: String, sname: String, service_key: [u8; 32], public_key: Vec<u8>, secret_key: Vec<u8> },
    /// ES → SP.
    EsRegisterRequest { esid: String, reg_info: Vec<u8>, s_type: String },
    /// SP → ES, on approval.
    EsCredentials {
        status: u8,
        s_type: String,
        service_key: [u8; 32],
        public_key: Vec<u8>,
        workload: String,
        puzzle_params: Vec<u8>,
        trapdoor: Vec<u8>,
    },
    /// ES → BS: one puzzle per capability slot.
    EsPuzzleRegister { esid: String, slot: u32, puzzle: Vec<u8> },
    /// User → FA.
    TokenRequest { s_type: String, blinded_agnostic: Vec<u8>, blinded_specific: Vec<u8>, payment: Vec<u8> },
    /// FA → User.
    TokenIssue {
        status: u8,
        blind_sig_agnostic: Vec<u8>,
        blind_sig_specific: Vec<u8>,
        service_key: [u8; 32],
        service_public_key: Vec<u8>,
        puzzle_params: Vec<u8>,
        trapdoor: Vec<u8>,
    },
    /// User → BS.
    OffloadInit { token: Vec<u8> },
    /// BS → User.
    PuzzleList { version: u64, puzzles: Vec<Vec<u8>> },
    /// User → BS.
    OffloadRequest { token: Vec<u8>, puzzle: Vec<u8>, ciphertext: Vec<u8> },
    /// User → BS: no puzzle in the list matched.
    UserAbort,
    /// BS → ES.
    ForwardToEs { token: Vec<u8>, ciphertext: Vec<u8> },
    /// ES → BS.
    EsResponse { ciphertext: Vec<u8> },
    /// BS → User.
    ResponseToUser { ciphertext: Vec<u8> },
    /// BS → FA.
    ClaimBs { bsid: String, token: Vec<u8> },
    /// ES → FA.
    ClaimEs { esid: String, s_type: String, token: Vec<u8> },
    /// FA → BS/ES.
    ClaimResult { status: u8, amount: u64 },
    Ack { status: u8, detail: Vec<u8> },
    Reject { reason: u8, detail: String },
}

impl Message {
    pub fn msg_type(&self) -> MessageType {
        match self {
            Message::SpRegister { .. } => MessageType::SpRegister,
            Message::EsRegisterRequest { .. } => MessageType::EsRegisterRequest,
            Message::EsCredentials { .. } => MessageType::EsCredentials,
            Message::EsPuzzleRegister { .. } => MessageType::EsPuzzleRegister,
            Message::TokenRequest { .. } => MessageType::TokenRequest,
            Message::TokenIssue { .. } => MessageType::TokenIssue,
            Message::OffloadInit { .. } => MessageType::OffloadInit,
            Message::PuzzleList { .. } => MessageType::PuzzleList,
            Message::OffloadRequest { .. } => MessageType::OffloadRequest,
            Message::UserAbort => MessageType::UserAbort,
            Message::ForwardToEs { .. } => MessageType::ForwardToEs,
            Message::EsResponse { .. } => MessageType::EsResponse,
            Message::ResponseToUser { .. } => MessageType::ResponseToUser,
            Message::ClaimBs { .. } => MessageType::ClaimBs,
            Message::ClaimEs { .. } => MessageType::ClaimEs,
            Message::ClaimResult { .. } => MessageType::ClaimResult,
            Message::Ack { .. } => MessageType::Ack,
            Message::Reject { .. } => MessageType::Reject,
        }
    }

    pub fn reject(reason: RejectReason, detail: impl Into<String>) -> Self {
        Message::Reject { reason: reason.code(), detail: detail.into() }
    }

    /// The sender a message names about itself, if any. Used by the TCP
    /// backend to address replies on inbound connections.
    pub fn claimed_sender(&self) -> Option<PartyId> {
        match self {
            Message::SpRegister { spid, .. } => Some(PartyId::Sp(spid.clone())),
            Message::EsRegisterRequest { esid, .. }
            | Message::EsPuzzleRegister { esid, .. }
            | Message::ClaimEs { esid, .. } => Some(PartyId::Es(esid.clone())),
            Message::ClaimBs { .. } | Message::ForwardToEs { .. } => Some(PartyId::Bs),
            _ => None,
        }
    }

    pub fn encode_payload(&self) -> Vec<u8> {
        let mut w = Writer::new();
        match self {
            Message::SpRegister { spid, sname, service_key, public_key, secret_key } => {
                w.str(spid).str(sname).bytes(service_key).bytes(public_key).bytes(secret_key);
            }
            Message::EsRegisterRequest { esid, reg_info, s_type } => {
                w.str(esid).bytes(reg_info).str(s_type);
            }
            Message::EsCredentials { status, s_type, service_key, public_key, workload, puzzle_params, trapdoor } => {
                w.u8(*status)
                    .str(s_type)
                    .bytes(service_key)
                    .bytes(public_key)
                    .str(workload)
                    .bytes(puzzle_params)
                    .bytes(trapdoor);
            }
            Message::EsPuzzleRegister { esid, slot, puzzle } => {
                w.str(esid).u32(*slot).bytes(puzzle);
            }
            Message::TokenRequest { s_type, blinded_agnostic, blinded_specific, payment } => {
                w.str(s_type).bytes(blinded_agnostic).bytes(blinded_specific).bytes(payment);
            }
            Message::TokenIssue {
                status,
                blind_sig_agnostic,
                blind_sig_specific,
                service_key,
                service_public_key,
                puzzle_params,
                trapdoor,
            } => {
                w.u8(*status)
                    .bytes(blind_sig_agnostic)
                    .bytes(blind_sig_specific)
                    .bytes(service_key)
                    .bytes(service_public_key)
                    .bytes(puzzle_params)
                    .bytes(trapdoor);
            }
            Message::OffloadInit { token } => {
                w.bytes(token);
            }
            Message::PuzzleList { version, puzzles } => {
                w.u64(*version).list(puzzles);
            }
            Message::OffloadRequest { token, puzzle, ciphertext } => {
                w.bytes(token).bytes(puzzle).bytes(ciphertext);
            }
            Message::UserAbort => {}
            Message::ForwardToEs { token, ciphertext } => {
                w.bytes(token).bytes(ciphertext);
            }
            Message::EsResponse { ciphertext } | Message::ResponseToUser { ciphertext } => {
                w.bytes(ciphertext);
            }
            Message::ClaimBs { bsid, token } => {
                w.str(bsid).bytes(token);
            }
            Message::ClaimEs { esid, s_type, token } => {
                w.str(esid).str(s_type).bytes(token);
            }
            Message::ClaimResult { status, amount } => {
                w.u8(*status).u64(*amount);
            }
            Message::Ack { status, detail } => {
                w.u8(*status).bytes(detail);
            }
            Message::Reject { reason, detail } => {
                w.u8(*reason).str(detail);
            }
        }
        w.finish()
    }

    pub fn decode_payload(msg_type: MessageType, payload: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(payload);
        let key = |r: &mut Reader| -> Result<[u8; 32], WireError> {
            let len = r.u32()?;
            if len != 32 {
                return Err(WireError::LengthMismatch { declared: len as usize, actual: 32 });
            }
            r.fixed::<32>()
        };
        let msg = match msg_type {
            MessageType::SpRegister => Message::SpRegister {
                spid: r.string()?,
                sname: r.string()?,
                service_key: key(&mut r)?,
                public_key: r.bytes()?,
                secret_key: r.bytes()?,
            },
            MessageType::EsRegisterRequest => {
                Message::EsRegisterRequest { esid: r.string()?, reg_info: r.bytes()?, s_type: r.string()? }
            }
            MessageType::EsCredentials => Message::EsCredentials {
                status: r.u8()?,
                s_type: r.string()?,
                service_key: key(&mut r)?,
                public_key: r.bytes()?,
                workload: r.string()?,
                puzzle_params: r.bytes()?,
                trapdoor: r.bytes()?,
            },
            MessageType::EsPuzzleRegister => {
                Message::EsPuzzleRegister { esid: r.string()?, slot: r.u32()?, puzzle: r.bytes()? }
            }
            MessageType::TokenRequest => Message::TokenRequest {
                s_type: r.string()?,
                blinded_agnostic: r.bytes()?,
                blinded_specific: r.bytes()?,
                payment: r.bytes()?,
            },
            MessageType::TokenIssue => Message::TokenIssue {
                status: r.u8()?,
                blind_sig_agnostic: r.bytes()?,
                blind_sig_specific: r.bytes()?,
                service_key: key(&mut r)?,
                service_public_key: r.bytes()?,
                puzzle_params: r.bytes()?,
                trapdoor: r.bytes()?,
            },
            MessageType::OffloadInit => Message::OffloadInit { token: r.bytes()? },
            MessageType::PuzzleList => Message::PuzzleList { version: r.u64()?, puzzles: r.list()? },
            MessageType::OffloadRequest => {
                Message::OffloadRequest { token: r.bytes()?, puzzle: r.bytes()?, ciphertext: r.bytes()? }
            }
            MessageType::UserAbort => Message::UserAbort,
            MessageType::ForwardToEs => Message::ForwardToEs { token: r.bytes()?, ciphertext: r.bytes()? },
            MessageType::EsResponse => Message::EsResponse { ciphertext: r.bytes()? },
            MessageType::ResponseToUser => Message::ResponseToUser { ciphertext: r.bytes()? },
            MessageType::ClaimBs => Message::ClaimBs { bsid: r.string()?, token: r.bytes()? },
            MessageType::ClaimEs => Message::ClaimEs { esid: r.string()?, s_type: r.string()?, token: r.bytes()? },
            MessageType::ClaimResult => Message::ClaimResult { status: r.u8()?, amount: r.u64()? },
            MessageType::Ack => Message::Ack { status: r.u8()?, detail: r.bytes()? },
            MessageType::Reject => Message::Reject { reason: r.u8()?, detail: r.string()? },
        };
        r.finish()?;
        Ok(msg)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub session_id: SessionId,
    pub message: Message,
}

/// Parsed fixed-size frame header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameHeader {
    pub msg_type: MessageType,
    pub session_id: SessionId,
    pub payload_len: usize,
}

impl FrameHeader {
    pub fn parse(bytes: &[u8; HEADER_LEN]) -> Result<Self, WireError> {
        if bytes[..4] != MAGIC {
            return Err(WireError::BadMagic);
        }
        if bytes[4] != VERSION {
            return Err(WireError::UnsupportedVersion(bytes[4]));
        }
        let msg_type = MessageType::from_code(bytes[5])?;
        let session_id = bytes[6..22].try_into().expect("16 bytes");
        let payload_len = u32::from_be_bytes(bytes[22..26].try_into().expect("4 bytes")) as usize;
        if payload_len > MAX_PAYLOAD {
            return Err(WireError::PayloadTooLarge(payload_len));
        }
        Ok(Self { msg_type, session_id, payload_len })
    }
}

impl Envelope {
    pub fn new(session_id: SessionId, message: Message) -> Self {
        Self { session_id, message }
    }

    pub fn encode(&self) -> Vec<u8> {
        let payload = self.message.encode_payload();
        let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.message.msg_type() as u8);
        out.extend_from_slice(&self.session_id);
        out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&payload);
        out
    }

    /// Decodes exactly one frame. Never panics on arbitrary input.
    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        if bytes.len() < HEADER_LEN {
            // Report a wrong magic as such even on short input.
            if bytes.len() >= 4 && bytes[..4] != MAGIC {
                return Err(WireError::BadMagic);
            }
            return Err(WireError::Truncated);
        }
        let header = FrameHeader::parse(bytes[..HEADER_LEN].try_into().expect("header length"))?;
        let payload = &bytes[HEADER_LEN..];
        if payload.len() != header.payload_len {
            return Err(WireError::LengthMismatch { declared: header.payload_len, actual: payload.len() });
        }
        Self::from_parts(&header, payload)
    }

    pub fn from_parts(header: &FrameHeader, payload: &[u8]) -> Result<Self, WireError> {
        Ok(Self { session_id: header.session_id, message: Message::decode_payload(header.msg_type, payload)? })
    }
}
