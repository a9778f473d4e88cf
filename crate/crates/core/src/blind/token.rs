//! Dual-part offloading tokens.
//!
//! A token carries two blind signatures: one under the platform key, which
//! says "paid", and one under a service key, which says "for this service".
//! The two halves are requested, signed and verified independently.

use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{blind_msg, blind_verify, unblind_sign, BlindError, BlindPublicKey, BlindingFactor};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TokenError {
    #[error("platform half of the token does not verify")]
    AgnosticHalfInvalid,
    #[error("service half of the token does not verify")]
    ServiceHalfInvalid,
    #[error("neither half of the token verifies")]
    BothHalvesInvalid,
    #[error("malformed token encoding")]
    Malformed,
    #[error(transparent)]
    Blind(#[from] BlindError),
}

/// The requester's private state between request and finalization.
#[derive(Debug, Clone)]
pub struct TokenSecret {
    pub m1: [u8; 32],
    pub m2: [u8; 32],
    r1: BlindingFactor,
    r2: BlindingFactor,
}

/// Blinded messages sent to the signer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlindedPair {
    pub agnostic: Vec<u8>,
    pub specific: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    pub m1: [u8; 32],
    pub sig1: Vec<u8>,
    pub m2: [u8; 32],
    pub sig2: Vec<u8>,
}

/// `SHA-256(m1 || m2)`; identifies a token for spending and claiming.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TokenId(pub [u8; 32]);

impl TokenId {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl std::fmt::Display for TokenId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// Draws `m1 != m2` and independent blinding factors, and blinds each
/// message under its own key.
pub fn token_request_build<R: RngCore + CryptoRng>(
    pk_p: &BlindPublicKey,
    pk_s: &BlindPublicKey,
    rng: &mut R,
) -> Result<(TokenSecret, BlindedPair), TokenError> {
    let mut m1 = [0u8; 32];
    let mut m2 = [0u8; 32];
    rng.fill_bytes(&mut m1);
    loop {
        rng.fill_bytes(&mut m2);
        if m2 != m1 {
            break;
        }
    }
    let r1 = BlindingFactor::random(pk_p, rng);
    let r2 = BlindingFactor::random(pk_s, rng);
    let pair = BlindedPair { agnostic: blind_msg(pk_p, &m1, &r1)?, specific: blind_msg(pk_s, &m2, &r2)? };
    Ok((TokenSecret { m1, m2, r1, r2 }, pair))
}

/// Unblinds both signatures and verifies each half under its key.
pub fn token_finalize(
    secret: &TokenSecret,
    blind_sig1: &[u8],
    blind_sig2: &[u8],
    pk_p: &BlindPublicKey,
    pk_s: &BlindPublicKey,
) -> Result<Token, TokenError> {
    let sig1 = unblind_sign(pk_p, blind_sig1, &secret.r1).ok();
    let sig2 = unblind_sign(pk_s, blind_sig2, &secret.r2).ok();
    let ok1 = sig1.as_ref().is_some_and(|s| blind_verify(pk_p, &secret.m1, s));
    let ok2 = sig2.as_ref().is_some_and(|s| blind_verify(pk_s, &secret.m2, s));
    match (ok1, ok2) {
        (true, true) => Ok(Token {
            m1: secret.m1,
            sig1: sig1.expect("verified"),
            m2: secret.m2,
            sig2: sig2.expect("verified"),
        }),
        (false, true) => Err(TokenError::AgnosticHalfInvalid),
        (true, false) => Err(TokenError::ServiceHalfInvalid),
        (false, false) => Err(TokenError::BothHalvesInvalid),
    }
}

impl Token {
    pub fn id(&self) -> TokenId {
        TokenId(Sha256::new().chain_update(self.m1).chain_update(self.m2).finalize().into())
    }

    /// Platform half only; needs no service key.
    pub fn verify_agnostic(&self, pk_p: &BlindPublicKey) -> bool {
        blind_verify(pk_p, &self.m1, &self.sig1)
    }

    /// Service half only; needs no platform key.
    pub fn verify_service(&self, pk_s: &BlindPublicKey) -> bool {
        blind_verify(pk_s, &self.m2, &self.sig2)
    }

    /// Four u32-length-prefixed fields: `m1, sig1, m2, sig2`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 64 + self.sig1.len() + self.sig2.len());
        for field in [&self.m1[..], &self.sig1, &self.m2[..], &self.sig2] {
            out.extend_from_slice(&(field.len() as u32).to_be_bytes());
            out.extend_from_slice(field);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TokenError> {
        let mut rest = bytes;
        let mut fields = Vec::with_capacity(4);
        for _ in 0..4 {
            fields.push(super::take_len_prefixed(&mut rest).ok_or(TokenError::Malformed)?.to_vec());
        }
        if !rest.is_empty() {
            return Err(TokenError::Malformed);
        }
        let sig2 = fields.pop().expect("four fields");
        let m2 = fields.pop().expect("four fields");
        let sig1 = fields.pop().expect("four fields");
        let m1 = fields.pop().expect("four fields");
        Ok(Token {
            m1: m1.try_into().map_err(|_| TokenError::Malformed)?,
            sig1,
            m2: m2.try_into().map_err(|_| TokenError::Malformed)?,
            sig2,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blind::{blind_setup, blind_sign, KeyRole};
    use crate::puzzle::SecurityLevel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn honest_issue_and_encoding_round_trip() {
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let p = blind_setup(KeyRole::Platform, SecurityLevel::Bits128, &mut rng).unwrap();
        let s = blind_setup(KeyRole::Service("s1".into()), SecurityLevel::Bits128, &mut rng).unwrap();
        let (secret, pair) = token_request_build(&p.public, &s.public, &mut rng).unwrap();
        let sig1 = blind_sign(&p.public, &p.secret, &pair.agnostic).unwrap();
        let sig2 = blind_sign(&s.public, &s.secret, &pair.specific).unwrap();
        let token = token_finalize(&secret, &sig1, &sig2, &p.public, &s.public).unwrap();
        assert!(token.verify_agnostic(&p.public));
        assert!(token.verify_service(&s.public));
        assert!(!token.verify_service(&p.public));
        assert_eq!(Token::from_bytes(&token.to_bytes()).unwrap(), token);
        let mut truncated = token.to_bytes();
        truncated.pop();
        assert_eq!(Token::from_bytes(&truncated), Err(TokenError::Malformed));
    }
}
