//! Service-key encryption of offload requests and responses.
//!
//! AES-256-CBC with PKCS#7 padding, then HMAC-SHA-256 over `iv || ct`
//! (encrypt-then-MAC). Encryption and MAC keys are derived from the 32-byte
//! service key with HKDF-SHA-256. Every failure to open, whether a wrong key
//! or tampering, is reported as the same error.

use aes::cipher::block_padding::Pkcs7;
use aes::cipher::{BlockDecryptMut, BlockEncryptMut, KeyIvInit};
use hkdf::Hkdf;
use hmac::{Hmac, Mac};
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};
use thiserror::Error;

type Aes256CbcEnc = cbc::Encryptor<aes::Aes256>;
type Aes256CbcDec = cbc::Decryptor<aes::Aes256>;
type HmacSha256 = Hmac<Sha256>;

const IV_LEN: usize = 16;
const TAG_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SymError {
    #[error("ciphertext failed authentication")]
    Authentication,
    #[error("malformed request plaintext")]
    MalformedPlaintext,
}

/// A service's symmetric key `k_s`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ServiceKey(pub [u8; 32]);

impl std::fmt::Debug for ServiceKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("ServiceKey(..)")
    }
}

impl ServiceKey {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut k = [0u8; 32];
        rng.fill_bytes(&mut k);
        Self(k)
    }

    /// `SHA-256(k_s)`, the puzzle solution for this service.
    pub fn solution_digest(&self) -> [u8; 32] {
        Sha256::digest(self.0).into()
    }

    fn subkeys(&self) -> ([u8; 32], [u8; 32]) {
        let hk = Hkdf::<Sha256>::new(Some(b"SA2FE-SYM-V01"), &self.0);
        let mut enc = [0u8; 32];
        let mut mac = [0u8; 32];
        hk.expand(b"enc", &mut enc).expect("32 bytes is a valid HKDF length");
        hk.expand(b"mac", &mut mac).expect("32 bytes is a valid HKDF length");
        (enc, mac)
    }
}

fn mac(key: &[u8; 32], iv: &[u8], ct: &[u8]) -> HmacSha256 {
    let mut m = <HmacSha256 as Mac>::new_from_slice(key).expect("HMAC takes any key length");
    m.update(iv);
    m.update(ct);
    m
}

/// Returns `iv || ciphertext || tag`.
pub fn seal<R: RngCore + CryptoRng>(key: &ServiceKey, plaintext: &[u8], rng: &mut R) -> Vec<u8> {
    let (enc, mac_key) = key.subkeys();
    let mut iv = [0u8; IV_LEN];
    rng.fill_bytes(&mut iv);
    let ct = Aes256CbcEnc::new(&enc.into(), &iv.into()).encrypt_padded_vec_mut::<Pkcs7>(plaintext);
    let tag = mac(&mac_key, &iv, &ct).finalize().into_bytes();
    let mut out = Vec::with_capacity(IV_LEN + ct.len() + TAG_LEN);
    out.extend_from_slice(&iv);
    out.extend_from_slice(&ct);
    out.extend_from_slice(&tag);
    out
}

pub fn open(key: &ServiceKey, sealed: &[u8]) -> Result<Vec<u8>, SymError> {
    if sealed.len() < IV_LEN + 16 + TAG_LEN {
        return Err(SymError::Authentication);
    }
    let (enc, mac_key) = key.subkeys();
    let (iv, rest) = sealed.split_at(IV_LEN);
    let (ct, tag) = rest.split_at(rest.len() - TAG_LEN);
    mac(&mac_key, iv, ct).verify_slice(tag).map_err(|_| SymError::Authentication)?;
    let iv: [u8; IV_LEN] = iv.try_into().expect("split at IV_LEN");
    Aes256CbcDec::new(&enc.into(), &iv.into())
        .decrypt_padded_vec_mut::<Pkcs7>(ct)
        .map_err(|_| SymError::Authentication)
}

/// Request plaintext: `len(s_type) || s_type || data`.
pub fn encode_request(s_type: &str, data: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + s_type.len() + data.len());
    out.extend_from_slice(&(s_type.len() as u32).to_be_bytes());
    out.extend_from_slice(s_type.as_bytes());
    out.extend_from_slice(data);
    out
}

pub fn decode_request(plaintext: &[u8]) -> Result<(String, Vec<u8>), SymError> {
    if plaintext.len() < 4 {
        return Err(SymError::MalformedPlaintext);
    }
    let len = u32::from_be_bytes(plaintext[..4].try_into().expect("4 bytes")) as usize;
    let rest = &plaintext[4..];
    if rest.len() < len {
        return Err(SymError::MalformedPlaintext);
    }
    let s_type = std::str::from_utf8(&rest[..len]).map_err(|_| SymError::MalformedPlaintext)?;
    Ok((s_type.to_owned(), rest[len..].to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn seal_open_round_trip() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let k = ServiceKey::generate(&mut rng);
        for len in [0usize, 1, 15, 16, 17, 1000] {
            let pt = vec![0x5a; len];
            assert_eq!(open(&k, &seal(&k, &pt, &mut rng)).unwrap(), pt);
        }
    }

    #[test]
    fn wrong_key_and_tampering_give_the_same_error() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let k = ServiceKey::generate(&mut rng);
        let other = ServiceKey::generate(&mut rng);
        let sealed = seal(&k, b"payload", &mut rng);
        assert_eq!(open(&other, &sealed), Err(SymError::Authentication));
        for i in 0..sealed.len() {
            let mut t = sealed.clone();
            t[i] ^= 1;
            assert_eq!(open(&k, &t), Err(SymError::Authentication));
        }
        assert_eq!(open(&k, &sealed[..10]), Err(SymError::Authentication));
    }

    #[test]
    fn fresh_iv_per_message() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let k = ServiceKey::generate(&mut rng);
        assert_ne!(seal(&k, b"x", &mut rng), seal(&k, b"x", &mut rng));
    }

    #[test]
    fn request_encoding() {
        let pt = encode_request("s1", b"abc");
        assert_eq!(decode_request(&pt).unwrap(), ("s1".to_owned(), b"abc".to_vec()));
        assert_eq!(decode_request(&pt[..5]), Err(SymError::MalformedPlaintext));
    }
}
