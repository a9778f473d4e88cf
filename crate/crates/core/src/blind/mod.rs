//! RSA blind signatures with a full-domain hash.
//!
//! The requester hashes its message to an integer `h < n`, multiplies by
//! `r^e` and sends `m' = h·r^e mod n`. The signer returns `s' = m'^d`, and the
//! requester strips the blinding with `s = s'·r⁻¹`, which is an ordinary RSA
//! signature `h^d` on the hash.
//!
//! Values travel as big-endian byte strings exactly as long as the modulus.

pub mod token;

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::{CryptoRng, RngCore};
use rsa::traits::{PrivateKeyParts, PublicKeyParts};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::puzzle::SecurityLevel;

const FDH_DOMAIN: &[u8] = b"SA2FE-FDH-V01";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BlindError {
    #[error("blinding factor is not invertible modulo n")]
    NonInvertibleFactor,
    #[error("value is not a residue modulo n")]
    OutOfRange,
    #[error("key generation failed: {0}")]
    KeyGeneration(String),
    #[error("malformed key encoding")]
    MalformedKey,
}

/// Whose key this is: the platform-wide key or one service's key.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum KeyRole {
    Platform,
    Service(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BlindPublicKey {
    n: BigUint,
    e: BigUint,
}

#[derive(Clone, PartialEq, Eq)]
pub struct BlindSecretKey {
    d: BigUint,
    p: BigUint,
    q: BigUint,
    dp: BigUint,
    dq: BigUint,
    q_inv: BigUint,
}

impl std::fmt::Debug for BlindSecretKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("BlindSecretKey(..)")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlindKeyPair {
    pub public: BlindPublicKey,
    pub secret: BlindSecretKey,
    pub role: KeyRole,
}

/// A blinding factor `r` together with its inverse mod `n`.
#[derive(Clone, PartialEq, Eq)]
pub struct BlindingFactor {
    r: BigUint,
    r_inv: BigUint,
}

impl std::fmt::Debug for BlindingFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("BlindingFactor(..)")
    }
}

/// Modulus size used for each security level (NIST SP 800-57 equivalents).
pub fn modulus_bits(level: SecurityLevel) -> usize {
    match level {
        SecurityLevel::Bits128 => 3072,
        SecurityLevel::Bits192 => 7680,
        #[cfg(feature = "insecure-test")]
        SecurityLevel::Toy => 12,
    }
}

fn from_dig(v: &rsa::BigUint) -> BigUint {
    BigUint::from_bytes_be(&v.to_bytes_be())
}

fn put_len_prefixed(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(bytes);
}

fn take_len_prefixed<'a>(input: &mut &'a [u8]) -> Option<&'a [u8]> {
    if input.len() < 4 {
        return None;
    }
    let len = u32::from_be_bytes(input[..4].try_into().ok()?) as usize;
    let rest = &input[4..];
    if rest.len() < len {
        return None;
    }
    let (field, tail) = rest.split_at(len);
    *input = tail;
    Some(field)
}

impl BlindPublicKey {
    pub fn modulus(&self) -> &BigUint {
        &self.n
    }

    pub fn exponent(&self) -> &BigUint {
        &self.e
    }

    pub fn modulus_bits(&self) -> u64 {
        self.n.bits()
    }

    /// Length of every blinded message and signature under this key.
    pub fn modulus_len(&self) -> usize {
        self.n.bits().div_ceil(8) as usize
    }

    fn to_fixed(&self, v: &BigUint) -> Vec<u8> {
        let raw = v.to_bytes_be();
        let mut out = vec![0u8; self.modulus_len() - raw.len()];
        out.extend_from_slice(&raw);
        out
    }

    /// Parses a fixed-length residue, rejecting anything `>= n`.
    fn residue(&self, bytes: &[u8]) -> Result<BigUint, BlindError> {
        if bytes.len() != self.modulus_len() {
            return Err(BlindError::OutOfRange);
        }
        let v = BigUint::from_bytes_be(bytes);
        if v >= self.n {
            return Err(BlindError::OutOfRange);
        }
        Ok(v)
    }

    /// `len(n) || n || len(e) || e`
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        put_len_prefixed(&mut out, &self.n.to_bytes_be());
        put_len_prefixed(&mut out, &self.e.to_bytes_be());
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self, BlindError> {
        let n = BigUint::from_bytes_be(take_len_prefixed(&mut bytes).ok_or(BlindError::MalformedKey)?);
        let e = BigUint::from_bytes_be(take_len_prefixed(&mut bytes).ok_or(BlindError::MalformedKey)?);
        if !bytes.is_empty() || n.bits() < 8 || e < BigUint::from(3u8) || e >= n || n.is_even() {
            return Err(BlindError::MalformedKey);
        }
        Ok(Self { n, e })
    }
}

impl BlindSecretKey {
    fn from_primes(p: BigUint, q: BigUint, d: BigUint) -> Result<Self, BlindError> {
        let one = BigUint::one();
        let dp = &d % (&p - &one);
        let dq = &d % (&q - &one);
        let q_inv = q.modinv(&p).ok_or(BlindError::MalformedKey)?;
        Ok(Self { d, p, q, dp, dq, q_inv })
    }

    /// `len(d) || d || len(p) || p || len(q) || q`
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for v in [&self.d, &self.p, &self.q] {
            put_len_prefixed(&mut out, &v.to_bytes_be());
        }
        out
    }

    /// Decodes a secret key and checks that it belongs to `public`.
    pub fn from_bytes(mut bytes: &[u8], public: &BlindPublicKey) -> Result<Self, BlindError> {
        let mut next = || take_len_prefixed(&mut bytes).map(BigUint::from_bytes_be).ok_or(BlindError::MalformedKey);
        let (d, p, q) = (next()?, next()?, next()?);
        if !bytes.is_empty() || &p * &q != public.n || p.is_zero() || q.is_zero() {
            return Err(BlindError::MalformedKey);
        }
        let one = BigUint::one();
        let lambda = (&p - &one).lcm(&(&q - &one));
        if (&d * &public.e) % &lambda != one {
            return Err(BlindError::MalformedKey);
        }
        Self::from_primes(p, q, d)
    }
}

impl BlindKeyPair {
    /// The textbook key `n = 61·53 = 3233, e = 17, d = 2753`.
    #[cfg(feature = "insecure-test")]
    pub fn textbook(role: KeyRole) -> Self {
        let public = BlindPublicKey { n: BigUint::from(3233u32), e: BigUint::from(17u32) };
        let secret = BlindSecretKey::from_primes(BigUint::from(61u32), BigUint::from(53u32), BigUint::from(2753u32))
            .expect("61 and 53 are coprime");
        Self { public, secret, role }
    }

    pub fn from_parts(public: BlindPublicKey, secret: BlindSecretKey, role: KeyRole) -> Self {
        Self { public, secret, role }
    }
}

/// Generates a fresh keypair (`e = 65537`). The toy level yields the textbook
/// key.
pub fn blind_setup<R: RngCore + CryptoRng>(
    role: KeyRole,
    level: SecurityLevel,
    rng: &mut R,
) -> Result<BlindKeyPair, BlindError> {
    #[cfg(feature = "insecure-test")]
    if level == SecurityLevel::Toy {
        return Ok(BlindKeyPair::textbook(role));
    }
    let key = rsa::RsaPrivateKey::new(rng, modulus_bits(level)).map_err(|e| BlindError::KeyGeneration(e.to_string()))?;
    let primes = key.primes();
    if primes.len() != 2 {
        return Err(BlindError::KeyGeneration("expected a two-prime key".into()));
    }
    let public = BlindPublicKey { n: from_dig(key.n()), e: from_dig(key.e()) };
    let secret = BlindSecretKey::from_primes(from_dig(&primes[0]), from_dig(&primes[1]), from_dig(key.d()))?;
    Ok(BlindKeyPair { public, secret, role })
}

/// Full-domain hash of `message` into `[0, 2^(bits(n)-1))`, via MGF1-SHA-256
/// over the domain tag, the modulus and the message.
pub fn fdh(public: &BlindPublicKey, message: &[u8]) -> BigUint {
    let out_bits = public.n.bits() - 1;
    let out_len = out_bits.div_ceil(8) as usize;
    let seed = Sha256::new()
        .chain_update(FDH_DOMAIN)
        .chain_update(public.n.to_bytes_be())
        .chain_update(message)
        .finalize();
    let mut out = Vec::with_capacity(out_len + 32);
    let mut counter = 0u32;
    while out.len() < out_len {
        out.extend_from_slice(&Sha256::new().chain_update(seed).chain_update(counter.to_be_bytes()).finalize());
        counter += 1;
    }
    out.truncate(out_len);
    let excess = out_len as u64 * 8 - out_bits;
    out[0] &= 0xff >> excess;
    BigUint::from_bytes_be(&out)
}

impl BlindingFactor {
    pub fn new(public: &BlindPublicKey, r: BigUint) -> Result<Self, BlindError> {
        if r.is_zero() || r >= public.n {
            return Err(BlindError::NonInvertibleFactor);
        }
        let r_inv = r.modinv(&public.n).ok_or(BlindError::NonInvertibleFactor)?;
        Ok(Self { r, r_inv })
    }

    /// Uniform unit in `[2, n)`.
    pub fn random<R: RngCore + CryptoRng>(public: &BlindPublicKey, rng: &mut R) -> Self {
        loop {
            let r = rng.gen_biguint_range(&BigUint::from(2u8), &public.n);
            if let Ok(f) = Self::new(public, r) {
                return f;
            }
        }
    }
}

/// `h·r^e mod n` for an already hashed representative `h`.
pub fn blind_hashed(public: &BlindPublicKey, h: &BigUint, r: &BlindingFactor) -> Result<Vec<u8>, BlindError> {
    if h >= &public.n {
        return Err(BlindError::OutOfRange);
    }
    let blinded = (h * r.r.modpow(&public.e, &public.n)) % &public.n;
    Ok(public.to_fixed(&blinded))
}

pub fn blind_msg(public: &BlindPublicKey, message: &[u8], r: &BlindingFactor) -> Result<Vec<u8>, BlindError> {
    blind_hashed(public, &fdh(public, message), r)
}

/// `m'^d mod n` via CRT, checked against the public exponent.
pub fn blind_sign(public: &BlindPublicKey, secret: &BlindSecretKey, blinded: &[u8]) -> Result<Vec<u8>, BlindError> {
    let c = public.residue(blinded)?;
    let s1 = c.modpow(&secret.dp, &secret.p);
    let s2 = c.modpow(&secret.dq, &secret.q);
    let diff = (&s1 + &secret.p - (&s2 % &secret.p)) % &secret.p;
    let h = (&secret.q_inv * diff) % &secret.p;
    let mut s = s2 + h * &secret.q;
    if s.modpow(&public.e, &public.n) != c {
        // A CRT fault would leak a factor of n; fall back to the plain exponent.
        s = c.modpow(&secret.d, &public.n);
    }
    Ok(public.to_fixed(&s))
}

pub fn unblind_sign(public: &BlindPublicKey, blinded_sig: &[u8], r: &BlindingFactor) -> Result<Vec<u8>, BlindError> {
    let s = public.residue(blinded_sig)?;
    Ok(public.to_fixed(&((s * &r.r_inv) % &public.n)))
}

/// Checks `s^e ≡ FDH(m) (mod n)`. Malformed signatures are simply invalid.
pub fn blind_verify(public: &BlindPublicKey, message: &[u8], signature: &[u8]) -> bool {
    verify_hashed(public, &fdh(public, message), signature)
}

pub fn verify_hashed(public: &BlindPublicKey, h: &BigUint, signature: &[u8]) -> bool {
    match public.residue(signature) {
        Ok(s) => &s.modpow(&public.e, &public.n) == h,
        Err(_) => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn textbook_vector() {
        let kp = BlindKeyPair::textbook(KeyRole::Platform);
        let r = BlindingFactor::new(&kp.public, BigUint::from(7u8)).unwrap();
        let h = BigUint::from(65u8);
        let blinded = blind_hashed(&kp.public, &h, &r).unwrap();
        assert_eq!(BigUint::from_bytes_be(&blinded), BigUint::from(2034u32));
        let s_blind = blind_sign(&kp.public, &kp.secret, &blinded).unwrap();
        assert_eq!(BigUint::from_bytes_be(&s_blind), BigUint::from(883u32));
        let s = unblind_sign(&kp.public, &s_blind, &r).unwrap();
        assert_eq!(BigUint::from_bytes_be(&s), BigUint::from(588u32));
        assert!(verify_hashed(&kp.public, &h, &s));
    }

    #[test]
    fn non_invertible_factor_is_rejected() {
        let kp = BlindKeyPair::textbook(KeyRole::Platform);
        assert_eq!(BlindingFactor::new(&kp.public, BigUint::from(61u8)), Err(BlindError::NonInvertibleFactor));
        assert_eq!(BlindingFactor::new(&kp.public, BigUint::zero()), Err(BlindError::NonInvertibleFactor));
    }

    #[test]
    fn fdh_stays_below_modulus() {
        let kp = BlindKeyPair::textbook(KeyRole::Platform);
        for i in 0..500u32 {
            assert!(fdh(&kp.public, &i.to_be_bytes()).bits() <= 11);
        }
    }

    #[test]
    fn real_key_round_trip_and_encoding() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let kp = blind_setup(KeyRole::Service("s1".into()), SecurityLevel::Bits128, &mut rng).unwrap();
        assert_eq!(kp.public.modulus_bits(), 3072);
        let r = BlindingFactor::random(&kp.public, &mut rng);
        let blinded = blind_msg(&kp.public, b"hello", &r).unwrap();
        let s = unblind_sign(&kp.public, &blind_sign(&kp.public, &kp.secret, &blinded).unwrap(), &r).unwrap();
        assert!(blind_verify(&kp.public, b"hello", &s));
        assert!(!blind_verify(&kp.public, b"hellp", &s));

        let pk = BlindPublicKey::from_bytes(&kp.public.to_bytes()).unwrap();
        assert_eq!(pk, kp.public);
        let sk = BlindSecretKey::from_bytes(&kp.secret.to_bytes(), &pk).unwrap();
        assert_eq!(sk, kp.secret);
        let other = BlindKeyPair::textbook(KeyRole::Platform);
        assert_eq!(BlindSecretKey::from_bytes(&other.secret.to_bytes(), &pk), Err(BlindError::MalformedKey));
    }
}
