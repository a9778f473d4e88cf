//! Small Schnorr groups (order-`Q` subgroups of `Z_P^*`) for golden vectors
//! and brute-force oracle comparisons. Offers no security whatsoever.

use rand::{CryptoRng, Rng, RngCore};
use sha2::{Digest, Sha256};

use super::group::{FieldScalar, HashToGroup, PairingEngine, PrimeOrderGroup};

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((u128::from(a) * u128::from(b)) % u128::from(m)) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Element of `Z_Q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ToyScalar<const Q: u64>(u64);

impl<const Q: u64> ToyScalar<Q> {
    pub fn new(v: u64) -> Self {
        Self(v % Q)
    }

    pub fn value(&self) -> u64 {
        self.0
    }
}

impl<const Q: u64> FieldScalar for ToyScalar<Q> {
    const ENCODED_LEN: usize = 8;

    fn zero() -> Self {
        Self(0)
    }
    fn one() -> Self {
        Self(1 % Q)
    }
    fn is_zero(&self) -> bool {
        self.0 == 0
    }
    fn mul(&self, other: &Self) -> Self {
        Self(mul_mod(self.0, other.0, Q))
    }
    fn add(&self, other: &Self) -> Self {
        Self(((u128::from(self.0) + u128::from(other.0)) % u128::from(Q)) as u64)
    }
    fn invert(&self) -> Option<Self> {
        // Q is prime, so Fermat.
        (self.0 != 0).then(|| Self(pow_mod(self.0, Q - 2, Q)))
    }
    fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        Self(rng.gen_range(0..Q))
    }
    fn from_u64(v: u64) -> Self {
        Self(v % Q)
    }
    fn to_bytes(&self) -> Vec<u8> {
        self.0.to_be_bytes().to_vec()
    }
    fn from_bytes(bytes: &[u8]) -> Option<Self> {
        let v = u64::from_be_bytes(bytes.try_into().ok()?);
        (v < Q).then_some(Self(v))
    }
}

/// The order-`Q` subgroup of `Z_P^*` generated by `G`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SchnorrGroup<const P: u64, const Q: u64, const G: u64>(u64);

impl<const P: u64, const Q: u64, const G: u64> SchnorrGroup<P, Q, G> {
    /// Wraps a residue, checking subgroup membership.
    pub fn from_residue(v: u64) -> Option<Self> {
        (v != 0 && v < P && pow_mod(v, Q, P) == 1).then_some(Self(v))
    }

    pub fn residue(&self) -> u64 {
        self.0
    }

    /// Brute-force discrete logarithm to base `G`.
    pub fn discrete_log(&self) -> u64 {
        let mut acc = 1;
        for k in 0..Q {
            if acc == self.0 {
                return k;
            }
            acc = mul_mod(acc, G, P);
        }
        unreachable!("subgroup elements always have a logarithm")
    }

    /// All non-identity elements, in generator-power order.
    pub fn non_identity_elements() -> Vec<Self> {
        (1..Q).map(|k| Self(pow_mod(G, k, P))).collect()
    }
}

impl<const P: u64, const Q: u64, const G: u64> PrimeOrderGroup for SchnorrGroup<P, Q, G> {
    type Scalar = ToyScalar<Q>;
    const ENCODED_LEN: usize = 8;

    fn generator() -> Self {
        Self(G)
    }
    fn identity() -> Self {
        Self(1)
    }
    fn is_identity(&self) -> bool {
        self.0 == 1
    }
    fn combine(&self, other: &Self) -> Self {
        Self(mul_mod(self.0, other.0, P))
    }
    fn inverse(&self) -> Self {
        Self(pow_mod(self.0, P - 2, P))
    }
    fn pow(&self, exponent: &ToyScalar<Q>) -> Self {
        Self(pow_mod(self.0, exponent.0, P))
    }
    fn to_bytes(&self) -> Vec<u8> {
        self.0.to_be_bytes().to_vec()
    }
    fn from_bytes(bytes: &[u8]) -> Option<Self> {
        Self::from_residue(u64::from_be_bytes(bytes.try_into().ok()?))
    }
}

impl<const P: u64, const Q: u64, const G: u64> HashToGroup for SchnorrGroup<P, Q, G> {
    /// Rehash-and-check: squares of nonzero residues land in the subgroup of
    /// quadratic residues, which is the order-`Q` subgroup when `P = 2Q + 1`.
    fn hash_to_group(digest: &[u8; 32]) -> Self {
        for counter in 0u32.. {
            let h = Sha256::new()
                .chain_update(b"SA2FE-TOY-H2G")
                .chain_update(digest)
                .chain_update(counter.to_be_bytes())
                .finalize();
            let v = u64::from_be_bytes(h[..8].try_into().expect("8 bytes")) % P;
            if v == 0 {
                continue;
            }
            let candidate = mul_mod(v, v, P);
            if let Some(e) = Self::from_residue(candidate) {
                if !e.is_identity() {
                    return e;
                }
            }
        }
        unreachable!()
    }
}

/// `Z_47^*` restricted to its order-23 subgroup, generator 2.
pub type Toy47 = SchnorrGroup<47, 23, 2>;

/// Symmetric "pairing" on a Schnorr group, `e(g^a, g^b) = g^(ab)`, computed
/// by brute-force discrete logarithms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToyPairing;

impl PairingEngine for ToyPairing {
    type Scalar = ToyScalar<23>;
    type G1 = Toy47;
    type G2 = Toy47;

    fn pairing_eq(a1: &Toy47, b1: &Toy47, a2: &Toy47, b2: &Toy47) -> bool {
        let lhs = mul_mod(a1.discrete_log(), b1.discrete_log(), 23);
        let rhs = mul_mod(a2.discrete_log(), b2.discrete_log(), 23);
        lhs == rhs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_has_prime_order() {
        assert_eq!(pow_mod(2, 23, 47), 1);
        assert_eq!(Toy47::non_identity_elements().len(), 22);
    }

    #[test]
    fn setup_example_from_exponent_five() {
        // 2^5 = 32 in Z_47
        let y = Toy47::generator().pow(&ToyScalar::new(5));
        assert_eq!(y.residue(), 32);
    }

    #[test]
    fn digest_value_one_hundred_reduces_to_eight() {
        let mut digest = [0u8; 32];
        digest[31] = 100;
        assert_eq!(ToyScalar::<23>::from_be_bytes_reduced(&digest).value(), 8);
    }

    #[test]
    fn decoding_rejects_non_residues() {
        // 5 is a non-residue mod 47 (47 = 2 mod 5), so not in the subgroup.
        assert!(Toy47::from_bytes(&5u64.to_be_bytes()).is_none());
        assert!(Toy47::from_bytes(&0u64.to_be_bytes()).is_none());
        assert!(Toy47::from_bytes(&47u64.to_be_bytes()).is_none());
        assert!(Toy47::from_bytes(&4u64.to_be_bytes()).is_some());
    }

    #[test]
    fn hash_to_group_never_returns_identity() {
        for i in 0..200u8 {
            let e = Toy47::hash_to_group(&[i; 32]);
            assert!(!e.is_identity());
        }
    }
}
