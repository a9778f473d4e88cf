//! Pairing-based puzzle: `(z1, z2) = (g2^(r/m), g2^r)`, checked by
//! `e(g1^m, z1) == e(g1, z2)`.
//!
//! `r/m` is computed as `r * m^-1` in the scalar field, which makes the
//! divisibility condition on `r` unnecessary.

use rand::{CryptoRng, RngCore};

use super::group::{FieldScalar, PairingEngine, PrimeOrderGroup};

#[derive(Debug, Clone, PartialEq)]
pub struct BilinearParams<E: PairingEngine> {
    pub g1: E::G1,
    pub g2: E::G2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BilinearPuzzle<E: PairingEngine> {
    pub z1: E::G2,
    pub z2: E::G2,
}

impl<E: PairingEngine> BilinearPuzzle<E> {
    pub const ELEMENTS: usize = 2;

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.z1.to_bytes();
        out.extend_from_slice(&self.z2.to_bytes());
        out
    }

    /// Rejects identity components: an all-identity puzzle would match every
    /// solution.
    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        let len = <E::G2 as PrimeOrderGroup>::ENCODED_LEN;
        if bytes.len() != 2 * len {
            return None;
        }
        let z1 = E::G2::from_bytes(&bytes[..len])?;
        let z2 = E::G2::from_bytes(&bytes[len..])?;
        if z1.is_identity() || z2.is_identity() {
            return None;
        }
        Some(Self { z1, z2 })
    }
}

pub fn setup<E: PairingEngine>() -> BilinearParams<E> {
    BilinearParams { g1: E::G1::generator(), g2: E::G2::generator() }
}

/// Reduces the digest into `Z_q`, remapping zero to one.
pub fn encode_solution<E: PairingEngine>(digest: &[u8; 32]) -> E::Scalar {
    let m = E::Scalar::from_be_bytes_reduced(digest);
    if m.is_zero() {
        E::Scalar::one()
    } else {
        m
    }
}

pub fn gen<E: PairingEngine, R: RngCore + CryptoRng>(
    params: &BilinearParams<E>,
    m: &E::Scalar,
    rng: &mut R,
) -> BilinearPuzzle<E> {
    gen_with_coins(params, m, &E::Scalar::random_nonzero(rng))
}

/// Puzzle generation with a caller-chosen nonzero `r`.
pub fn gen_with_coins<E: PairingEngine>(params: &BilinearParams<E>, m: &E::Scalar, r: &E::Scalar) -> BilinearPuzzle<E> {
    let m_inv = m.invert().expect("encoded solutions are nonzero");
    BilinearPuzzle { z1: params.g2.pow(&r.mul(&m_inv)), z2: params.g2.pow(r) }
}

pub fn matches<E: PairingEngine>(params: &BilinearParams<E>, m: &E::Scalar, puzzle: &BilinearPuzzle<E>) -> bool {
    E::pairing_eq(&params.g1.pow(m), &puzzle.z1, &params.g1, &puzzle.z2)
}

pub fn rerandomize<E: PairingEngine, R: RngCore + CryptoRng>(puzzle: &BilinearPuzzle<E>, rng: &mut R) -> BilinearPuzzle<E> {
    rerandomize_with_coins(puzzle, &E::Scalar::random_nonzero(rng))
}

pub fn rerandomize_with_coins<E: PairingEngine>(puzzle: &BilinearPuzzle<E>, r: &E::Scalar) -> BilinearPuzzle<E> {
    BilinearPuzzle { z1: puzzle.z1.pow(r), z2: puzzle.z2.pow(r) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::puzzle::toy::{ToyPairing, ToyScalar};

    #[test]
    fn zero_digest_remaps_to_one() {
        assert_eq!(encode_solution::<ToyPairing>(&[0u8; 32]), ToyScalar::new(1));
        // 23 * k reduces to zero as well
        let mut d = [0u8; 32];
        d[31] = 46;
        assert_eq!(encode_solution::<ToyPairing>(&d), ToyScalar::new(1));
    }

    #[test]
    fn toy_exhaustive_correctness_and_soundness() {
        let params = setup::<ToyPairing>();
        for m in 1..23 {
            let m = ToyScalar::new(m);
            for r in 1..23 {
                let p = gen_with_coins(&params, &m, &ToyScalar::new(r));
                for cand in 1..23 {
                    assert_eq!(matches(&params, &ToyScalar::new(cand), &p), cand == m.value());
                }
            }
        }
    }
}
