mod common;

use bls12_381::G2Affine;
use common::{false_positives, golden_vector, oracle, rerandomization_chains, toy_equivalence, ChainTally};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sa2fe::puzzle::group::{FieldScalar, PrimeOrderGroup};
use sa2fe::puzzle::toy::{Toy47, ToyPairing, ToyScalar};
use sa2fe::puzzle::{
    bilinear, encode_solution, puzzle_gen, puzzle_match, puzzle_setup, ur, EncodedSolution, Puzzle, PuzzleError,
    PuzzleParams, PuzzleTrapdoor,
};
use sa2fe::{Scheme, SecurityLevel};

const VECTORS: &str = "toy_puzzles.hex";

fn toy_ur_x5() -> (PuzzleParams, PuzzleTrapdoor) {
    let x = ToyScalar::new(5);
    let params = ur::UrParams { y: Toy47::generator().pow(&x) };
    (PuzzleParams::UrToy(params), PuzzleTrapdoor::UrToy(ur::UrTrapdoor { x }))
}

fn elem(v: u64) -> Toy47 {
    Toy47::from_residue(v).unwrap()
}

#[test]
fn toy_ur_golden_vectors() {
    let (params, trapdoor) = toy_ur_x5();
    assert_eq!(params.to_bytes(), golden_vector(VECTORS, "ur-params-x5"));
    assert_eq!(trapdoor.to_bytes(), golden_vector(VECTORS, "ur-trapdoor-x5"));
    let PuzzleParams::UrToy(p) = &params else { unreachable!() };
    let z = ur::gen_with_coins(p, &elem(4), &ToyScalar::new(3), &ToyScalar::new(7));
    let bytes = Puzzle::UrToy(z.clone()).to_bytes();
    assert_eq!(bytes, golden_vector(VECTORS, "ur-gen-m4-r3-r7"));
    assert_eq!(Puzzle::from_bytes(&bytes, &params).unwrap(), Puzzle::UrToy(z.clone()));

    let PuzzleTrapdoor::UrToy(t) = &trapdoor else { unreachable!() };
    assert!(ur::matches(t, &elem(4), &z));
    assert!(!ur::matches(t, &elem(9), &z));

    let zz = ur::rerandomize_with_coins(&z, &ToyScalar::new(2), &ToyScalar::new(3));
    assert_eq!(Puzzle::UrToy(zz.clone()).to_bytes(), golden_vector(VECTORS, "ur-rerandomize-r2-r3"));
    assert!(ur::matches(t, &elem(4), &zz));
}

#[test]
fn toy_bilinear_golden_vectors() {
    let params = bilinear::setup::<ToyPairing>();
    assert_eq!(PuzzleParams::BilinearToy(params.clone()).to_bytes(), golden_vector(VECTORS, "bilinear-params"));
    let m = ToyScalar::new(4);
    let z = bilinear::gen_with_coins(&params, &m, &ToyScalar::new(7));
    assert_eq!(Puzzle::BilinearToy(z.clone()).to_bytes(), golden_vector(VECTORS, "bilinear-gen-m4-r7"));
    let zz = bilinear::rerandomize_with_coins(&z, &ToyScalar::new(3));
    assert_eq!(Puzzle::BilinearToy(zz.clone()).to_bytes(), golden_vector(VECTORS, "bilinear-rerandomize-r3"));
    assert!(bilinear::matches(&params, &m, &zz));
    assert!(!bilinear::matches(&params, &ToyScalar::new(5), &zz));
}

#[test]
fn toy_setup_from_exponent_five() {
    assert_eq!(Toy47::generator().pow(&ToyScalar::new(5)).residue(), oracle::pow(2, 5));
    assert_eq!(oracle::pow(2, 5), 32);
}

#[test]
fn toy_bilinear_solution_is_the_digest_mod_q() {
    let mut digest = [0u8; 32];
    digest[31] = 100;
    let mut rng = ChaCha20Rng::seed_from_u64(0);
    let (params, _) = puzzle_setup(Scheme::BilinearMap, SecurityLevel::Toy, &mut rng).unwrap();
    assert_eq!(encode_solution(&digest, &params).encoded, EncodedSolution::BilinearToy(ToyScalar::new(100 % 23)));
}

#[test]
fn toy_operations_agree_with_the_oracle() {
    let t = toy_equivalence(5, 1);
    assert!(t.mismatches.is_empty(), "{:#?}", t.mismatches);
    // 22 elements x 5 coins, per scheme: setup, gen, rerandomize, 3 x 22 matches.
    assert_eq!(t.checks, 1 + 22 * 5 * (3 + 66) + 1 + 22 * 5 * (2 + 66));
}

#[test]
fn wrong_solutions_never_match() {
    assert_eq!(false_positives(Scheme::UniversalReenc, 200, 2).unwrap(), 0);
    assert_eq!(false_positives(Scheme::BilinearMap, 40, 2).unwrap(), 0);
}

#[test]
fn short_rerandomization_chains() {
    for (scheme, chains) in [(Scheme::UniversalReenc, 20), (Scheme::BilinearMap, 4)] {
        let t = rerandomization_chains(scheme, chains, 10, 3).unwrap();
        assert_eq!(t, ChainTally { links: chains * 10, unmatched: 0, repeated: 0 }, "{scheme}");
    }
}

#[test]
fn off_group_toy_element_is_rejected() {
    // 5 is a quadratic non-residue mod 47, so outside the order-23 subgroup.
    assert_ne!(oracle::pow(5, 23), 1);
    let (params, _) = toy_ur_x5();
    let mut bytes = golden_vector(VECTORS, "ur-gen-m4-r3-r7");
    bytes[2..10].copy_from_slice(&5u64.to_be_bytes());
    assert_eq!(Puzzle::from_bytes(&bytes, &params), Err(PuzzleError::InvalidElement));
}

/// A compressed G2 encoding that is on the curve but outside the prime-order
/// subgroup, found by scanning small x-coordinates with the curve library's
/// unchecked decoder.
fn off_subgroup_g2() -> [u8; 96] {
    for k in 1u8..=255 {
        let mut bytes = [0u8; 96];
        bytes[0] = 0x80;
        bytes[47] = k;
        let unchecked = G2Affine::from_compressed_unchecked(&bytes);
        if bool::from(unchecked.is_some()) && bool::from(G2Affine::from_compressed(&bytes).is_none()) {
            return bytes;
        }
    }
    panic!("no off-subgroup point among small x-coordinates");
}

#[test]
fn off_subgroup_curve_point_is_rejected() {
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let (params, _) = puzzle_setup(Scheme::BilinearMap, SecurityLevel::Bits128, &mut rng).unwrap();
    let z = puzzle_gen(&params, &encode_solution(&[1; 32], &params), &mut rng).unwrap();
    let mut bytes = z.to_bytes();
    bytes[2..98].copy_from_slice(&off_subgroup_g2());
    assert_eq!(Puzzle::from_bytes(&bytes, &params), Err(PuzzleError::InvalidElement));
}

#[test]
fn puzzles_from_another_scheme_are_refused() {
    let mut rng = ChaCha20Rng::seed_from_u64(6);
    let (ur_params, ur_trapdoor) = puzzle_setup(Scheme::UniversalReenc, SecurityLevel::Bits128, &mut rng).unwrap();
    let (bm_params, _) = puzzle_setup(Scheme::BilinearMap, SecurityLevel::Bits128, &mut rng).unwrap();
    let m = encode_solution(&[9; 32], &bm_params);
    let z = puzzle_gen(&bm_params, &m, &mut rng).unwrap();
    assert!(Puzzle::from_bytes(&z.to_bytes(), &ur_params).is_err());
    assert_eq!(puzzle_match(&ur_params, &ur_trapdoor, &m, &z), Err(PuzzleError::SchemeMismatch));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ur_toy_rerandomization_preserves_the_plaintext(x in 1u64..23, m in 0usize..22, r0 in 0u64..23, r1 in 1u64..23, s0 in 0u64..23, s1 in 1u64..23) {
        let x = ToyScalar::new(x);
        let params = ur::UrParams { y: Toy47::generator().pow(&x) };
        let t = ur::UrTrapdoor { x };
        let m = Toy47::non_identity_elements()[m];
        let z = ur::gen_with_coins(&params, &m, &ToyScalar::new(r0), &ToyScalar::new(r1));
        let zz = ur::rerandomize_with_coins(&z, &ToyScalar::new(s0), &ToyScalar::new(s1));
        prop_assert!(ur::matches(&t, &m, &zz));
        prop_assert_eq!(oracle::ur_open(x.value(), [zz.alpha0.residue(), zz.beta0.residue(), zz.alpha1.residue(), zz.beta1.residue()]), Some(m.residue()));
    }

    #[test]
    fn bilinear_toy_match_is_exact(m in 1u64..23, cand in 1u64..23, r in 1u64..23) {
        let params = bilinear::setup::<ToyPairing>();
        let z = bilinear::gen_with_coins(&params, &ToyScalar::new(m), &ToyScalar::new(r));
        prop_assert_eq!(bilinear::matches(&params, &ToyScalar::new(cand), &z), cand == m);
    }

    #[test]
    fn toy_puzzle_bytes_round_trip(m in 0usize..22, r0 in 0u64..23, r1 in 1u64..23) {
        let (params, _) = toy_ur_x5();
        let PuzzleParams::UrToy(p) = &params else { unreachable!() };
        let z = Puzzle::UrToy(ur::gen_with_coins(p, &Toy47::non_identity_elements()[m], &ToyScalar::new(r0), &ToyScalar::new(r1)));
        prop_assert_eq!(Puzzle::from_bytes(&z.to_bytes(), &params).unwrap(), z);
    }
}

#[test]
fn toy_scalar_inverse_matches_brute_force() {
    for a in 1..23 {
        assert_eq!(ToyScalar::<23>::new(a).invert().unwrap().value(), oracle::inv_q(a));
    }
}
