mod common;

use common::{batch, dictionary, mp_agreement, random_atoms};
use ndarray::Array1;
use proptest::prelude::*;
use pursuit_core::sparsecode::{
    encode_batch, matching_pursuit, reconstruction_error, update_dictionary, LrSchedule, MpParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn pursuit_matches_reference_on_random_instances() {
    assert_eq!(mp_agreement(1000, 42), 1000);
}

#[test]
fn ties_go_to_the_lowest_index() {
    let atoms = vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 0.0]];
    let dict = dictionary(&atoms);
    let code = matching_pursuit(Array1::from(vec![3.0, 0.0]).view(), &dict, MpParams { kmax: 1, tol: 0.0 }).unwrap();
    assert_eq!(code, vec![(1, 3.0)]);
}

#[test]
fn zero_vector_gets_an_empty_code_and_is_not_averaged() {
    let atoms = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
    let dict = dictionary(&atoms);
    let b = batch(&[vec![0.0, 0.0], vec![1.0, 1.0]]);
    let enc = encode_batch(&b, &dict, MpParams { kmax: 1, tol: 0.0 }).unwrap();
    assert!(enc.codes.patches[0].is_empty());
    // Only the second patch counts: half its energy remains.
    assert!((enc.reconstruction_error(&b) - 0.5).abs() < 1e-12);
    assert!((reconstruction_error(&b, &enc.codes, &dict) - 0.5).abs() < 1e-12);
}

#[test]
fn dictionary_update_by_hand() {
    let atoms = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
    let dict = dictionary(&atoms);
    let b = batch(&[vec![2.0, 1.0]]);
    let codes = pursuit_core::sparsecode::SparseCode { patches: vec![vec![(0, 2.0)]] };
    // Residual (0, 1); atom 0 moves by 0.5 * 2 * (0, 1) then renormalizes.
    let next = update_dictionary(&dict, &b, &codes, 0.5);
    let s = 1.0 / 2f64.sqrt();
    assert!((next.atom(0)[0] - s).abs() < 1e-12 && (next.atom(0)[1] - s).abs() < 1e-12);
    assert_eq!(next.atom(1), dict.atom(1));
    assert_eq!(next.generation(), 1);
}

#[test]
fn learning_rate_schedule() {
    let s = LrSchedule::default();
    assert_eq!(s.at(0), 0.05);
    assert!((s.at(100_000) - 0.025).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn negating_the_input_negates_the_code(seed in any::<u64>(), kmax in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let atoms = random_atoms(&mut rng, 12, 10);
        let dict = dictionary(&atoms);
        let x: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let p = MpParams { kmax, tol: 0.0 };
        let a = matching_pursuit(Array1::from(x).view(), &dict, p).unwrap();
        let b = matching_pursuit(Array1::from(neg).view(), &dict, p).unwrap();
        prop_assert_eq!(a.len(), b.len());
        for (u, v) in a.iter().zip(&b) {
            prop_assert_eq!(u.0, v.0);
            prop_assert!((u.1 + v.1).abs() < 1e-12);
        }
    }

    #[test]
    fn every_step_conserves_energy(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let atoms = random_atoms(&mut rng, 20, 12);
        let dict = dictionary(&atoms);
        let rows: Vec<Vec<f64>> = (0..5).map(|_| (0..12).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let enc = encode_batch(&batch(&rows), &dict, MpParams { kmax: 6, tol: 0.0 }).unwrap();
        prop_assert!(enc.max_energy_violation < 1e-9);
        for (i, code) in enc.codes.patches.iter().enumerate() {
            prop_assert!(code.len() <= 6);
            // Residual equals input minus the reconstruction.
            let mut r = rows[i].clone();
            for &(n, a) in code {
                for (ri, ai) in r.iter_mut().zip(&atoms[n]) {
                    *ri -= a * ai;
                }
            }
            for (p, q) in r.iter().zip(enc.residuals.row(i)) {
                prop_assert!((p - q).abs() < 1e-10);
            }
        }
    }
}
