//! Oracles shared by the integration suites and the acceptance target.
#![allow(dead_code)]

use ndarray::{Array1, Array2};
use pursuit_core::features::FeatureVector;
use pursuit_core::policy::{nac_update, ActorRule, Choice, CriticState, NacParams, Policy, SoftmaxPolicy};
use pursuit_core::sparsecode::{encode_batch, matching_pursuit, Dictionary, MpParams, PatchBatch, PatchCode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Straightforward pursuit over plain vectors, used as the reference.
pub fn mp_oracle(x: &[f64], atoms: &[Vec<f64>], kmax: usize) -> Vec<(usize, f64)> {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
    let mut r = x.to_vec();
    let mut code: Vec<(usize, f64)> = Vec::new();
    if dot(x, x) == 0.0 {
        return code;
    }
    let floor = 1e-12 * dot(x, x).sqrt();
    for _ in 0..4 * kmax {
        if code.len() >= kmax || dot(&r, &r).sqrt() <= floor {
            break;
        }
        let mut best = (0usize, -1.0f64, 0.0f64);
        for (n, a) in atoms.iter().enumerate() {
            let c = dot(&r, a);
            if c.abs() > best.1 {
                best = (n, c.abs(), c);
            }
        }
        if best.1 == 0.0 {
            break;
        }
        for (ri, ai) in r.iter_mut().zip(&atoms[best.0]) {
            *ri -= best.2 * ai;
        }
        match code.iter_mut().find(|e| e.0 == best.0) {
            Some(e) => e.1 += best.2,
            None => code.push((best.0, best.2)),
        }
    }
    code
}

pub fn random_atoms(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            v.iter().map(|a| a / norm).collect()
        })
        .collect()
}

pub fn dictionary(atoms: &[Vec<f64>]) -> Dictionary {
    let dim = atoms[0].len();
    let flat: Vec<f64> = atoms.iter().flatten().copied().collect();
    Dictionary::from_atoms(Array2::from_shape_vec((atoms.len(), dim), flat).unwrap(), 0).unwrap()
}

pub fn batch(rows: &[Vec<f64>]) -> PatchBatch {
    let dim = rows[0].len();
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    let vectors = Array2::from_shape_vec((rows.len(), dim), flat).unwrap();
    let norms = rows.iter().map(|r| r.iter().map(|a| a * a).sum::<f64>().sqrt()).collect();
    PatchBatch { vectors, norms }
}

pub fn random_features(rng: &mut ChaCha8Rng, n: usize) -> FeatureVector {
    FeatureVector((0..n).map(|_| rng.random_range(0.0..1.0)).collect())
}

/// `‖a - b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

pub fn finite_difference(policy: &Policy, f: &FeatureVector, choice: Choice) -> Vec<f64> {
    let h = 1e-6;
    (0..policy.param_count())
        .map(|i| {
            let mut up = policy.clone();
            up.params_mut()[i] += h;
            let mut down = policy.clone();
            down.params_mut()[i] -= h;
            (up.log_prob(f, choice).unwrap() - down.log_prob(f, choice).unwrap()) / (2.0 * h)
        })
        .collect()
}

/// Two states, two arms; the rewarded arm (0 instead of -1) differs per state.
pub fn bandit_run(seed: u64, rule: ActorRule) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states = [FeatureVector(vec![1.0, 0.0]), FeatureVector(vec![0.0, 1.0])];
    let best_arm = [1usize, 0usize];
    let reward = |s: usize, arm: usize| -> f64 { if arm == best_arm[s] { 0.0 } else { -1.0 } };
    // Exact enumeration of the expected reward per (state, arm).
    let optimum: Vec<usize> = (0..2)
        .map(|s| (0..2).max_by(|&a, &b| reward(s, a).total_cmp(&reward(s, b)).then(b.cmp(&a))).unwrap())
        .collect();

    let mut p = Policy::Softmax(SoftmaxPolicy::new(2, 2, 1.0, 5.0).unwrap());
    p.randomize(0.01, &mut rng);
    let mut critic = CriticState::new(2, p.param_count(), NacParams { rule, ..NacParams::default() });
    let mut s = rng.random_range(0..2);
    for _ in 0..10_000 {
        let c = p.sample(&states[s], &mut rng).unwrap();
        let Choice::Discrete([arm, _]) = c else { unreachable!() };
        let next = rng.random_range(0..2);
        nac_update(&mut critic, &mut p, &states[s], c, reward(s, arm), &states[next]).unwrap();
        s = next;
    }
    let Policy::Softmax(sp) = &p else { unreachable!() };
    (0..2).all(|s| sp.greedy_indices(&states[s]).unwrap()[0] == optimum[s])
}

/// Count of random instances (dim ≤ 16, atoms ≤ 8, kmax ≤ 4) on which both
/// pursuit implementations reproduce the reference exactly.
pub fn mp_agreement(instances: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agree = 0;
    for _ in 0..instances {
        let dim = rng.random_range(2..=16);
        let n = rng.random_range(1..=8);
        let kmax = rng.random_range(1..=4);
        let atoms = random_atoms(&mut rng, n, dim);
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let want = mp_oracle(&x, &atoms, kmax);
        let dict = dictionary(&atoms);
        let params = MpParams { kmax, tol: 0.0 };
        let single = matching_pursuit(Array1::from(x.clone()).view(), &dict, params).unwrap();
        let batched = encode_batch(&batch(&[x]), &dict, params).unwrap();
        if codes_match(&single, &want) && codes_match(&batched.codes.patches[0], &want) {
            agree += 1;
        }
    }
    agree
}

/// Same atoms in the same order, coefficients within 1e-9.
pub fn codes_match(got: &PatchCode, want: &[(usize, f64)]) -> bool {
    got.len() == want.len() && got.iter().zip(want).all(|(g, w)| g.0 == w.0 && (g.1 - w.1).abs() < 1e-9)
}

/// Worst relative error between analytic and finite-difference scores over
/// `instances` random policies of the given head.
pub fn worst_score_error(softmax_head: bool, instances: usize, seed: u64) -> f64 {
    use pursuit_core::policy::GaussianPolicy;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let n = rng.random_range(1..8);
        let (mut p, choice) = if softmax_head {
            let t = rng.random_range(0.3..3.0);
            let p = Policy::Softmax(SoftmaxPolicy::new(11, n, t, 5.0).unwrap());
            (p, Choice::Discrete([rng.random_range(0..11), rng.random_range(0..11)]))
        } else {
            let h = rng.random_range(1..6);
            let sigma = rng.random_range(0.5..2.0);
            let p = Policy::Gaussian(GaussianPolicy::new(h, n, sigma, 5.0).unwrap());
            (p, Choice::Continuous([0.0, 0.0]))
        };
        p.randomize(1.0, &mut rng);
        let f = random_features(&mut rng, n);
        let choice = match (&p, choice) {
            (Policy::Gaussian(g), _) => {
                let m = g.forward(&f).unwrap().mean;
                Choice::Continuous([m[0] + rng.random_range(-2.0..2.0), m[1] + rng.random_range(-2.0..2.0)])
            }
            (_, c) => c,
        };
        let g = p.grad_log(&f, choice).unwrap();
        worst = worst.max(rel_err(&g, &finite_difference(&p, &f, choice)));
    }
    worst
}

