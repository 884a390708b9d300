#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use oddarm::bandit::{ArmConfiguration, BanditEnv, CountTables};
use oddarm::markov::TransitionMatrix;

pub const FIG1_P1: [[f64; 2]; 2] = [[0.5, 0.5], [0.5, 0.5]];
pub const FIG1_P2: [[f64; 2]; 2] = [[0.1, 0.9], [0.9, 0.1]];

pub fn matrix(rows: [[f64; 2]; 2]) -> TransitionMatrix {
    TransitionMatrix::new(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
}

pub fn fig1_config(k: usize, h: usize) -> ArmConfiguration {
    ArmConfiguration::new(k, h, matrix(FIG1_P1), matrix(FIG1_P2), None).unwrap()
}

/// Random point of the probability simplex, occasionally with a zero entry.
pub fn random_simplex(rng: &mut ChaCha8Rng, n: usize, allow_zero: bool) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
    if allow_zero && n > 2 && rng.random_bool(0.2) {
        v[rng.random_range(0..n)] = 0.0;
    }
    let s: f64 = v.iter().sum();
    v.iter().map(|x| x / s).collect()
}

/// Random ergodic matrix; rows may contain zeros.
pub fn random_ergodic(rng: &mut ChaCha8Rng, n: usize) -> TransitionMatrix {
    loop {
        let rows = (0..n).map(|_| random_simplex(rng, n, true)).collect();
        if let Ok(m) = TransitionMatrix::new(rows) {
            return m;
        }
    }
}

/// Count tables from a simulated run with uniformly random arm choices.
pub fn random_tables(rng: &mut ChaCha8Rng, k: usize, s: usize, pulls: u64) -> CountTables {
    let p1 = random_ergodic(rng, s);
    let mut p2 = random_ergodic(rng, s);
    while p1.max_abs_diff(&p2).unwrap() < 1e-6 {
        p2 = random_ergodic(rng, s);
    }
    let h = rng.random_range(0..k);
    let cfg = ArmConfiguration::new(k, h, p1, p2, None).unwrap();
    let mut env = BanditEnv::new(cfg, rng.random());
    let mut t = CountTables::new(k, s);
    for _ in 0..pulls {
        t.record(&env.pull(rng.random_range(0..k)));
    }
    t
}

fn max_log_likelihood(counts: impl Fn(usize, usize) -> u64, s: usize) -> f64 {
    let mut total = 0.0;
    for i in 0..s {
        let n_i: u64 = (0..s).map(|j| counts(i, j)).sum();
        for j in 0..s {
            let c = counts(i, j);
            if c > 0 {
                total += c as f64 * (c as f64 / n_i as f64).ln();
            }
        }
    }
    total
}

/// Classical GLR `log(f_h / f_h')` with both likelihoods maximised.
pub fn classical_glr(t: &CountTables, h: usize, hp: usize) -> f64 {
    let s = t.num_states();
    let k = t.num_arms();
    let pooled = |ex: usize| {
        move |i: usize, j: usize| {
            (0..k)
                .filter(|&a| a != ex)
                .map(|a| t.transitions(a, i, j))
                .sum()
        }
    };
    max_log_likelihood(|i, j| t.transitions(h, i, j), s) + max_log_likelihood(pooled(h), s)
        - max_log_likelihood(|i, j| t.transitions(hp, i, j), s)
        - max_log_likelihood(pooled(hp), s)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}
