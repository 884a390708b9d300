mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use oddarm::bandit::CountTables;
use oddarm::bound::{
    dstar_objective, information_centre, kl_divergence, lambda_opt, mixture_transition, solve_dstar,
};
use oddarm::experiment::output::round_sig9;
use oddarm::glr::{modified_glr, IncrementalGlr};
use oddarm::markov::{conditional_kl, stationary_distribution, TransitionMatrix};

use common::*;

fn simplex(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, n).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

fn ergodic(n: usize) -> impl Strategy<Value = TransitionMatrix> {
    prop::collection::vec(simplex(n), n).prop_map(|rows| TransitionMatrix::new(rows).unwrap())
}

fn sized_pair() -> impl Strategy<Value = (TransitionMatrix, TransitionMatrix)> {
    (2usize..5).prop_flat_map(|n| (ergodic(n), ergodic(n)))
}

/// Arbitrary pull sequence of `(arm, observed state)` pairs.
fn pulls(k: usize, s: usize) -> impl Strategy<Value = Vec<(usize, usize)>> {
    prop::collection::vec((0..k, 0..s), 0..400)
}

fn tables_from(k: usize, s: usize, seq: &[(usize, usize)]) -> CountTables {
    let mut t = CountTables::new(k, s);
    let mut last = vec![None; k];
    for &(a, x) in seq {
        t.update(a, last[a], x);
        last[a] = Some(x);
    }
    t
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn stationary_is_a_fixed_point(p in (2usize..7).prop_flat_map(ergodic)) {
        let mu = stationary_distribution(&p).unwrap();
        prop_assert!(mu.residual(&p) <= 1e-10);
        prop_assert!((mu.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn conditional_kl_nonnegative((p, q) in sized_pair()) {
        let mu = stationary_distribution(&p).unwrap();
        prop_assert!(conditional_kl(&p, &q, mu.probs()).unwrap() >= 0.0);
        prop_assert!(conditional_kl(&p, &p, mu.probs()).unwrap().abs() < 1e-15);
    }

    #[test]
    fn count_identities_hold(seq in pulls(5, 3)) {
        let t = tables_from(5, 3, &seq);
        prop_assert!(t.check_identities().is_ok());
        prop_assert_eq!(t.total_pulls(), seq.len() as u64);
    }

    #[test]
    fn glr_envelopes(seq in pulls(4, 3), h in 0usize..4, hp in 0usize..4) {
        prop_assume!(h != hp);
        let t = tables_from(4, 3, &seq);
        let m = modified_glr(&t, h, hp).value;
        let back = modified_glr(&t, hp, h).value;
        let tol = 1e-9 * (1.0 + m.abs());
        prop_assert!(m <= seq.len() as f64 * 3f64.ln() + tol);
        prop_assert!(m + back <= tol);
        prop_assert!(m <= classical_glr(&t, h, hp) + tol);
    }

    #[test]
    fn incremental_matches_full(seq in pulls(5, 2)) {
        let mut t = CountTables::new(5, 2);
        let mut g = IncrementalGlr::new(5, 2);
        let mut last = [None; 5];
        for &(a, x) in &seq {
            t.update(a, last[a], x);
            if let Some(i) = last[a] {
                g.record_transition(&t, a, i, x);
            }
            last[a] = Some(x);
        }
        for h in 0..5 {
            for hp in (0..5).filter(|&x| x != h) {
                let full = modified_glr(&t, h, hp).value;
                prop_assert!((g.pair(h, hp) - full).abs() <= 1e-9 * (1.0 + full.abs()));
            }
        }
    }

    #[test]
    fn mixture_rows_sum_to_one((p1, p2) in sized_pair(), l in 0.0f64..=1.0, k in 3usize..9) {
        let mu1 = stationary_distribution(&p1).unwrap();
        let mu2 = stationary_distribution(&p2).unwrap();
        let m = mixture_transition(l, &p1, &p2, mu1.probs(), mu2.probs(), k).unwrap();
        for i in 0..m.size() {
            prop_assert!((m.row(i).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn objective_vanishes_at_endpoints((p1, p2) in sized_pair(), k in 3usize..9) {
        let mu1 = stationary_distribution(&p1).unwrap();
        let mu2 = stationary_distribution(&p2).unwrap();
        for l in [0.0, 1.0] {
            prop_assert!(dstar_objective(l, &p1, &p2, mu1.probs(), mu2.probs(), k).unwrap().abs() < 1e-14);
        }
    }

    #[test]
    fn solver_dominates_any_weight((p1, p2) in sized_pair(), l in 0.0f64..=1.0, k in 3usize..9) {
        let sol = solve_dstar(&p1, &p2, k, 0).unwrap();
        let at = dstar_objective(l, &p1, &p2, &sol.mu1, &sol.mu2, k).unwrap();
        prop_assert!(at <= sol.d_star + 1e-12);
        prop_assert!((sol.lambda_opt.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn solver_ignores_odd_index((p1, p2) in sized_pair(), k in 3usize..9, h in 0usize..3) {
        let a = solve_dstar(&p1, &p2, k, 0).unwrap();
        let b = solve_dstar(&p1, &p2, k, h).unwrap();
        prop_assert_eq!(a.d_star.to_bits(), b.d_star.to_bits());
        prop_assert_eq!(a.lambda_star.to_bits(), b.lambda_star.to_bits());
    }

    #[test]
    fn exploration_mixture_has_floor(l in 0.0f64..=1.0, k in 3usize..12, delta in 0.001f64..0.999) {
        let law: Vec<f64> = lambda_opt(l, 0, k).iter().map(|x| delta / k as f64 + (1.0 - delta) * x).collect();
        prop_assert!(law.iter().all(|&x| x >= delta / k as f64 - 1e-12));
        prop_assert!((law.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn information_centre_is_optimal(
        (nu1, nu2, psi) in (2usize..5).prop_flat_map(|n| (simplex(n), simplex(n), simplex(n))),
        w in 0.0f64..=1.0,
    ) {
        let (_, value) = information_centre(&nu1, &nu2, w);
        let other = w * kl_divergence(&nu1, &psi) + (1.0 - w) * kl_divergence(&nu2, &psi);
        prop_assert!(value <= other + 1e-12);
    }

    #[test]
    fn sig9_is_idempotent(x in -1e12f64..1e12) {
        let r = round_sig9(x);
        prop_assert_eq!(round_sig9(r), r);
        prop_assert!((r - x).abs() <= 5e-9 * x.abs());
    }
}

#[test]
fn random_tables_helper_is_consistent() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        assert!(random_tables(&mut rng, 4, 3, 500)
            .check_identities()
            .is_ok());
    }
}
