//! Maximum-likelihood transition estimates and the modified GLR statistic.
//!
//! Under hypothesis `H_h` (arm `h` is odd) the likelihood factors into one
//! transition matrix for arm `h` and a pooled matrix for every other arm. The
//! modified statistic `M_{hh'}(n)` compares the Dirichlet(1,...,1)-averaged
//! likelihood of `H_h` against the maximised likelihood of `H_{h'}`:
//!
//! ```text
//! M_{hh'} = T1 + T2 + T3 + T4 + T5
//! T1 = 2|S| log(1 / B(1,...,1))
//! T2 = sum_i log B(N_h(i, .) + 1)            T3 = same on counts pooled over a != h
//! T4 = -sum_ij N_h'(i,j) log(N_h'(i,j) / N_h'(i))
//! T5 = same on counts pooled over a != h'
//! ```
//!
//! The initial-state factor and the action probabilities appear in both
//! numerator and denominator and are never computed.
//!
//! [`modified_glr`] recomputes everything from the count tables;
//! [`IncrementalGlr`] maintains the same quantities with O(K) work per pull
//! and is what the policy uses.

use rand::Rng;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::bandit::CountTables;
use crate::markov::TransitionMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GlrError {
    #[error("log-Beta needs positive parameters, got {0}")]
    NonPositiveAlpha(f64),
    #[error("log-Beta needs at least one parameter")]
    Empty,
}

/// `log B(alpha) = sum_k log Gamma(alpha_k) - log Gamma(sum_k alpha_k)`.
pub fn log_beta(alphas: &[f64]) -> Result<f64, GlrError> {
    if alphas.is_empty() {
        return Err(GlrError::Empty);
    }
    if let Some(&bad) = alphas.iter().find(|&&a| !(a > 0.0 && a.is_finite())) {
        return Err(GlrError::NonPositiveAlpha(bad));
    }
    let sum: f64 = alphas.iter().sum();
    Ok(alphas.iter().map(|&a| ln_gamma(a)).sum::<f64>() - ln_gamma(sum))
}

/// `T1 = 2|S| log(1 / B(1,...,1)) = 2|S| log((|S| - 1)!)`.
pub fn prior_term(num_states: usize) -> f64 {
    -2.0 * num_states as f64 * log_beta(&vec![1.0; num_states]).expect("positive alphas")
}

/// `log B((c_j + 1)_j)` for one row of counts.
fn row_log_beta(counts: impl Iterator<Item = u64>, num_states: usize) -> f64 {
    let mut total = 0u64;
    let mut acc = 0.0;
    for c in counts {
        total += c;
        acc += ln_gamma(c as f64 + 1.0);
    }
    acc - ln_gamma((total + num_states as u64) as f64)
}

/// `-sum_j c_j log(c_j / sum c)`, skipping zero counts.
fn row_entropy(counts: impl Iterator<Item = u64> + Clone) -> f64 {
    let total: u64 = counts.clone().sum();
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let c = c as f64;
            -c * (c / total).ln()
        })
        .sum()
}

/// Estimates of `P1` and `P2` under one hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct MlEstimates {
    pub hypothesis: usize,
    pub odd_hat: TransitionMatrix,
    pub common_hat: TransitionMatrix,
    /// Rows of `odd_hat` that had no visits and were replaced by a random unit row.
    pub repaired_odd_rows: Vec<usize>,
    pub repaired_common_rows: Vec<usize>,
}

fn estimate_rows<R: Rng + ?Sized>(
    s: usize,
    exits: impl Fn(usize) -> u64,
    trans: impl Fn(usize, usize) -> u64,
    rng: &mut R,
) -> (TransitionMatrix, Vec<usize>) {
    let mut data = vec![0.0; s * s];
    let mut repaired = Vec::new();
    for i in 0..s {
        let n_i = exits(i);
        let row = &mut data[i * s..(i + 1) * s];
        if n_i == 0 {
            row[rng.random_range(0..s)] = 1.0;
            repaired.push(i);
        } else {
            for (j, x) in row.iter_mut().enumerate() {
                *x = trans(i, j) as f64 / n_i as f64;
            }
        }
    }
    let m = TransitionMatrix::stochastic(s, data).expect("count ratios are row-stochastic");
    (m, repaired)
}

/// `P1_hat(j|i) = N_h(i,j) / N_h(i)` and the pooled `P2_hat` over arms `a != h`.
///
/// An all-zero row is replaced by a row with a single 1 at a position drawn
/// uniformly from `rng`; odd rows are repaired before common rows, in state order.
pub fn ml_estimates<R: Rng + ?Sized>(tables: &CountTables, h: usize, rng: &mut R) -> MlEstimates {
    let s = tables.num_states();
    let (odd_hat, repaired_odd_rows) = estimate_rows(
        s,
        |i| tables.exits(h, i),
        |i, j| tables.transitions(h, i, j),
        rng,
    );
    let (common_hat, repaired_common_rows) = estimate_rows(
        s,
        |i| tables.pooled_exits(h, i),
        |i, j| tables.pooled_transitions(h, i, j),
        rng,
    );
    MlEstimates {
        hypothesis: h,
        odd_hat,
        common_hat,
        repaired_odd_rows,
        repaired_common_rows,
    }
}

/// `M_{hh'}(n)` and its five terms, in nats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlrValue {
    pub value: f64,
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub t4: f64,
    pub t5: f64,
}

/// Full recomputation of `M_{hh'}(n)` from the count tables.
pub fn modified_glr(tables: &CountTables, h: usize, h_prime: usize) -> GlrValue {
    assert_ne!(h, h_prime, "modified GLR needs two distinct hypotheses");
    let s = tables.num_states();
    let t1 = prior_term(s);
    let mut t2 = 0.0;
    let mut t3 = 0.0;
    let mut t4 = 0.0;
    let mut t5 = 0.0;
    for i in 0..s {
        t2 += row_log_beta((0..s).map(|j| tables.transitions(h, i, j)), s);
        t3 += row_log_beta((0..s).map(|j| tables.pooled_transitions(h, i, j)), s);
        t4 += row_entropy((0..s).map(|j| tables.transitions(h_prime, i, j)));
        t5 += row_entropy((0..s).map(|j| tables.pooled_transitions(h_prime, i, j)));
    }
    GlrValue {
        value: t1 + t2 + t3 + t4 + t5,
        t1,
        t2,
        t3,
        t4,
        t5,
    }
}

/// `M_h(n) = min_{h' != h} M_{hh'}(n)`.
pub fn glr_min(tables: &CountTables, h: usize) -> f64 {
    (0..tables.num_arms())
        .filter(|&hp| hp != h)
        .map(|hp| modified_glr(tables, h, hp).value)
        .fold(f64::INFINITY, f64::min)
}

/// Index of the largest value; values within `1e-12` (relative) of the
/// maximum are tied and one of them is picked uniformly.
pub fn argmax_with_random_ties<R: Rng + ?Sized>(values: &[f64], rng: &mut R) -> usize {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-12 * max.abs().max(1.0);
    let tied = values.iter().filter(|&&v| v >= max - tol).count();
    let pick = if tied > 1 {
        rng.random_range(0..tied)
    } else {
        0
    };
    values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v >= max - tol)
        .nth(pick)
        .map(|(k, _)| k)
        .expect("at least one maximiser")
}

/// `argmax_h M_h(n)` with uniform tie-breaking.
pub fn best_hypothesis<R: Rng + ?Sized>(tables: &CountTables, rng: &mut R) -> usize {
    let values: Vec<f64> = (0..tables.num_arms()).map(|h| glr_min(tables, h)).collect();
    argmax_with_random_ties(&values, rng)
}

/// `(n + 1) log(n + 1) - n log n`, i.e. the change of `x log x` on increment.
#[inline]
fn xlnx_step(n: u64) -> f64 {
    if n == 0 {
        0.0
    } else {
        let x = n as f64;
        (x + 1.0).ln() + x * (1.0 / x).ln_1p()
    }
}

/// Running `M_{hh'}` decomposition updated one transition at a time.
///
/// `M_{hh'} = T1 + A[h] + C[h] + E[h'] + F[h']` where `A`, `E` depend only on
/// arm `h`'s (resp. `h'`'s) own counts and `C`, `F` on the counts pooled over
/// the remaining arms.
#[derive(Debug, Clone)]
pub struct IncrementalGlr {
    num_arms: usize,
    num_states: usize,
    t1: f64,
    arm_log_beta: Vec<f64>,
    pooled_log_beta: Vec<f64>,
    arm_entropy: Vec<f64>,
    pooled_entropy: Vec<f64>,
}

impl IncrementalGlr {
    pub fn new(num_arms: usize, num_states: usize) -> Self {
        // With empty counts every row contributes log B(1,...,1) = -T1 / (2|S|).
        let t1 = prior_term(num_states);
        let empty = -t1 / 2.0;
        Self {
            num_arms,
            num_states,
            t1,
            arm_log_beta: vec![empty; num_arms],
            pooled_log_beta: vec![empty; num_arms],
            arm_entropy: vec![0.0; num_arms],
            pooled_entropy: vec![0.0; num_arms],
        }
    }

    /// Rebuilds the running sums from scratch.
    pub fn from_tables(tables: &CountTables) -> Self {
        let (k, s) = (tables.num_arms(), tables.num_states());
        let mut g = Self::new(k, s);
        for a in 0..k {
            g.arm_log_beta[a] = (0..s)
                .map(|i| row_log_beta((0..s).map(|j| tables.transitions(a, i, j)), s))
                .sum();
            g.pooled_log_beta[a] = (0..s)
                .map(|i| row_log_beta((0..s).map(|j| tables.pooled_transitions(a, i, j)), s))
                .sum();
            g.arm_entropy[a] = (0..s)
                .map(|i| row_entropy((0..s).map(|j| tables.transitions(a, i, j))))
                .sum();
            g.pooled_entropy[a] = (0..s)
                .map(|i| row_entropy((0..s).map(|j| tables.pooled_transitions(a, i, j))))
                .sum();
        }
        g
    }

    /// Accounts for transition `i -> j` on `arm`. `tables` must already
    /// include that transition.
    pub fn record_transition(&mut self, tables: &CountTables, arm: usize, i: usize, j: usize) {
        let s = self.num_states as u64;
        let n_ij = tables.transitions(arm, i, j) - 1;
        let n_i = tables.exits(arm, i) - 1;
        self.arm_log_beta[arm] += ((n_ij + 1) as f64).ln() - ((n_i + s) as f64).ln();
        self.arm_entropy[arm] += xlnx_step(n_i) - xlnx_step(n_ij);
        for h in (0..self.num_arms).filter(|&h| h != arm) {
            let p_ij = tables.pooled_transitions(h, i, j) - 1;
            let p_i = tables.pooled_exits(h, i) - 1;
            self.pooled_log_beta[h] += ((p_ij + 1) as f64).ln() - ((p_i + s) as f64).ln();
            self.pooled_entropy[h] += xlnx_step(p_i) - xlnx_step(p_ij);
        }
    }

    pub fn pair(&self, h: usize, h_prime: usize) -> f64 {
        self.t1
            + self.arm_log_beta[h]
            + self.pooled_log_beta[h]
            + self.arm_entropy[h_prime]
            + self.pooled_entropy[h_prime]
    }

    /// Writes `M_h(n)` for every `h` into `out`.
    pub fn min_statistics(&self, out: &mut [f64]) {
        // The alternative term E[h'] + F[h'] does not depend on h, so the
        // minimum over h' != h is the smallest or second smallest overall.
        let mut best = (f64::INFINITY, usize::MAX);
        let mut second = f64::INFINITY;
        for a in 0..self.num_arms {
            let g = self.arm_entropy[a] + self.pooled_entropy[a];
            if g < best.0 {
                second = best.0;
                best = (g, a);
            } else if g < second {
                second = g;
            }
        }
        for (h, slot) in out.iter_mut().enumerate().take(self.num_arms) {
            let alt = if h == best.1 { second } else { best.0 };
            *slot = self.t1 + self.arm_log_beta[h] + self.pooled_log_beta[h] + alt;
        }
    }
}
