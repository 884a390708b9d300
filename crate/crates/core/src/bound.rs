//! Instance-hardness constant for odd-arm identification.
//!
//! For a mixing weight `l` on the odd arm, the remaining arms share `1 - l`
//! and the nearest alternative sees the transition law
//!
//! ```text
//! P(j|i) = [l mu1(i) P1(j|i) + (1-l) c mu2(i) P2(j|i)] / [l mu1(i) + (1-l) c mu2(i)],  c = (K-2)/(K-1)
//! ```
//!
//! The hardness constant is `D* = max_l { l D(P1||P|mu1) + (1-l) c D(P2||P|mu2) }`
//! and the optimal sampling law puts `l*` on the odd arm and `(1-l*)/(K-1)`
//! on each other arm.

use thiserror::Error;

use crate::markov::{conditional_kl, stationary_distribution, MarkovError, TransitionMatrix};

/// Points in the coarse grid that seeds the golden-section refinement.
pub const SOLVER_GRID_POINTS: usize = 1024;

/// Objective differences at or below this are treated as ties.
pub const FLAT_TOLERANCE: f64 = 1e-12;

/// Mixture denominators at or below this are degenerate.
const DENOMINATOR_FLOOR: f64 = 1e-300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error("mixture denominator vanishes on row {row}")]
    DegenerateDenominator { row: usize },
    #[error("need at least 3 arms, got {0}")]
    TooFewArms(usize),
    #[error("mixing weight {0} outside [0, 1]")]
    WeightOutOfRange(f64),
    #[error("delta {0} outside (0, 1)")]
    DeltaOutOfRange(f64),
    #[error(transparent)]
    Markov(#[from] MarkovError),
}

fn common_weight(num_arms: usize) -> f64 {
    (num_arms as f64 - 2.0) / (num_arms as f64 - 1.0)
}

fn check_inputs(
    lambda1: f64,
    p1: &TransitionMatrix,
    p2: &TransitionMatrix,
    mu1: &[f64],
    mu2: &[f64],
    num_arms: usize,
) -> Result<(), BoundError> {
    if num_arms < 3 {
        return Err(BoundError::TooFewArms(num_arms));
    }
    if !(0.0..=1.0).contains(&lambda1) {
        return Err(BoundError::WeightOutOfRange(lambda1));
    }
    let n = p1.size();
    for got in [p2.size(), mu1.len(), mu2.len()] {
        if got != n {
            return Err(MarkovError::DimensionMismatch { expected: n, got }.into());
        }
    }
    Ok(())
}

/// The alternative's transition matrix at mixing weight `lambda1`.
pub fn mixture_transition(
    lambda1: f64,
    p1: &TransitionMatrix,
    p2: &TransitionMatrix,
    mu1: &[f64],
    mu2: &[f64],
    num_arms: usize,
) -> Result<TransitionMatrix, BoundError> {
    check_inputs(lambda1, p1, p2, mu1, mu2, num_arms)?;
    let n = p1.size();
    let c = common_weight(num_arms);
    let mut data = Vec::with_capacity(n * n);
    for i in 0..n {
        let a = lambda1 * mu1[i];
        let b = (1.0 - lambda1) * c * mu2[i];
        let den = a + b;
        if den <= DENOMINATOR_FLOOR {
            return Err(BoundError::DegenerateDenominator { row: i });
        }
        data.extend((0..n).map(|j| (a * p1.get(i, j) + b * p2.get(i, j)) / den));
    }
    Ok(TransitionMatrix::stochastic(n, data)?)
}

/// `l D(P1||P|mu1) + (1-l) c D(P2||P|mu2)` evaluated at the mixture for `l`.
pub fn dstar_objective(
    lambda1: f64,
    p1: &TransitionMatrix,
    p2: &TransitionMatrix,
    mu1: &[f64],
    mu2: &[f64],
    num_arms: usize,
) -> Result<f64, BoundError> {
    let mix = mixture_transition(lambda1, p1, p2, mu1, mu2, num_arms)?;
    let c = common_weight(num_arms);
    let mut value = 0.0;
    // A zero weight removes its term even if the divergence is infinite.
    if lambda1 > 0.0 {
        value += lambda1 * conditional_kl(p1, &mix, mu1)?;
    }
    if lambda1 < 1.0 {
        value += (1.0 - lambda1) * c * conditional_kl(p2, &mix, mu2)?;
    }
    Ok(value)
}

/// Precomputed per-row data for fast repeated objective evaluation.
///
/// Expanding the two divergences gives, per row,
/// `a H1(i) + b H2(i) - sum_j m_ij log m_ij + (a + b) log(a + b)` with
/// `m_ij = a P1(j|i) + b P2(j|i)` and `H(i) = sum_j P(j|i) log P(j|i)`.
/// Rows with `a + b = 0` carry no weight in either divergence and are skipped.
struct Objective<'a> {
    p1: &'a TransitionMatrix,
    p2: &'a TransitionMatrix,
    mu1: &'a [f64],
    mu2c: Vec<f64>,
    neg_ent1: Vec<f64>,
    neg_ent2: Vec<f64>,
}

impl<'a> Objective<'a> {
    fn new(
        p1: &'a TransitionMatrix,
        p2: &'a TransitionMatrix,
        mu1: &'a [f64],
        mu2: &[f64],
        num_arms: usize,
    ) -> Self {
        let c = common_weight(num_arms);
        let xlogx = |x: f64| if x > 0.0 { x * x.ln() } else { 0.0 };
        let n = p1.size();
        Self {
            p1,
            p2,
            mu1,
            mu2c: mu2.iter().map(|m| m * c).collect(),
            neg_ent1: (0..n)
                .map(|i| p1.row(i).iter().map(|&x| xlogx(x)).sum())
                .collect(),
            neg_ent2: (0..n)
                .map(|i| p2.row(i).iter().map(|&x| xlogx(x)).sum())
                .collect(),
        }
    }

    fn eval(&self, lambda1: f64) -> f64 {
        let mut total = 0.0;
        for i in 0..self.mu1.len() {
            let a = lambda1 * self.mu1[i];
            let b = (1.0 - lambda1) * self.mu2c[i];
            let den = a + b;
            if den <= 0.0 {
                continue;
            }
            let mut row = a * self.neg_ent1[i] + b * self.neg_ent2[i] + den * den.ln();
            for (&x, &y) in self.p1.row(i).iter().zip(self.p2.row(i)) {
                let m = a * x + b * y;
                if m > 0.0 {
                    row -= m * m.ln();
                }
            }
            total += row;
        }
        total.max(0.0)
    }
}

/// Maximises a function on `[lo, hi]` by golden-section search.
fn golden_section_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// `D*` with its maximiser and the derived sampling law for one odd index.
#[derive(Debug, Clone, PartialEq)]
pub struct HardnessSolution {
    pub d_star: f64,
    pub lambda_star: f64,
    /// The alternative's transition matrix at `lambda_star`.
    pub mixture: TransitionMatrix,
    /// Sampling law over arms: `lambda_star` on the odd arm.
    pub lambda_opt: Vec<f64>,
    pub num_arms: usize,
    pub mu1: Vec<f64>,
    pub mu2: Vec<f64>,
    p1: TransitionMatrix,
    p2: TransitionMatrix,
}

impl HardnessSolution {
    /// `l*_delta = delta / K + (1 - delta) l*`.
    pub fn lambda_delta(&self, delta: f64) -> f64 {
        delta / self.num_arms as f64 + (1.0 - delta) * self.lambda_star
    }

    /// `D*_delta`: the objective at `l*_delta` instead of at the maximiser.
    pub fn d_star_delta(&self, delta: f64) -> Result<f64, BoundError> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(BoundError::DeltaOutOfRange(delta));
        }
        let lam = self.lambda_delta(delta).clamp(0.0, 1.0);
        dstar_objective(lam, &self.p1, &self.p2, &self.mu1, &self.mu2, self.num_arms)
    }

    /// Asymptotic sampling frequencies under forced exploration with `delta`.
    pub fn arm_frequencies(&self, odd_index: usize, delta: f64) -> Vec<f64> {
        lambda_opt(self.lambda_delta(delta), odd_index, self.num_arms)
    }
}

/// Maximises the hardness objective over `l in [0, 1]`.
///
/// A 1024-point grid locates the best bracket and golden-section search
/// refines inside it. The refined point replaces the grid point only when it
/// improves the objective by more than `1e-12`, and among grid points within
/// `1e-12` of each other the smallest `l` wins.
///
/// Works for any row-stochastic pair whose stationary laws exist, including
/// estimated matrices; `odd_index` only positions `lambda_opt`.
pub fn solve_dstar(
    p1: &TransitionMatrix,
    p2: &TransitionMatrix,
    num_arms: usize,
    odd_index: usize,
) -> Result<HardnessSolution, BoundError> {
    if num_arms < 3 {
        return Err(BoundError::TooFewArms(num_arms));
    }
    let mu1 = stationary_distribution(p1)?.probs().to_vec();
    let mu2 = stationary_distribution(p2)?.probs().to_vec();
    let lambda_star = maximise(p1, p2, &mu1, &mu2, num_arms)?;
    let d_star = dstar_objective(lambda_star, p1, p2, &mu1, &mu2, num_arms)?;
    let mixture = mixture_transition(lambda_star, p1, p2, &mu1, &mu2, num_arms)?;
    Ok(HardnessSolution {
        d_star,
        lambda_star,
        mixture,
        lambda_opt: lambda_opt(lambda_star, odd_index, num_arms),
        num_arms,
        mu1,
        mu2,
        p1: p1.clone(),
        p2: p2.clone(),
    })
}

/// Maximiser only; no allocation beyond the evaluator's per-row cache.
pub fn solve_lambda_star(
    p1: &TransitionMatrix,
    p2: &TransitionMatrix,
    num_arms: usize,
) -> Result<f64, BoundError> {
    if num_arms < 3 {
        return Err(BoundError::TooFewArms(num_arms));
    }
    let mu1 = stationary_distribution(p1)?;
    let mu2 = stationary_distribution(p2)?;
    maximise(p1, p2, mu1.probs(), mu2.probs(), num_arms)
}

fn maximise(
    p1: &TransitionMatrix,
    p2: &TransitionMatrix,
    mu1: &[f64],
    mu2: &[f64],
    num_arms: usize,
) -> Result<f64, BoundError> {
    check_inputs(0.0, p1, p2, mu1, mu2, num_arms)?;
    let obj = Objective::new(p1, p2, mu1, mu2, num_arms);
    let last = SOLVER_GRID_POINTS - 1;
    let at = |k: usize| k as f64 / last as f64;
    let mut best_k = 0;
    let mut best_f = obj.eval(0.0);
    for k in 1..SOLVER_GRID_POINTS {
        let f = obj.eval(at(k));
        if f > best_f + FLAT_TOLERANCE {
            best_k = k;
            best_f = f;
        }
    }
    let lo = at(best_k.saturating_sub(1));
    let hi = at((best_k + 1).min(last));
    let (x, fx) = golden_section_max(|l| obj.eval(l), lo, hi, 1e-12);
    Ok(if fx > best_f + FLAT_TOLERANCE {
        x
    } else {
        at(best_k)
    })
}

/// `lambda_star` on arm `h`, `(1 - lambda_star) / (K - 1)` elsewhere.
pub fn lambda_opt(lambda_star: f64, h: usize, num_arms: usize) -> Vec<f64> {
    let rest = (1.0 - lambda_star) / (num_arms as f64 - 1.0);
    (0..num_arms)
        .map(|a| if a == h { lambda_star } else { rest })
        .collect()
}

/// `D*_delta` for a fresh pair of matrices.
pub fn dstar_delta(
    p1: &TransitionMatrix,
    p2: &TransitionMatrix,
    num_arms: usize,
    delta: f64,
) -> Result<f64, BoundError> {
    solve_dstar(p1, p2, num_arms, 0)?.d_star_delta(delta)
}

/// KL divergence between probability vectors with the `0 log 0 = 0` convention.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&x, _)| x > 0.0)
        .map(|(&x, &y)| {
            if y > 0.0 {
                x * (x / y).ln()
            } else {
                f64::INFINITY
            }
        })
        .sum()
}

/// Minimiser and minimum of `w1 D(nu1||psi) + (1-w1) D(nu2||psi)` over `psi`:
/// the mixture `w1 nu1 + (1-w1) nu2`.
pub fn information_centre(nu1: &[f64], nu2: &[f64], w1: f64) -> (Vec<f64>, f64) {
    assert_eq!(nu1.len(), nu2.len(), "alphabets differ");
    assert!((0.0..=1.0).contains(&w1), "weight {w1} outside [0, 1]");
    let w2 = 1.0 - w1;
    let centre: Vec<f64> = nu1.iter().zip(nu2).map(|(a, b)| w1 * a + w2 * b).collect();
    let mut value = 0.0;
    if w1 > 0.0 {
        value += w1 * kl_divergence(nu1, &centre);
    }
    if w2 > 0.0 {
        value += w2 * kl_divergence(nu2, &centre);
    }
    (centre, value)
}
