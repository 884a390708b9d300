//! Finite-state Markov chain primitives.
//!
//! [`TransitionMatrix`] is a dense row-major `|S| x |S|` row-stochastic matrix
//! that carries its own ergodicity metadata. Matrices built with
//! [`TransitionMatrix::new`] are guaranteed irreducible and aperiodic; matrices
//! built with [`TransitionMatrix::stochastic`] (maximum-likelihood estimates,
//! mixtures) are only guaranteed row-stochastic.
//!
//! All logarithms are natural, so divergences are in nats.

use rand::Rng;
use thiserror::Error;

/// Absolute tolerance on row sums accepted at construction.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Pivot magnitude below which the stationary linear system is called singular.
const PIVOT_EPS: f64 = 1e-13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarkovError {
    #[error("matrix must be square with at least 2 states (got {rows} rows, row {bad_row} has {cols} entries)")]
    Shape {
        rows: usize,
        bad_row: usize,
        cols: usize,
    },
    #[error("matrix must have at least 2 states, got {0}")]
    TooSmall(usize),
    #[error("entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("entry ({row}, {col}) = {value} is negative")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("row {row} sums to {sum}, expected 1")]
    RowSum { row: usize, sum: f64 },
    #[error("chain is reducible: state {unreachable} is not mutually reachable with state 0")]
    Reducible { unreachable: usize },
    #[error("chain is periodic with period {period}")]
    Periodic { period: usize },
    #[error("stationary system is singular (pivot {pivot:e} at column {column})")]
    SingularSystem { column: usize, pivot: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{0}")]
    Domain(String),
    #[error("invalid probability vector: {0}")]
    Distribution(String),
}

/// Structural properties of the positive-entry support graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ergodicity {
    pub irreducible: bool,
    /// Period of the chain; only meaningful when `irreducible` holds.
    pub period: usize,
}

impl Ergodicity {
    pub fn is_ergodic(&self) -> bool {
        self.irreducible && self.period == 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    size: usize,
    data: Vec<f64>,
    ergodicity: Ergodicity,
}

impl TransitionMatrix {
    /// Validates a raw matrix: row-stochastic, irreducible and aperiodic.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, MarkovError> {
        let m = Self::stochastic_rows(rows)?;
        if !m.ergodicity.irreducible {
            let unreachable = first_unreachable(m.size, &m.data).unwrap_or(0);
            return Err(MarkovError::Reducible { unreachable });
        }
        if m.ergodicity.period != 1 {
            return Err(MarkovError::Periodic {
                period: m.ergodicity.period,
            });
        }
        Ok(m)
    }

    /// Row-stochastic matrix from nested rows, without requiring ergodicity.
    pub fn stochastic_rows(rows: Vec<Vec<f64>>) -> Result<Self, MarkovError> {
        let size = rows.len();
        if size < 2 {
            return Err(MarkovError::TooSmall(size));
        }
        if let Some((bad_row, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != size) {
            return Err(MarkovError::Shape {
                rows: size,
                bad_row,
                cols: r.len(),
            });
        }
        Self::stochastic(size, rows.into_iter().flatten().collect())
    }

    /// Row-stochastic matrix from row-major data, without requiring ergodicity.
    pub fn stochastic(size: usize, data: Vec<f64>) -> Result<Self, MarkovError> {
        if size < 2 {
            return Err(MarkovError::TooSmall(size));
        }
        if data.len() != size * size {
            return Err(MarkovError::DimensionMismatch {
                expected: size * size,
                got: data.len(),
            });
        }
        for row in 0..size {
            let r = &data[row * size..(row + 1) * size];
            for (col, &v) in r.iter().enumerate() {
                if !v.is_finite() {
                    return Err(MarkovError::NonFinite { row, col });
                }
                if v < 0.0 {
                    return Err(MarkovError::NegativeEntry { row, col, value: v });
                }
            }
            let sum: f64 = r.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(MarkovError::RowSum { row, sum });
            }
        }
        let ergodicity = analyze_support(size, &data);
        Ok(Self {
            size,
            data,
            ergodicity,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn ergodicity(&self) -> Ergodicity {
        self.ergodicity
    }

    /// `P(j|i)`.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.size + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.size..(i + 1) * self.size]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.size).map(|r| r.to_vec()).collect()
    }

    /// Largest entrywise absolute difference; `None` on size mismatch.
    pub fn max_abs_diff(&self, other: &TransitionMatrix) -> Option<f64> {
        (self.size == other.size).then(|| {
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
    }
}

/// Entry point matching the validation contract: square, row-stochastic, ergodic.
pub fn validate_transition_matrix(raw: Vec<Vec<f64>>) -> Result<TransitionMatrix, MarkovError> {
    TransitionMatrix::new(raw)
}

fn support_adjacency(size: usize, data: &[f64]) -> Vec<Vec<usize>> {
    (0..size)
        .map(|i| (0..size).filter(|&j| data[i * size + j] > 0.0).collect())
        .collect()
}

fn bfs_levels(adj: &[Vec<usize>], start: usize) -> Vec<Option<usize>> {
    let mut level = vec![None; adj.len()];
    let mut queue = std::collections::VecDeque::new();
    level[start] = Some(0);
    queue.push_back(start);
    while let Some(u) = queue.pop_front() {
        let next = level[u].unwrap() + 1;
        for &v in &adj[u] {
            if level[v].is_none() {
                level[v] = Some(next);
                queue.push_back(v);
            }
        }
    }
    level
}

fn reverse(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut rev = vec![Vec::new(); adj.len()];
    for (u, outs) in adj.iter().enumerate() {
        for &v in outs {
            rev[v].push(u);
        }
    }
    rev
}

fn first_unreachable(size: usize, data: &[f64]) -> Option<usize> {
    let adj = support_adjacency(size, data);
    let fwd = bfs_levels(&adj, 0);
    let bwd = bfs_levels(&reverse(&adj), 0);
    (0..size).find(|&s| fwd[s].is_none() || bwd[s].is_none())
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

// Strong connectivity from state 0 in both directions, then the period as
// gcd of (level[u] + 1 - level[v]) over all support edges u -> v.
fn analyze_support(size: usize, data: &[f64]) -> Ergodicity {
    let adj = support_adjacency(size, data);
    let fwd = bfs_levels(&adj, 0);
    let bwd = bfs_levels(&reverse(&adj), 0);
    let irreducible = fwd.iter().chain(bwd.iter()).all(Option::is_some);
    if !irreducible {
        return Ergodicity {
            irreducible,
            period: 0,
        };
    }
    let mut period = 0usize;
    for (u, outs) in adj.iter().enumerate() {
        let lu = fwd[u].unwrap() as isize;
        for &v in outs {
            let lv = fwd[v].unwrap() as isize;
            period = gcd(period, (lu + 1 - lv).unsigned_abs());
        }
    }
    Ergodicity {
        irreducible,
        period,
    }
}

fn check_probability_vector(probs: &[f64]) -> Result<(), MarkovError> {
    if probs.is_empty() {
        return Err(MarkovError::Distribution("empty".into()));
    }
    if let Some((i, v)) = probs
        .iter()
        .enumerate()
        .find(|(_, v)| !v.is_finite() || **v < 0.0)
    {
        return Err(MarkovError::Distribution(format!(
            "entry {i} = {v} is not a nonnegative number"
        )));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
        return Err(MarkovError::Distribution(format!("sums to {sum}")));
    }
    Ok(())
}

/// Stationary law `mu` of a transition matrix, `mu P = mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution(Vec<f64>);

impl StationaryDistribution {
    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    /// `max_j |(mu P)(j) - mu(j)|`.
    pub fn residual(&self, p: &TransitionMatrix) -> f64 {
        let n = p.size();
        (0..n)
            .map(|j| {
                let mp: f64 = (0..n).map(|i| self.0[i] * p.get(i, j)).sum();
                (mp - self.0[j]).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Common law of every arm's initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialDistribution(Vec<f64>);

impl InitialDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self, MarkovError> {
        check_probability_vector(&probs)?;
        Ok(Self(probs))
    }

    pub fn uniform(size: usize) -> Self {
        Self(vec![1.0 / size as f64; size])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }
}

/// Solves `(P^T - I) mu = 0` with the last equation replaced by `sum(mu) = 1`.
///
/// Gaussian elimination with partial pivoting; a pivot below `1e-13` is
/// reported as [`MarkovError::SingularSystem`], which is how reducible
/// estimates with several closed classes surface.
pub fn stationary_distribution(
    p: &TransitionMatrix,
) -> Result<StationaryDistribution, MarkovError> {
    let n = p.size();
    let w = n + 1;
    let mut a = vec![0.0; n * w];
    for r in 0..n - 1 {
        for c in 0..n {
            a[r * w + c] = p.get(c, r) - if r == c { 1.0 } else { 0.0 };
        }
    }
    for c in 0..n {
        a[(n - 1) * w + c] = 1.0;
    }
    a[(n - 1) * w + n] = 1.0;

    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&x, &y| a[x * w + col].abs().total_cmp(&a[y * w + col].abs()))
            .unwrap();
        let pivot = a[pivot_row * w + col];
        if pivot.abs() < PIVOT_EPS {
            return Err(MarkovError::SingularSystem { column: col, pivot });
        }
        if pivot_row != col {
            for c in 0..w {
                a.swap(pivot_row * w + c, col * w + c);
            }
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let factor = a[r * w + col] / pivot;
            if factor != 0.0 {
                for c in col..w {
                    a[r * w + c] -= factor * a[col * w + c];
                }
            }
        }
    }
    let mut mu: Vec<f64> = (0..n)
        .map(|i| (a[i * w + n] / a[i * w + i]).max(0.0))
        .collect();
    let total: f64 = mu.iter().sum();
    mu.iter_mut().for_each(|x| *x /= total);
    Ok(StationaryDistribution(mu))
}

/// `D(P || Q | mu) = sum_i mu(i) sum_j P(j|i) log(P(j|i) / Q(j|i))`.
///
/// Terms with `mu(i) = 0` or `P(j|i) = 0` contribute nothing. A positive
/// `P(j|i)` against a zero `Q(j|i)` on a `mu`-charged row yields `+inf`.
pub fn conditional_kl(
    p: &TransitionMatrix,
    q: &TransitionMatrix,
    mu: &[f64],
) -> Result<f64, MarkovError> {
    let n = p.size();
    if q.size() != n {
        return Err(MarkovError::DimensionMismatch {
            expected: n,
            got: q.size(),
        });
    }
    if mu.len() != n {
        return Err(MarkovError::DimensionMismatch {
            expected: n,
            got: mu.len(),
        });
    }
    let mut total = 0.0;
    for (i, &weight) in mu.iter().enumerate() {
        if weight == 0.0 {
            continue;
        }
        let mut row = 0.0;
        for (&pj, &qj) in p.row(i).iter().zip(q.row(i)) {
            if pj == 0.0 {
                continue;
            }
            if qj == 0.0 {
                return Ok(f64::INFINITY);
            }
            row += pj * (pj / qj).ln();
        }
        total += weight * row;
    }
    // Rows are nonnegative in exact arithmetic; clip rounding noise.
    Ok(total.max(0.0))
}

/// `d(eps, 1 - eps) = eps log(eps/(1-eps)) + (1-eps) log((1-eps)/eps)`.
pub fn binary_relative_entropy(eps: f64) -> Result<f64, MarkovError> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(MarkovError::Domain(format!(
            "binary relative entropy needs 0 < eps < 1, got {eps}"
        )));
    }
    let q = 1.0 - eps;
    Ok(eps * (eps / q).ln() + q * (q / eps).ln())
}

/// Draws an index from `probs` using exactly one uniform variate.
#[inline]
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (k, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = k;
            if u < acc {
                return k;
            }
        }
    }
    last_positive
}

/// One transition of the chain from `state`; consumes exactly one draw.
#[inline]
pub fn sample_step<R: Rng + ?Sized>(p: &TransitionMatrix, state: usize, rng: &mut R) -> usize {
    assert!(state < p.size(), "state {state} out of range");
    sample_index(p.row(state), rng)
}
