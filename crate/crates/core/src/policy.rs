//! The sequential policy: round-robin start, GLR stopping rule, and
//! forced-exploration sampling from the estimated optimal law.
//!
//! Time `n` counts from zero, so after the pull at time `n` there have been
//! `n + 1` pulls. Pulls `0..K` go round-robin. From `n = K - 1` on, each step
//! computes `h* = argmax_h M_h(n)` and stops with `h*` if
//! `M_{h*}(n) >= log((K-1) L)`. Otherwise it pulls an arm uniformly with
//! probability `delta`, and from `lambda_opt(h*)` otherwise.
//!
//! The reported stopping time is the number of pulls made, i.e. `n + 1` at
//! the stopping step, so it is never below `K`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bandit::{ArmConfiguration, BanditEnv, CountTables, Observation};
use crate::bound::{lambda_opt, solve_lambda_star, BoundError};
use crate::glr::{argmax_with_random_ties, ml_estimates, IncrementalGlr};
use crate::markov::{sample_index, TransitionMatrix};
use crate::seeding::{self, POLICY_STREAM_BASE};

pub const DEFAULT_MAX_STEPS: u64 = 10_000_000;

const EXPLORE_STREAM: u64 = POLICY_STREAM_BASE;
const CHOICE_STREAM: u64 = POLICY_STREAM_BASE + 1;
const TIE_STREAM: u64 = POLICY_STREAM_BASE + 2;
const REPAIR_STREAM: u64 = POLICY_STREAM_BASE + 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("threshold parameter L must be finite and at least 1, got {0}")]
    InvalidThreshold(f64),
    #[error("exploration rate delta must lie in (0, 1), got {0}")]
    InvalidDelta(f64),
    #[error("recompute interval must be positive")]
    InvalidRecompute,
    #[error("step cap of {0} pulls reached without stopping")]
    StepCapExceeded(u64),
    #[error(transparent)]
    Bound(#[from] BoundError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyParams {
    pub threshold_l: f64,
    pub delta: f64,
    /// Pull budget; reaching it without a stop is an error.
    pub max_steps: u64,
    /// Re-solve for the sampling law on fresh estimates every this many
    /// steps (and whenever `h*` changes).
    pub recompute_every: u64,
}

impl PolicyParams {
    pub fn new(threshold_l: f64, delta: f64) -> Result<Self, PolicyError> {
        let p = Self {
            threshold_l,
            delta,
            max_steps: DEFAULT_MAX_STEPS,
            recompute_every: 1,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_max_steps(mut self, max_steps: u64) -> Self {
        self.max_steps = max_steps;
        self
    }

    pub fn with_recompute_every(mut self, m: u64) -> Result<Self, PolicyError> {
        self.recompute_every = m;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if !(self.threshold_l >= 1.0 && self.threshold_l.is_finite()) {
            return Err(PolicyError::InvalidThreshold(self.threshold_l));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(PolicyError::InvalidDelta(self.delta));
        }
        if self.recompute_every == 0 {
            return Err(PolicyError::InvalidRecompute);
        }
        Ok(())
    }

    /// `log((K - 1) L)`.
    pub fn threshold(&self, num_arms: usize) -> f64 {
        ((num_arms as f64 - 1.0) * self.threshold_l).ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    /// Sampling law from the current maximum-likelihood estimates.
    #[serde(rename = "adaptive")]
    Adaptive,
    /// Sampling law from the true `P1`, `P2`; stopping rule unchanged.
    #[serde(rename = "known")]
    KnownParams,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Adaptive => "adaptive",
            Mode::KnownParams => "known",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Pull(usize),
    Stop(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub arm: usize,
    pub observation: Observation,
    /// `M_h(n)` for every `h` after this pull.
    pub statistics: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    /// Pulls made before stopping.
    pub stopping_time: u64,
    pub declared: usize,
    pub correct: bool,
    /// `M_{declared}` at the stopping step.
    pub statistic: f64,
    pub trace: Option<Vec<TraceStep>>,
}

/// Everything the policy knows: counts, running GLR sums and its own
/// random streams, which are independent of the observation streams.
#[derive(Debug, Clone)]
pub struct PolicyState {
    params: PolicyParams,
    mode: Mode,
    tables: CountTables,
    glr: IncrementalGlr,
    statistics: Vec<f64>,
    threshold: f64,
    stopping: bool,
    known_lambda: Option<f64>,
    cached: Option<(usize, f64, u64)>,
    last_law: Vec<f64>,
    explore_rng: ChaCha8Rng,
    choice_rng: ChaCha8Rng,
    tie_rng: ChaCha8Rng,
    repair_rng: ChaCha8Rng,
}

impl PolicyState {
    /// For `KnownParams`, the sampling weight is solved once from the true
    /// matrices in `config`.
    pub fn new(
        config: &ArmConfiguration,
        params: PolicyParams,
        mode: Mode,
        seed: u64,
    ) -> Result<Self, PolicyError> {
        params.validate()?;
        let (k, s) = (config.num_arms(), config.num_states());
        let known_lambda = match mode {
            Mode::KnownParams => Some(solve_lambda_star(
                config.odd_matrix(),
                config.common_matrix(),
                k,
            )?),
            Mode::Adaptive => None,
        };
        Ok(Self {
            params,
            mode,
            tables: CountTables::new(k, s),
            glr: IncrementalGlr::new(k, s),
            statistics: vec![0.0; k],
            threshold: params.threshold(k),
            stopping: true,
            known_lambda,
            cached: None,
            last_law: Vec::new(),
            explore_rng: seeding::stream(seed, EXPLORE_STREAM),
            choice_rng: seeding::stream(seed, CHOICE_STREAM),
            tie_rng: seeding::stream(seed, TIE_STREAM),
            repair_rng: seeding::stream(seed, REPAIR_STREAM),
        })
    }

    /// Disables the stop check; the sampling rule is unchanged.
    pub fn without_stopping(mut self) -> Self {
        self.stopping = false;
        self
    }

    pub fn params(&self) -> &PolicyParams {
        &self.params
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn tables(&self) -> &CountTables {
        &self.tables
    }

    pub fn glr(&self) -> &IncrementalGlr {
        &self.glr
    }

    /// `M_h(n)` for every `h` as of the last stop check.
    pub fn statistics(&self) -> &[f64] {
        &self.statistics
    }

    /// Arm-selection law used for the most recent non-round-robin pull.
    pub fn last_law(&self) -> &[f64] {
        &self.last_law
    }

    pub fn observe(&mut self, obs: &Observation) {
        self.tables.record(obs);
        if let Some(i) = obs.prev {
            self.glr
                .record_transition(&self.tables, obs.arm, i, obs.state);
        }
    }

    fn lambda_star(&mut self, h_star: usize) -> f64 {
        if let Some(l) = self.known_lambda {
            return l;
        }
        let now = self.tables.total_pulls();
        if let Some((h, l, at)) = self.cached {
            if h == h_star && now - at < self.params.recompute_every {
                return l;
            }
        }
        let est = ml_estimates(&self.tables, h_star, &mut self.repair_rng);
        let k = self.tables.num_arms();
        // Estimates with several closed classes have no unique stationary
        // law; sample uniformly until they do.
        let l = solve_lambda_star(&est.odd_hat, &est.common_hat, k).unwrap_or(1.0 / k as f64);
        self.cached = Some((h_star, l, now));
        l
    }
}

/// Decides the next action given everything observed so far.
pub fn policy_step(state: &mut PolicyState) -> Result<Action, PolicyError> {
    let k = state.tables.num_arms();
    let pulls = state.tables.total_pulls();
    if pulls < k as u64 {
        return Ok(Action::Pull(pulls as usize));
    }
    state.glr.min_statistics(&mut state.statistics);
    let h_star = argmax_with_random_ties(&state.statistics, &mut state.tie_rng);
    if state.stopping && state.statistics[h_star] >= state.threshold {
        return Ok(Action::Stop(h_star));
    }
    if pulls >= state.params.max_steps {
        return Err(PolicyError::StepCapExceeded(pulls));
    }
    let target = lambda_opt(state.lambda_star(h_star), h_star, k);
    let d = state.params.delta;
    let law: Vec<f64> = target
        .iter()
        .map(|&x| d / k as f64 + (1.0 - d) * x)
        .collect();
    debug_assert!(
        law.iter()
            .all(|&x| x >= state.params.delta / k as f64 - 1e-12),
        "exploration floor violated: {law:?}"
    );
    state.last_law = law;
    let arm = if state.explore_rng.random_bool(state.params.delta) {
        state.choice_rng.random_range(0..k)
    } else {
        sample_index(&target, &mut state.choice_rng)
    };
    Ok(Action::Pull(arm))
}

/// Runs the policy on `env` until it stops. Policy randomness is keyed by `seed`.
pub fn run_to_stop(
    env: &mut BanditEnv,
    params: PolicyParams,
    mode: Mode,
    seed: u64,
) -> Result<RunResult, PolicyError> {
    run(env, params, mode, seed, false)
}

/// As [`run_to_stop`] but also records every step.
pub fn run_to_stop_traced(
    env: &mut BanditEnv,
    params: PolicyParams,
    mode: Mode,
    seed: u64,
) -> Result<RunResult, PolicyError> {
    run(env, params, mode, seed, true)
}

fn run(
    env: &mut BanditEnv,
    params: PolicyParams,
    mode: Mode,
    seed: u64,
    traced: bool,
) -> Result<RunResult, PolicyError> {
    let mut state = PolicyState::new(env.config(), params, mode, seed)?;
    let mut trace = traced.then(Vec::new);
    let k = env.config().num_arms();
    let mut scratch = vec![0.0; k];
    loop {
        match policy_step(&mut state)? {
            Action::Pull(arm) => {
                let obs = env.pull(arm);
                state.observe(&obs);
                if let Some(t) = trace.as_mut() {
                    state.glr.min_statistics(&mut scratch);
                    t.push(TraceStep {
                        arm,
                        observation: obs,
                        statistics: scratch.clone(),
                    });
                }
            }
            Action::Stop(declared) => {
                return Ok(RunResult {
                    stopping_time: state.tables.total_pulls(),
                    declared,
                    correct: declared == env.config().odd_index(),
                    statistic: state.statistics[declared],
                    trace,
                });
            }
        }
    }
}

/// Runs the sampling rule with stopping disabled until `env` has seen
/// `pulls` pulls, returning the final policy state.
pub fn run_without_stopping(
    env: &mut BanditEnv,
    params: PolicyParams,
    mode: Mode,
    seed: u64,
    pulls: u64,
) -> Result<PolicyState, PolicyError> {
    let params = params.with_max_steps(u64::MAX);
    let mut state = PolicyState::new(env.config(), params, mode, seed)?.without_stopping();
    advance(env, &mut state, pulls)?;
    Ok(state)
}

/// Continues a non-stopping run until `pulls` pulls have been made.
pub fn advance(
    env: &mut BanditEnv,
    state: &mut PolicyState,
    pulls: u64,
) -> Result<(), PolicyError> {
    assert!(
        !state.stopping,
        "advance needs a state built with without_stopping"
    );
    while state.tables.total_pulls() < pulls {
        match policy_step(state)? {
            Action::Pull(arm) => {
                let obs = env.pull(arm);
                state.observe(&obs);
            }
            Action::Stop(_) => unreachable!("stopping disabled"),
        }
    }
    Ok(())
}

fn log_ratio(p: &TransitionMatrix, q: &TransitionMatrix, i: usize, j: usize) -> f64 {
    let (a, b) = (p.get(i, j), q.get(i, j));
    if a == b {
        0.0
    } else if b == 0.0 {
        f64::INFINITY
    } else if a == 0.0 {
        f64::NEG_INFINITY
    } else {
        (a / b).ln()
    }
}

/// Log-likelihood ratio `Z_{hh'}(n)` of "arm `h` is odd" against "arm `h'` is
/// odd" under the true matrices in `config`.
///
/// Only arms `h` and `h'` contribute; the initial-state terms cancel.
/// A realised transition impossible under `h'` makes the ratio `+inf`.
pub fn known_ll_ratio(
    tables: &CountTables,
    config: &ArmConfiguration,
    h: usize,
    h_prime: usize,
) -> f64 {
    assert_ne!(h, h_prime, "likelihood ratio needs two distinct hypotheses");
    let (p1, p2) = (config.odd_matrix(), config.common_matrix());
    let s = tables.num_states();
    let mut total = 0.0;
    for (arm, num, den) in [(h, p1, p2), (h_prime, p2, p1)] {
        for i in 0..s {
            for j in 0..s {
                let n = tables.transitions(arm, i, j);
                if n == 0 {
                    continue;
                }
                let r = log_ratio(num, den, i, j);
                if r == f64::INFINITY {
                    return f64::INFINITY;
                }
                total += n as f64 * r;
            }
        }
    }
    total
}
