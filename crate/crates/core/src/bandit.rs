//! Rested K-armed Markov environment and observation counters.
//!
//! Pulling an arm advances only that arm's chain; every other arm stays frozen
//! at its last observed state. The first pull of an arm draws its initial
//! state from the common initial law and records no transition.

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::markov::{sample_index, sample_step, InitialDistribution, TransitionMatrix};
use crate::seeding;

/// Entrywise difference below which two matrices are considered equal.
pub const MATRIX_EQ_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("need at least 3 arms, got {0}")]
    TooFewArms(usize),
    #[error("odd arm index {index} out of range for {num_arms} arms")]
    OddIndexOutOfRange { index: usize, num_arms: usize },
    #[error("odd and common matrices have different sizes ({odd} vs {common})")]
    SizeMismatch { odd: usize, common: usize },
    #[error("initial distribution has {got} entries, state space has {expected}")]
    InitialSize { expected: usize, got: usize },
    #[error("odd and common transition matrices must differ")]
    IdenticalMatrices,
}

/// Ground truth `(h, P1, P2)` together with the arm count and initial law.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmConfiguration {
    num_arms: usize,
    odd_index: usize,
    odd_matrix: TransitionMatrix,
    common_matrix: TransitionMatrix,
    initial: InitialDistribution,
}

impl ArmConfiguration {
    /// `initial` defaults to the uniform law on the state space.
    pub fn new(
        num_arms: usize,
        odd_index: usize,
        odd_matrix: TransitionMatrix,
        common_matrix: TransitionMatrix,
        initial: Option<InitialDistribution>,
    ) -> Result<Self, ConfigError> {
        if num_arms < 3 {
            return Err(ConfigError::TooFewArms(num_arms));
        }
        if odd_index >= num_arms {
            return Err(ConfigError::OddIndexOutOfRange {
                index: odd_index,
                num_arms,
            });
        }
        let size = odd_matrix.size();
        let diff = odd_matrix
            .max_abs_diff(&common_matrix)
            .ok_or(ConfigError::SizeMismatch {
                odd: size,
                common: common_matrix.size(),
            })?;
        if diff <= MATRIX_EQ_TOLERANCE {
            return Err(ConfigError::IdenticalMatrices);
        }
        let initial = initial.unwrap_or_else(|| InitialDistribution::uniform(size));
        if initial.probs().len() != size {
            return Err(ConfigError::InitialSize {
                expected: size,
                got: initial.probs().len(),
            });
        }
        Ok(Self {
            num_arms,
            odd_index,
            odd_matrix,
            common_matrix,
            initial,
        })
    }

    pub fn num_arms(&self) -> usize {
        self.num_arms
    }

    pub fn num_states(&self) -> usize {
        self.odd_matrix.size()
    }

    pub fn odd_index(&self) -> usize {
        self.odd_index
    }

    pub fn odd_matrix(&self) -> &TransitionMatrix {
        &self.odd_matrix
    }

    pub fn common_matrix(&self) -> &TransitionMatrix {
        &self.common_matrix
    }

    pub fn initial(&self) -> &InitialDistribution {
        &self.initial
    }

    /// True law of `arm`.
    pub fn matrix_of(&self, arm: usize) -> &TransitionMatrix {
        if arm == self.odd_index {
            &self.odd_matrix
        } else {
            &self.common_matrix
        }
    }

    /// Same matrices with a different odd arm.
    pub fn with_odd_index(&self, odd_index: usize) -> Result<Self, ConfigError> {
        Self::new(
            self.num_arms,
            odd_index,
            self.odd_matrix.clone(),
            self.common_matrix.clone(),
            Some(self.initial.clone()),
        )
    }
}

/// What a single pull revealed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observation {
    pub arm: usize,
    /// State before the transition; `None` on the arm's first observation.
    pub prev: Option<usize>,
    pub state: usize,
}

/// The environment side of a trial: true dynamics and per-arm frozen states.
#[derive(Debug, Clone)]
pub struct BanditEnv {
    config: ArmConfiguration,
    current: Vec<Option<usize>>,
    pull_counts: Vec<u64>,
    arm_rngs: Vec<ChaCha8Rng>,
    steps: u64,
}

impl BanditEnv {
    /// Arm `a` draws from its own substream `(seed, a)`, so its trajectory
    /// does not depend on how pulls of other arms are interleaved.
    pub fn new(config: ArmConfiguration, seed: u64) -> Self {
        let k = config.num_arms();
        Self {
            current: vec![None; k],
            pull_counts: vec![0; k],
            arm_rngs: (0..k as u64).map(|a| seeding::stream(seed, a)).collect(),
            steps: 0,
            config,
        }
    }

    pub fn config(&self) -> &ArmConfiguration {
        &self.config
    }

    pub fn pull_counts(&self) -> &[u64] {
        &self.pull_counts
    }

    /// Number of pulls made so far (`n + 1` after the pull at time `n`).
    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn current_state(&self, arm: usize) -> Option<usize> {
        self.current[arm]
    }

    pub fn pull(&mut self, arm: usize) -> Observation {
        assert!(arm < self.config.num_arms(), "arm {arm} out of range");
        let rng = &mut self.arm_rngs[arm];
        let prev = self.current[arm];
        let state = match prev {
            None => sample_index(self.config.initial().probs(), rng),
            Some(s) => sample_step(self.config.matrix_of(arm), s, rng),
        };
        self.current[arm] = Some(state);
        self.pull_counts[arm] += 1;
        self.steps += 1;
        Observation { arm, prev, state }
    }
}

/// Per-arm counters `N_a(n)`, `N_a(n, i)` and `N_a(n, i, j)`, plus their sums
/// over arms so pooled counts excluding one arm are a subtraction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountTables {
    num_arms: usize,
    num_states: usize,
    pulls: Vec<u64>,
    exits: Vec<u64>,
    transitions: Vec<u64>,
    total_exits: Vec<u64>,
    total_transitions: Vec<u64>,
    total_pulls: u64,
}

impl CountTables {
    pub fn new(num_arms: usize, num_states: usize) -> Self {
        Self {
            num_arms,
            num_states,
            pulls: vec![0; num_arms],
            exits: vec![0; num_arms * num_states],
            transitions: vec![0; num_arms * num_states * num_states],
            total_exits: vec![0; num_states],
            total_transitions: vec![0; num_states * num_states],
            total_pulls: 0,
        }
    }

    pub fn num_arms(&self) -> usize {
        self.num_arms
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    /// `sum_a N_a(n)`, i.e. `n + 1`.
    pub fn total_pulls(&self) -> u64 {
        self.total_pulls
    }

    /// `N_a(n)`.
    pub fn pulls(&self, arm: usize) -> u64 {
        self.pulls[arm]
    }

    /// `N_a(n, i)`.
    pub fn exits(&self, arm: usize, i: usize) -> u64 {
        self.exits[arm * self.num_states + i]
    }

    /// `N_a(n, i, j)`.
    pub fn transitions(&self, arm: usize, i: usize, j: usize) -> u64 {
        self.transitions[(arm * self.num_states + i) * self.num_states + j]
    }

    /// `sum_{a != h} N_a(n, i)`.
    pub fn pooled_exits(&self, excluded: usize, i: usize) -> u64 {
        self.total_exits[i] - self.exits(excluded, i)
    }

    /// `sum_{a != h} N_a(n, i, j)`.
    pub fn pooled_transitions(&self, excluded: usize, i: usize, j: usize) -> u64 {
        self.total_transitions[i * self.num_states + j] - self.transitions(excluded, i, j)
    }

    /// Records one observation of `arm`; `prev` is `None` on its first pull.
    pub fn update(&mut self, arm: usize, prev: Option<usize>, new: usize) {
        let s = self.num_states;
        debug_assert_eq!(prev.is_none(), self.pulls[arm] == 0);
        self.pulls[arm] += 1;
        self.total_pulls += 1;
        if let Some(i) = prev {
            self.exits[arm * s + i] += 1;
            self.transitions[(arm * s + i) * s + new] += 1;
            self.total_exits[i] += 1;
            self.total_transitions[i * s + new] += 1;
        }
    }

    pub fn record(&mut self, obs: &Observation) {
        self.update(obs.arm, obs.prev, obs.state);
    }

    /// Checks the three counting identities; returns the first violation.
    pub fn check_identities(&self) -> Result<(), String> {
        let s = self.num_states;
        for a in 0..self.num_arms {
            let mut from_exits = 0;
            for i in 0..s {
                let row: u64 = (0..s).map(|j| self.transitions(a, i, j)).sum();
                if row != self.exits(a, i) {
                    return Err(format!(
                        "arm {a} state {i}: sum_j N(i,j) = {row} != N(i) = {}",
                        self.exits(a, i)
                    ));
                }
                from_exits += self.exits(a, i);
            }
            if from_exits != self.pulls[a].saturating_sub(1) {
                return Err(format!(
                    "arm {a}: sum_i N(i) = {from_exits}, pulls = {}",
                    self.pulls[a]
                ));
            }
        }
        let pulls: u64 = self.pulls.iter().sum();
        if pulls != self.total_pulls {
            return Err(format!("sum_a N_a = {pulls} != {}", self.total_pulls));
        }
        Ok(())
    }
}

/// Functional form of [`CountTables::update`].
pub fn update_counts(
    mut tables: CountTables,
    arm: usize,
    prev: Option<usize>,
    new: usize,
) -> CountTables {
    tables.update(arm, prev, new);
    tables
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn deterministic_config() -> ArmConfiguration {
        // Deterministic, non-ergodic dynamics: arm 0 alternates, the others stay put.
        let odd = TransitionMatrix::stochastic_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let common =
            TransitionMatrix::stochastic_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let nu = InitialDistribution::new(vec![1.0, 0.0]).unwrap();
        ArmConfiguration::new(3, 0, odd, common, Some(nu)).unwrap()
    }

    fn fig1_config() -> ArmConfiguration {
        let p1 = TransitionMatrix::new(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let p2 = TransitionMatrix::new(vec![vec![0.1, 0.9], vec![0.9, 0.1]]).unwrap();
        ArmConfiguration::new(8, 0, p1, p2, None).unwrap()
    }

    #[test]
    fn config_validation() {
        let p = TransitionMatrix::new(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let q = TransitionMatrix::new(vec![vec![0.1, 0.9], vec![0.9, 0.1]]).unwrap();
        assert_eq!(
            ArmConfiguration::new(8, 0, p.clone(), p.clone(), None),
            Err(ConfigError::IdenticalMatrices)
        );
        assert_eq!(
            ArmConfiguration::new(2, 0, p.clone(), q.clone(), None),
            Err(ConfigError::TooFewArms(2))
        );
        assert!(matches!(
            ArmConfiguration::new(3, 3, p.clone(), q.clone(), None),
            Err(ConfigError::OddIndexOutOfRange { .. })
        ));
        let nu3 = InitialDistribution::new(vec![0.2, 0.3, 0.5]).unwrap();
        assert!(matches!(
            ArmConfiguration::new(3, 0, p, q, Some(nu3)),
            Err(ConfigError::InitialSize { .. })
        ));
    }

    #[test]
    fn fresh_env_has_zero_counts() {
        let env = BanditEnv::new(fig1_config(), 7);
        assert!(env.pull_counts().iter().all(|&c| c == 0));
        assert_eq!(env.steps(), 0);
        assert!((0..8).all(|a| env.current_state(a).is_none()));
    }

    #[test]
    fn same_seed_same_trajectory() {
        let mut a = BanditEnv::new(fig1_config(), 11);
        let mut b = BanditEnv::new(fig1_config(), 11);
        let mut pick = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let arm = pick.random_range(0..8);
            assert_eq!(a.pull(arm), b.pull(arm));
        }
    }

    #[test]
    fn first_pull_draws_from_initial_law() {
        let mut env = BanditEnv::new(deterministic_config(), 1);
        let obs = env.pull(1);
        assert_eq!(
            obs,
            Observation {
                arm: 1,
                prev: None,
                state: 0
            }
        );
        let mut t = CountTables::new(3, 2);
        t.record(&obs);
        assert_eq!(t.exits(1, 0), 0);
        assert_eq!(t.pulls(1), 1);
    }

    #[test]
    fn deterministic_transition_and_freezing() {
        let mut env = BanditEnv::new(deterministic_config(), 1);
        assert_eq!(env.pull(0).state, 0);
        assert_eq!(env.pull(0).state, 1);
        // Interleave: arm 1 does not disturb arm 0's frozen state.
        let mut env = BanditEnv::new(deterministic_config(), 1);
        assert_eq!(env.pull(0).state, 0);
        assert_eq!(env.pull(1).state, 0);
        let obs = env.pull(0);
        assert_eq!(obs.prev, Some(0));
        assert_eq!(obs.state, 1);
    }

    #[test]
    fn counts_for_short_sequence() {
        let mut t = CountTables::new(3, 2);
        t.check_identities().unwrap();
        t = update_counts(t, 0, None, 0);
        t = update_counts(t, 1, None, 0);
        t = update_counts(t, 0, Some(0), 1);
        assert_eq!(t.pulls(0), 2);
        assert_eq!(t.exits(0, 0), 1);
        assert_eq!(t.transitions(0, 0, 1), 1);
        assert_eq!(t.pulls(1), 1);
        assert_eq!(t.total_pulls(), 3);
        t.check_identities().unwrap();
    }

    #[test]
    fn pooled_counts_exclude_one_arm() {
        let mut t = CountTables::new(3, 2);
        for (arm, prev, new) in [
            (0, None, 0),
            (1, None, 0),
            (2, None, 1),
            (1, Some(0), 1),
            (2, Some(1), 1),
            (0, Some(0), 1),
        ] {
            t.update(arm, prev, new);
        }
        assert_eq!(t.pooled_exits(0, 0), 1);
        assert_eq!(t.pooled_exits(0, 1), 1);
        assert_eq!(t.pooled_transitions(1, 0, 1), 1);
        assert_eq!(t.pooled_transitions(2, 0, 1), 2);
    }

    #[test]
    fn random_replay_keeps_identities() {
        let mut env = BanditEnv::new(fig1_config(), 5);
        let mut t = CountTables::new(8, 2);
        let mut pick = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10_000 {
            let obs = env.pull(pick.random_range(0..8));
            t.record(&obs);
            t.check_identities().unwrap();
        }
        assert_eq!(t.total_pulls(), 10_000);
    }
}
