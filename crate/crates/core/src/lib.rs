//! Odd-arm identification in rested Markov bandits.
//!
//! One arm evolves under `P1`, the rest under a shared `P2`. [`policy`]
//! samples arms until a generalized likelihood ratio statistic crosses
//! `log((K-1) L)` and declares the odd arm; [`bound`] computes the hardness
//! constant governing the expected stopping time as `L` grows.

pub mod bandit;
pub mod bound;
pub mod experiment;
pub mod glr;
pub mod markov;
pub mod policy;
pub mod seeding;

pub use bandit::{ArmConfiguration, BanditEnv, ConfigError, CountTables, Observation};
pub use bound::{dstar_delta, lambda_opt, solve_dstar, BoundError, HardnessSolution};
pub use markov::{InitialDistribution, MarkovError, StationaryDistribution, TransitionMatrix};
pub use policy::{run_to_stop, Mode, PolicyParams, RunResult};
