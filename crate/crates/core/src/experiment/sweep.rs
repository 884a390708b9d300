//! Monte Carlo sweep: independent seeded trials per `(point, mode)` and an
//! ordered reduction into one row each.

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, SweepPoint};
use super::ExperimentError;
use crate::bandit::BanditEnv;
use crate::bound::{solve_dstar, HardnessSolution};
use crate::policy::{run_to_stop, Mode, PolicyError};
use crate::seeding::derive_seed;

/// How trials are scheduled. Results do not depend on the choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Worker pool with this many threads. Without the `parallel` feature
    /// this runs sequentially.
    Parallel(usize),
}

impl Execution {
    pub fn from_parallelism(n: usize) -> Self {
        if n <= 1 {
            Execution::Sequential
        } else {
            Execution::Parallel(n)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialOutcome {
    Stopped {
        stopping_time: u64,
        declared: usize,
        correct: bool,
    },
    CapHit {
        steps: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialRecord {
    pub point: usize,
    pub mode: Mode,
    pub trial: u64,
    pub seed: u64,
    pub outcome: TrialOutcome,
}

/// One aggregated output line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub mode: Mode,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "log_L")]
    pub log_l: f64,
    pub delta: f64,
    pub trials: u64,
    /// Mean and standard error over trials that stopped.
    pub mean_tau: f64,
    pub stderr_tau: f64,
    /// Wrong declarations among trials that stopped.
    pub error_rate: f64,
    pub cap_hits: u64,
    pub d_star: f64,
    pub d_star_delta: f64,
    pub inv_d_star: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Per-trial outcomes in canonical order.
    pub records: Vec<TrialRecord>,
}

impl SweepReport {
    pub fn cap_hits(&self) -> u64 {
        self.rows.iter().map(|r| r.cap_hits).sum()
    }
}

/// Trial seeds depend on the point and trial index only, so every mode sees
/// the same environment draws.
pub fn trial_seed(base: u64, point: usize, trial: u64) -> u64 {
    derive_seed(base, &[point as u64, trial])
}

pub fn run_trial(
    config: &ExperimentConfig,
    point: usize,
    mode: Mode,
    trial: u64,
) -> Result<TrialRecord, ExperimentError> {
    let seed = trial_seed(config.seed, point, trial);
    let params = config.policy_params(&config.points[point]);
    let mut env = BanditEnv::new(config.arms.clone(), seed);
    let outcome = match run_to_stop(&mut env, params, mode, seed) {
        Ok(r) => TrialOutcome::Stopped {
            stopping_time: r.stopping_time,
            declared: r.declared,
            correct: r.correct,
        },
        Err(PolicyError::StepCapExceeded(steps)) => TrialOutcome::CapHit { steps },
        Err(e) => return Err(e.into()),
    };
    Ok(TrialRecord {
        point,
        mode,
        trial,
        seed,
        outcome,
    })
}

/// Mean, standard error and error rate of the stopped trials in `records`.
pub fn aggregate(
    point: &SweepPoint,
    mode: Mode,
    records: &[TrialRecord],
    hardness: &HardnessSolution,
) -> Result<SweepRow, ExperimentError> {
    let mut taus = Vec::with_capacity(records.len());
    let mut wrong = 0u64;
    let mut cap_hits = 0u64;
    for r in records {
        match r.outcome {
            TrialOutcome::Stopped {
                stopping_time,
                correct,
                ..
            } => {
                taus.push(stopping_time as f64);
                wrong += u64::from(!correct);
            }
            TrialOutcome::CapHit { .. } => cap_hits += 1,
        }
    }
    let t = taus.len() as f64;
    let mean = taus.iter().sum::<f64>() / t;
    let stderr = match taus.len() {
        0 => f64::NAN,
        1 => 0.0,
        _ => (taus.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (t - 1.0)).sqrt() / t.sqrt(),
    };
    Ok(SweepRow {
        mode,
        l: point.threshold_l,
        log_l: point.threshold_l.ln(),
        delta: point.delta,
        trials: records.len() as u64,
        mean_tau: mean,
        stderr_tau: stderr,
        error_rate: wrong as f64 / t,
        cap_hits,
        d_star: hardness.d_star,
        d_star_delta: hardness.d_star_delta(point.delta)?,
        inv_d_star: 1.0 / hardness.d_star,
    })
}

#[cfg(feature = "parallel")]
fn execute<T, R, F>(jobs: &[T], exec: Execution, f: F) -> Result<Vec<R>, ExperimentError>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R, ExperimentError> + Sync + Send,
{
    use rayon::prelude::*;
    match exec {
        Execution::Sequential => jobs.iter().map(f).collect(),
        Execution::Parallel(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| ExperimentError::ThreadPool(e.to_string()))?
            .install(|| jobs.par_iter().map(f).collect()),
    }
}

#[cfg(not(feature = "parallel"))]
fn execute<T, R, F>(jobs: &[T], _exec: Execution, f: F) -> Result<Vec<R>, ExperimentError>
where
    F: Fn(&T) -> Result<R, ExperimentError>,
{
    jobs.iter().map(f).collect()
}

/// Runs every trial with the configured parallelism.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepReport, ExperimentError> {
    run_sweep_with(config, Execution::from_parallelism(config.parallelism))
}

pub fn run_sweep_with(
    config: &ExperimentConfig,
    exec: Execution,
) -> Result<SweepReport, ExperimentError> {
    let arms = &config.arms;
    let hardness = solve_dstar(
        arms.odd_matrix(),
        arms.common_matrix(),
        arms.num_arms(),
        arms.odd_index(),
    )?;
    let groups: Vec<(usize, Mode)> = (0..config.points.len())
        .flat_map(|p| config.modes.iter().map(move |&m| (p, m)))
        .collect();
    let jobs: Vec<(usize, Mode, u64)> = groups
        .iter()
        .flat_map(|&(p, m)| (0..config.trials).map(move |t| (p, m, t)))
        .collect();
    let records = execute(&jobs, exec, |&(p, m, t)| run_trial(config, p, m, t))?;
    let rows = groups
        .iter()
        .zip(records.chunks(config.trials as usize))
        .map(|(&(p, m), chunk)| aggregate(&config.points[p], m, chunk, &hardness))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SweepReport { rows, records })
}
