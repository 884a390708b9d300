//! JSON experiment documents.

use std::path::PathBuf;

use serde::Deserialize;

use super::ExperimentError;
use crate::bandit::ArmConfiguration;
use crate::markov::{InitialDistribution, TransitionMatrix};
use crate::policy::{Mode, PolicyParams, DEFAULT_MAX_STEPS};

const FIG1_PRESET: &str = include_str!("../../presets/fig1.json");

/// Names accepted by `--preset`.
pub const PRESETS: &[&str] = &["fig1"];

pub fn preset(name: &str) -> Option<&'static str> {
    match name {
        "fig1" => Some(FIG1_PRESET),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub threshold_l: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub arms: ArmConfiguration,
    /// Sweep points in output order: `delta` outer, `L` inner.
    pub points: Vec<SweepPoint>,
    pub trials: u64,
    pub seed: u64,
    pub modes: Vec<Mode>,
    pub parallelism: usize,
    pub output: Option<PathBuf>,
    pub max_steps: u64,
    pub recompute_every: u64,
}

impl ExperimentConfig {
    pub fn policy_params(&self, point: &SweepPoint) -> PolicyParams {
        PolicyParams {
            threshold_l: point.threshold_l,
            delta: point.delta,
            max_steps: self.max_steps,
            recompute_every: self.recompute_every,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawArms {
    #[serde(rename = "K")]
    k: usize,
    h: usize,
    #[serde(rename = "P1")]
    p1: Vec<Vec<f64>>,
    #[serde(rename = "P2")]
    p2: Vec<Vec<f64>>,
    nu: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    #[serde(rename = "L")]
    l: Vec<f64>,
    delta: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum RawMode {
    Adaptive,
    Known,
    Both,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    arms: RawArms,
    sweep: RawSweep,
    trials: u64,
    seed: u64,
    #[serde(default = "default_mode")]
    mode: RawMode,
    #[serde(default = "default_parallelism")]
    parallelism: usize,
    output: Option<PathBuf>,
    max_steps: Option<u64>,
    recompute_every: Option<u64>,
}

#[derive(Debug, Deserialize)]
struct ArmsOnly {
    arms: RawArms,
}

fn default_mode() -> RawMode {
    RawMode::Adaptive
}

fn default_parallelism() -> usize {
    1
}

fn parse_error(e: serde_json::Error) -> ExperimentError {
    ExperimentError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

fn invalid(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Validation(msg.into())
}

fn build_arms(raw: RawArms) -> Result<ArmConfiguration, ExperimentError> {
    let p1 = TransitionMatrix::new(raw.p1).map_err(|e| invalid(format!("arms.P1: {e}")))?;
    let p2 = TransitionMatrix::new(raw.p2).map_err(|e| invalid(format!("arms.P2: {e}")))?;
    let nu = raw
        .nu
        .map(InitialDistribution::new)
        .transpose()
        .map_err(|e| invalid(format!("arms.nu: {e}")))?;
    ArmConfiguration::new(raw.k, raw.h, p1, p2, nu).map_err(|e| invalid(format!("arms: {e}")))
}

/// Parses and validates a full experiment document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ExperimentError> {
    let raw: RawConfig = serde_json::from_str(text).map_err(parse_error)?;
    let arms = build_arms(raw.arms)?;
    if raw.sweep.l.is_empty() || raw.sweep.delta.is_empty() {
        return Err(invalid("sweep: L and delta must be non-empty"));
    }
    let mut points = Vec::with_capacity(raw.sweep.l.len() * raw.sweep.delta.len());
    for &delta in &raw.sweep.delta {
        for &threshold_l in &raw.sweep.l {
            PolicyParams::new(threshold_l, delta).map_err(|e| invalid(format!("sweep: {e}")))?;
            points.push(SweepPoint { threshold_l, delta });
        }
    }
    if raw.trials == 0 {
        return Err(invalid("trials must be at least 1"));
    }
    if raw.parallelism == 0 {
        return Err(invalid("parallelism must be at least 1"));
    }
    let max_steps = raw.max_steps.unwrap_or(DEFAULT_MAX_STEPS);
    if max_steps < arms.num_arms() as u64 {
        return Err(invalid("max_steps must cover the round-robin phase"));
    }
    let recompute_every = raw.recompute_every.unwrap_or(1);
    if recompute_every == 0 {
        return Err(invalid("recompute_every must be at least 1"));
    }
    let modes = match raw.mode {
        RawMode::Adaptive => vec![Mode::Adaptive],
        RawMode::Known => vec![Mode::KnownParams],
        RawMode::Both => vec![Mode::Adaptive, Mode::KnownParams],
    };
    Ok(ExperimentConfig {
        arms,
        points,
        trials: raw.trials,
        seed: raw.seed,
        modes,
        parallelism: raw.parallelism,
        output: raw.output,
        max_steps,
        recompute_every,
    })
}

/// Parses only the `arms` section; other fields are ignored.
pub fn parse_arms(text: &str) -> Result<ArmConfiguration, ExperimentError> {
    let raw: ArmsOnly = serde_json::from_str(text).map_err(parse_error)?;
    build_arms(raw.arms)
}

/// `ODDARM_THREADS` wins over the command line, which wins over the document.
pub fn resolve_parallelism(
    from_config: usize,
    from_cli: Option<usize>,
    from_env: Option<&str>,
) -> Result<usize, ExperimentError> {
    let env = from_env
        .map(|v| {
            v.trim()
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| {
                    invalid(format!(
                        "ODDARM_THREADS must be a positive integer, got {v:?}"
                    ))
                })
        })
        .transpose()?;
    let n = env.or(from_cli).unwrap_or(from_config);
    if n == 0 {
        return Err(invalid("parallelism must be at least 1"));
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(extra: &str) -> String {
        format!(
            r#"{{
  "arms": {{"K": 4, "h": 1, "P1": [[0.5, 0.5], [0.5, 0.5]], "P2": [[0.1, 0.9], [0.9, 0.1]]}},
  "sweep": {{"L": [10, 100], "delta": [0.1]}},
  "trials": 5,
  "seed": 1{extra}
}}"#
        )
    }

    #[test]
    fn fig1_preset_parses() {
        let cfg = parse_config(preset("fig1").unwrap()).unwrap();
        assert_eq!(cfg.arms.num_arms(), 8);
        assert_eq!(cfg.arms.odd_index(), 0);
        assert_eq!(
            cfg.arms.odd_matrix().to_rows(),
            vec![vec![0.5, 0.5], vec![0.5, 0.5]]
        );
        assert_eq!(
            cfg.arms.common_matrix().to_rows(),
            vec![vec![0.1, 0.9], vec![0.9, 0.1]]
        );
        let mut deltas: Vec<f64> = cfg.points.iter().map(|p| p.delta).collect();
        deltas.dedup();
        assert_eq!(deltas, vec![0.01, 0.1, 0.25]);
        assert_eq!(cfg.points.len(), 27);
        assert!((cfg.points[0].threshold_l - 10.0).abs() < 1e-9);
        assert!((cfg.points[8].threshold_l - 1e5).abs() < 1e-6);
        assert_eq!(cfg.modes, vec![Mode::Adaptive, Mode::KnownParams]);
        assert_eq!(cfg.trials, 100);
    }

    #[test]
    fn minimal_document_defaults() {
        let cfg = parse_config(&doc("")).unwrap();
        assert_eq!(cfg.modes, vec![Mode::Adaptive]);
        assert_eq!(cfg.parallelism, 1);
        assert_eq!(cfg.max_steps, DEFAULT_MAX_STEPS);
        assert_eq!(cfg.recompute_every, 1);
        assert_eq!(cfg.output, None);
    }

    #[test]
    fn identical_matrices_rejected() {
        let text = doc("").replace("[[0.1, 0.9], [0.9, 0.1]]", "[[0.5, 0.5], [0.5, 0.5]]");
        assert!(matches!(
            parse_config(&text),
            Err(ExperimentError::Validation(_))
        ));
    }

    #[test]
    fn delta_one_rejected() {
        let text = doc("").replace("[0.1]", "[1.0]");
        assert!(matches!(
            parse_config(&text),
            Err(ExperimentError::Validation(_))
        ));
    }

    #[test]
    fn bad_values_rejected() {
        for extra in [r#", "mode": "sometimes""#, r#", "bogus": 1"#] {
            assert!(matches!(
                parse_config(&doc(extra)),
                Err(ExperimentError::Parse { .. })
            ));
        }
        for text in [
            doc("").replace("\"trials\": 5", "\"trials\": 0"),
            doc(", \"parallelism\": 0"),
            doc("").replace("[10, 100]", "[0.5]"),
            doc("").replace("\"h\": 1", "\"h\": 4"),
            doc("").replace("[[0.1, 0.9], [0.9, 0.1]]", "[[0.0, 1.0], [1.0, 0.0]]"),
        ] {
            assert!(
                matches!(parse_config(&text), Err(ExperimentError::Validation(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn parse_errors_carry_location() {
        match parse_config("{\n  \"arms\": 3\n}") {
            Err(ExperimentError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn arms_only_ignores_other_fields() {
        let arms = parse_arms(&doc(", \"bogus\": 1")).unwrap();
        assert_eq!(arms.num_arms(), 4);
    }

    #[test]
    fn parallelism_precedence() {
        assert_eq!(resolve_parallelism(2, None, None).unwrap(), 2);
        assert_eq!(resolve_parallelism(2, Some(3), None).unwrap(), 3);
        assert_eq!(resolve_parallelism(2, Some(3), Some("5")).unwrap(), 5);
        assert!(resolve_parallelism(2, None, Some("zero")).is_err());
        assert!(resolve_parallelism(2, None, Some("0")).is_err());
    }
}
