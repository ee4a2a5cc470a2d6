//! Declarative experiment configs: one JSON file per run, unknown keys
//! rejected, every parameter defaulted to the device values.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

/// Top-level config file shape.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: String,
    #[serde(default)]
    parameters: serde_json::Value,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    output: Option<PathBuf>,
}

/// A parsed run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub output: Option<PathBuf>,
}

/// Experiment selector with its parameter table.
#[derive(Debug, Clone)]
pub enum Experiment {
    Fringe(FringeParams),
    Backaction(BackactionParams),
    WeakValue(WeakValueParams),
    Readout(ReadoutParams),
    Coherence(CoherenceParams),
    Feedback(FeedbackParams),
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Fringe(_) => "fringe",
            Experiment::Backaction(_) => "backaction",
            Experiment::WeakValue(_) => "weakvalue",
            Experiment::Readout(_) => "readout",
            Experiment::Coherence(_) => "coherence",
            Experiment::Feedback(_) => "feedback",
        }
    }

    /// Parameter table with defaults filled in, for the manifest echo.
    pub fn parameters_json(&self) -> Result<serde_json::Value> {
        Ok(match self {
            Experiment::Fringe(p) => serde_json::to_value(p)?,
            Experiment::Backaction(p) => serde_json::to_value(p)?,
            Experiment::WeakValue(p) => serde_json::to_value(p)?,
            Experiment::Readout(p) => serde_json::to_value(p)?,
            Experiment::Coherence(p) => serde_json::to_value(p)?,
            Experiment::Feedback(p) => serde_json::to_value(p)?,
        })
    }

    /// Replace every Monte Carlo trial count (used by --trials-override).
    pub fn override_trials(&mut self, trials: u64) {
        match self {
            Experiment::Fringe(_) | Experiment::Backaction(_) | Experiment::WeakValue(_) => {}
            Experiment::Readout(p) => p.trials = trials,
            Experiment::Coherence(p) => p.trials = trials,
            Experiment::Feedback(p) => p.trials = trials,
        }
    }
}

/// Synthetic interaction-time fringe scan plus model fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FringeParams {
    /// Scan end, microseconds (start is 0).
    pub tau_max_us: f64,
    pub points: usize,
    pub shots: u64,
    pub baseline: f64,
    pub amplitude: f64,
    /// Oscillation frequency, units of 2 pi MHz.
    pub coupling_mhz: f64,
    pub phase: f64,
    pub t2_star_us: f64,
}

impl Default for FringeParams {
    fn default() -> Self {
        Self {
            tau_max_us: 4.0,
            points: 100,
            shots: 500,
            baseline: 0.5,
            amplitude: 0.5,
            coupling_mhz: 2.184,
            phase: 0.0,
            t2_star_us: 1.35,
        }
    }
}

/// Conditional and unconditional measurement backaction on |x>.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackactionParams {
    pub thetas_deg: Vec<f64>,
}

impl Default for BackactionParams {
    fn default() -> Self {
        Self { thetas_deg: vec![5.0, 30.0, 60.0, 90.0] }
    }
}

/// Weak-value sweep over the analyzer angle.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeakValueParams {
    pub theta_deg: f64,
    pub phi_max_deg: f64,
    pub phi_step_deg: f64,
}

impl Default for WeakValueParams {
    fn default() -> Self {
        Self { theta_deg: 5.0, phi_max_deg: 85.0, phi_step_deg: 5.0 }
    }
}

/// Readout fidelity table for the calibrated model.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReadoutParams {
    pub trials: u64,
}

impl Default for ReadoutParams {
    fn default() -> Self {
        Self { trials: 100_000 }
    }
}

/// System-coherence decay versus readout duration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoherenceParams {
    pub times_us: Vec<f64>,
    pub trials: u64,
}

impl Default for CoherenceParams {
    fn default() -> Self {
        Self {
            times_us: (0..=20).map(|i| 5.0 * i as f64).collect(),
            trials: 20_000,
        }
    }
}

/// Adaptive protocol versus post-selection across readout budgets.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeedbackParams {
    pub theta1_deg: f64,
    pub budgets_us: Vec<f64>,
    pub trials: u64,
}

impl Default for FeedbackParams {
    fn default() -> Self {
        Self {
            theta1_deg: 30.0,
            budgets_us: vec![1.0, 2.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 40.0, 50.0, 75.0, 100.0],
            trials: 100_000,
        }
    }
}

/// Load and validate a config file.
pub fn load(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let raw: RawConfig = serde_json::from_str(&text)
        .with_context(|| format!("parsing config {}", path.display()))?;
    let params = match raw.parameters {
        serde_json::Value::Null => serde_json::Value::Object(Default::default()),
        v @ serde_json::Value::Object(_) => v,
        other => bail!("\"parameters\" must be an object, found {other}"),
    };
    let experiment = match raw.experiment.as_str() {
        "fringe" => Experiment::Fringe(parse_params(params)?),
        "backaction" => Experiment::Backaction(parse_params(params)?),
        "weakvalue" => Experiment::WeakValue(parse_params(params)?),
        "readout" => Experiment::Readout(parse_params(params)?),
        "coherence" => Experiment::Coherence(parse_params(params)?),
        "feedback" => Experiment::Feedback(parse_params(params)?),
        other => bail!(
            "unknown experiment {other:?}; expected one of fringe, backaction, weakvalue, \
             readout, coherence, feedback"
        ),
    };
    Ok(RunConfig { experiment, seed: raw.seed, output: raw.output })
}

fn parse_params<T: for<'de> Deserialize<'de>>(v: serde_json::Value) -> Result<T> {
    serde_json::from_value(v).context("invalid \"parameters\" table")
}
