//! TOML run configuration. Every key is optional; defaults are the deployed
//! algorithm's settings.

use std::path::{Path, PathBuf};

use oralytics_core::harness::{Candidate, EnvVariant, TrialSettings};
use oralytics_core::policy::{PILOT_RIDGE_LAMBDA, PILOT_SIGNIFICANCE};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seeds: Seeds,
    pub environment: EnvironmentSection,
    pub candidate: CandidateSection,
    pub reward: RewardSection,
    pub smoothing: SmoothingSection,
    pub trial: TrialSection,
    pub experiment: ExperimentSection,
    pub grid: GridSection,
    pub prior_period: PriorPeriodSection,
    pub prior: PriorSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    /// Master seed for trials.
    pub master: u64,
    /// Seed for environment fitting.
    pub fit: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvironmentSection {
    /// Brushing-session CSV to fit environments from.
    pub data: Option<PathBuf>,
    /// Environment bundle written by `fit-env`; takes precedence over `data`.
    pub bundle: Option<PathBuf>,
    /// Variant labels; empty means all twelve.
    pub variants: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CandidateSection {
    /// Candidates for `run`; empty means all eight.
    pub names: Vec<String>,
    /// Single candidate for `grid` and `compare-prior-period`.
    pub focus: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardSection {
    pub xi1: f64,
    pub xi2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothingSection {
    pub l_min: f64,
    pub l_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialSection {
    pub participants: usize,
    pub cohort_size: usize,
    pub cohort_interval_days: usize,
    pub prior_trigger: usize,
    pub p_app: f64,
    pub deployment_fidelity: bool,
    /// Write every decision to `decisions.csv`.
    pub keep_logs: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub trials: usize,
    /// Worker threads; absent means all available cores.
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    /// Axis values; the grid is their product.
    pub xi1: Vec<f64>,
    pub xi2: Vec<f64>,
    /// Explicit `[xi1, xi2]` cells; when non-empty they replace the axes.
    pub cells: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorPeriodSection {
    pub longer: usize,
    pub shorter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSection {
    /// Prior written by `build-prior`; absent means the canonical prior.
    pub file: Option<PathBuf>,
    pub ridge_lambda: f64,
    pub significance: f64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self { master: 2023, fit: 7 }
    }
}

impl Default for CandidateSection {
    fn default() -> Self {
        Self { names: Vec::new(), focus: Candidate::finalized().label() }
    }
}

impl Default for RewardSection {
    fn default() -> Self {
        let s = TrialSettings::default();
        Self { xi1: s.xi1, xi2: s.xi2 }
    }
}

impl Default for SmoothingSection {
    fn default() -> Self {
        let s = TrialSettings::default();
        Self { l_min: s.l_min, l_max: s.l_max }
    }
}

impl Default for TrialSection {
    fn default() -> Self {
        let s = TrialSettings::default();
        Self {
            participants: s.participants,
            cohort_size: s.cohort_size,
            cohort_interval_days: s.cohort_interval_days,
            prior_trigger: s.prior_trigger,
            p_app: s.p_app,
            deployment_fidelity: s.deployment_fidelity,
            keep_logs: false,
        }
    }
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self { trials: 100, threads: None }
    }
}

impl Default for GridSection {
    fn default() -> Self {
        let axis: Vec<f64> = (0..=9).map(|i| 20.0 * i as f64).collect();
        Self { xi1: axis.clone(), xi2: axis, cells: Vec::new() }
    }
}

impl Default for PriorPeriodSection {
    fn default() -> Self {
        Self { longer: 15, shorter: 5 }
    }
}

impl Default for PriorSection {
    fn default() -> Self {
        Self { file: None, ridge_lambda: PILOT_RIDGE_LAMBDA, significance: PILOT_SIGNIFICANCE }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn settings(&self) -> TrialSettings {
        TrialSettings {
            participants: self.trial.participants,
            cohort_size: self.trial.cohort_size,
            cohort_interval_days: self.trial.cohort_interval_days,
            prior_trigger: self.trial.prior_trigger,
            p_app: self.trial.p_app,
            xi1: self.reward.xi1,
            xi2: self.reward.xi2,
            l_min: self.smoothing.l_min,
            l_max: self.smoothing.l_max,
            deployment_fidelity: self.trial.deployment_fidelity,
            forced_pi: None,
            keep_logs: self.trial.keep_logs,
        }
    }

    pub fn variants(&self) -> Result<Vec<EnvVariant>, CliError> {
        if self.environment.variants.is_empty() {
            return Ok(EnvVariant::all());
        }
        self.environment.variants.iter().map(|v| v.parse().map_err(CliError::from)).collect()
    }

    pub fn candidates(&self) -> Result<Vec<Candidate>, CliError> {
        if self.candidate.names.is_empty() {
            return Ok(Candidate::all());
        }
        self.candidate.names.iter().map(|c| c.parse().map_err(CliError::from)).collect()
    }

    pub fn focus(&self) -> Result<Candidate, CliError> {
        self.candidate.focus.parse().map_err(CliError::from)
    }

    pub fn grid(&self) -> Vec<(f64, f64)> {
        if !self.grid.cells.is_empty() {
            return self.grid.cells.iter().map(|c| (c[0], c[1])).collect();
        }
        self.grid.xi1.iter().flat_map(|&a| self.grid.xi2.iter().map(move |&b| (a, b))).collect()
    }
}
