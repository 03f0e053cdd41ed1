use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::envmodel::Stationarity;
use crate::error::{Error, Result};
use crate::policy::{SmoothingParams, SIGMA_RRV};
use crate::reward::CostParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    /// One posterior shared by every participant.
    Full,
    /// One posterior per participant.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cadence {
    Daily,
    Weekly,
}

/// Smoothing slope `b = 20 / σ` (gentle) or `200 / σ` (steep).
pub const SLOPE_GENTLE: f64 = 20.0 / SIGMA_RRV;
pub const SLOPE_STEEP: f64 = 200.0 / SIGMA_RRV;

/// One algorithm configuration under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub pooling: Pooling,
    pub cadence: Cadence,
    pub slope: f64,
}

impl Candidate {
    /// The eight pooling × cadence × slope combinations.
    pub fn all() -> Vec<Candidate> {
        let mut out = Vec::with_capacity(8);
        for slope in [SLOPE_GENTLE, SLOPE_STEEP] {
            for cadence in [Cadence::Weekly, Cadence::Daily] {
                for pooling in [Pooling::Full, Pooling::None] {
                    out.push(Candidate { pooling, cadence, slope });
                }
            }
        }
        out
    }

    /// The configuration chosen for deployment.
    pub fn finalized() -> Self {
        Candidate { pooling: Pooling::Full, cadence: Cadence::Weekly, slope: SLOPE_STEEP }
    }

    pub fn label(&self) -> String {
        self.to_string()
    }
}

fn slope_label(b: f64) -> String {
    if (b - SLOPE_GENTLE).abs() < 1e-12 {
        "0.515".into()
    } else if (b - SLOPE_STEEP).abs() < 1e-12 {
        "5.15".into()
    } else {
        format!("{b}")
    }
}

impl fmt::Display for Candidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cadence = match self.cadence {
            Cadence::Daily => "daily",
            Cadence::Weekly => "weekly",
        };
        let pooling = match self.pooling {
            Pooling::Full => "full",
            Pooling::None => "none",
        };
        write!(f, "b{}-{cadence}-{pooling}", slope_label(self.slope))
    }
}

impl FromStr for Candidate {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let err = || {
            Error::Config(format!(
                "unknown candidate '{s}'; expected b<slope>-<daily|weekly>-<full|none>, one of {}",
                Candidate::all().iter().map(|c| c.label()).collect::<Vec<_>>().join(", ")
            ))
        };
        let parts: Vec<&str> = s.trim().split('-').collect();
        let [slope, cadence, pooling] = parts.as_slice() else { return Err(err()) };
        let slope = match slope.to_ascii_lowercase().trim_start_matches('b') {
            "0.515" => SLOPE_GENTLE,
            "5.15" => SLOPE_STEEP,
            other => other.parse::<f64>().ok().filter(|b| *b > 0.0 && b.is_finite()).ok_or_else(err)?,
        };
        let cadence = match cadence.to_ascii_lowercase().as_str() {
            "daily" => Cadence::Daily,
            "weekly" => Cadence::Weekly,
            _ => return Err(err()),
        };
        let pooling = match pooling.to_ascii_lowercase().as_str() {
            "full" => Pooling::Full,
            "none" | "no" => Pooling::None,
            _ => return Err(err()),
        };
        Ok(Candidate { pooling, cadence, slope })
    }
}

/// Robustness to habituation: effects shrink by `E` each time the dosage criterion holds.
pub const RESPONSIVITY_LEVELS: [(f64, &str); 3] = [(0.0, "LOW_R"), (0.5, "MED_R"), (0.8, "HIGH_R")];
/// Effect-size scales: smaller (1/8) and small (1/4).
pub const EFFECT_SCALES: [(f64, &str); 2] = [(0.125, "z8"), (0.25, "z4")];

/// One simulation environment variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvVariant {
    pub stationarity: Stationarity,
    pub e: f64,
    pub zeta: f64,
}

impl EnvVariant {
    /// The twelve variants, smaller effect size first.
    pub fn all() -> Vec<EnvVariant> {
        let mut out = Vec::with_capacity(12);
        for (zeta, _) in EFFECT_SCALES {
            for stationarity in [Stationarity::Stationary, Stationarity::NonStationary] {
                for (e, _) in RESPONSIVITY_LEVELS {
                    out.push(EnvVariant { stationarity, e, zeta });
                }
            }
        }
        out
    }

    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for EnvVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = RESPONSIVITY_LEVELS.iter().find(|(e, _)| *e == self.e).map(|(_, l)| l.to_string());
        let z = EFFECT_SCALES.iter().find(|(z, _)| *z == self.zeta).map(|(_, l)| l.to_string());
        write!(
            f,
            "{}_{}-{}",
            self.stationarity,
            r.unwrap_or_else(|| format!("E{}", self.e)),
            z.unwrap_or_else(|| format!("zeta{}", self.zeta))
        )
    }
}

impl FromStr for EnvVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let err = || {
            Error::Config(format!(
                "unknown variant '{s}'; expected one of {}",
                EnvVariant::all().iter().map(|v| v.label()).collect::<Vec<_>>().join(", ")
            ))
        };
        let upper = s.trim().to_ascii_uppercase();
        let (base, scale) = upper.rsplit_once('-').ok_or_else(err)?;
        let zeta = EFFECT_SCALES.iter().find(|(_, l)| l.eq_ignore_ascii_case(scale)).map(|(z, _)| *z).ok_or_else(err)?;
        let (stat, level) = base.rsplit_once('_').and_then(|(rest, r)| Some((rest.rsplit_once('_')?, r))).ok_or_else(err)?;
        let level = format!("{}_{}", stat.1, level);
        let stationarity: Stationarity = stat.0.parse().map_err(|_| err())?;
        let e = RESPONSIVITY_LEVELS.iter().find(|(_, l)| *l == level).map(|(e, _)| *e).ok_or_else(err)?;
        Ok(EnvVariant { stationarity, e, zeta })
    }
}

/// Settings shared by every trial of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialSettings {
    pub participants: usize,
    pub cohort_size: usize,
    pub cohort_interval_days: usize,
    /// Participants who must have started before the shared posterior is used.
    pub prior_trigger: usize,
    pub p_app: f64,
    pub xi1: f64,
    pub xi2: f64,
    pub l_min: f64,
    pub l_max: f64,
    /// Execute precomputed schedules instead of the fresh/stale shortcut.
    pub deployment_fidelity: bool,
    /// Forces every selection probability to this value (baseline and dosage checks).
    pub forced_pi: Option<f64>,
    pub keep_logs: bool,
}

impl Default for TrialSettings {
    fn default() -> Self {
        let cost = CostParams::<f64>::default();
        Self {
            participants: 70,
            cohort_size: 5,
            cohort_interval_days: 14,
            prior_trigger: 15,
            p_app: crate::simenv::DEFAULT_P_APP,
            xi1: cost.xi1,
            xi2: cost.xi2,
            l_min: 0.2,
            l_max: 0.8,
            deployment_fidelity: false,
            forced_pi: None,
            keep_logs: false,
        }
    }
}

impl TrialSettings {
    pub fn cost_params(&self) -> CostParams<f64> {
        CostParams::with_xi(self.xi1, self.xi2)
    }

    pub fn smoothing(&self, slope: f64) -> SmoothingParams<f64> {
        SmoothingParams { l_min: self.l_min, l_max: self.l_max, ..SmoothingParams::with_slope(slope) }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.participants == 0 {
            return bad("participants must be positive".into());
        }
        if self.cohort_size == 0 || self.cohort_interval_days == 0 {
            return bad("cohort size and interval must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.p_app) {
            return bad(format!("p_app {} outside [0, 1]", self.p_app));
        }
        if let Some(p) = self.forced_pi {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("forced_pi {p} outside [0, 1]"));
            }
        }
        self.cost_params().validate().map_err(|e| Error::Config(e.to_string()))?;
        self.smoothing(SLOPE_GENTLE).validate()
    }
}
