use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::features::{day_of, time_of_day};

/// Days simulated per participant.
pub const STUDY_DAYS: usize = 70;
/// Decision points per participant.
pub const STUDY_POINTS: usize = 2 * STUDY_DAYS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stationarity {
    Stationary,
    NonStationary,
}

impl Stationarity {
    pub fn baseline_dim(self) -> usize {
        match self {
            Self::Stationary => 5,
            Self::NonStationary => 6,
        }
    }

    pub fn treatment_dim(self) -> usize {
        self.baseline_dim() - 1
    }

    /// Positions in `g` of the non-intercept features that also appear in `h`.
    pub fn treatment_indices(self) -> &'static [usize] {
        match self {
            Self::Stationary => &[0, 1, 2],
            Self::NonStationary => &[0, 1, 2, 4],
        }
    }

    /// Sign of each entry of `h` once effects are drawn.
    pub fn treatment_signs(self) -> &'static [f64] {
        match self {
            Self::Stationary => &[1.0, -1.0, 1.0, 1.0],
            Self::NonStationary => &[1.0, -1.0, 1.0, -1.0, 1.0],
        }
    }
}

impl fmt::Display for Stationarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Stationary => "STAT",
            Self::NonStationary => "NON_STAT",
        })
    }
}

impl FromStr for Stationarity {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_uppercase().as_str() {
            "STAT" | "STATIONARY" => Ok(Self::Stationary),
            "NON_STAT" | "NONSTAT" | "NON_STATIONARY" | "NONSTATIONARY" => Ok(Self::NonStationary),
            _ => Err(format!("unknown stationarity '{s}' (expected STAT or NON_STAT)")),
        }
    }
}

/// Fixed-capacity feature vector; avoids heap traffic in the simulation loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatVec {
    data: [f64; 6],
    len: usize,
}

impl FeatVec {
    pub fn from_slice(v: &[f64]) -> Self {
        let mut data = [0.0; 6];
        data[..v.len()].copy_from_slice(v);
        Self { data, len: v.len() }
    }
}

impl Deref for FeatVec {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.data[..self.len]
    }
}

pub fn normalize_prior_oscb(total: f64) -> f64 {
    (total - 154.0) / 163.0
}

pub fn normalize_day(day: usize) -> f64 {
    (day as f64 - 35.5) / 34.5
}

/// Saturday and Sunday when day 1 is a Monday.
pub fn is_weekend(day: usize) -> bool {
    (day - 1) % 7 >= 5
}

/// Raw environment covariates at one decision point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvContext {
    pub time_of_day: f64,
    pub prior_day_total: f64,
    pub weekend: bool,
    pub prop_nonzero: f64,
    pub day: usize,
}

impl EnvContext {
    /// Covariates at 1-based decision point `t` given outcomes at points
    /// `1..t` (`history[k]` is the outcome at point `k + 1`).
    ///
    /// The prior-day total sums both sessions of the previous day; the
    /// non-zero proportion covers the previous seven days, or as many as
    /// exist. Day 1 has neither and uses zero for both.
    pub fn at(t: usize, history: &[f64]) -> Self {
        let day = day_of(t);
        let (prior_day_total, prop_nonzero) = if day == 1 {
            (0.0, 0.0)
        } else {
            let end = 2 * (day - 1);
            let total = history[end - 2] + history[end - 1];
            let start = end.saturating_sub(14);
            let window = &history[start..end];
            let nz = window.iter().filter(|q| **q > 0.0).count();
            (total, nz as f64 / window.len() as f64)
        };
        Self {
            time_of_day: time_of_day(t) as f64,
            prior_day_total,
            weekend: is_weekend(day),
            prop_nonzero,
            day,
        }
    }

    /// Baseline features `g(S)`.
    pub fn g(&self, stat: Stationarity) -> FeatVec {
        let w = if self.weekend { 1.0 } else { 0.0 };
        let p = normalize_prior_oscb(self.prior_day_total);
        match stat {
            Stationarity::Stationary => FeatVec::from_slice(&[self.time_of_day, p, w, self.prop_nonzero, 1.0]),
            Stationarity::NonStationary => {
                FeatVec::from_slice(&[self.time_of_day, p, w, self.prop_nonzero, normalize_day(self.day), 1.0])
            }
        }
    }

    /// Treatment-interaction features `h(S)`.
    pub fn h(&self, stat: Stationarity) -> FeatVec {
        let w = if self.weekend { 1.0 } else { 0.0 };
        let p = normalize_prior_oscb(self.prior_day_total);
        match stat {
            Stationarity::Stationary => FeatVec::from_slice(&[self.time_of_day, p, w, 1.0]),
            Stationarity::NonStationary => {
                FeatVec::from_slice(&[self.time_of_day, p, w, normalize_day(self.day), 1.0])
            }
        }
    }
}
