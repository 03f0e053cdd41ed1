//! Proximal outcome, burden cost and the surrogate reward the learner trains on.

use serde::{Deserialize, Serialize};

use crate::error::DomainError;
use crate::features::MAX_OSCB;
use crate::scalar::Real;

/// Burden penalties and the dosage thresholds that trigger them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams<T> {
    pub xi1: T,
    pub xi2: T,
    /// Brushing-quality threshold in seconds.
    pub b: T,
    pub a1: T,
    pub a2: T,
}

impl<T: Real> Default for CostParams<T> {
    fn default() -> Self {
        Self::with_xi(T::lit(80.0), T::lit(40.0))
    }
}

impl<T: Real> CostParams<T> {
    pub fn with_xi(xi1: T, xi2: T) -> Self {
        Self { xi1, xi2, b: T::lit(111.0), a1: T::lit(0.5), a2: T::lit(0.8) }
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        DomainError::check("xi1", self.xi1.as_f64(), 0.0, MAX_OSCB)?;
        DomainError::check("xi2", self.xi2.as_f64(), 0.0, MAX_OSCB)?;
        DomainError::check("a1", self.a1.as_f64(), 0.0, self.a2.as_f64())?;
        DomainError::check("a2", self.a2.as_f64(), self.a1.as_f64(), 1.0)?;
        Ok(())
    }

    /// Whether a participant is in the high-dosage regime that both the cost
    /// and the simulated habituation respond to.
    pub fn dosage_criterion(&self, bbar_raw: T, abar_raw: T) -> bool {
        (bbar_raw > self.b && abar_raw > self.a1) || abar_raw > self.a2
    }
}

/// `min(B - P, 180)` clamped below at zero.
pub fn proximal_outcome<T: Real>(brush_seconds: T, pressure_seconds: T) -> Result<T, DomainError> {
    DomainError::check("brushing duration", brush_seconds.as_f64(), 0.0, f64::INFINITY)?;
    DomainError::check("pressure duration", pressure_seconds.as_f64(), 0.0, f64::INFINITY)?;
    Ok((brush_seconds - pressure_seconds).min(T::lit(MAX_OSCB)).max(T::zero()))
}

/// Burden cost of the selected action given raw (unnormalized) averages.
pub fn cost<T: Real>(bbar_raw: T, abar_raw: T, action: u8, p: &CostParams<T>) -> T {
    if action == 0 {
        return T::zero();
    }
    let mut c = T::zero();
    if bbar_raw > p.b && abar_raw > p.a1 {
        c = c + p.xi1;
    }
    if abar_raw > p.a2 {
        c = c + p.xi2;
    }
    c
}

pub fn surrogate_reward<T: Real>(q: T, c: T) -> T {
    q - c
}
