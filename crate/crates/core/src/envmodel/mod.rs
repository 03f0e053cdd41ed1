//! Simulation environment models fitted to brushing data: baseline outcome
//! models, model selection, treatment effect imputation and its check.
//!
//! This module works in `f64` only; it is an offline fitting pipeline whose
//! optimizer and likelihoods gain nothing from a narrower scalar.

pub mod data;
pub mod effects;
pub mod fit;
pub mod optim;
pub mod state;
pub mod surrogate;
pub mod verify;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use data::{read_sessions, read_sessions_csv, write_sessions, IngestReport, ParticipantSeries, SessionRow};
pub use effects::{impute_population_effects, sample_participant_effects, EffectSizeSpec, ParticipantEffects};
pub use fit::{fit_baseline, fit_hurdle, fit_loss, fit_zip, select_model, sigmoid, BaselineModel, FitOptions, ModelClass};
pub use optim::{bfgs, BfgsOptions, Minimum};
pub use state::{EnvContext, FeatVec, Stationarity, STUDY_DAYS, STUDY_POINTS};
pub use verify::{verify_effect_sizes, VerificationReport};

use crate::error::{Error, Result};
use crate::rng::{purpose, stream};
use crate::simenv::ParticipantEnvModel;

/// Both candidate fits for one participant and the selected class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantFit {
    pub id: String,
    pub zip: BaselineModel,
    /// Absent when the participant has fewer than two non-zero sessions.
    pub hurdle: Option<BaselineModel>,
    pub loss_zip: f64,
    pub loss_hurdle: Option<f64>,
    pub selected: ModelClass,
}

impl ParticipantFit {
    pub fn selected_model(&self) -> &BaselineModel {
        match (self.selected, &self.hurdle) {
            (ModelClass::Hurdle, Some(h)) => h,
            _ => &self.zip,
        }
    }
}

/// Fits both classes and selects one. A participant whose data cannot
/// support the hurdle model keeps the zero-inflated Poisson fit.
pub fn fit_participant<R: Rng + ?Sized>(
    series: &ParticipantSeries,
    stat: Stationarity,
    opts: &FitOptions,
    rng: &mut R,
) -> Result<ParticipantFit> {
    let xs = series.design(stat);
    let ys = &series.oscb;
    let zip = fit_zip(&xs, ys, opts, rng)?;
    let hurdle = match fit_hurdle(&xs, ys, opts, rng) {
        Ok(h) => Some(h),
        Err(Error::Data(_)) => None,
        Err(e) => return Err(e),
    };
    let loss_zip = fit_loss(&zip, &xs, ys);
    let loss_hurdle = hurdle.as_ref().map(|h| fit_loss(h, &xs, ys));
    let selected = match &hurdle {
        Some(h) => select_model(&xs, ys, &zip, h),
        None => ModelClass::Zip,
    };
    Ok(ParticipantFit { id: series.id.clone(), zip, hurdle, loss_zip, loss_hurdle, selected })
}

/// Fitted environment for one stationarity assumption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvBundle {
    pub stationarity: Stationarity,
    pub participants: Vec<ParticipantFit>,
}

impl EnvBundle {
    /// Effect distribution for a class, from every participant's fit of that class.
    pub fn effect_spec(&self, class: ModelClass, zeta: f64) -> Option<EffectSizeSpec> {
        let fits: Vec<&BaselineModel> = self
            .participants
            .iter()
            .filter_map(|p| match class {
                ModelClass::Zip => Some(&p.zip),
                ModelClass::Hurdle => p.hurdle.as_ref(),
            })
            .collect();
        (!fits.is_empty()).then(|| impute_population_effects(&fits, self.stationarity, zeta))
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let hurdle = self.participants.iter().filter(|p| p.selected == ModelClass::Hurdle).count();
        (self.participants.len() - hurdle, hurdle)
    }

    /// Simulated participant built from fitted participant `index` with freshly drawn effects.
    pub fn instantiate<R: Rng + ?Sized>(&self, index: usize, specs: &EffectSpecs, rng: &mut R) -> ParticipantEnvModel {
        let fit = &self.participants[index];
        let baseline = fit.selected_model().clone();
        let spec = specs.for_class(baseline.class());
        ParticipantEnvModel {
            id: fit.id.clone(),
            stationarity: self.stationarity,
            effects: sample_participant_effects(spec, rng),
            baseline,
        }
    }

    pub fn effect_specs(&self, zeta: f64) -> EffectSpecs {
        let zip = self.effect_spec(ModelClass::Zip, zeta).expect("every participant has a ZIP fit");
        let hurdle = self.effect_spec(ModelClass::Hurdle, zeta);
        EffectSpecs { zip, hurdle }
    }
}

/// Effect distributions for both classes at one effect scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectSpecs {
    pub zip: EffectSizeSpec,
    pub hurdle: Option<EffectSizeSpec>,
}

impl EffectSpecs {
    pub fn for_class(&self, class: ModelClass) -> &EffectSizeSpec {
        match (class, &self.hurdle) {
            (ModelClass::Hurdle, Some(h)) => h,
            _ => &self.zip,
        }
    }
}

/// Fits every participant in parallel. Each participant's restarts draw
/// from a stream keyed by its position, so results do not depend on the
/// thread count.
pub fn fit_population(series: &[ParticipantSeries], stat: Stationarity, opts: &FitOptions, seed: u64) -> Result<EnvBundle> {
    if series.is_empty() {
        return Err(Error::Data("no participants to fit".into()));
    }
    let participants = series
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut rng = stream(seed, &[purpose::FIT, stat as u64, i as u64]);
            fit_participant(s, stat, opts, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EnvBundle { stationarity: stat, participants })
}
