#![allow(dead_code)]

use std::sync::OnceLock;

use oralytics_core::envmodel::{surrogate, FitOptions};
use oralytics_core::harness::Environment;

pub const DATA_SEED: u64 = 20_240_901;
pub const FIT_SEED: u64 = 7;

/// Environment fitted once per test binary on the synthetic study data.
pub fn environment() -> &'static Environment {
    static ENV: OnceLock<Environment> = OnceLock::new();
    ENV.get_or_init(|| {
        let series = surrogate::generate(surrogate::SURROGATE_PARTICIPANTS, DATA_SEED);
        Environment::fit(&series, &FitOptions::default(), FIT_SEED).expect("fit surrogate environment")
    })
}
