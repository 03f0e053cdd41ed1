//! Synthetic brushing-session data in the ingestion format.
//!
//! Stands in for the real study data when it is not available. Each
//! participant follows their own zero-inflated model on the environment
//! feature space, with either count-like or squared-normal durations, so
//! both model classes have something to find. Sessions run past day 70 and
//! occasionally repeat within a window, so the output exercises the same
//! ingestion paths as real data. Weight scales are set so the imputed
//! effects come out at a standardized size comparable to published values.

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson, StandardNormal};

use super::data::{read_sessions, write_sessions, ParticipantSeries, SessionRow};
use super::fit::{dot, sigmoid};
use super::state::{EnvContext, Stationarity};
use crate::features::{day_of, time_of_day};
use crate::rng::{purpose, stream};

/// Days of data per synthetic participant; ingestion keeps the first 70.
pub const SURROGATE_DAYS: usize = 80;
/// Participants in the real data set.
pub const SURROGATE_PARTICIPANTS: usize = 31;

/// Latent outcome model of one synthetic participant, on the same feature
/// space the environment fits use.
struct Latent {
    w_gate: [f64; 5],
    nonzero: NonZero,
    pressure_mean: Option<f64>,
}

enum NonZero {
    Count([f64; 5]),
    SquaredNormal([f64; 5], f64),
}

fn draw_latent<R: Rng + ?Sized>(rng: &mut R) -> Latent {
    let n = |rng: &mut R, m: f64, s: f64| Normal::new(m, s).unwrap().sample(rng);
    // Past brushing makes a zero less likely.
    let w_gate = [n(rng, 0.5, 2.0), n(rng, -1.5, 2.0), n(rng, 0.3, 2.0), n(rng, -2.5, 1.5), n(rng, -0.7, 0.8)];
    let nonzero = if rng.random_bool(0.45) {
        let w = [n(rng, 0.0, 2.5), n(rng, 1.5, 2.5), n(rng, 0.0, 2.5), n(rng, 0.5, 2.5), rng.random_range(6.0..10.5)];
        NonZero::SquaredNormal(w, rng.random_range(1.0..3.0))
    } else {
        let w = [n(rng, 0.0, 0.7), n(rng, 0.2, 0.7), n(rng, 0.0, 0.7), n(rng, 0.2, 0.7), rng.random_range(50.0f64..110.0).ln()];
        NonZero::Count(w)
    };
    let pressure_mean = rng.random_bool(0.3).then(|| rng.random_range(5.0..25.0));
    Latent { w_gate, nonzero, pressure_mean }
}

fn participant_sessions<R: Rng + ?Sized>(id: &str, rng: &mut R) -> Vec<SessionRow> {
    let latent = draw_latent(rng);
    let mut history: Vec<f64> = Vec::with_capacity(2 * SURROGATE_DAYS);
    let mut rows = Vec::new();
    for t in 1..=2 * SURROGATE_DAYS {
        let g = EnvContext::at(t, &history).g(Stationarity::Stationary);
        let zero = rng.random_bool(sigmoid(dot(&g, &latent.w_gate)));
        let q = if zero {
            0.0
        } else {
            match &latent.nonzero {
                NonZero::Count(w) => {
                    let y: f64 = Poisson::new(dot(&g, w).clamp(-30.0, 6.0).exp()).unwrap().sample(rng);
                    y
                }
                NonZero::SquaredNormal(w, sd) => {
                    let y = dot(&g, w) + sd * rng.sample::<f64, _>(StandardNormal);
                    y * y
                }
            }
        };
        history.push(q.min(180.0));
        if q == 0.0 {
            // No session in the window.
            continue;
        }
        let press = latent.pressure_mean.map_or(0.0, |m| Exp::new(1.0 / m).unwrap().sample(rng));
        let (day, tod) = (day_of(t), time_of_day(t) as usize);
        rows.push(SessionRow {
            participant_id: id.to_string(),
            day,
            time_of_day: tod,
            brushing_duration: ((q + press) * 10.0).round() / 10.0,
            pressure_duration: (press * 10.0).round() / 10.0,
        });
        if rng.random_bool(0.02) {
            rows.push(SessionRow {
                participant_id: id.to_string(),
                day,
                time_of_day: tod,
                brushing_duration: rng.random_range(5.0..30.0_f64).round(),
                pressure_duration: 0.0,
            });
        }
    }
    rows
}

/// Session rows for `n` synthetic participants.
pub fn generate_sessions(n: usize, seed: u64) -> Vec<SessionRow> {
    (0..n)
        .flat_map(|i| {
            let mut rng = stream(seed, &[purpose::ENV, i as u64]);
            participant_sessions(&format!("S{:03}", i + 1), &mut rng)
        })
        .collect()
}

/// Synthetic participants passed through the regular ingestion path.
pub fn generate(n: usize, seed: u64) -> Vec<ParticipantSeries> {
    let mut buf = Vec::new();
    write_sessions(&generate_sessions(n, seed), &mut buf).expect("writing to memory");
    read_sessions(buf.as_slice()).expect("generated data is well formed").0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_range() {
        let s = generate(SURROGATE_PARTICIPANTS, 2);
        assert_eq!(s.len(), SURROGATE_PARTICIPANTS);
        let all: Vec<f64> = s.iter().flat_map(|p| p.oscb.iter().copied()).collect();
        assert!(s.iter().all(|p| p.oscb.len() == 140));
        assert!(all.iter().all(|q| (0.0..=180.0).contains(q)));
        let zeros = all.iter().filter(|q| **q == 0.0).count() as f64 / all.len() as f64;
        assert!((0.05..0.6).contains(&zeros), "zero fraction {zeros}");
        let mean = all.iter().sum::<f64>() / all.len() as f64;
        assert!((30.0..120.0).contains(&mean), "mean {mean}");
    }

    #[test]
    fn deterministic() {
        assert_eq!(generate_sessions(3, 9), generate_sessions(3, 9));
        assert_ne!(generate_sessions(3, 9), generate_sessions(3, 10));
        assert!(generate_sessions(1, 0).iter().any(|r| r.day > 70));
    }
}
