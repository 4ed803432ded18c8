//! Renewal arrival streams with a target squared coefficient of variation.

use rand::Rng;
use rand_distr::Exp1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ArrivalLaw {
    None,
    Exponential { rate: f64 },
    Deterministic { gap: f64 },
    /// Constant shift plus an exponential with the given mean.
    ShiftedExponential { shift: f64, mean: f64 },
    /// Balanced-means two-phase hyperexponential.
    HyperExponential { p1: f64, rate1: f64, rate2: f64 },
}

impl ArrivalLaw {
    pub fn new(lambda: f64, scv: f64) -> Self {
        if lambda <= 0.0 {
            return ArrivalLaw::None;
        }
        if scv == 1.0 {
            ArrivalLaw::Exponential { rate: lambda }
        } else if scv == 0.0 {
            ArrivalLaw::Deterministic { gap: 1.0 / lambda }
        } else if scv < 1.0 {
            let mean = scv.sqrt() / lambda;
            ArrivalLaw::ShiftedExponential {
                shift: 1.0 / lambda - mean,
                mean,
            }
        } else {
            let p1 = 0.5 * (1.0 + ((scv - 1.0) / (scv + 1.0)).sqrt());
            ArrivalLaw::HyperExponential {
                p1,
                rate1: 2.0 * p1 * lambda,
                rate2: 2.0 * (1.0 - p1) * lambda,
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ArrivalLaw::None => f64::INFINITY,
            ArrivalLaw::Exponential { rate } => {
                let e: f64 = rng.sample(Exp1);
                e / rate
            }
            ArrivalLaw::Deterministic { gap } => gap,
            ArrivalLaw::ShiftedExponential { shift, mean } => {
                let e: f64 = rng.sample(Exp1);
                shift + mean * e
            }
            ArrivalLaw::HyperExponential { p1, rate1, rate2 } => {
                let u: f64 = rng.random();
                let e: f64 = rng.sample(Exp1);
                if u < p1 {
                    e / rate1
                } else {
                    e / rate2
                }
            }
        }
    }
}
