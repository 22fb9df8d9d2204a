#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::RngCore;
use refprior::model::{ObsSpace, ParamSpace, StatModel};
use statrs::function::beta::ln_beta;

/// Closed-form `l` for a Beta(a, b) prior on the Bernoulli model with a
/// profile `coeff·x^β` (one dimension, Fisher information `1/(θ(1−θ))`).
pub fn oracle_limit(a: f64, b: f64, coeff: f64, beta: f64) -> f64 {
    let c_beta = (2.0 * PI).powf(beta / 2.0) * (1.0 - beta).powf(-0.5);
    let ea = (a - 1.0) * (1.0 + beta) + beta / 2.0;
    let eb = (b - 1.0) * (1.0 + beta) + beta / 2.0;
    coeff * c_beta * (ln_beta(ea + 1.0, eb + 1.0) - (1.0 + beta) * ln_beta(a, b)).exp()
}

/// Bernoulli(sin²φ), φ ∈ (0, π/2).
#[derive(Debug)]
pub struct BernoulliAngle {
    space: ParamSpace,
}

impl BernoulliAngle {
    pub fn new() -> Self {
        BernoulliAngle {
            space: ParamSpace::new(vec![(0.0, PI / 2.0)]).unwrap(),
        }
    }
}

impl StatModel for BernoulliAngle {
    fn id(&self) -> String {
        "bernoulli-angle".into()
    }

    fn param_space(&self) -> &ParamSpace {
        &self.space
    }

    fn obs_space(&self) -> ObsSpace {
        ObsSpace::Finite(vec![0.0, 1.0])
    }

    fn log_lik(&self, y: f64, phi: &[f64]) -> f64 {
        let (s, c) = phi[0].sin_cos();
        if y == 1.0 {
            2.0 * s.ln()
        } else {
            2.0 * c.ln()
        }
    }

    fn sample(&self, phi: &[f64], rng: &mut dyn RngCore) -> f64 {
        let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        if u < phi[0].sin().powi(2) {
            1.0
        } else {
            0.0
        }
    }

    fn fisher_analytic(&self, _phi: &[f64]) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_element(1, 1, 4.0))
    }
}
