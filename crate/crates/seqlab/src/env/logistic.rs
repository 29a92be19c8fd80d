//! Logistic-regression environment: θ uniform on the unit ball of ℝ^d,
//! covariates iid standard normal, and a binary scored token per step with
//! P(Y = +1 | x) = σ(θᵀx). Token 1 encodes +1, token 2 encodes −1; only the
//! scored tokens accrue log-loss.

use crate::error::{Error, Result};
use crate::prob::Pmf;
use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogisticSpec {
    pub dim: usize,
}

impl LogisticSpec {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("logistic dim must be ≥ 1"));
        }
        Ok(LogisticSpec { dim })
    }

    /// Uniform draw from the unit ball: normalized Gaussian direction scaled
    /// by U^{1/d}.
    pub fn sample_theta(&self, rng: &mut impl Rng) -> DVector<f64> {
        loop {
            let z = DVector::from_fn(self.dim, |_, _| rng.sample::<f64, _>(StandardNormal));
            let norm = z.norm();
            if norm > 0.0 {
                let radius = rng.gen::<f64>().powf(1.0 / self.dim as f64);
                return z * (radius / norm);
            }
        }
    }

    pub fn sample_input(&self, rng: &mut impl Rng) -> DVector<f64> {
        DVector::from_fn(self.dim, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    pub fn pmf_given(theta: &DVector<f64>, input: &DVector<f64>) -> Pmf {
        let p = sigmoid(theta.dot(input));
        Pmf::new(vec![p, 1.0 - p]).expect("sigmoid output is a probability")
    }
}

/// Numerically stable σ(x) = 1/(1+e^{−x}).
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^x) without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// KL(Bern(σ(x)) ‖ Bern(σ(y))) computed through softplus, stable on the
/// whole plane.
pub fn bernoulli_logit_kl(x: f64, y: f64) -> f64 {
    let p = sigmoid(x);
    p * (softplus(-y) - softplus(-x)) + (1.0 - p) * (softplus(y) - softplus(x))
}
