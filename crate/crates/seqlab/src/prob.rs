//! Probability primitives shared by every module: normalized pmfs, log-domain
//! accumulation, divergences, and the column clip used by the attention
//! environments. All information quantities are in nats.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Normalization tolerance for pmf construction.
pub const PMF_TOL: f64 = 1e-12;

/// Log-weights below this are treated as impossible; exp(-745) is the
/// smallest positive double.
pub const LOG_FLOOR: f64 = -745.0;

/// A finite probability mass function over `0..len` outcomes. Entries are
/// nonnegative and sum to 1 within [`PMF_TOL`] at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Pmf(Vec<f64>);

impl Pmf {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("pmf must have at least one outcome"));
        }
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::invalid(format!("pmf entries must be finite and ≥ 0: {probs:?}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PMF_TOL {
            return Err(Error::invalid(format!("pmf sums to {sum}, not 1 within {PMF_TOL}")));
        }
        Ok(Pmf(probs))
    }

    pub fn uniform(n: usize) -> Self {
        Pmf(vec![1.0 / n as f64; n])
    }

    /// Point mass on outcome `i`.
    pub fn delta(n: usize, i: usize) -> Self {
        let mut p = vec![0.0; n];
        p[i] = 1.0;
        Pmf(p)
    }

    /// Normalized exponential of the logits; always a valid pmf.
    pub fn from_logits(logits: &[f64]) -> Self {
        Pmf(softmax(logits))
    }

    /// Normalizes arbitrary nonnegative weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(Error::invalid(format!("weights sum to {sum}")));
        }
        if weights.iter().any(|&w| w < 0.0) {
            return Err(Error::invalid("weights must be ≥ 0"));
        }
        Ok(Pmf(weights.iter().map(|w| w / sum).collect()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    /// Probability of a 1-based token.
    pub fn prob(&self, token: usize) -> f64 {
        self.0[token - 1]
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        entropy(&self.0)
    }

    /// Inverse-CDF sample; returns a 1-based token.
    pub fn sample(&self, rng: &mut impl rand::Rng) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, &p) in self.0.iter().enumerate() {
            acc += p;
            if u < acc {
                return i + 1;
            }
        }
        self.0.len()
    }
}

impl TryFrom<Vec<f64>> for Pmf {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Pmf::new(v)
    }
}

impl From<Pmf> for Vec<f64> {
    fn from(p: Pmf) -> Vec<f64> {
        p.0
    }
}

/// log Σ exp(x_i), stable under large negative inputs.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|x| (x - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Entropy of a nonnegative vector summing to 1; 0·ln 0 = 0.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

/// KL(p ‖ q) in nats. Errors when p puts mass where q has none.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    debug_assert_eq!(p.len(), q.len());
    let mut kl = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Err(Error::InfiniteDivergence(format!(
                    "p[{i}] = {pi} but q[{i}] = {qi}"
                )));
            }
            kl += pi * (pi / qi).ln();
        }
    }
    Ok(kl)
}

/// Σ −p ln q in nats; the expected log-loss of predicting q when p is true.
pub fn cross_entropy(p: &[f64], q: &[f64]) -> Result<f64> {
    debug_assert_eq!(p.len(), q.len());
    let mut h = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Err(Error::InfiniteDivergence(format!(
                    "p[{i}] = {pi} but q[{i}] = {qi}"
                )));
            }
            h -= pi * qi.ln();
        }
    }
    Ok(h)
}

/// Rescales every column with L2 norm > 1 back to the unit sphere; columns
/// already inside the ball are untouched. Projection onto a convex set, so
/// 1-Lipschitz.
pub fn clip_columns(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let norm = col.norm();
        if norm > 1.0 {
            col /= norm;
        }
    }
}

/// Mean and standard error of a Monte Carlo sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl McEstimate {
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        let n = samples.len();
        if n == 0 {
            return Err(Error::invalid("Monte Carlo estimate needs at least one sample"));
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let stderr = if n == 1 {
            0.0
        } else {
            let var =
                samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            (var / n as f64).sqrt()
        };
        Ok(McEstimate { mean, stderr, n })
    }
}
