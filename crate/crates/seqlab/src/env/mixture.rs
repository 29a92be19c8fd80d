//! Two-level environments: a latent mixing vector ψ over N components, one
//! component drawn per document. Components may be tabular kernels, a fixed
//! pool of transformer weight draws, or fresh transformer draws per trial;
//! ψ carries either a sparse symmetric Dirichlet prior or an explicit finite
//! atom prior (the enumerable case).

use crate::env::tabular::Kernel;
use crate::env::transformer::{TransformerSpec, TransformerWeights};
use crate::error::{Error, Result};
use crate::prob::Pmf;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

#[derive(Debug, Clone, PartialEq)]
pub enum MixingPrior {
    /// Symmetric Dirichlet with parameter R/N per category; R is the
    /// sparsity scale.
    Dirichlet { r_scale: f64 },
    /// Finite support: explicit mixing vectors with a discrete prior.
    Atoms { atoms: Vec<Pmf>, prior: Pmf },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ComponentSource {
    /// Known tabular components.
    Tabular { kernels: Vec<Kernel> },
    /// Known transformer components (finite candidate pool).
    TransformerPool { spec: TransformerSpec, pool: Vec<TransformerWeights> },
    /// Latent transformer components: redrawn from the prior every trial.
    TransformerPrior { spec: TransformerSpec, count: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    pub mixing: MixingPrior,
    pub components: ComponentSource,
}

impl MixtureSpec {
    pub fn new(mixing: MixingPrior, components: ComponentSource) -> Result<Self> {
        let spec = MixtureSpec { mixing, components };
        let n = spec.n_components();
        if n == 0 {
            return Err(Error::invalid("mixture needs at least one component"));
        }
        match &spec.mixing {
            MixingPrior::Dirichlet { r_scale } => {
                if !(*r_scale > 0.0) {
                    return Err(Error::invalid("Dirichlet scale R must be > 0"));
                }
            }
            MixingPrior::Atoms { atoms, prior } => {
                if atoms.is_empty() || prior.len() != atoms.len() {
                    return Err(Error::invalid("atom prior arity mismatch"));
                }
                if atoms.iter().any(|a| a.len() != n) {
                    return Err(Error::invalid(format!(
                        "every mixing atom must have {n} entries"
                    )));
                }
            }
        }
        if let ComponentSource::Tabular { kernels } = &spec.components {
            let vocab = kernels[0].vocab();
            if kernels.iter().any(|k| k.vocab() != vocab) {
                return Err(Error::invalid("mixture kernels must share one vocabulary"));
            }
        }
        Ok(spec)
    }

    /// Enumerable hierarchical environment over tabular components.
    pub fn discrete(atoms: Vec<Pmf>, prior: Pmf, kernels: Vec<Kernel>) -> Result<Self> {
        MixtureSpec::new(MixingPrior::Atoms { atoms, prior }, ComponentSource::Tabular { kernels })
    }

    pub fn n_components(&self) -> usize {
        match &self.components {
            ComponentSource::Tabular { kernels } => kernels.len(),
            ComponentSource::TransformerPool { pool, .. } => pool.len(),
            ComponentSource::TransformerPrior { count, .. } => *count,
        }
    }

    pub fn vocab(&self) -> usize {
        match &self.components {
            ComponentSource::Tabular { kernels } => kernels[0].vocab(),
            ComponentSource::TransformerPool { spec, .. }
            | ComponentSource::TransformerPrior { spec, .. } => spec.vocab,
        }
    }

    /// Draws a mixing vector from the ψ prior.
    pub fn sample_mixing(&self, rng: &mut impl Rng) -> Vec<f64> {
        match &self.mixing {
            MixingPrior::Dirichlet { r_scale } => {
                sample_dirichlet(self.n_components(), r_scale / self.n_components() as f64, rng)
            }
            MixingPrior::Atoms { atoms, prior } => {
                let a = prior.sample(rng) - 1;
                atoms[a].probs().to_vec()
            }
        }
    }
}

/// Symmetric Dirichlet(α,…,α) via normalized Gamma(α,1) draws. With very
/// sparse α every draw can underflow to zero; retried rather than silently
/// renormalized.
pub fn sample_dirichlet(n: usize, alpha: f64, rng: &mut impl Rng) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha > 0");
    loop {
        let draws: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
        let sum: f64 = draws.iter().sum();
        if sum > 0.0 && sum.is_finite() {
            return draws.into_iter().map(|g| g / sum).collect();
        }
    }
}
