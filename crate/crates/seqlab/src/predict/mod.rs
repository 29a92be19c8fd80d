//! The predictor suite: the Bayes-optimal sequence predictor for each
//! environment plus deliberately handicapped references (omniscient,
//! ψ-informed, misspecified, frozen-prior, uniform). All share one stepping
//! protocol — `begin_doc(m)`, then `step(doc, t, token)` per token with
//! `doc.tokens.len() == t`, then `end_doc()` — and return the predictive law
//! *before* conditioning on the realized token, so a trajectory's log-loss is
//! the sum of `−ln p(token)` over steps.

pub mod finite;
pub mod hier;

pub use finite::FinitePosterior;
pub use hier::{polya_expected_unique, polya_predictive, HierExact, HierSmc};

use crate::data::{Document, Token};
use crate::env::mixture::{ComponentSource, MixingPrior};
use crate::env::{DocModel, EnvSpec, ParamDraw};
use crate::error::{Error, Result};
use crate::prob::Pmf;
use crate::rng::RngStream;
use nalgebra::DMatrix;
use std::borrow::Cow;

/// Which predictor to run against a sampled corpus.
#[derive(Debug, Clone, PartialEq)]
pub enum PredictorKind {
    /// The posterior predictive under the environment's own prior.
    Bayes,
    /// Knows the realized parameters; its loss is the irreducible term.
    Omniscient,
    /// Knows the meta level (mixing vector / representation) but not the
    /// per-document parameters; its excess loss is the intra-document term.
    PsiInformed,
    /// Bayes under a wrong prior over the latent parameter.
    Misspecified { prior: Pmf },
    /// Prior predictive at every step: conditions on context through the
    /// model class but never updates parameter beliefs.
    FrozenPrior,
    /// Uniform over the vocabulary.
    Uniform,
}

impl PredictorKind {
    pub fn label(&self) -> &'static str {
        match self {
            PredictorKind::Bayes => "bayes",
            PredictorKind::Omniscient => "omniscient",
            PredictorKind::PsiInformed => "psi_informed",
            PredictorKind::Misspecified { .. } => "misspecified",
            PredictorKind::FrozenPrior => "frozen_prior",
            PredictorKind::Uniform => "uniform",
        }
    }
}

#[derive(Debug, Clone)]
pub struct PredictorSettings {
    /// Particle count for continuous-parameter posteriors.
    pub n_particles: usize,
    /// Hypothesis budget for exact hierarchical filtering.
    pub exact_cap: u128,
    /// Resample when ESS falls below this fraction of the particle count.
    pub resample_frac: f64,
}

impl Default for PredictorSettings {
    fn default() -> Self {
        PredictorSettings { n_particles: 1024, exact_cap: 1_000_000, resample_frac: 0.5 }
    }
}

/// How the ψ-informed predictor rebuilds its per-document posterior.
#[derive(Debug, Clone)]
pub enum PerDocKind<'a> {
    /// Mixture with known ψ: finite Bayes over components, prior = ψ.
    MixturePsi { models: Vec<DocModel<'a>>, psi: Pmf },
    /// Linear representation with known basis: fresh coefficient particles
    /// per document.
    LinRepPsi { basis: &'a DMatrix<f64>, rank: usize, n_particles: usize, stream: RngStream },
}

/// A predictor mid-trial. Cloneable so exact tree walks can branch the state.
#[derive(Debug, Clone)]
pub enum PredictorState<'a> {
    Finite(FinitePosterior<DocModel<'a>>),
    HierExact(HierExact<'a>),
    HierSmc(HierSmc<'a>),
    PerDoc { kind: PerDocKind<'a>, live: Option<FinitePosterior<DocModel<'a>>> },
    Omniscient { env: &'a EnvSpec, draw: &'a ParamDraw, m: usize },
    Frozen(Box<PredictorState<'a>>),
    Uniform { vocab: usize },
}

impl<'a> PredictorState<'a> {
    pub fn begin_doc(&mut self, m: usize) -> Result<()> {
        match self {
            PredictorState::Finite(_) | PredictorState::Uniform { .. } => Ok(()),
            PredictorState::HierExact(h) => h.begin_doc(),
            PredictorState::HierSmc(h) => h.begin_doc(),
            PredictorState::PerDoc { kind, live } => {
                *live = Some(kind.fresh(m)?);
                Ok(())
            }
            PredictorState::Omniscient { m: slot, .. } => {
                *slot = m;
                Ok(())
            }
            PredictorState::Frozen(inner) => inner.begin_doc(m),
        }
    }

    /// Predictive law for step `t`, then condition on `token`.
    pub fn step(&mut self, doc: &Document, t: usize, token: Token) -> Result<Pmf> {
        match self {
            PredictorState::Finite(f) => f.step(doc, t, token),
            PredictorState::HierExact(h) => h.step(doc, t, token),
            PredictorState::HierSmc(h) => h.step(doc, t, token),
            PredictorState::PerDoc { live, .. } => {
                live.as_mut().ok_or_else(|| Error::invalid("step outside a document"))?
                    .step(doc, t, token)
            }
            PredictorState::Omniscient { env, draw, m } => {
                Ok(env.next_token_pmf(draw, *m, doc, t))
            }
            PredictorState::Frozen(inner) => inner.predictive(doc, t),
            PredictorState::Uniform { vocab } => Ok(Pmf::uniform(*vocab)),
        }
    }

    /// Predictive law without conditioning.
    pub fn predictive(&mut self, doc: &Document, t: usize) -> Result<Pmf> {
        match self {
            PredictorState::Finite(f) => f.predictive(doc, t),
            PredictorState::HierExact(h) => h.predictive(doc, t),
            PredictorState::HierSmc(h) => h.predictive(doc, t),
            PredictorState::PerDoc { live, .. } => live
                .as_ref()
                .ok_or_else(|| Error::invalid("predictive outside a document"))?
                .predictive(doc, t),
            PredictorState::Omniscient { env, draw, m } => {
                Ok(env.next_token_pmf(draw, *m, doc, t))
            }
            PredictorState::Frozen(inner) => inner.predictive(doc, t),
            PredictorState::Uniform { vocab } => Ok(Pmf::uniform(*vocab)),
        }
    }

    /// Effective sample size of the current weight set; None for predictors
    /// whose belief state is exact rather than particle- or grid-based.
    pub fn ess(&self) -> Option<f64> {
        match self {
            PredictorState::Finite(f) => Some(f.ess()),
            PredictorState::HierSmc(h) => Some(h.ess()),
            PredictorState::PerDoc { live, .. } => live.as_ref().map(FinitePosterior::ess),
            PredictorState::Frozen(inner) => inner.ess(),
            PredictorState::HierExact(_)
            | PredictorState::Omniscient { .. }
            | PredictorState::Uniform { .. } => None,
        }
    }

    pub fn end_doc(&mut self) -> Result<()> {
        match self {
            PredictorState::Finite(_)
            | PredictorState::Uniform { .. }
            | PredictorState::Omniscient { .. } => Ok(()),
            PredictorState::HierExact(h) => h.end_doc(),
            PredictorState::HierSmc(h) => h.end_doc(),
            PredictorState::PerDoc { live, .. } => {
                *live = None;
                Ok(())
            }
            PredictorState::Frozen(inner) => inner.end_doc(),
        }
    }
}

impl<'a> PerDocKind<'a> {
    fn fresh(&self, m: usize) -> Result<FinitePosterior<DocModel<'a>>> {
        match self {
            PerDocKind::MixturePsi { models, psi } => {
                FinitePosterior::with_prior(models.clone(), psi)
            }
            PerDocKind::LinRepPsi { basis, rank, n_particles, stream } => {
                let mut rng = stream.substream(m as u64).rng();
                let scale = 1.0 / (*rank as f64).sqrt();
                let normal = rand_distr::StandardNormal;
                let models = (0..*n_particles)
                    .map(|_| {
                        let xi = nalgebra::DVector::from_fn(*rank, |_, _| {
                            let z: f64 = rand_distr::Distribution::sample(&normal, &mut rng);
                            scale * z
                        });
                        DocModel::Iid(Cow::Owned(Pmf::from_logits((*basis * xi).as_slice())))
                    })
                    .collect();
                FinitePosterior::from_particles(models)
            }
        }
    }
}

/// Builds the predictor `kind` for one trial of `env` with realized `draw`.
/// `stream` seeds everything stochastic inside the predictor (particle
/// initialization, resampling), independently of the corpus stream.
pub fn build<'a>(
    env: &'a EnvSpec,
    draw: &'a ParamDraw,
    kind: &PredictorKind,
    settings: &PredictorSettings,
    stream: RngStream,
) -> Result<PredictorState<'a>> {
    match kind {
        PredictorKind::Uniform => Ok(PredictorState::Uniform { vocab: env.vocab() }),
        PredictorKind::Omniscient => Ok(PredictorState::Omniscient { env, draw, m: 0 }),
        PredictorKind::FrozenPrior => {
            let inner = build(env, draw, &PredictorKind::Bayes, settings, stream)?;
            Ok(PredictorState::Frozen(Box::new(inner)))
        }
        PredictorKind::Bayes => match env {
            EnvSpec::Tabular(spec) => {
                let models = spec.kernels.iter().map(DocModel::Tabular).collect();
                Ok(PredictorState::Finite(FinitePosterior::with_prior(models, &spec.prior)?))
            }
            EnvSpec::Transformer(spec) => {
                let mut rng = stream.substream(0).rng();
                let models = (0..settings.n_particles)
                    .map(|_| DocModel::Transformer {
                        spec,
                        weights: Cow::Owned(spec.sample_weights(&mut rng)),
                    })
                    .collect();
                Ok(PredictorState::Finite(FinitePosterior::from_particles(models)?))
            }
            EnvSpec::Logistic(spec) => {
                let mut rng = stream.substream(0).rng();
                let models = (0..settings.n_particles)
                    .map(|_| DocModel::Logistic {
                        theta: Cow::Owned(spec.sample_theta(&mut rng)),
                    })
                    .collect();
                Ok(PredictorState::Finite(FinitePosterior::from_particles(models)?))
            }
            EnvSpec::LinRep(_) => Err(Error::UnsupportedMode(
                "full Bayes over (basis, coefficients) is not implemented; \
                 the ψ-informed predictor covers this environment"
                    .into(),
            )),
            EnvSpec::Mixture(spec) => {
                let exact_ok = matches!(spec.mixing, MixingPrior::Atoms { .. })
                    && !matches!(spec.components, ComponentSource::TransformerPrior { .. });
                if exact_ok {
                    Ok(PredictorState::HierExact(HierExact::new(spec, settings.exact_cap)?))
                } else {
                    Ok(PredictorState::HierSmc(HierSmc::new(
                        spec,
                        settings.n_particles,
                        settings.resample_frac,
                        stream,
                    )?))
                }
            }
        },
        PredictorKind::Misspecified { prior } => match env {
            EnvSpec::Tabular(spec) => {
                if prior.len() != spec.n_states() {
                    return Err(Error::invalid("misspecified prior arity mismatch"));
                }
                let models = spec.kernels.iter().map(DocModel::Tabular).collect();
                Ok(PredictorState::Finite(FinitePosterior::with_prior(models, prior)?))
            }
            EnvSpec::Mixture(spec) => Ok(PredictorState::HierExact(
                HierExact::with_atom_prior(spec, prior.clone(), settings.exact_cap)?,
            )),
            _ => Err(Error::UnsupportedMode(
                "misspecified priors are defined for tabular and atom-mixture \
                 environments"
                    .into(),
            )),
        },
        PredictorKind::PsiInformed => match (env, draw) {
            (EnvSpec::Mixture(_), ParamDraw::Mixture { mixing, .. }) => {
                let models = env.component_models(draw)?;
                let psi = Pmf::new(mixing.clone())?;
                Ok(PredictorState::PerDoc {
                    kind: PerDocKind::MixturePsi { models, psi },
                    live: None,
                })
            }
            (EnvSpec::LinRep(spec), ParamDraw::LinRep { basis, .. }) => {
                Ok(PredictorState::PerDoc {
                    kind: PerDocKind::LinRepPsi {
                        basis,
                        rank: spec.rank,
                        n_particles: settings.n_particles,
                        stream,
                    },
                    live: None,
                })
            }
            _ => Err(Error::UnsupportedMode(
                "ψ-informed prediction needs a two-level environment".into(),
            )),
        },
    }
}
