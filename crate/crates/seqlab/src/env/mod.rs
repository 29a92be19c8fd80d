//! Generative environments. Each environment is a prior over latent
//! parameters plus an autoregressive token law per document; hierarchical
//! environments add a shared mixing vector that makes documents conditionally
//! iid. A [`ParamDraw`] is one realization of all latents; a [`DocModel`] is
//! the per-document conditional law it induces.

pub mod enumerate;
pub mod linrep;
pub mod logistic;
pub mod mixture;
pub mod tabular;
pub mod transformer;

pub use enumerate::JointTable;
pub use linrep::LinRepSpec;
pub use logistic::LogisticSpec;
pub use mixture::{ComponentSource, MixingPrior, MixtureSpec};
pub use tabular::{Kernel, TabularSpec};
pub use transformer::{TransformerSpec, TransformerWeights};

use crate::data::{Corpus, Document};
use crate::error::{Error, Result};
use crate::prob::Pmf;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use std::borrow::Cow;

/// A conditional token law: the distribution of token `t` given the document
/// prefix (and, for the logistic environment, its covariates).
pub trait SequenceModel {
    fn vocab(&self) -> usize;
    /// Law of `doc.tokens[t]` given `doc.tokens[..t]`; may read
    /// `doc.inputs[..=t]`.
    fn step_pmf(&self, doc: &Document, t: usize) -> Pmf;
}

/// One document's law under a fixed parameter realization. Borrows from the
/// spec or draw where possible; owns its parameters when they exist only as
/// sampled particles.
#[derive(Debug, Clone)]
pub enum DocModel<'a> {
    Tabular(&'a Kernel),
    Transformer {
        spec: &'a TransformerSpec,
        weights: Cow<'a, TransformerWeights>,
    },
    Logistic {
        theta: Cow<'a, DVector<f64>>,
    },
    /// Tokens iid from a fixed pmf (the linear-representation document law).
    Iid(Cow<'a, Pmf>),
}

impl SequenceModel for DocModel<'_> {
    fn vocab(&self) -> usize {
        match self {
            DocModel::Tabular(k) => k.vocab(),
            DocModel::Transformer { spec, .. } => spec.vocab,
            DocModel::Logistic { .. } => 2,
            DocModel::Iid(p) => p.len(),
        }
    }

    fn step_pmf(&self, doc: &Document, t: usize) -> Pmf {
        match self {
            DocModel::Tabular(k) => k.step_pmf(&doc.tokens, t).clone(),
            DocModel::Transformer { spec, weights } => {
                if t == 0 {
                    spec.init.clone()
                } else {
                    let lo = t.saturating_sub(spec.context);
                    spec.forward(weights, &doc.tokens[lo..t])
                        .expect("window built from a validated document")
                }
            }
            DocModel::Logistic { theta } => LogisticSpec::pmf_given(theta, &doc.inputs[t]),
            DocModel::Iid(p) => p.as_ref().clone(),
        }
    }
}

/// Every environment family the laboratory knows how to generate.
#[derive(Debug, Clone)]
pub enum EnvSpec {
    Tabular(TabularSpec),
    Transformer(TransformerSpec),
    Logistic(LogisticSpec),
    LinRep(LinRepSpec),
    Mixture(MixtureSpec),
}

/// One realization of every latent parameter for an `m_docs`-document trial.
#[derive(Debug, Clone)]
pub enum ParamDraw {
    Tabular {
        state: usize,
    },
    Transformer {
        weights: TransformerWeights,
    },
    Logistic {
        theta: DVector<f64>,
    },
    LinRep {
        basis: DMatrix<f64>,
        coeffs: Vec<DVector<f64>>,
        doc_laws: Vec<Pmf>,
    },
    Mixture {
        mixing: Vec<f64>,
        assignments: Vec<usize>,
        /// Present only when components are latent (redrawn per trial).
        pool: Option<Vec<TransformerWeights>>,
    },
}

impl EnvSpec {
    pub fn vocab(&self) -> usize {
        match self {
            EnvSpec::Tabular(s) => s.vocab,
            EnvSpec::Transformer(s) => s.vocab,
            EnvSpec::Logistic(_) => 2,
            EnvSpec::LinRep(s) => s.dim,
            EnvSpec::Mixture(s) => s.vocab(),
        }
    }

    /// True when the latent parameter is shared by all documents (no meta
    /// level): the Bayes predictor then carries its posterior across
    /// document boundaries.
    pub fn single_parameter(&self) -> bool {
        matches!(self, EnvSpec::Tabular(_) | EnvSpec::Transformer(_) | EnvSpec::Logistic(_))
    }

    pub fn sample_params(&self, m_docs: usize, rng: &mut impl Rng) -> ParamDraw {
        match self {
            EnvSpec::Tabular(s) => ParamDraw::Tabular { state: s.prior.sample(rng) - 1 },
            EnvSpec::Transformer(s) => {
                ParamDraw::Transformer { weights: s.sample_weights(rng) }
            }
            EnvSpec::Logistic(s) => ParamDraw::Logistic { theta: s.sample_theta(rng) },
            EnvSpec::LinRep(s) => {
                let basis = s.sample_basis(rng);
                let coeffs: Vec<DVector<f64>> =
                    (0..m_docs).map(|_| s.sample_coeff(rng)).collect();
                let doc_laws = coeffs
                    .iter()
                    .map(|xi| Pmf::from_logits((&basis * xi).as_slice()))
                    .collect();
                ParamDraw::LinRep { basis, coeffs, doc_laws }
            }
            EnvSpec::Mixture(s) => {
                let pool = match &s.components {
                    ComponentSource::TransformerPrior { spec, count } => {
                        Some((0..*count).map(|_| spec.sample_weights(rng)).collect())
                    }
                    _ => None,
                };
                let mixing = s.sample_mixing(rng);
                let mix_pmf = Pmf::new(mixing.clone()).expect("mixing vector is a pmf");
                let assignments = (0..m_docs).map(|_| mix_pmf.sample(rng) - 1).collect();
                ParamDraw::Mixture { mixing, assignments, pool }
            }
        }
    }

    /// The conditional law of document `m` under `draw`.
    pub fn doc_model<'a>(&'a self, draw: &'a ParamDraw, m: usize) -> DocModel<'a> {
        match (self, draw) {
            (EnvSpec::Tabular(s), ParamDraw::Tabular { state }) => {
                DocModel::Tabular(&s.kernels[*state])
            }
            (EnvSpec::Transformer(s), ParamDraw::Transformer { weights }) => {
                DocModel::Transformer { spec: s, weights: Cow::Borrowed(weights) }
            }
            (EnvSpec::Logistic(_), ParamDraw::Logistic { theta }) => {
                DocModel::Logistic { theta: Cow::Borrowed(theta) }
            }
            (EnvSpec::LinRep(_), ParamDraw::LinRep { doc_laws, .. }) => {
                DocModel::Iid(Cow::Borrowed(&doc_laws[m]))
            }
            (EnvSpec::Mixture(s), ParamDraw::Mixture { assignments, pool, .. }) => {
                component_model(s, pool.as_deref(), assignments[m])
            }
            _ => panic!("draw does not belong to this environment"),
        }
    }

    /// All component laws of a mixture (the hypothesis set for in-document
    /// inference). Errors on non-hierarchical environments.
    pub fn component_models<'a>(&'a self, draw: &'a ParamDraw) -> Result<Vec<DocModel<'a>>> {
        match (self, draw) {
            (EnvSpec::Mixture(s), ParamDraw::Mixture { pool, .. }) => Ok((0..s.n_components())
                .map(|j| component_model(s, pool.as_deref(), j))
                .collect()),
            _ => Err(Error::UnsupportedMode(
                "component models exist only for mixture environments".into(),
            )),
        }
    }

    /// ℙ(X_{t+1} ∈ · | θ, H_t): the exact conditional for document `m`.
    pub fn next_token_pmf(&self, draw: &ParamDraw, m: usize, doc: &Document, t: usize) -> Pmf {
        self.doc_model(draw, m).step_pmf(doc, t)
    }

    pub fn sample_document(
        &self,
        draw: &ParamDraw,
        m: usize,
        t_len: usize,
        rng: &mut impl Rng,
    ) -> Document {
        let model = self.doc_model(draw, m);
        let mut doc = Document::default();
        for t in 0..t_len {
            if let EnvSpec::Logistic(s) = self {
                doc.inputs.push(s.sample_input(rng));
            }
            let pmf = model.step_pmf(&doc, t);
            let tok = pmf.sample(rng);
            doc.tokens.push(tok);
        }
        doc
    }

    pub fn sample_corpus(
        &self,
        draw: &ParamDraw,
        doc_lens: &[usize],
        rng: &mut impl Rng,
    ) -> Corpus {
        doc_lens
            .iter()
            .enumerate()
            .map(|(m, &t_len)| self.sample_document(draw, m, t_len, rng))
            .collect()
    }
}

fn component_model<'a>(
    spec: &'a MixtureSpec,
    pool: Option<&'a [TransformerWeights]>,
    j: usize,
) -> DocModel<'a> {
    match &spec.components {
        ComponentSource::Tabular { kernels } => DocModel::Tabular(&kernels[j]),
        ComponentSource::TransformerPool { spec: tspec, pool } => {
            DocModel::Transformer { spec: tspec, weights: Cow::Borrowed(&pool[j]) }
        }
        ComponentSource::TransformerPrior { spec: tspec, .. } => DocModel::Transformer {
            spec: tspec,
            weights: Cow::Borrowed(&pool.expect("latent components require a drawn pool")[j]),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn deterministic_given_stream() {
        let env = EnvSpec::Tabular(TabularSpec::coin_pair(0.9).unwrap());
        let s = RngStream::new(42);
        let d1 = env.sample_params(1, &mut s.rng());
        let d2 = env.sample_params(1, &mut s.rng());
        let c1 = env.sample_corpus(&d1, &[5, 5], &mut s.substream(1).rng());
        let c2 = env.sample_corpus(&d2, &[5, 5], &mut s.substream(1).rng());
        assert_eq!(c1, c2);
    }

    #[test]
    fn coin_pair_state_a_frequency() {
        let spec = TabularSpec::coin_pair(0.9).unwrap();
        let env = EnvSpec::Tabular(spec);
        let draw = ParamDraw::Tabular { state: 0 };
        let mut rng = RngStream::new(1).substream(2).rng();
        let n = 10_000;
        let doc = env.sample_document(&draw, 0, n, &mut rng);
        let ones = doc.tokens.iter().filter(|&&t| t == 1).count() as f64;
        let freq = ones / n as f64;
        let stderr = (0.9f64 * 0.1 / n as f64).sqrt();
        assert!(
            (freq - 0.9).abs() <= 3.0 * stderr,
            "freq {freq} not within 3 stderr of 0.9"
        );
    }

    #[test]
    fn document_lengths_match() {
        let env = EnvSpec::LinRep(LinRepSpec::new(4, 2).unwrap());
        let mut rng = RngStream::new(8).rng();
        let draw = env.sample_params(3, &mut rng);
        let corpus = env.sample_corpus(&draw, &[5, 2, 7], &mut rng);
        assert_eq!(corpus.iter().map(Document::len).collect::<Vec<_>>(), vec![5, 2, 7]);
    }

    #[test]
    fn logistic_documents_carry_inputs() {
        let env = EnvSpec::Logistic(LogisticSpec::new(3).unwrap());
        let mut rng = RngStream::new(13).rng();
        let draw = env.sample_params(1, &mut rng);
        let doc = env.sample_document(&draw, 0, 6, &mut rng);
        assert_eq!(doc.inputs.len(), 6);
        assert!(doc.tokens.iter().all(|&t| t == 1 || t == 2));
    }

    #[test]
    fn mixture_single_component_is_degenerate() {
        let spec = MixtureSpec::new(
            MixingPrior::Dirichlet { r_scale: 1.0 },
            ComponentSource::Tabular { kernels: vec![Kernel::iid(Pmf::uniform(2))] },
        )
        .unwrap();
        let env = EnvSpec::Mixture(spec);
        let mut rng = RngStream::new(3).rng();
        if let ParamDraw::Mixture { assignments, mixing, .. } = env.sample_params(5, &mut rng) {
            assert!(assignments.iter().all(|&a| a == 0));
            assert_eq!(mixing, vec![1.0]);
        } else {
            panic!("wrong draw variant");
        }
    }
}
