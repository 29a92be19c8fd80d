//! Exact Bayesian filtering over a finite model set. The same type serves two
//! roles: exact posterior inference when the models enumerate the prior's
//! support, and prior-particle importance sampling when they are draws from a
//! continuous prior (uniform initial weights, prior as proposal).

use crate::data::{Document, Token};
use crate::env::SequenceModel;
use crate::error::{Error, Result};
use crate::prob::{log_sum_exp, Pmf};

#[derive(Debug, Clone)]
pub struct FinitePosterior<M> {
    models: Vec<M>,
    /// Unnormalized log posterior weights; −∞ marks a dead hypothesis.
    log_w: Vec<f64>,
}

impl<M: SequenceModel> FinitePosterior<M> {
    pub fn with_prior(models: Vec<M>, prior: &Pmf) -> Result<Self> {
        if models.len() != prior.len() {
            return Err(Error::invalid(format!(
                "{} models under a {}-point prior",
                models.len(),
                prior.len()
            )));
        }
        let log_w = prior
            .probs()
            .iter()
            .map(|&p| if p > 0.0 { p.ln() } else { f64::NEG_INFINITY })
            .collect();
        Ok(FinitePosterior { models, log_w })
    }

    /// Equally weighted particles: importance sampling with the prior as
    /// proposal.
    pub fn from_particles(models: Vec<M>) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::invalid("particle set is empty"));
        }
        let n = models.len();
        Ok(FinitePosterior { models, log_w: vec![-(n as f64).ln(); n] })
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn models(&self) -> &[M] {
        &self.models
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_w
    }

    /// Normalized posterior over the model set.
    pub fn posterior(&self) -> Result<Pmf> {
        let z = log_sum_exp(&self.log_w);
        if z == f64::NEG_INFINITY {
            return Err(Error::DegeneratePosterior("all hypotheses are dead".into()));
        }
        Pmf::from_weights(&self.log_w.iter().map(|lw| (lw - z).exp()).collect::<Vec<_>>())
    }

    /// Effective sample size 1/Σwᵢ² of the normalized weights.
    pub fn ess(&self) -> f64 {
        let z = log_sum_exp(&self.log_w);
        if z == f64::NEG_INFINITY {
            return 0.0;
        }
        let sq: f64 = self.log_w.iter().map(|lw| (2.0 * (lw - z)).exp()).sum();
        1.0 / sq
    }

    fn step_pmfs(&self, doc: &Document, t: usize) -> Vec<Option<Pmf>> {
        self.models
            .iter()
            .zip(&self.log_w)
            .map(|(m, &lw)| (lw > f64::NEG_INFINITY).then(|| m.step_pmf(doc, t)))
            .collect()
    }

    fn mix(&self, pmfs: &[Option<Pmf>]) -> Result<Pmf> {
        let z = log_sum_exp(&self.log_w);
        if z == f64::NEG_INFINITY {
            return Err(Error::DegeneratePosterior("all hypotheses are dead".into()));
        }
        let vocab = pmfs
            .iter()
            .flatten()
            .next()
            .ok_or_else(|| Error::DegeneratePosterior("all hypotheses are dead".into()))?
            .len();
        let mut mixed = vec![0.0; vocab];
        for (pmf, &lw) in pmfs.iter().zip(&self.log_w) {
            if let Some(pmf) = pmf {
                let w = (lw - z).exp();
                for (acc, &p) in mixed.iter_mut().zip(pmf.probs()) {
                    *acc += w * p;
                }
            }
        }
        Pmf::from_weights(&mixed)
    }

    /// Posterior predictive for step `t` of `doc` (whose prefix has length
    /// `t`); does not condition.
    pub fn predictive(&self, doc: &Document, t: usize) -> Result<Pmf> {
        self.mix(&self.step_pmfs(doc, t))
    }

    /// Returns the predictive law and conditions on the realized `token`.
    pub fn step(&mut self, doc: &Document, t: usize, token: Token) -> Result<Pmf> {
        let pmfs = self.step_pmfs(doc, t);
        let mixed = self.mix(&pmfs)?;
        for (pmf, lw) in pmfs.iter().zip(&mut self.log_w) {
            if let Some(pmf) = pmf {
                let p = pmf.prob(token);
                *lw += if p > 0.0 { p.ln() } else { f64::NEG_INFINITY };
            }
        }
        let z = log_sum_exp(&self.log_w);
        if z == f64::NEG_INFINITY {
            return Err(Error::DegeneratePosterior(
                "observed token has zero probability under every live hypothesis".into(),
            ));
        }
        // renormalize so long runs cannot drift out of range
        for lw in &mut self.log_w {
            *lw -= z;
        }
        Ok(mixed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::enumerate::{JointTable, DEFAULT_CELL_CAP};
    use crate::env::tabular::TabularSpec;
    use crate::env::DocModel;
    use approx::assert_abs_diff_eq;

    fn coin_posterior(spec: &TabularSpec) -> FinitePosterior<DocModel<'_>> {
        let models = spec.kernels.iter().map(DocModel::Tabular).collect();
        FinitePosterior::with_prior(models, &spec.prior).unwrap()
    }

    #[test]
    fn matches_enumerated_predictive_along_a_path() {
        let spec = TabularSpec::coin_pair(0.9).unwrap();
        let table = JointTable::single(&spec, 4, DEFAULT_CELL_CAP).unwrap();
        let mut post = coin_posterior(&spec);
        let mut doc = Document::default();
        for (t, &tok) in [1usize, 1, 2, 1].iter().enumerate() {
            let from_table = table.predictive(&doc.tokens).unwrap();
            let from_filter = post.step(&doc, t, tok).unwrap();
            for x in 1..=2 {
                assert_abs_diff_eq!(
                    from_filter.prob(x),
                    from_table.prob(x),
                    epsilon = 1e-12
                );
            }
            doc.tokens.push(tok);
        }
    }

    #[test]
    fn posterior_after_one_head_is_point_nine() {
        let spec = TabularSpec::coin_pair(0.9).unwrap();
        let mut post = coin_posterior(&spec);
        let mut doc = Document::default();
        let p = post.step(&doc, 0, 1).unwrap();
        assert_abs_diff_eq!(p.prob(1), 0.5, epsilon = 1e-15);
        doc.tokens.push(1);
        let posterior = post.posterior().unwrap();
        assert_abs_diff_eq!(posterior.prob(1), 0.9, epsilon = 1e-12);
        // predictive at the next step: 0.9·0.9 + 0.1·0.1
        let p2 = post.predictive(&doc, 1).unwrap();
        assert_abs_diff_eq!(p2.prob(1), 0.82, epsilon = 1e-12);
    }

    #[test]
    fn impossible_token_kills_hypothesis() {
        use crate::env::tabular::Kernel;
        let spec = TabularSpec::new(
            Pmf::uniform(2),
            vec![
                Kernel::iid(Pmf::delta(2, 0)), // always token 1
                Kernel::iid(Pmf::uniform(2)),
            ],
        )
        .unwrap();
        let mut post = coin_posterior(&spec);
        let doc = Document::default();
        assert_abs_diff_eq!(post.ess(), 2.0, epsilon = 1e-12);
        post.step(&doc, 0, 2).unwrap();
        assert_abs_diff_eq!(post.ess(), 1.0, epsilon = 1e-12);
        let posterior = post.posterior().unwrap();
        assert_abs_diff_eq!(posterior.prob(2), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn all_dead_is_degenerate() {
        use crate::env::tabular::Kernel;
        let spec = TabularSpec::new(
            Pmf::uniform(2),
            vec![Kernel::iid(Pmf::delta(2, 0)), Kernel::iid(Pmf::delta(2, 0))],
        )
        .unwrap();
        let mut post = coin_posterior(&spec);
        let doc = Document::default();
        let err = post.step(&doc, 0, 2).unwrap_err();
        assert!(matches!(err, Error::DegeneratePosterior(_)));
    }
}
