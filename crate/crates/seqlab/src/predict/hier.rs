//! Posterior inference for two-level environments. The latent state is
//! (mixing vector ψ, one component index per document); both inference modes
//! marginalize the current document's component exactly and differ in how
//! they track ψ:
//!
//! * [`HierExact`] enumerates assignment-count hypotheses. Exchangeability
//!   makes counts sufficient for ψ under both supported priors, so hypotheses
//!   merge at document boundaries and the state stays polynomial in the
//!   number of documents.
//! * [`HierSmc`] is a particle filter over ψ (and over the component
//!   parameters themselves when those are latent), with systematic
//!   resampling at document boundaries.

use crate::data::{Document, Token};
use crate::env::mixture::{ComponentSource, MixingPrior, MixtureSpec};
use crate::env::transformer::TransformerWeights;
use crate::env::{DocModel, SequenceModel};
use crate::error::{Error, Result};
use crate::prob::{log_sum_exp, Pmf};
use crate::rng::RngStream;
use rand::Rng;
use std::borrow::Cow;
use std::collections::HashMap;

/// Pólya-urn predictive over component indices under a symmetric
/// Dirichlet(R/N, …, R/N) prior: p(j) ∝ cⱼ + R/N.
pub fn polya_predictive(counts: &[u32], r_scale: f64) -> Result<Pmf> {
    if counts.is_empty() || !(r_scale > 0.0) {
        return Err(Error::invalid("Pólya predictive needs counts and R > 0"));
    }
    let pseudo = r_scale / counts.len() as f64;
    Pmf::from_weights(&counts.iter().map(|&c| c as f64 + pseudo).collect::<Vec<_>>())
}

/// Expected number of distinct categories among `m_draws` Pólya draws from a
/// Dirichlet(R/N, …, R/N) urn:
/// N · [1 − Γ(M+R−R/N)Γ(R) / (Γ(R−R/N)Γ(M+R))].
///
/// Each category is absent with probability ∏ᵢ (R−R/N+i)/(R+i); the closed
/// form is that product in log-gamma form, summed over the N exchangeable
/// categories.
pub fn polya_expected_unique(r_scale: f64, n_cats: usize, m_draws: usize) -> Result<f64> {
    if n_cats == 0 || !(r_scale > 0.0) {
        return Err(Error::invalid("Pólya urn needs N ≥ 1 and R > 0"));
    }
    if m_draws == 0 {
        return Ok(0.0);
    }
    if n_cats == 1 {
        return Ok(1.0);
    }
    let r = r_scale;
    let n = n_cats as f64;
    let m = m_draws as f64;
    let log_absent = statrs::function::gamma::ln_gamma(m + r - r / n)
        + statrs::function::gamma::ln_gamma(r)
        - statrs::function::gamma::ln_gamma(r - r / n)
        - statrs::function::gamma::ln_gamma(m + r);
    Ok(n * (1.0 - log_absent.exp()))
}

fn ln_guard(p: f64) -> f64 {
    if p > 0.0 {
        p.ln()
    } else {
        f64::NEG_INFINITY
    }
}

#[derive(Debug, Clone)]
struct Hypothesis {
    counts: Vec<u32>,
    log_w: f64,
}

#[derive(Debug, Clone)]
struct LiveBranch {
    parent: usize,
    comp: usize,
    log_w: f64,
}

/// Exact hierarchical Bayes for mixtures with known component laws.
#[derive(Debug, Clone)]
pub struct HierExact<'a> {
    spec: &'a MixtureSpec,
    /// Replaces the spec's atom prior during inference — a deliberately
    /// misspecified posterior.
    atom_prior: Option<Pmf>,
    boundary: Vec<Hypothesis>,
    live: Vec<LiveBranch>,
    cap: u128,
    in_doc: bool,
}

impl<'a> HierExact<'a> {
    pub fn new(spec: &'a MixtureSpec, cap: u128) -> Result<Self> {
        if matches!(spec.components, ComponentSource::TransformerPrior { .. }) {
            return Err(Error::UnsupportedMode(
                "exact hierarchical inference needs known component laws".into(),
            ));
        }
        Ok(HierExact {
            spec,
            atom_prior: None,
            boundary: vec![Hypothesis { counts: vec![0; spec.n_components()], log_w: 0.0 }],
            live: Vec::new(),
            cap,
            in_doc: false,
        })
    }

    /// Exact filtering under a wrong atom prior (the environment still uses
    /// the spec's).
    pub fn with_atom_prior(spec: &'a MixtureSpec, prior: Pmf, cap: u128) -> Result<Self> {
        let MixingPrior::Atoms { atoms, .. } = &spec.mixing else {
            return Err(Error::UnsupportedMode(
                "an alternative atom prior needs an atom-prior mixture".into(),
            ));
        };
        if prior.len() != atoms.len() {
            return Err(Error::invalid("alternative atom prior arity mismatch"));
        }
        let mut h = Self::new(spec, cap)?;
        h.atom_prior = Some(prior);
        Ok(h)
    }

    pub fn n_hypotheses(&self) -> usize {
        self.boundary.len()
    }

    fn component_law(&self, j: usize) -> DocModel<'a> {
        match &self.spec.components {
            ComponentSource::Tabular { kernels } => DocModel::Tabular(&kernels[j]),
            ComponentSource::TransformerPool { spec, pool } => {
                DocModel::Transformer { spec, weights: Cow::Borrowed(&pool[j]) }
            }
            ComponentSource::TransformerPrior { .. } => unreachable!("rejected in new"),
        }
    }

    /// log p(next document's component = j | assignment counts).
    fn assignment_log_predictive(&self, counts: &[u32]) -> Vec<f64> {
        match &self.spec.mixing {
            MixingPrior::Dirichlet { r_scale } => {
                let pseudo = r_scale / counts.len() as f64;
                let m: u32 = counts.iter().sum();
                let denom = (m as f64 + r_scale).ln();
                counts.iter().map(|&c| (c as f64 + pseudo).ln() - denom).collect()
            }
            MixingPrior::Atoms { atoms, prior } => {
                let prior = self.atom_prior.as_ref().unwrap_or(prior);
                let lp: Vec<f64> = atoms
                    .iter()
                    .enumerate()
                    .map(|(a, atom)| {
                        let mut l = ln_guard(prior.probs()[a]);
                        for (j, &c) in counts.iter().enumerate() {
                            if c > 0 {
                                l += c as f64 * ln_guard(atom.probs()[j]);
                            }
                        }
                        l
                    })
                    .collect();
                let z = log_sum_exp(&lp);
                (0..counts.len())
                    .map(|j| {
                        let num: Vec<f64> = atoms
                            .iter()
                            .enumerate()
                            .map(|(a, atom)| lp[a] + ln_guard(atom.probs()[j]))
                            .collect();
                        log_sum_exp(&num) - z
                    })
                    .collect()
            }
        }
    }

    pub fn begin_doc(&mut self) -> Result<()> {
        if self.in_doc {
            return Err(Error::invalid("begin_doc while a document is open"));
        }
        let required = self.boundary.len() as u128 * self.spec.n_components() as u128;
        if required > self.cap {
            return Err(Error::Capacity { required, cap: self.cap });
        }
        self.live.clear();
        for (parent, h) in self.boundary.iter().enumerate() {
            if h.log_w == f64::NEG_INFINITY {
                continue;
            }
            for (comp, &lp) in self.assignment_log_predictive(&h.counts).iter().enumerate() {
                if lp > f64::NEG_INFINITY {
                    self.live.push(LiveBranch { parent, comp, log_w: h.log_w + lp });
                }
            }
        }
        self.in_doc = true;
        Ok(())
    }

    fn mixed(&self, pmfs: &[Pmf]) -> Result<Pmf> {
        let log_w: Vec<f64> = self.live.iter().map(|b| b.log_w).collect();
        let z = log_sum_exp(&log_w);
        if z == f64::NEG_INFINITY {
            return Err(Error::DegeneratePosterior("all assignment branches are dead".into()));
        }
        let mut mixed = vec![0.0; self.spec.vocab()];
        for b in &self.live {
            let w = (b.log_w - z).exp();
            for (acc, &p) in mixed.iter_mut().zip(pmfs[b.comp].probs()) {
                *acc += w * p;
            }
        }
        Pmf::from_weights(&mixed)
    }

    fn component_pmfs(&self, doc: &Document, t: usize) -> Vec<Pmf> {
        (0..self.spec.n_components())
            .map(|j| self.component_law(j).step_pmf(doc, t))
            .collect()
    }

    pub fn predictive(&self, doc: &Document, t: usize) -> Result<Pmf> {
        if !self.in_doc {
            return Err(Error::invalid("predictive outside a document"));
        }
        self.mixed(&self.component_pmfs(doc, t))
    }

    pub fn step(&mut self, doc: &Document, t: usize, token: Token) -> Result<Pmf> {
        if !self.in_doc {
            return Err(Error::invalid("step outside a document"));
        }
        let pmfs = self.component_pmfs(doc, t);
        let mixed = self.mixed(&pmfs)?;
        for b in &mut self.live {
            b.log_w += ln_guard(pmfs[b.comp].prob(token));
        }
        Ok(mixed)
    }

    pub fn end_doc(&mut self) -> Result<()> {
        if !self.in_doc {
            return Err(Error::invalid("end_doc without begin_doc"));
        }
        let log_w: Vec<f64> = self.live.iter().map(|b| b.log_w).collect();
        let z = log_sum_exp(&log_w);
        if z == f64::NEG_INFINITY {
            return Err(Error::DegeneratePosterior("all assignment branches are dead".into()));
        }
        let mut merged: HashMap<Vec<u32>, f64> = HashMap::new();
        for b in &self.live {
            if b.log_w == f64::NEG_INFINITY {
                continue;
            }
            let mut counts = self.boundary[b.parent].counts.clone();
            counts[b.comp] += 1;
            let lw = b.log_w - z;
            merged
                .entry(counts)
                .and_modify(|acc| *acc = log_sum_exp(&[*acc, lw]))
                .or_insert(lw);
        }
        // deterministic hypothesis order regardless of hash iteration
        let mut boundary: Vec<Hypothesis> = merged
            .into_iter()
            .map(|(counts, log_w)| Hypothesis { counts, log_w })
            .collect();
        boundary.sort_by(|a, b| a.counts.cmp(&b.counts));
        self.boundary = boundary;
        self.live.clear();
        self.in_doc = false;
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct SmcParticle {
    log_psi: Vec<f64>,
    /// Component parameters owned by the particle (latent-component case).
    pool: Option<Vec<TransformerWeights>>,
    /// Within-document: log ψⱼ plus the current document's log-likelihood
    /// under component j.
    doc_log_w: Vec<f64>,
}

/// Particle filter over ψ with the current document's component marginalized
/// exactly (the incremental weight is the particle's own predictive, not a
/// sampled branch).
#[derive(Debug, Clone)]
pub struct HierSmc<'a> {
    spec: &'a MixtureSpec,
    particles: Vec<SmcParticle>,
    log_w: Vec<f64>,
    stream: RngStream,
    epoch: u64,
    resample_frac: f64,
    in_doc: bool,
}

impl<'a> HierSmc<'a> {
    pub fn new(
        spec: &'a MixtureSpec,
        n_particles: usize,
        resample_frac: f64,
        stream: RngStream,
    ) -> Result<Self> {
        if n_particles == 0 {
            return Err(Error::invalid("particle filter needs at least one particle"));
        }
        if !(0.0..=1.0).contains(&resample_frac) {
            return Err(Error::invalid("resample fraction must lie in [0, 1]"));
        }
        let mut rng = stream.substream(0).rng();
        let particles = (0..n_particles)
            .map(|_| {
                let psi = spec.sample_mixing(&mut rng);
                let pool = match &spec.components {
                    ComponentSource::TransformerPrior { spec: tspec, count } => {
                        Some((0..*count).map(|_| tspec.sample_weights(&mut rng)).collect())
                    }
                    _ => None,
                };
                SmcParticle {
                    log_psi: psi.iter().map(|&p| ln_guard(p)).collect(),
                    pool,
                    doc_log_w: Vec::new(),
                }
            })
            .collect();
        Ok(HierSmc {
            spec,
            particles,
            log_w: vec![0.0; n_particles],
            stream,
            epoch: 1,
            resample_frac,
            in_doc: false,
        })
    }

    pub fn ess(&self) -> f64 {
        let z = log_sum_exp(&self.log_w);
        if z == f64::NEG_INFINITY {
            return 0.0;
        }
        1.0 / self.log_w.iter().map(|lw| (2.0 * (lw - z)).exp()).sum::<f64>()
    }

    pub fn n_particles(&self) -> usize {
        self.particles.len()
    }

    pub fn begin_doc(&mut self) -> Result<()> {
        if self.in_doc {
            return Err(Error::invalid("begin_doc while a document is open"));
        }
        for p in &mut self.particles {
            p.doc_log_w = p.log_psi.clone();
        }
        self.in_doc = true;
        Ok(())
    }

    fn shared_pmfs(&self, doc: &Document, t: usize) -> Option<Vec<Pmf>> {
        match &self.spec.components {
            ComponentSource::Tabular { kernels } => {
                Some(kernels.iter().map(|k| k.step_pmf(&doc.tokens, t).clone()).collect())
            }
            ComponentSource::TransformerPool { spec, pool } => Some(
                pool.iter()
                    .map(|w| {
                        DocModel::Transformer { spec, weights: Cow::Borrowed(w) }
                            .step_pmf(doc, t)
                    })
                    .collect(),
            ),
            ComponentSource::TransformerPrior { .. } => None,
        }
    }

    /// Predictive and (when `token` is given) weight update in one pass.
    fn eval(&mut self, doc: &Document, t: usize, token: Option<Token>) -> Result<Pmf> {
        if !self.in_doc {
            return Err(Error::invalid("step outside a document"));
        }
        let z = log_sum_exp(&self.log_w);
        if z == f64::NEG_INFINITY {
            return Err(Error::DegeneratePosterior("all particles are dead".into()));
        }
        let shared = self.shared_pmfs(doc, t);
        let vocab = self.spec.vocab();
        let mut mixed = vec![0.0; vocab];
        let mut owned: Vec<Pmf>;
        for (i, particle) in self.particles.iter_mut().enumerate() {
            if self.log_w[i] == f64::NEG_INFINITY {
                continue;
            }
            let pmfs: &[Pmf] = match &shared {
                Some(s) => s,
                None => {
                    let ComponentSource::TransformerPrior { spec: tspec, .. } =
                        &self.spec.components
                    else {
                        unreachable!()
                    };
                    owned = particle
                        .pool
                        .as_ref()
                        .expect("latent components carry a per-particle pool")
                        .iter()
                        .map(|w| {
                            DocModel::Transformer { spec: tspec, weights: Cow::Borrowed(w) }
                                .step_pmf(doc, t)
                        })
                        .collect();
                    &owned
                }
            };
            let zp = log_sum_exp(&particle.doc_log_w);
            if zp == f64::NEG_INFINITY {
                self.log_w[i] = f64::NEG_INFINITY;
                continue;
            }
            let mut pred = vec![0.0; vocab];
            for (j, pmf) in pmfs.iter().enumerate() {
                let wj = (particle.doc_log_w[j] - zp).exp();
                if wj > 0.0 {
                    for (acc, &p) in pred.iter_mut().zip(pmf.probs()) {
                        *acc += wj * p;
                    }
                }
            }
            let w = (self.log_w[i] - z).exp();
            for (acc, &p) in mixed.iter_mut().zip(&pred) {
                *acc += w * p;
            }
            if let Some(tok) = token {
                self.log_w[i] += ln_guard(pred[tok - 1]);
                for (j, pmf) in pmfs.iter().enumerate() {
                    particle.doc_log_w[j] += ln_guard(pmf.prob(tok));
                }
            }
        }
        if token.is_some() && log_sum_exp(&self.log_w) == f64::NEG_INFINITY {
            return Err(Error::DegeneratePosterior(
                "observed token has zero probability under every particle".into(),
            ));
        }
        Pmf::from_weights(&mixed)
    }

    pub fn predictive(&mut self, doc: &Document, t: usize) -> Result<Pmf> {
        self.eval(doc, t, None)
    }

    pub fn step(&mut self, doc: &Document, t: usize, token: Token) -> Result<Pmf> {
        self.eval(doc, t, Some(token))
    }

    pub fn end_doc(&mut self) -> Result<()> {
        if !self.in_doc {
            return Err(Error::invalid("end_doc without begin_doc"));
        }
        self.in_doc = false;
        if self.ess() < self.resample_frac * self.particles.len() as f64 {
            self.resample()?;
        }
        Ok(())
    }

    fn resample(&mut self) -> Result<()> {
        let n = self.particles.len();
        let z = log_sum_exp(&self.log_w);
        if z == f64::NEG_INFINITY {
            return Err(Error::DegeneratePosterior("all particles are dead".into()));
        }
        let w: Vec<f64> = self.log_w.iter().map(|lw| (lw - z).exp()).collect();
        let mut rng = self.stream.substream(self.epoch).rng();
        self.epoch += 1;
        let u: f64 = rng.gen::<f64>();
        let mut picks = Vec::with_capacity(n);
        let mut cum = w[0];
        let mut i = 0;
        for k in 0..n {
            let target = (k as f64 + u) / n as f64;
            while cum < target && i + 1 < n {
                i += 1;
                cum += w[i];
            }
            picks.push(i);
        }
        self.particles = picks.iter().map(|&i| self.particles[i].clone()).collect();
        self.log_w = vec![0.0; n];
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::enumerate::{JointTable, DEFAULT_CELL_CAP};
    use approx::assert_abs_diff_eq;

    #[test]
    fn polya_counts_plus_pseudo() {
        let p = polya_predictive(&[2, 0, 1], 1.5).unwrap();
        assert_abs_diff_eq!(p.prob(1), 2.5 / 4.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p.prob(2), 0.5 / 4.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p.prob(3), 1.5 / 4.5, epsilon = 1e-15);
    }

    #[test]
    fn expected_unique_matches_the_absence_product() {
        // exchangeable-category form: E = N(1 − ∏ᵢ (R−R/N+i)/(R+i))
        for &(r, n, m) in &[(2.0, 100usize, 10usize), (1.0, 2, 5), (3.5, 7, 12)] {
            let mut absent = 1.0;
            for i in 0..m {
                absent *= (r - r / n as f64 + i as f64) / (r + i as f64);
            }
            let direct = n as f64 * (1.0 - absent);
            assert_abs_diff_eq!(
                polya_expected_unique(r, n, m).unwrap(),
                direct,
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn expected_unique_edges() {
        assert_eq!(polya_expected_unique(2.0, 5, 0).unwrap(), 0.0);
        // one draw lands in exactly one category, whatever R and N
        assert_abs_diff_eq!(polya_expected_unique(0.7, 9, 1).unwrap(), 1.0, epsilon = 1e-12);
        assert_eq!(polya_expected_unique(2.0, 1, 40).unwrap(), 1.0);
        assert!(polya_expected_unique(0.0, 3, 2).is_err());
        assert!(polya_expected_unique(1.0, 0, 2).is_err());
    }

    #[test]
    fn exact_matches_enumerated_predictive_across_documents() {
        let spec = crate::env::mixture::tests::two_coin_mixture();
        let table = JointTable::hier(&spec, &[2, 2], DEFAULT_CELL_CAP).unwrap();
        let mut hier = HierExact::new(&spec, 1 << 20).unwrap();
        let path = [[1usize, 2], [2, 2]];
        let mut flat: Vec<Token> = Vec::new();
        for doc_tokens in &path {
            hier.begin_doc().unwrap();
            let mut doc = Document::default();
            for (t, &tok) in doc_tokens.iter().enumerate() {
                let from_table = table.predictive(&flat).unwrap();
                let from_hier = hier.step(&doc, t, tok).unwrap();
                for x in 1..=2 {
                    assert_abs_diff_eq!(
                        from_hier.prob(x),
                        from_table.prob(x),
                        epsilon = 1e-12
                    );
                }
                doc.tokens.push(tok);
                flat.push(tok);
            }
            hier.end_doc().unwrap();
        }
        // two documents over two components: at most 3 count vectors
        assert!(hier.n_hypotheses() <= 3);
    }

    #[test]
    fn polya_mode_merges_hypotheses_by_counts() {
        let coins = crate::env::tabular::TabularSpec::coin_pair(0.9).unwrap();
        let spec = MixtureSpec::new(
            MixingPrior::Dirichlet { r_scale: 1.0 },
            ComponentSource::Tabular { kernels: coins.kernels },
        )
        .unwrap();
        let mut hier = HierExact::new(&spec, 1 << 20).unwrap();
        for _ in 0..6 {
            hier.begin_doc().unwrap();
            let mut doc = Document::default();
            for (t, &tok) in [1usize, 1].iter().enumerate() {
                hier.step(&doc, t, tok).unwrap();
                doc.tokens.push(tok);
            }
            hier.end_doc().unwrap();
        }
        // counts over 2 components after 6 documents: 7 multisets
        assert_eq!(hier.n_hypotheses(), 7);
    }

    #[test]
    fn capacity_guard_trips() {
        let spec = crate::env::mixture::tests::two_coin_mixture();
        let mut hier = HierExact::new(&spec, 1).unwrap();
        let err = hier.begin_doc().unwrap_err();
        assert!(matches!(err, Error::Capacity { required: 2, cap: 1 }));
    }

    #[test]
    fn smc_tracks_exact_on_atom_mixture() {
        let spec = crate::env::mixture::tests::two_coin_mixture();
        let mut exact = HierExact::new(&spec, 1 << 20).unwrap();
        let mut smc = HierSmc::new(&spec, 4000, 0.5, RngStream::new(11)).unwrap();
        let path = [[1usize, 1], [1, 1], [2, 1]];
        let mut worst: f64 = 0.0;
        for doc_tokens in &path {
            exact.begin_doc().unwrap();
            smc.begin_doc().unwrap();
            let mut doc = Document::default();
            for (t, &tok) in doc_tokens.iter().enumerate() {
                let pe = exact.step(&doc, t, tok).unwrap();
                let ps = smc.step(&doc, t, tok).unwrap();
                worst = worst.max((pe.prob(1) - ps.prob(1)).abs());
                doc.tokens.push(tok);
            }
            exact.end_doc().unwrap();
            smc.end_doc().unwrap();
        }
        assert!(worst < 0.03, "worst predictive gap {worst}");
    }

    #[test]
    fn degenerate_mixture_predicts_its_single_component() {
        use crate::env::tabular::Kernel;
        let spec = MixtureSpec::new(
            MixingPrior::Dirichlet { r_scale: 2.0 },
            ComponentSource::Tabular {
                kernels: vec![Kernel::iid(Pmf::new(vec![0.3, 0.7]).unwrap())],
            },
        )
        .unwrap();
        let mut smc = HierSmc::new(&spec, 16, 0.5, RngStream::new(5)).unwrap();
        smc.begin_doc().unwrap();
        let doc = Document::default();
        let p = smc.step(&doc, 0, 2).unwrap();
        assert_abs_diff_eq!(p.prob(1), 0.3, epsilon = 1e-12);
        smc.end_doc().unwrap();
    }

    #[test]
    fn resampling_restores_ess() {
        let spec = crate::env::mixture::tests::two_coin_mixture();
        let mut smc = HierSmc::new(&spec, 64, 0.99, RngStream::new(7)).unwrap();
        // a long all-heads document concentrates weight
        smc.begin_doc().unwrap();
        let mut doc = Document::default();
        for t in 0..12 {
            smc.step(&doc, t, 1).unwrap();
            doc.tokens.push(1);
        }
        smc.end_doc().unwrap(); // threshold 0.99 forces a resample
        assert_eq!(smc.n_particles(), 64);
        assert!(smc.ess() > 63.9, "ess after resample = {}", smc.ess());
    }
}
