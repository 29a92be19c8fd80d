//! Exact joint tables over (latent parameters × every token sequence), the
//! oracle behind the identity and sandwich checks. Sequences are indexed
//! big-endian — the earliest token is the most significant digit — so all
//! extensions of a prefix form one contiguous index block and prefix
//! probabilities come from a single cumulative-sum lookup.

use crate::data::{Document, Token};
use crate::env::mixture::{ComponentSource, MixingPrior, MixtureSpec};
use crate::env::tabular::TabularSpec;
use crate::env::{DocModel, SequenceModel};
use crate::error::{Error, Result};
use crate::prob::Pmf;

#[derive(Debug, Clone)]
pub struct LatentAtom {
    pub prior: f64,
    /// Index of the mixing atom (0 for single-level environments).
    pub psi: usize,
    /// Component index per document (single-level: one entry, the state).
    pub assignment: Vec<usize>,
}

#[derive(Debug)]
pub struct JointTable {
    pub vocab: usize,
    pub doc_lens: Vec<usize>,
    pub latents: Vec<LatentAtom>,
    pub n_psi: usize,
    /// probs[l][s] = ℙ(latent l, sequence s).
    probs: Vec<Vec<f64>>,
    marginal: Vec<f64>,
    cum: Vec<f64>,
}

pub const DEFAULT_CELL_CAP: u128 = 10_000_000;

impl JointTable {
    /// Single-level table for a tabular environment: latents are its states.
    pub fn single(spec: &TabularSpec, t_len: usize, cap: u128) -> Result<Self> {
        Self::single_docs(spec, &[t_len], cap)
    }

    /// Single-level table over several documents sharing one latent state;
    /// the context resets per document but θ persists.
    pub fn single_docs(spec: &TabularSpec, doc_lens: &[usize], cap: u128) -> Result<Self> {
        let m_docs = doc_lens.len();
        let latents = spec
            .prior
            .probs()
            .iter()
            .enumerate()
            .map(|(k, &p)| LatentAtom { prior: p, psi: 0, assignment: vec![k; m_docs] })
            .collect::<Vec<_>>();
        let models: Vec<Vec<DocModel>> = (0..spec.kernels.len())
            .map(|k| vec![DocModel::Tabular(&spec.kernels[k]); m_docs])
            .collect();
        Self::build(spec.vocab, doc_lens.to_vec(), latents, &models, 1, cap)
    }

    /// Two-level table for an enumerable mixture (finite mixing atoms over
    /// tabular components); latents are (atom, assignment-vector) pairs.
    /// `doc_lens` may be ragged (the in-context document is shorter).
    pub fn hier(spec: &MixtureSpec, doc_lens: &[usize], cap: u128) -> Result<Self> {
        let (atoms, prior) = match &spec.mixing {
            MixingPrior::Atoms { atoms, prior } => (atoms, prior),
            MixingPrior::Dirichlet { .. } => {
                return Err(Error::UnsupportedMode(
                    "exact enumeration needs a finite mixing-atom prior".into(),
                ))
            }
        };
        let kernels = match &spec.components {
            ComponentSource::Tabular { kernels } => kernels,
            _ => {
                return Err(Error::UnsupportedMode(
                    "exact enumeration needs tabular components".into(),
                ))
            }
        };
        let n = spec.n_components();
        let m_docs = doc_lens.len();
        let mut latents = Vec::new();
        let mut models = Vec::new();
        let mut assignment = vec![0usize; m_docs];
        loop {
            for (a, atom) in atoms.iter().enumerate() {
                let prior_b: f64 =
                    assignment.iter().map(|&b| atom.probs()[b]).product::<f64>()
                        * prior.probs()[a];
                latents.push(LatentAtom { prior: prior_b, psi: a, assignment: assignment.clone() });
                models.push(
                    assignment.iter().map(|&b| DocModel::Tabular(&kernels[b])).collect(),
                );
            }
            // odometer over assignment vectors
            let mut i = 0;
            loop {
                if i == m_docs {
                    return Self::build(spec.vocab(), doc_lens.to_vec(), latents, &models, atoms.len(), cap);
                }
                assignment[i] += 1;
                if assignment[i] < n {
                    break;
                }
                assignment[i] = 0;
                i += 1;
            }
        }
    }

    fn build(
        vocab: usize,
        doc_lens: Vec<usize>,
        latents: Vec<LatentAtom>,
        models: &[Vec<DocModel>],
        n_psi: usize,
        cap: u128,
    ) -> Result<Self> {
        let total_steps: usize = doc_lens.iter().sum();
        let n_seqs = (vocab as u128)
            .checked_pow(total_steps as u32)
            .ok_or(Error::Capacity { required: u128::MAX, cap })?;
        let required = n_seqs * latents.len() as u128;
        if required > cap {
            return Err(Error::Capacity { required, cap });
        }
        let n_seqs = n_seqs as usize;

        let mut probs = vec![vec![0.0; n_seqs]; latents.len()];
        let mut doc = Document::default();
        for (l, row) in probs.iter_mut().enumerate() {
            fill_row(&models[l], &doc_lens, &mut doc, 0, 0, latents[l].prior, 0, n_seqs, row);
            doc.tokens.clear();
        }

        let mut marginal = vec![0.0; n_seqs];
        for row in &probs {
            for (m, p) in marginal.iter_mut().zip(row) {
                *m += p;
            }
        }
        let total: f64 = marginal.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("joint table sums to {total}")));
        }
        let mut cum = Vec::with_capacity(n_seqs + 1);
        let mut acc = 0.0;
        cum.push(0.0);
        for &m in &marginal {
            acc += m;
            cum.push(acc);
        }
        Ok(JointTable { vocab, doc_lens, latents, n_psi, probs, marginal, cum })
    }

    pub fn n_seqs(&self) -> usize {
        self.marginal.len()
    }

    pub fn total_steps(&self) -> usize {
        self.doc_lens.iter().sum()
    }

    pub fn probs(&self) -> &[Vec<f64>] {
        &self.probs
    }

    pub fn seq_marginal(&self) -> &[f64] {
        &self.marginal
    }

    /// Decodes global step `g` of sequence `s` into a token.
    pub fn token_at(&self, s: usize, g: usize) -> Token {
        let place = self.vocab.pow((self.total_steps() - 1 - g) as u32);
        (s / place) % self.vocab + 1
    }

    /// ℙ(prefix) by cumulative-sum lookup; the prefix spans documents in
    /// corpus order.
    pub fn prefix_prob(&self, prefix: &[Token]) -> f64 {
        let g = prefix.len();
        let width = self.vocab.pow((self.total_steps() - g) as u32);
        let p: usize = prefix.iter().fold(0, |acc, &t| acc * self.vocab + (t - 1));
        self.cum[(p + 1) * width] - self.cum[p * width]
    }

    /// Exact posterior predictive ℙ(next token | prefix).
    pub fn predictive(&self, prefix: &[Token]) -> Result<Pmf> {
        let parent = self.prefix_prob(prefix);
        if parent <= 0.0 {
            return Err(Error::invalid("prefix has probability zero"));
        }
        let mut ext = prefix.to_vec();
        ext.push(1);
        let probs: Vec<f64> = (1..=self.vocab)
            .map(|x| {
                *ext.last_mut().unwrap() = x;
                self.prefix_prob(&ext) / parent
            })
            .collect();
        Pmf::from_weights(&probs)
    }

    /// ℍ(H) — entropy of the sequence marginal.
    pub fn h_seq(&self) -> f64 {
        crate::prob::entropy(&self.marginal)
    }

    /// Entropy of the marginal over the first `n_docs` documents.
    pub fn h_seq_prefix(&self, n_docs: usize) -> f64 {
        assert!(n_docs <= self.doc_lens.len());
        let prefix_steps: usize = self.doc_lens[..n_docs].iter().sum();
        let width = self.vocab.pow((self.total_steps() - prefix_steps) as u32);
        let mut h = 0.0;
        for p in 0..self.vocab.pow(prefix_steps as u32) {
            let q = self.cum[(p + 1) * width] - self.cum[p * width];
            if q > 0.0 {
                h -= q * q.ln();
            }
        }
        h
    }

    /// ℍ(H | latent), direct sum.
    pub fn h_seq_given_latent(&self) -> f64 {
        let mut h = 0.0;
        for (l, row) in self.probs.iter().enumerate() {
            let prior = self.latents[l].prior;
            if prior <= 0.0 {
                continue;
            }
            for &p in row {
                if p > 0.0 {
                    h -= p * (p / prior).ln();
                }
            }
        }
        h
    }

    /// 𝕀(H; latent), direct double sum.
    pub fn mi_seq_latent(&self) -> f64 {
        let mut mi = 0.0;
        for (l, row) in self.probs.iter().enumerate() {
            let prior = self.latents[l].prior;
            if prior <= 0.0 {
                continue;
            }
            for (s, &p) in row.iter().enumerate() {
                if p > 0.0 {
                    mi += p * (p / (prior * self.marginal[s])).ln();
                }
            }
        }
        mi
    }

    /// Joint p(ψ, sequence): latent rows collapsed onto their mixing atom.
    pub fn psi_seq_joint(&self) -> Vec<Vec<f64>> {
        let mut joint = vec![vec![0.0; self.n_seqs()]; self.n_psi];
        for (l, row) in self.probs.iter().enumerate() {
            let a = self.latents[l].psi;
            for (s, &p) in row.iter().enumerate() {
                joint[a][s] += p;
            }
        }
        joint
    }

    /// 𝕀(H; ψ), direct sum over the collapsed table.
    pub fn mi_seq_psi(&self) -> f64 {
        let joint = self.psi_seq_joint();
        let psi_marg: Vec<f64> = joint.iter().map(|row| row.iter().sum()).collect();
        let mut mi = 0.0;
        for (a, row) in joint.iter().enumerate() {
            if psi_marg[a] <= 0.0 {
                continue;
            }
            for (s, &p) in row.iter().enumerate() {
                if p > 0.0 {
                    mi += p * (p / (psi_marg[a] * self.marginal[s])).ln();
                }
            }
        }
        mi
    }

    /// 𝕀(D_m; component_m | ψ) for one document, by exact marginalization of
    /// everything else.
    pub fn mi_doc_component_given_psi(&self, m: usize) -> f64 {
        let t_m = self.doc_lens[m];
        let offset: usize = self.doc_lens[..m].iter().sum();
        let width = self.vocab.pow(t_m as u32);
        let stride = self.vocab.pow((self.total_steps() - offset - t_m) as u32);
        let n_comp = 1 + self
            .latents
            .iter()
            .map(|l| l.assignment[m])
            .max()
            .expect("table has latents");

        // p(ψ, b_m, D_m)
        let mut tri = vec![vec![vec![0.0; width]; n_comp]; self.n_psi];
        for (l, row) in self.probs.iter().enumerate() {
            let a = self.latents[l].psi;
            let b = self.latents[l].assignment[m];
            for (s, &p) in row.iter().enumerate() {
                if p > 0.0 {
                    tri[a][b][(s / stride) % width] += p;
                }
            }
        }

        let mut mi = 0.0;
        for tri_a in &tri {
            let p_a: f64 = tri_a.iter().flatten().sum();
            if p_a <= 0.0 {
                continue;
            }
            let p_ab: Vec<f64> = tri_a.iter().map(|row| row.iter().sum()).collect();
            let mut p_ax = vec![0.0; width];
            for row in tri_a {
                for (x, &p) in row.iter().enumerate() {
                    p_ax[x] += p;
                }
            }
            for (b, row) in tri_a.iter().enumerate() {
                for (x, &p) in row.iter().enumerate() {
                    if p > 0.0 {
                        mi += p * ((p * p_a) / (p_ab[b] * p_ax[x])).ln();
                    }
                }
            }
        }
        mi
    }
}

/// Depth-first fill of one latent's row: shares prefix products across all
/// extensions instead of recomputing per sequence.
#[allow(clippy::too_many_arguments)]
fn fill_row(
    models: &[DocModel],
    doc_lens: &[usize],
    doc: &mut Document,
    doc_idx: usize,
    t: usize,
    prob: f64,
    lo: usize,
    width: usize,
    out: &mut [f64],
) {
    if doc_idx == doc_lens.len() {
        out[lo] = prob;
        return;
    }
    if t == doc_lens[doc_idx] {
        // next document starts with an empty context
        let saved = std::mem::take(&mut doc.tokens);
        fill_row(models, doc_lens, doc, doc_idx + 1, 0, prob, lo, width, out);
        doc.tokens = saved;
        return;
    }
    let pmf = models[doc_idx].step_pmf(doc, t);
    let child_width = width / pmf.len();
    for (x, &px) in pmf.probs().iter().enumerate() {
        doc.tokens.push(x + 1);
        fill_row(
            models,
            doc_lens,
            doc,
            doc_idx,
            t + 1,
            prob * px,
            lo + x * child_width,
            child_width,
            out,
        );
        doc.tokens.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::tabular::Kernel;
    use approx::assert_abs_diff_eq;

    fn coin_table(t: usize) -> JointTable {
        let spec = TabularSpec::coin_pair(0.9).unwrap();
        JointTable::single(&spec, t, DEFAULT_CELL_CAP).unwrap()
    }

    #[test]
    fn first_token_marginal_is_fair() {
        let table = coin_table(1);
        assert_abs_diff_eq!(table.seq_marginal()[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(table.prefix_prob(&[1]), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn t1_information_quantities() {
        let table = coin_table(1);
        assert_abs_diff_eq!(table.h_seq(), 2f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(table.h_seq_given_latent(), 0.3250829733914482, epsilon = 1e-12);
        assert_abs_diff_eq!(table.mi_seq_latent(), 0.3680642071684971, epsilon = 1e-12);
    }

    #[test]
    fn point_mass_prior_gives_product_law() {
        let k = Kernel::iid(Pmf::new(vec![0.3, 0.7]).unwrap());
        let spec = TabularSpec::new(Pmf::delta(2, 0), vec![k, Kernel::iid(Pmf::uniform(2))])
            .unwrap();
        let table = JointTable::single(&spec, 3, DEFAULT_CELL_CAP).unwrap();
        assert_abs_diff_eq!(table.mi_seq_latent(), 0.0, epsilon = 1e-15);
        // P(1,1,1) = 0.3³
        assert_abs_diff_eq!(table.seq_marginal()[0], 0.027, epsilon = 1e-15);
        assert_abs_diff_eq!(table.prefix_prob(&[1, 1]), 0.09, epsilon = 1e-15);
    }

    #[test]
    fn capacity_error_names_required_size() {
        let spec = TabularSpec::coin_pair(0.9).unwrap();
        let err = JointTable::single(&spec, 10, 100).unwrap_err();
        match err {
            Error::Capacity { required, cap } => {
                assert_eq!(required, 2048);
                assert_eq!(cap, 100);
            }
            other => panic!("wrong error: {other}"),
        }
    }

    #[test]
    fn predictive_matches_bayes_arithmetic() {
        let table = coin_table(2);
        // after observing token 1, posterior is (0.9, 0.1) → predictive 0.82
        let p = table.predictive(&[1]).unwrap();
        assert_abs_diff_eq!(p.probs()[0], 0.82, epsilon = 1e-12);
        let p0 = table.predictive(&[]).unwrap();
        assert_abs_diff_eq!(p0.probs()[0], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn shared_state_couples_documents() {
        let spec = TabularSpec::coin_pair(0.9).unwrap();
        let table = JointTable::single_docs(&spec, &[1, 1], DEFAULT_CELL_CAP).unwrap();
        // P(1,1) = ½(0.81 + 0.01) = 0.41 — not the 0.25 of independent docs.
        assert_abs_diff_eq!(table.prefix_prob(&[1, 1]), 0.41, epsilon = 1e-15);
        // second doc restarts the context but keeps θ: predictive after [1] is 0.82
        let p = table.predictive(&[1]).unwrap();
        assert_abs_diff_eq!(p.probs()[0], 0.82, epsilon = 1e-12);
    }

    #[test]
    fn prefix_entropy_marginalizes_suffix_docs() {
        let spec = crate::env::mixture::tests::two_coin_mixture();
        let table = JointTable::hier(&spec, &[2, 1], DEFAULT_CELL_CAP).unwrap();
        assert_abs_diff_eq!(table.h_seq_prefix(2), table.h_seq(), epsilon = 1e-12);
        let one_doc = JointTable::hier(&spec, &[2], DEFAULT_CELL_CAP).unwrap();
        assert_abs_diff_eq!(table.h_seq_prefix(1), one_doc.h_seq(), epsilon = 1e-12);
        assert_abs_diff_eq!(table.h_seq_prefix(0), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn hier_table_normalizes_and_splits_by_psi() {
        let spec = crate::env::mixture::tests::two_coin_mixture();
        let table = JointTable::hier(&spec, &[2, 2], DEFAULT_CELL_CAP).unwrap();
        assert_eq!(table.latents.len(), 8); // 2 atoms × 2² assignments
        assert_eq!(table.n_seqs(), 16);
        let mi_psi = table.mi_seq_psi();
        let mi_all = table.mi_seq_latent();
        assert!(mi_psi > 0.0 && mi_psi < mi_all);
        let i1 = table.mi_doc_component_given_psi(0);
        let i2 = table.mi_doc_component_given_psi(1);
        assert_abs_diff_eq!(i1, i2, epsilon = 1e-12);
    }
}
