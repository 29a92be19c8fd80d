//! In-context learning quantities. The prompt is M full documents plus a
//! τ-step query document; the exact query loss is the entropy gap between the
//! full and prefix marginals, and for iid components the per-τ in-context
//! error collapses onto token counts, which keeps τ up to a few dozen exact.

use statrs::function::gamma::ln_gamma;

use crate::data::Document;
use crate::env::enumerate::JointTable;
use crate::env::mixture::{ComponentSource, MixingPrior, MixtureSpec};
use crate::env::{DocModel, SequenceModel};
use crate::error::{Error, Result};
use crate::prob::{log_sum_exp, Pmf};

/// 𝕀(D_τ; θ) in nats for a mixture of iid token laws, computed from the
/// count sufficient statistic: one term per composition of τ over the
/// vocabulary instead of one per sequence.
pub fn mi_counts_iid(weights: &[f64], components: &[Pmf], tau: usize) -> Result<f64> {
    if weights.len() != components.len() || weights.is_empty() {
        return Err(Error::invalid("need one weight per component"));
    }
    if tau == 0 {
        return Ok(0.0);
    }
    let vocab = components[0].len();
    if components.iter().any(|p| p.len() != vocab) {
        return Err(Error::invalid("components must share one vocabulary"));
    }
    let log_p: Vec<Vec<f64>> = components
        .iter()
        .map(|pmf| pmf.probs().iter().map(|&p| p.ln()).collect())
        .collect();
    let log_w: Vec<f64> = weights.iter().map(|&w| w.ln()).collect();

    // ℍ(D_τ) = −Σ_counts multinom(τ; counts) · g · ln g with
    // g = Σ_j w_j Π_c p_jc^{k_c}, the shared probability of any one sequence
    // with those counts.
    let mut h_marginal = 0.0;
    let ln_tau_fact = ln_gamma(tau as f64 + 1.0);
    let mut counts = vec![0usize; vocab];
    let mut stack = Vec::new();
    compositions(tau, vocab, &mut counts, 0, &mut |k: &[usize]| {
        stack.clear();
        for (j, lw) in log_w.iter().enumerate() {
            if *lw == f64::NEG_INFINITY {
                continue;
            }
            let mut lp = *lw;
            for (c, &kc) in k.iter().enumerate() {
                if kc > 0 {
                    lp += kc as f64 * log_p[j][c];
                }
            }
            stack.push(lp);
        }
        let ln_g = log_sum_exp(&stack);
        if ln_g == f64::NEG_INFINITY {
            return;
        }
        let ln_coef =
            ln_tau_fact - k.iter().map(|&kc| ln_gamma(kc as f64 + 1.0)).sum::<f64>();
        h_marginal -= (ln_coef + ln_g).exp() * ln_g;
    });

    let h_given: f64 = tau as f64
        * weights.iter().zip(components).map(|(&w, p)| w * p.entropy()).sum::<f64>();
    Ok(h_marginal - h_given)
}

fn compositions(
    remaining: usize,
    slots: usize,
    counts: &mut Vec<usize>,
    idx: usize,
    f: &mut impl FnMut(&[usize]),
) {
    if idx + 1 == slots {
        counts[idx] = remaining;
        f(counts);
        return;
    }
    for k in 0..=remaining {
        counts[idx] = k;
        compositions(remaining - k, slots, counts, idx + 1, f);
    }
}

/// Per-step in-context estimation error 𝕀(D_τ; θ | ψ)/τ for a mixture with
/// finite mixing atoms over iid components, exact at any τ the composition
/// count allows.
pub fn icl_error_known_mixture(spec: &MixtureSpec, tau: usize) -> Result<f64> {
    let MixingPrior::Atoms { atoms, prior } = &spec.mixing else {
        return Err(Error::UnsupportedMode(
            "in-context error needs a finite mixing-atom prior".into(),
        ));
    };
    let ComponentSource::Tabular { kernels } = &spec.components else {
        return Err(Error::UnsupportedMode("in-context error needs tabular components".into()));
    };
    if kernels.iter().any(|k| k.window() > 0) {
        return Err(Error::UnsupportedMode(
            "count sufficiency requires memoryless components".into(),
        ));
    }
    if tau == 0 {
        return Err(Error::invalid("query document needs at least one step"));
    }
    let pmfs: Vec<Pmf> = kernels.iter().map(|k| k.step_pmf(&[], 0).clone()).collect();
    let mut err = 0.0;
    for (atom, &pa) in atoms.iter().zip(prior.probs()) {
        if pa > 0.0 {
            err += pa * mi_counts_iid(atom.probs(), &pmfs, tau)?;
        }
    }
    Ok(err / tau as f64)
}

/// Exact in-context loss and its three-term bound on an enumerable
/// hierarchical environment.
#[derive(Debug, Clone, serde::Serialize)]
pub struct IclExact {
    pub m_docs: usize,
    pub t_len: usize,
    pub tau: usize,
    /// Average per-step log loss of the Bayes predictor on the τ-step query
    /// document given the M-document prompt.
    pub loss: f64,
    /// ℍ(D|θ)/τ for a fresh τ-step document.
    pub irreducible: f64,
    /// 𝕀(H_{M,T}; ψ)/(M·τ).
    pub meta_info: f64,
    /// 𝕀(D_τ; θ | ψ)/τ.
    pub intra_info: f64,
    /// irreducible + meta + intra.
    pub bound: f64,
    /// bound − loss, nonnegative when the bound holds.
    pub margin: f64,
}

/// Enumerates the prompt-plus-query corpus exactly: the query loss is the
/// entropy gap [ℍ(H_{M,T}, D_τ) − ℍ(H_{M,T})]/τ.
pub fn icl_exact(
    spec: &MixtureSpec,
    m_docs: usize,
    t_len: usize,
    tau: usize,
    cap: u128,
) -> Result<IclExact> {
    if m_docs == 0 || t_len == 0 || tau == 0 {
        return Err(Error::invalid("prompt and query must be nonempty"));
    }
    let mut doc_lens = vec![t_len; m_docs];
    doc_lens.push(tau);
    let full = JointTable::hier(spec, &doc_lens, cap)?;
    let loss = (full.h_seq() - full.h_seq_prefix(m_docs)) / tau as f64;

    let MixingPrior::Atoms { atoms, prior } = &spec.mixing else {
        return Err(Error::UnsupportedMode(
            "exact in-context analysis needs a finite mixing-atom prior".into(),
        ));
    };
    let ComponentSource::Tabular { kernels } = &spec.components else {
        return Err(Error::UnsupportedMode(
            "exact in-context analysis needs tabular components".into(),
        ));
    };
    // marginal component law of the fresh document
    let n = kernels.len();
    let mut comp_marginal = vec![0.0; n];
    for (atom, &pa) in atoms.iter().zip(prior.probs()) {
        for (acc, &pj) in comp_marginal.iter_mut().zip(atom.probs()) {
            *acc += pa * pj;
        }
    }
    let irreducible = kernels
        .iter()
        .zip(&comp_marginal)
        .map(|(k, &pj)| pj * doc_entropy(&DocModel::Tabular(k), tau))
        .sum::<f64>()
        / tau as f64;

    let prompt = JointTable::hier(spec, &vec![t_len; m_docs], cap)?;
    let meta_info = prompt.mi_seq_psi() / (m_docs * tau) as f64;
    let query = JointTable::hier(spec, &[tau], cap)?;
    let intra_info = query.mi_doc_component_given_psi(0) / tau as f64;

    let bound = irreducible + meta_info + intra_info;
    Ok(IclExact {
        m_docs,
        t_len,
        tau,
        loss,
        irreducible,
        meta_info,
        intra_info,
        bound,
        margin: bound - loss,
    })
}

/// ℍ(D) of one `t_len`-step document under a fixed model, by accumulating
/// conditional step entropies along every prefix.
fn doc_entropy(model: &DocModel, t_len: usize) -> f64 {
    fn go(model: &DocModel, doc: &mut Document, t: usize, t_len: usize, p: f64, h: &mut f64) {
        if t == t_len {
            return;
        }
        let pmf = model.step_pmf(doc, t);
        *h += p * pmf.entropy();
        for (x, &px) in pmf.probs().iter().enumerate() {
            if px > 0.0 {
                doc.tokens.push(x + 1);
                go(model, doc, t + 1, t_len, p * px, h);
                doc.tokens.pop();
            }
        }
    }
    let mut h = 0.0;
    go(model, &mut Document::default(), 0, t_len, 1.0, &mut h);
    h
}
