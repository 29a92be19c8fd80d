//! Exact loss accounting on enumerable environments. The predictor walks the
//! full corpus tree while the joint table supplies true path probabilities,
//! so every decomposition identity is checked against an actually-run
//! predictor rather than against a second entropy formula.

use crate::data::{Document, Token};
use crate::env::enumerate::JointTable;
use crate::env::mixture::{ComponentSource, MixingPrior, MixtureSpec};
use crate::env::tabular::TabularSpec;
use crate::env::DocModel;
use crate::error::{Error, Result};
use crate::info::{DecompositionMode, DecompositionReport};
use crate::predict::{FinitePosterior, HierExact, PerDocKind, PredictorState};
use crate::prob::{kl_divergence, Pmf};

/// Expected log loss of `state` at every document/step position, in nats,
/// under the table's true law. `losses[m][t]` sums ℙ(prefix, x)·(−ln q(x))
/// over all histories reaching that position.
pub fn exact_path_loss(table: &JointTable, mut state: PredictorState) -> Result<Vec<Vec<f64>>> {
    assert!(table.doc_lens.iter().all(|&t| t > 0), "empty documents are not enumerable");
    let mut losses: Vec<Vec<f64>> = table.doc_lens.iter().map(|&t| vec![0.0; t]).collect();
    state.begin_doc(0)?;
    let mut prefix = Vec::new();
    let mut doc = Document::default();
    loss_walk(table, &mut state, &mut prefix, &mut doc, 0, 0, &mut losses)?;
    Ok(losses)
}

fn loss_walk(
    table: &JointTable,
    state: &mut PredictorState,
    prefix: &mut Vec<Token>,
    doc: &mut Document,
    m: usize,
    t: usize,
    losses: &mut [Vec<f64>],
) -> Result<()> {
    let pred = state.predictive(doc, t)?;
    prefix.push(0);
    for x in 1..=table.vocab {
        *prefix.last_mut().unwrap() = x;
        let p_path = table.prefix_prob(prefix);
        if p_path <= 0.0 {
            continue;
        }
        let q = pred.prob(x);
        if q <= 0.0 {
            return Err(Error::InfiniteDivergence(format!(
                "predictor puts zero mass on a reachable token (doc {m}, step {t})"
            )));
        }
        losses[m][t] -= p_path * q.ln();
        let mut child = state.clone();
        child.step(doc, t, x)?;
        doc.tokens.push(x);
        if t + 1 == table.doc_lens[m] {
            child.end_doc()?;
            if m + 1 < table.doc_lens.len() {
                child.begin_doc(m + 1)?;
                let saved = std::mem::take(&mut doc.tokens);
                loss_walk(table, &mut child, prefix, doc, m + 1, 0, losses)?;
                doc.tokens = saved;
            }
        } else {
            loss_walk(table, &mut child, prefix, doc, m, t + 1, losses)?;
        }
        doc.tokens.pop();
    }
    prefix.pop();
    Ok(())
}

/// Per-step expectation of KL(exact posterior predictive ‖ `q`'s predictive)
/// over the table's law — the misspecification penalty of `q`.
pub fn exact_predictive_gap(table: &JointTable, mut q: PredictorState) -> Result<f64> {
    assert!(table.doc_lens.iter().all(|&t| t > 0), "empty documents are not enumerable");
    q.begin_doc(0)?;
    let mut prefix = Vec::new();
    let mut doc = Document::default();
    let mut gap = 0.0;
    gap_walk(table, &mut q, &mut prefix, &mut doc, 0, 0, &mut gap)?;
    Ok(gap / table.total_steps() as f64)
}

fn gap_walk(
    table: &JointTable,
    q: &mut PredictorState,
    prefix: &mut Vec<Token>,
    doc: &mut Document,
    m: usize,
    t: usize,
    gap: &mut f64,
) -> Result<()> {
    let p_here = table.prefix_prob(prefix);
    let bayes = table.predictive(prefix)?;
    let qp = q.predictive(doc, t)?;
    *gap += p_here * kl_divergence(bayes.probs(), qp.probs())?;
    prefix.push(0);
    for x in 1..=table.vocab {
        *prefix.last_mut().unwrap() = x;
        if table.prefix_prob(prefix) <= 0.0 {
            continue;
        }
        let mut child = q.clone();
        child.step(doc, t, x)?;
        doc.tokens.push(x);
        if t + 1 == table.doc_lens[m] {
            child.end_doc()?;
            if m + 1 < table.doc_lens.len() {
                child.begin_doc(m + 1)?;
                let saved = std::mem::take(&mut doc.tokens);
                gap_walk(table, &mut child, prefix, doc, m + 1, 0, gap)?;
                doc.tokens = saved;
            }
        } else {
            gap_walk(table, &mut child, prefix, doc, m, t + 1, gap)?;
        }
        doc.tokens.pop();
    }
    prefix.pop();
    Ok(())
}

/// Exact two-term decomposition for a single shared parameter: average Bayes
/// log loss split into ℍ(H|θ)/n and 𝕀(H;θ)/n, with the total measured by
/// running the posterior over every path.
pub fn exact_decomposition(
    spec: &TabularSpec,
    doc_lens: &[usize],
    cap: u128,
) -> Result<DecompositionReport> {
    let table = JointTable::single_docs(spec, doc_lens, cap)?;
    let steps = table.total_steps() as f64;
    let models: Vec<DocModel> = spec.kernels.iter().map(DocModel::Tabular).collect();
    let bayes = PredictorState::Finite(FinitePosterior::with_prior(models, &spec.prior)?);
    let losses = exact_path_loss(&table, bayes)?;
    let total_loss = losses.iter().flatten().sum::<f64>() / steps;
    let irreducible = table.h_seq_given_latent() / steps;
    let meta_estimation = table.mi_seq_latent() / steps;
    let residual = (total_loss - irreducible - meta_estimation).abs();
    Ok(DecompositionReport {
        mode: DecompositionMode::Exact,
        total_loss,
        irreducible,
        meta_estimation,
        intra_estimation: 0.0,
        residual,
        stderr: None,
    })
}

/// Exact four-term decomposition for an enumerable hierarchical environment:
/// total = ℍ(H|θ₁:M)/MT + 𝕀(H;ψ)/MT + 𝕀(Dₘ;θₘ|ψ)/T. The intra term is
/// computed for every document and must agree across them to 1e-10.
pub fn exact_meta_decomposition(
    spec: &MixtureSpec,
    m_docs: usize,
    t_len: usize,
    cap: u128,
) -> Result<DecompositionReport> {
    if m_docs == 0 {
        return Err(Error::invalid("meta decomposition needs at least one document"));
    }
    let doc_lens = vec![t_len; m_docs];
    let table = JointTable::hier(spec, &doc_lens, cap)?;
    let steps = table.total_steps() as f64;
    let bayes = PredictorState::HierExact(HierExact::new(spec, cap)?);
    let losses = exact_path_loss(&table, bayes)?;
    let total_loss = losses.iter().flatten().sum::<f64>() / steps;
    let irreducible = table.h_seq_given_latent() / steps;
    let meta_estimation = table.mi_seq_psi() / steps;
    let intra: Vec<f64> = (0..m_docs).map(|m| table.mi_doc_component_given_psi(m)).collect();
    let spread = intra.iter().fold(0.0f64, |acc, &v| acc.max((v - intra[0]).abs()));
    if spread > 1e-10 {
        return Err(Error::invalid(format!(
            "within-document information differs across documents (spread {spread:.3e})"
        )));
    }
    let intra_estimation = intra[0] / t_len as f64;
    let residual = (total_loss - irreducible - meta_estimation - intra_estimation).abs();
    Ok(DecompositionReport {
        mode: DecompositionMode::Exact,
        total_loss,
        irreducible,
        meta_estimation,
        intra_estimation,
        residual,
        stderr: None,
    })
}

/// Exact per-step log loss of the ψ-informed predictor: condition the
/// environment on each mixing atom, run the known-ψ predictor over that
/// conditional law, and average. Equals irreducible + intra by optimality.
pub fn exact_psi_informed_loss(
    spec: &MixtureSpec,
    m_docs: usize,
    t_len: usize,
    cap: u128,
) -> Result<f64> {
    let MixingPrior::Atoms { atoms, prior } = &spec.mixing else {
        return Err(Error::UnsupportedMode(
            "exact ψ-informed loss needs a finite mixing-atom prior".into(),
        ));
    };
    let ComponentSource::Tabular { kernels } = &spec.components else {
        return Err(Error::UnsupportedMode(
            "exact ψ-informed loss needs tabular components".into(),
        ));
    };
    let doc_lens = vec![t_len; m_docs];
    let mut loss = 0.0;
    for (a, atom) in atoms.iter().enumerate() {
        let pa = prior.probs()[a];
        if pa <= 0.0 {
            continue;
        }
        let sub = MixtureSpec::discrete(vec![atom.clone()], Pmf::delta(1, 0), kernels.clone())?;
        let table = JointTable::hier(&sub, &doc_lens, cap)?;
        let models: Vec<DocModel> = kernels.iter().map(DocModel::Tabular).collect();
        let state = PredictorState::PerDoc {
            kind: PerDocKind::MixturePsi { models, psi: atom.clone() },
            live: None,
        };
        let losses = exact_path_loss(&table, state)?;
        loss += pa * losses.iter().flatten().sum::<f64>();
    }
    Ok(loss / (m_docs * t_len) as f64)
}

/// Exact cost of running Bayes under a wrong prior.
#[derive(Debug, Clone, serde::Serialize)]
pub struct MisspecReport {
    /// Per-step loss of the correctly specified posterior.
    pub loss_true: f64,
    /// Per-step loss of the posterior built from the alternative prior.
    pub loss_alt: f64,
    /// `loss_alt − loss_true`.
    pub extra: f64,
    /// Per-step E KL(true predictive ‖ alternative predictive); the chain
    /// rule makes this equal `extra` exactly.
    pub predictive_gap: f64,
    /// |extra − predictive_gap|.
    pub residual: f64,
    /// KL(true prior ‖ alternative prior); +∞ when the alternative misses
    /// support, in which case the prior-KL bound is vacuous.
    pub prior_kl: f64,
}

/// Runs the true and misspecified posteriors over every path of a shared-θ
/// tabular environment with `m_docs` documents of `t_len` steps each.
pub fn exact_misspecified(
    spec: &TabularSpec,
    alt_prior: &Pmf,
    m_docs: usize,
    t_len: usize,
    cap: u128,
) -> Result<MisspecReport> {
    let table = JointTable::single_docs(spec, &vec![t_len; m_docs], cap)?;
    let steps = table.total_steps() as f64;
    let models: Vec<DocModel> = spec.kernels.iter().map(DocModel::Tabular).collect();
    let bayes = PredictorState::Finite(FinitePosterior::with_prior(models.clone(), &spec.prior)?);
    let alt = PredictorState::Finite(FinitePosterior::with_prior(models, alt_prior)?);
    let loss_true =
        exact_path_loss(&table, bayes)?.iter().flatten().sum::<f64>() / steps;
    let loss_alt =
        exact_path_loss(&table, alt.clone())?.iter().flatten().sum::<f64>() / steps;
    let extra = loss_alt - loss_true;
    let predictive_gap = exact_predictive_gap(&table, alt)?;
    let prior_kl = match kl_divergence(spec.prior.probs(), alt_prior.probs()) {
        Ok(v) => v,
        Err(Error::InfiniteDivergence(_)) => f64::INFINITY,
        Err(e) => return Err(e),
    };
    Ok(MisspecReport {
        loss_true,
        loss_alt,
        extra,
        predictive_gap,
        residual: (extra - predictive_gap).abs(),
        prior_kl,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::enumerate::DEFAULT_CELL_CAP;
    use approx::assert_abs_diff_eq;

    fn coin_pair() -> TabularSpec {
        TabularSpec::coin_pair(0.9).unwrap()
    }

    #[test]
    fn two_term_split_at_t1() {
        let rep = exact_decomposition(&coin_pair(), &[1], DEFAULT_CELL_CAP).unwrap();
        assert_abs_diff_eq!(rep.total_loss, 2f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(rep.irreducible, 0.3250829733914482, epsilon = 1e-12);
        assert_abs_diff_eq!(rep.meta_estimation, 0.3680642071684971, epsilon = 1e-12);
        assert_eq!(rep.intra_estimation, 0.0);
        assert!(rep.residual < 1e-12);
    }

    #[test]
    fn two_term_residual_vanishes_as_horizon_grows() {
        for t in [2, 4, 7] {
            let rep = exact_decomposition(&coin_pair(), &[t], DEFAULT_CELL_CAP).unwrap();
            assert!(rep.residual < 1e-9, "T={t}: residual {}", rep.residual);
            // estimation error shrinks with horizon
            assert!(rep.meta_estimation < 0.3680642071684971);
        }
    }

    #[test]
    fn shared_theta_documents_decompose_too() {
        let rep = exact_decomposition(&coin_pair(), &[2, 2], DEFAULT_CELL_CAP).unwrap();
        assert!(rep.residual < 1e-9);
    }

    #[test]
    fn four_term_split_on_coin_mixture() {
        let spec = crate::env::mixture::tests::two_coin_mixture();
        let rep = exact_meta_decomposition(&spec, 2, 2, DEFAULT_CELL_CAP).unwrap();
        assert!(rep.residual < 1e-9, "residual {}", rep.residual);
        assert!(rep.irreducible > 0.0);
        assert!(rep.meta_estimation > 0.0);
        assert!(rep.intra_estimation > 0.0);
    }

    #[test]
    fn psi_informed_loss_equals_irreducible_plus_intra() {
        let spec = crate::env::mixture::tests::two_coin_mixture();
        let rep = exact_meta_decomposition(&spec, 2, 2, DEFAULT_CELL_CAP).unwrap();
        let psi_loss = exact_psi_informed_loss(&spec, 2, 2, DEFAULT_CELL_CAP).unwrap();
        assert_abs_diff_eq!(
            psi_loss,
            rep.irreducible + rep.intra_estimation,
            epsilon = 1e-10
        );
    }

    #[test]
    fn suboptimal_predictors_lose_more() {
        let spec = crate::env::mixture::tests::two_coin_mixture();
        let table = JointTable::hier(&spec, &[2, 2], DEFAULT_CELL_CAP).unwrap();
        let steps = table.total_steps() as f64;
        let per_step = |state: PredictorState| -> f64 {
            exact_path_loss(&table, state).unwrap().iter().flatten().sum::<f64>() / steps
        };
        let bayes = per_step(PredictorState::HierExact(
            HierExact::new(&spec, DEFAULT_CELL_CAP).unwrap(),
        ));
        let uniform = per_step(PredictorState::Uniform { vocab: 2 });
        let frozen = per_step(PredictorState::Frozen(Box::new(PredictorState::HierExact(
            HierExact::new(&spec, DEFAULT_CELL_CAP).unwrap(),
        ))));
        assert!(bayes <= uniform + 1e-12);
        assert!(bayes <= frozen + 1e-12);
    }

    #[test]
    fn wrong_prior_cost_equals_predictive_gap() {
        let alt = Pmf::new(vec![0.9, 0.1]).unwrap();
        let rep = exact_misspecified(&coin_pair(), &alt, 1, 1, DEFAULT_CELL_CAP).unwrap();
        // closed form at M=T=1: ½(−ln 0.82 − ln 0.18) − ln 2
        let expect = 0.5 * (-(0.82f64.ln()) - 0.18f64.ln()) - 2f64.ln();
        assert_abs_diff_eq!(rep.extra, expect, epsilon = 1e-12);
        assert!(rep.residual < 1e-12);
        assert_abs_diff_eq!(rep.prior_kl, 0.5108256237659907, epsilon = 1e-12);
        assert!(rep.extra <= rep.prior_kl);
    }

    #[test]
    fn missing_support_prior_reports_infinite_kl() {
        let alt = Pmf::new(vec![1.0, 0.0]).unwrap();
        let rep = exact_misspecified(&coin_pair(), &alt, 1, 2, DEFAULT_CELL_CAP).unwrap();
        assert!(rep.prior_kl.is_infinite());
        assert!(rep.residual < 1e-12);
    }
}
