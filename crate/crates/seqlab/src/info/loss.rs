//! Monte Carlo log-loss estimation. Every trial draws one parameter/corpus
//! pair from its own RNG substream and then runs all requested predictors on
//! that shared corpus, so cross-predictor differences are paired and the
//! result is byte-identical no matter how rayon schedules the trials.

use rayon::prelude::*;

use crate::data::Document;
use crate::env::EnvSpec;
use crate::error::{Error, Result};
use crate::info::{DecompositionMode, DecompositionReport, TermErrors};
use crate::predict::{build, PredictorKind, PredictorSettings};
use crate::prob::McEstimate;
use crate::rng::RngStream;

/// One predictor's results across all trials.
#[derive(Debug, Clone)]
pub struct KindRun {
    pub label: String,
    /// Per-trial average log loss, nats per step.
    pub per_trial: Vec<f64>,
    pub estimate: McEstimate,
    /// End-of-trial effective sample size averaged over trials, when the
    /// predictor carries weights at all.
    pub mean_ess: Option<f64>,
}

/// Runs every predictor in `kinds` over `n_trials` shared corpora of
/// `m_docs` documents × `t_len` steps.
pub fn run_trials(
    env: &EnvSpec,
    kinds: &[PredictorKind],
    settings: &PredictorSettings,
    m_docs: usize,
    t_len: usize,
    n_trials: usize,
    stream: RngStream,
) -> Result<Vec<KindRun>> {
    if kinds.is_empty() || n_trials == 0 || m_docs == 0 || t_len == 0 {
        return Err(Error::invalid("trial plan has an empty dimension"));
    }
    let doc_lens = vec![t_len; m_docs];
    let steps = (m_docs * t_len) as f64;
    let trials: Vec<(Vec<f64>, Vec<Option<f64>>)> = (0..n_trials)
        .into_par_iter()
        .map(|trial| -> Result<(Vec<f64>, Vec<Option<f64>>)> {
            let trial_stream = stream.substream(trial as u64);
            let mut corpus_rng = trial_stream.substream(0).rng();
            let draw = env.sample_params(m_docs, &mut corpus_rng);
            let corpus = env.sample_corpus(&draw, &doc_lens, &mut corpus_rng);
            let mut losses = Vec::with_capacity(kinds.len());
            let mut esses = Vec::with_capacity(kinds.len());
            for (k, kind) in kinds.iter().enumerate() {
                let pred_stream = trial_stream.substream(1 + k as u64);
                let mut state = build(env, &draw, kind, settings, pred_stream)?;
                let mut nats = 0.0;
                let mut final_ess = None;
                for (m, full) in corpus.iter().enumerate() {
                    state.begin_doc(m)?;
                    let mut partial = Document::default();
                    for (t, &tok) in full.tokens.iter().enumerate() {
                        if !full.inputs.is_empty() {
                            partial.inputs.push(full.inputs[t].clone());
                        }
                        let pred = state.step(&partial, t, tok)?;
                        let p = pred.prob(tok);
                        if p <= 0.0 {
                            return Err(Error::DegeneratePosterior(format!(
                                "predictor '{}' put zero mass on an observed token",
                                kind.label()
                            )));
                        }
                        nats -= p.ln();
                        partial.tokens.push(tok);
                    }
                    final_ess = state.ess();
                    state.end_doc()?;
                }
                losses.push(nats / steps);
                esses.push(final_ess);
            }
            Ok((losses, esses))
        })
        .collect::<Result<_>>()?;

    kinds
        .iter()
        .enumerate()
        .map(|(k, kind)| {
            let per_trial: Vec<f64> = trials.iter().map(|(l, _)| l[k]).collect();
            let estimate = McEstimate::from_samples(&per_trial)?;
            let esses: Vec<f64> = trials.iter().filter_map(|(_, e)| e[k]).collect();
            let mean_ess = (esses.len() == n_trials)
                .then(|| esses.iter().sum::<f64>() / n_trials as f64);
            Ok(KindRun { label: kind.label().to_string(), per_trial, estimate, mean_ess })
        })
        .collect()
}

/// Convenience wrapper for a single predictor.
pub fn estimate_log_loss(
    env: &EnvSpec,
    kind: &PredictorKind,
    settings: &PredictorSettings,
    m_docs: usize,
    t_len: usize,
    n_trials: usize,
    stream: RngStream,
) -> Result<McEstimate> {
    let runs =
        run_trials(env, std::slice::from_ref(kind), settings, m_docs, t_len, n_trials, stream)?;
    Ok(runs.into_iter().next().expect("one kind in, one run out").estimate)
}

/// Per-trial paired difference a − b; shared corpora make this far tighter
/// than differencing two independent estimates.
pub fn paired_diff(a: &KindRun, b: &KindRun) -> Result<McEstimate> {
    if a.per_trial.len() != b.per_trial.len() {
        return Err(Error::invalid("paired difference needs equal trial counts"));
    }
    let diffs: Vec<f64> =
        a.per_trial.iter().zip(&b.per_trial).map(|(x, y)| x - y).collect();
    McEstimate::from_samples(&diffs)
}

/// Monte Carlo decomposition via conditioning levels: total = Bayes loss,
/// irreducible = omniscient loss, meta = Bayes − ψ-informed, intra =
/// ψ-informed − omniscient (single-parameter environments fold the whole
/// estimation term into meta). When the Bayes predictor is approximate
/// (particle-based), the estimation terms are upper estimates of the true
/// information quantities.
pub fn mc_meta_terms(
    env: &EnvSpec,
    settings: &PredictorSettings,
    m_docs: usize,
    t_len: usize,
    n_trials: usize,
    stream: RngStream,
) -> Result<DecompositionReport> {
    let single = env.single_parameter();
    let kinds: Vec<PredictorKind> = if single {
        vec![PredictorKind::Bayes, PredictorKind::Omniscient]
    } else {
        vec![PredictorKind::Bayes, PredictorKind::PsiInformed, PredictorKind::Omniscient]
    };
    let runs = run_trials(env, &kinds, settings, m_docs, t_len, n_trials, stream)?;
    let total = runs[0].estimate;
    let irr = runs.last().expect("nonempty").estimate;
    let (meta, intra) = if single {
        let meta = paired_diff(&runs[0], &runs[1])?;
        (meta, McEstimate { mean: 0.0, stderr: 0.0, n: n_trials })
    } else {
        (paired_diff(&runs[0], &runs[1])?, paired_diff(&runs[1], &runs[2])?)
    };
    let residual = (total.mean - irr.mean - meta.mean - intra.mean).abs();
    Ok(DecompositionReport {
        mode: DecompositionMode::MonteCarlo,
        total_loss: total.mean,
        irreducible: irr.mean,
        meta_estimation: meta.mean,
        intra_estimation: intra.mean,
        residual,
        stderr: Some(TermErrors {
            total: total.stderr,
            irreducible: irr.stderr,
            meta: meta.stderr,
            intra: intra.stderr,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::enumerate::DEFAULT_CELL_CAP;
    use crate::env::tabular::TabularSpec;
    use crate::info::exact::exact_decomposition;

    fn coin_env() -> EnvSpec {
        EnvSpec::Tabular(TabularSpec::coin_pair(0.9).unwrap())
    }

    #[test]
    fn mc_loss_matches_exact_total() {
        let env = coin_env();
        let settings = PredictorSettings::default();
        let est = estimate_log_loss(
            &env,
            &PredictorKind::Bayes,
            &settings,
            1,
            2,
            2000,
            RngStream::new(7),
        )
        .unwrap();
        let spec = TabularSpec::coin_pair(0.9).unwrap();
        let exact = exact_decomposition(&spec, &[2], DEFAULT_CELL_CAP).unwrap();
        assert!(
            (est.mean - exact.total_loss).abs() < 4.0 * est.stderr,
            "mc {} vs exact {} (stderr {})",
            est.mean,
            exact.total_loss,
            est.stderr
        );
    }

    #[test]
    fn trials_are_schedule_independent() {
        let env = coin_env();
        let settings = PredictorSettings::default();
        let kinds = [PredictorKind::Bayes, PredictorKind::Omniscient];
        let run = |threads: usize| {
            let pool =
                rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                run_trials(&env, &kinds, &settings, 2, 3, 64, RngStream::new(11)).unwrap()
            })
        };
        let a = run(1);
        let b = run(4);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.per_trial, y.per_trial);
        }
    }

    #[test]
    fn meta_terms_telescope_and_stay_positive() {
        let spec = crate::env::mixture::tests::two_coin_mixture();
        let env = EnvSpec::Mixture(spec);
        let rep = mc_meta_terms(
            &env,
            &PredictorSettings::default(),
            2,
            2,
            600,
            RngStream::new(3),
        )
        .unwrap();
        assert!(rep.residual < 1e-12);
        let err = rep.stderr.unwrap();
        assert!(rep.meta_estimation > -4.0 * err.meta);
        assert!(rep.intra_estimation > -4.0 * err.intra);
    }

    #[test]
    fn tabular_bayes_reports_ess() {
        let env = coin_env();
        let runs = run_trials(
            &env,
            &[PredictorKind::Bayes],
            &PredictorSettings::default(),
            1,
            4,
            8,
            RngStream::new(1),
        )
        .unwrap();
        let ess = runs[0].mean_ess.unwrap();
        assert!(ess >= 1.0 && ess <= 2.0, "ess {ess}");
    }
}
