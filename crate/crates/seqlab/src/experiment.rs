//! Experiment driver behind the `seqlab` binary: turns a validated
//! [`ExperimentConfig`](crate::config::ExperimentConfig) into result rows and
//! renders them as deterministic artifacts.
//!
//! Rendering is part of the contract: floats are written with Rust's
//! shortest-roundtrip `Display`, rows are emitted in grid order, and nothing
//! host- or time-dependent enters any artifact, so the same config and seed
//! produce byte-identical files on every rerun at any thread count.
//!
//! Column conventions for `simulate` rows: `irr`, `meta_est`, and
//! `intra_est` come from the conditioning ladder (Bayes, ψ-informed,
//! omniscient) run alongside the requested predictors; the ladder is
//! truncated on environments where a rung has no sampler, and the matching
//! columns stay empty. `residual` is the decomposition-identity defect and
//! is only defined for the Bayes row; `margin` is `bound_value` minus the
//! estimation terms.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bounds;
use crate::config::{BoundConfig, ExperimentConfig};
use crate::env::enumerate::{JointTable, DEFAULT_CELL_CAP};
use crate::env::mixture::MixingPrior;
use crate::env::EnvSpec;
use crate::error::{Error, Result};
use crate::info::{
    ib_curve, icl_error_known_mixture, icl_exact, paired_diff, run_trials, sandwich, IbOptions,
};
use crate::predict::PredictorKind;
use crate::rng::RngStream;
use crate::verify::SandwichMode;

/// One `simulate` result row; field order matches [`RESULT_COLUMNS`].
#[derive(Debug, Clone, Serialize)]
pub struct ResultRow {
    pub env: String,
    pub predictor: String,
    #[serde(rename = "M")]
    pub m_docs: usize,
    #[serde(rename = "T")]
    pub t_len: usize,
    pub tau: Option<usize>,
    pub loss_mean: f64,
    pub loss_stderr: Option<f64>,
    pub irr: Option<f64>,
    pub meta_est: Option<f64>,
    pub intra_est: Option<f64>,
    pub bound_value: Option<f64>,
    pub margin: Option<f64>,
    pub ess: Option<f64>,
    pub seed: u64,
    pub residual: Option<f64>,
}

pub const RESULT_COLUMNS: [&str; 15] = [
    "env",
    "predictor",
    "M",
    "T",
    "tau",
    "loss_mean",
    "loss_stderr",
    "irr",
    "meta_est",
    "intra_est",
    "bound_value",
    "margin",
    "ess",
    "seed",
    "residual",
];

impl ResultRow {
    fn cells(&self) -> Vec<String> {
        vec![
            self.env.clone(),
            self.predictor.clone(),
            self.m_docs.to_string(),
            self.t_len.to_string(),
            opt_u(self.tau),
            fmt_f(self.loss_mean),
            opt_f(self.loss_stderr),
            opt_f(self.irr),
            opt_f(self.meta_est),
            opt_f(self.intra_est),
            opt_f(self.bound_value),
            opt_f(self.margin),
            opt_f(self.ess),
            self.seed.to_string(),
            opt_f(self.residual),
        ]
    }
}

/// Row label: the kind's short name, with the misspecified prior spelled out
/// so two wrong-prior predictors stay distinguishable.
fn kind_label(kind: &PredictorKind) -> String {
    match kind {
        PredictorKind::Misspecified { prior } => {
            let ps: Vec<String> = prior.probs().iter().map(|p| format!("{p}")).collect();
            format!("misspecified[{}]", ps.join(" "))
        }
        other => other.label().to_string(),
    }
}

/// Runs the full m_docs × t_len grid. Each grid point draws from its own
/// substream of the master seed, so row values are independent of grid
/// iteration order and thread count.
pub fn simulate(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let env = config.build_env()?;
    let settings = config.predictor_settings();
    let requested = config.predictor_kinds()?;
    let env_label = config.environment.label();
    let single = env.single_parameter();

    // Conditioning ladder for the decomposition columns. Full Bayes has no
    // sampler on the linear-representation environment, so there the ladder
    // starts at the ψ-informed rung and `meta_est` stays empty.
    let ladder: Vec<PredictorKind> = if single {
        vec![PredictorKind::Bayes, PredictorKind::Omniscient]
    } else if matches!(env, EnvSpec::LinRep(_)) {
        vec![PredictorKind::PsiInformed, PredictorKind::Omniscient]
    } else {
        vec![PredictorKind::Bayes, PredictorKind::PsiInformed, PredictorKind::Omniscient]
    };
    let mut kinds = requested.clone();
    for k in &ladder {
        if !kinds.contains(k) {
            kinds.push(k.clone());
        }
    }
    let position = |k: &PredictorKind| kinds.iter().position(|x| x == k);
    let bayes_at = position(&PredictorKind::Bayes);
    let psi_at = position(&PredictorKind::PsiInformed);
    let omni_at = position(&PredictorKind::Omniscient).expect("ladder ends omniscient");

    let mut rows = Vec::new();
    let mut grid_index = 0u64;
    for &m in &config.grid.m_docs {
        for &t in &config.grid.t_len {
            let stream = RngStream::new(config.master_seed).substream(grid_index);
            grid_index += 1;
            let runs = run_trials(&env, &kinds, &settings, m, t, config.grid.n_trials, stream)?;
            let irr = runs[omni_at].estimate.mean;
            let (meta, intra) = if single {
                let b = bayes_at.expect("single-parameter ladder starts at Bayes");
                (Some(paired_diff(&runs[b], &runs[omni_at])?.mean), Some(0.0))
            } else {
                match (bayes_at, psi_at) {
                    (Some(b), Some(p)) => (
                        Some(paired_diff(&runs[b], &runs[p])?.mean),
                        Some(paired_diff(&runs[p], &runs[omni_at])?.mean),
                    ),
                    (None, Some(p)) => {
                        (None, Some(paired_diff(&runs[p], &runs[omni_at])?.mean))
                    }
                    _ => (None, None),
                }
            };
            let bound = bound_for(&env, m, t);
            let margin = match (bound, meta, intra) {
                (Some(b), Some(me), Some(it)) => Some(b - me - it),
                _ => None,
            };
            for (ki, kind) in requested.iter().enumerate() {
                let run = &runs[ki];
                let residual = match (kind, meta, intra) {
                    (PredictorKind::Bayes, Some(me), Some(it)) => {
                        Some((run.estimate.mean - irr - me - it).abs())
                    }
                    _ => None,
                };
                rows.push(ResultRow {
                    env: env_label.clone(),
                    predictor: kind_label(kind),
                    m_docs: m,
                    t_len: t,
                    tau: None,
                    loss_mean: run.estimate.mean,
                    loss_stderr: Some(run.estimate.stderr),
                    irr: Some(irr),
                    meta_est: meta,
                    intra_est: intra,
                    bound_value: bound,
                    margin,
                    ess: run.mean_ess,
                    seed: config.master_seed,
                    residual,
                });
            }
        }
    }
    Ok(rows)
}

/// Per-step estimation-error bound matching the environment, where one of
/// the closed forms applies; `None` where none does (continuous mixing
/// priors, transformer pools, bound regimes with nonpositive log factors).
pub fn bound_for(env: &EnvSpec, m_docs: usize, t_len: usize) -> Option<f64> {
    match env {
        EnvSpec::Tabular(spec) => {
            bounds::entropy_bound(spec.prior.entropy(), 0.0, m_docs, t_len).ok()
        }
        EnvSpec::Mixture(spec) => match &spec.mixing {
            MixingPrior::Atoms { atoms, prior } => {
                let h_theta: f64 = prior
                    .probs()
                    .iter()
                    .zip(atoms)
                    .map(|(&w, atom)| w * atom.entropy())
                    .sum();
                bounds::entropy_bound(prior.entropy(), h_theta, m_docs, t_len).ok()
            }
            MixingPrior::Dirichlet { .. } => None,
        },
        EnvSpec::Logistic(spec) => bounds::logistic_bound(spec.dim, m_docs * t_len).ok(),
        EnvSpec::Transformer(spec) => bounds::transformer_bound(
            spec.vocab,
            spec.attn_dim,
            spec.context,
            spec.depth,
            m_docs * t_len,
        )
        .ok(),
        EnvSpec::LinRep(spec) => {
            bounds::linrep_bound(spec.dim, spec.rank, m_docs, t_len).ok()
        }
    }
}

/// One bottleneck-curve point; ε is per-step, `rate` and `relevant_info`
/// are total nats (the sandwich normalizes by the step count).
#[derive(Debug, Clone, Serialize)]
pub struct RdRow {
    #[serde(rename = "M")]
    pub m_docs: usize,
    #[serde(rename = "T")]
    pub t_len: usize,
    pub epsilon: f64,
    pub rate: f64,
    pub relevant_info: f64,
}

pub const RD_COLUMNS: [&str; 5] = ["M", "T", "epsilon", "rate", "relevant_info"];

/// Sandwich evaluation for one grid point, all values per step.
#[derive(Debug, Clone, Serialize)]
pub struct RdSummary {
    #[serde(rename = "M")]
    pub m_docs: usize,
    #[serde(rename = "T")]
    pub t_len: usize,
    pub mi_per_step: f64,
    pub lower: f64,
    pub upper: f64,
}

pub const RD_SUMMARY_COLUMNS: [&str; 5] = ["M", "T", "mi_per_step", "lower", "upper"];

impl RdRow {
    fn cells(&self) -> Vec<String> {
        vec![
            self.m_docs.to_string(),
            self.t_len.to_string(),
            fmt_f(self.epsilon),
            fmt_f(self.rate),
            fmt_f(self.relevant_info),
        ]
    }
}

impl RdSummary {
    fn cells(&self) -> Vec<String> {
        vec![
            self.m_docs.to_string(),
            self.t_len.to_string(),
            fmt_f(self.mi_per_step),
            fmt_f(self.lower),
            fmt_f(self.upper),
        ]
    }
}

/// Computes the information-bottleneck curve and the rate–distortion
/// sandwich for every grid point. Needs the config's `rd` section; the
/// environment must be enumerable in the requested mode.
pub fn rd_curve(config: &ExperimentConfig) -> Result<(Vec<RdRow>, Vec<RdSummary>)> {
    let rd = config
        .rd
        .as_ref()
        .ok_or_else(|| Error::Config("rd: the rd-curve subcommand needs an rd section".into()))?;
    let env = config.build_env()?;
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    let mut grid_index = 0u64;
    for &m in &config.grid.m_docs {
        for &t in &config.grid.t_len {
            let stream = RngStream::new(config.master_seed).substream(grid_index);
            grid_index += 1;
            let doc_lens = vec![t; m];
            let (joint, mi, steps) = match (&env, rd.mode) {
                (EnvSpec::Tabular(spec), SandwichMode::Single) => {
                    let table = JointTable::single_docs(spec, &doc_lens, DEFAULT_CELL_CAP)?;
                    (table.probs().to_vec(), table.mi_seq_latent(), table.total_steps())
                }
                (EnvSpec::Mixture(spec), SandwichMode::Meta) => {
                    let table = JointTable::hier(spec, &doc_lens, DEFAULT_CELL_CAP)?;
                    (table.psi_seq_joint(), table.mi_seq_psi(), table.total_steps())
                }
                _ => {
                    return Err(Error::UnsupportedMode(
                        "single mode needs a tabular environment, meta mode a finite mixture"
                            .into(),
                    ))
                }
            };
            let points = ib_curve(&joint, steps, &IbOptions::default(), stream)?;
            let rep = sandwich(&points, mi, steps, rd.n_grid)?;
            rows.extend(points.iter().map(|p| RdRow {
                m_docs: m,
                t_len: t,
                epsilon: p.epsilon,
                rate: p.rate,
                relevant_info: p.relevant_info,
            }));
            summaries.push(RdSummary {
                m_docs: m,
                t_len: t,
                mi_per_step: rep.mi_per_step,
                lower: rep.lower,
                upper: rep.upper,
            });
        }
    }
    Ok((rows, summaries))
}

/// One in-context prediction row: the known-mixture error with its ln(N)/τ
/// cap, and the exact prompt-conditioned decomposition with its bound.
#[derive(Debug, Clone, Serialize)]
pub struct IclRow {
    #[serde(rename = "M")]
    pub m_docs: usize,
    #[serde(rename = "T")]
    pub t_len: usize,
    pub tau: usize,
    pub known_error: f64,
    pub cap: f64,
    pub loss: f64,
    pub irr: f64,
    pub meta_info: f64,
    pub intra_info: f64,
    pub bound: f64,
    pub margin: f64,
}

pub const ICL_COLUMNS: [&str; 11] = [
    "M",
    "T",
    "tau",
    "known_error",
    "cap",
    "loss",
    "irr",
    "meta_info",
    "intra_info",
    "bound",
    "margin",
];

impl IclRow {
    fn cells(&self) -> Vec<String> {
        vec![
            self.m_docs.to_string(),
            self.t_len.to_string(),
            self.tau.to_string(),
            fmt_f(self.known_error),
            fmt_f(self.cap),
            fmt_f(self.loss),
            fmt_f(self.irr),
            fmt_f(self.meta_info),
            fmt_f(self.intra_info),
            fmt_f(self.bound),
            fmt_f(self.margin),
        ]
    }
}

/// Sweeps grid.tau for every (M, T) grid point on a finite mixture.
pub fn icl_table(config: &ExperimentConfig) -> Result<Vec<IclRow>> {
    let EnvSpec::Mixture(spec) = config.build_env()? else {
        return Err(Error::UnsupportedMode(
            "in-context sweeps need a mixture environment".into(),
        ));
    };
    if config.grid.tau.is_empty() {
        return Err(Error::Config(
            "grid.tau: the icl subcommand needs at least one query length".into(),
        ));
    }
    let log_n = (spec.n_components() as f64).ln();
    let cap = config.predictor_settings().exact_cap;
    let mut rows = Vec::new();
    for &m in &config.grid.m_docs {
        for &t in &config.grid.t_len {
            for &tau in &config.grid.tau {
                let known = icl_error_known_mixture(&spec, tau)?;
                let ex = icl_exact(&spec, m, t, tau, cap)?;
                rows.push(IclRow {
                    m_docs: m,
                    t_len: t,
                    tau,
                    known_error: known,
                    cap: log_n / tau as f64,
                    loss: ex.loss,
                    irr: ex.irreducible,
                    meta_info: ex.meta_info,
                    intra_info: ex.intra_info,
                    bound: ex.bound,
                    margin: ex.margin,
                });
            }
        }
    }
    Ok(rows)
}

/// One bound-table row. `value` is empty when the closed form rejects the
/// parameter point; `note` then carries the rejection, and for in-context
/// rows the large-M form.
#[derive(Debug, Clone, Serialize)]
pub struct BoundRow {
    pub family: String,
    pub params: String,
    pub value: Option<f64>,
    pub note: String,
}

pub const BOUND_COLUMNS: [&str; 4] = ["family", "params", "value", "note"];

impl BoundRow {
    fn cells(&self) -> Vec<String> {
        vec![self.family.clone(), self.params.clone(), opt_f(self.value), self.note.clone()]
    }
}

fn push_bound(rows: &mut Vec<BoundRow>, family: &str, params: String, res: Result<f64>) {
    match res {
        Ok(v) => rows.push(BoundRow {
            family: family.into(),
            params,
            value: Some(v),
            note: String::new(),
        }),
        Err(e) => {
            rows.push(BoundRow { family: family.into(), params, value: None, note: e.to_string() })
        }
    }
}

/// Evaluates every configured bound family over its parameter cross
/// product. Individual out-of-regime points become rows with an empty value
/// and an explanatory note rather than failing the whole table.
pub fn bounds_table(config: &ExperimentConfig) -> Result<Vec<BoundRow>> {
    if config.bounds.is_empty() {
        return Err(Error::Config("bounds: the bounds subcommand needs at least one entry".into()));
    }
    let mut rows = Vec::new();
    for entry in &config.bounds {
        match entry {
            BoundConfig::Logistic { dim, t_len } => {
                for &d in dim {
                    for &t in t_len {
                        push_bound(
                            &mut rows,
                            "logistic",
                            format!("d={d} T={t}"),
                            bounds::logistic_bound(d, t),
                        );
                    }
                }
            }
            BoundConfig::Transformer { dim, attn_dim, context, depth, t_len } => {
                for &d in dim {
                    for &r in attn_dim {
                        for &k in context {
                            for &l in depth {
                                for &t in t_len {
                                    push_bound(
                                        &mut rows,
                                        "transformer",
                                        format!("d={d} r={r} k={k} l={l} T={t}"),
                                        bounds::transformer_bound(d, r, k, l, t),
                                    );
                                }
                            }
                        }
                    }
                }
            }
            BoundConfig::Linrep { dim, rank, m_docs, t_len } => {
                for &d in dim {
                    for &r in rank {
                        for &m in m_docs {
                            for &t in t_len {
                                push_bound(
                                    &mut rows,
                                    "linrep",
                                    format!("d={d} r={r} M={m} T={t}"),
                                    bounds::linrep_bound(d, r, m, t),
                                );
                            }
                        }
                    }
                }
            }
            BoundConfig::SparseMeta { support, m_docs, n_components } => {
                for &r in support {
                    for &m in m_docs {
                        for &n in n_components {
                            push_bound(
                                &mut rows,
                                "sparse_meta",
                                format!("R={r} M={m} N={n}"),
                                bounds::sparse_meta_bound(r, m, n),
                            );
                        }
                    }
                }
            }
            BoundConfig::MixtureTransformer {
                dim,
                attn_dim,
                context,
                depth,
                n_components,
                support,
                m_docs,
                t_len,
            } => {
                for &d in dim {
                    for &r in attn_dim {
                        for &k in context {
                            for &l in depth {
                                for &n in n_components {
                                    for &rs in support {
                                        for &m in m_docs {
                                            for &t in t_len {
                                                push_bound(
                                                    &mut rows,
                                                    "mixture_transformer",
                                                    format!(
                                                        "d={d} r={r} k={k} l={l} N={n} R={rs} M={m} T={t}"
                                                    ),
                                                    bounds::mixture_transformer_bound(
                                                        d, r, k, l, m, t, n, rs,
                                                    ),
                                                );
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            BoundConfig::Entropy { h_psi, h_theta_given_psi, m_docs, t_len } => {
                for &hp in h_psi {
                    for &ht in h_theta_given_psi {
                        for &m in m_docs {
                            for &t in t_len {
                                push_bound(
                                    &mut rows,
                                    "entropy",
                                    format!("H(psi)={hp} H(theta|psi)={ht} M={m} T={t}"),
                                    bounds::entropy_bound(hp, ht, m, t),
                                );
                            }
                        }
                    }
                }
            }
            BoundConfig::Misspecified { kl_prior, m_docs, t_len } => {
                for &kl in kl_prior {
                    for &m in m_docs {
                        for &t in t_len {
                            push_bound(
                                &mut rows,
                                "misspecified",
                                format!("KL={kl} M={m} T={t}"),
                                bounds::misspecified_bound(kl, m, t),
                            );
                        }
                    }
                }
            }
            BoundConfig::Icl { h_query_given_theta, meta_info, intra_info, m_docs, tau } => {
                for &h in h_query_given_theta {
                    for &me in meta_info {
                        for &it in intra_info {
                            for &m in m_docs {
                                for &tq in tau {
                                    let params =
                                        format!("H(D|theta)={h} meta={me} intra={it} M={m} tau={tq}");
                                    match bounds::icl_bound(h, me, it, m, tq) {
                                        Ok(b) => rows.push(BoundRow {
                                            family: "icl".into(),
                                            params,
                                            value: Some(b.full),
                                            note: format!("large_m={}", fmt_f(b.large_m)),
                                        }),
                                        Err(e) => rows.push(BoundRow {
                                            family: "icl".into(),
                                            params,
                                            value: None,
                                            note: e.to_string(),
                                        }),
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Rendering

fn fmt_f(v: f64) -> String {
    format!("{v}")
}

fn opt_f(v: Option<f64>) -> String {
    v.map(fmt_f).unwrap_or_default()
}

fn opt_u(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Minimal CSV quoting: fields containing a comma, quote, or newline are
/// wrapped in quotes with inner quotes doubled.
fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// Renders a header and pre-stringified rows as CSV with `\n` endings and a
/// trailing newline.
pub fn render_csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        let cells: Vec<String> = row.iter().map(|c| csv_field(c)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn render_results_csv(rows: &[ResultRow]) -> String {
    render_csv(&RESULT_COLUMNS, &rows.iter().map(ResultRow::cells).collect::<Vec<_>>())
}

pub fn render_rd_csv(rows: &[RdRow]) -> String {
    render_csv(&RD_COLUMNS, &rows.iter().map(RdRow::cells).collect::<Vec<_>>())
}

pub fn render_rd_summary_csv(rows: &[RdSummary]) -> String {
    render_csv(&RD_SUMMARY_COLUMNS, &rows.iter().map(RdSummary::cells).collect::<Vec<_>>())
}

pub fn render_icl_csv(rows: &[IclRow]) -> String {
    render_csv(&ICL_COLUMNS, &rows.iter().map(IclRow::cells).collect::<Vec<_>>())
}

pub fn render_bounds_csv(rows: &[BoundRow]) -> String {
    render_csv(&BOUND_COLUMNS, &rows.iter().map(BoundRow::cells).collect::<Vec<_>>())
}

/// JSON rendering of any row set, pretty-printed with a trailing newline.
pub fn render_json<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut s = serde_json::to_string_pretty(rows)?;
    s.push('\n');
    Ok(s)
}

/// Reproducibility record written next to every artifact set. Deliberately
/// free of timestamps and host details: the same config text and seed must
/// yield a byte-identical manifest.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config_sha256: String,
    pub library_version: String,
    pub master_seed: u64,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, config_text: &str, master_seed: u64, outputs: Vec<String>) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(config_text.as_bytes());
        Manifest {
            command: command.into(),
            config_sha256: format!("{:x}", hasher.finalize()),
            library_version: env!("CARGO_PKG_VERSION").into(),
            master_seed,
            outputs,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest is plain data");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;

    fn coin_config(n_trials: usize) -> ExperimentConfig {
        ExperimentConfig::from_json(&format!(
            r#"{{
                "environment": {{"coin_pair": {{"p": 0.9}}}},
                "grid": {{"m_docs": [1], "t_len": [2], "n_trials": {n_trials}}},
                "master_seed": 11
            }}"#
        ))
        .unwrap()
    }

    #[test]
    fn simulate_fills_decomposition_columns_on_the_coin_pair() {
        let config = coin_config(400);
        let rows = simulate(&config).unwrap();
        assert_eq!(rows.len(), 1);
        let row = &rows[0];
        assert_eq!(row.predictor, "bayes");
        // Paired differencing makes the identity telescope trial by trial.
        assert!(row.residual.unwrap() < 1e-12, "residual {:?}", row.residual);
        assert_eq!(row.intra_est, Some(0.0));
        let bound = bounds::entropy_bound(2f64.ln(), 0.0, 1, 2).unwrap();
        assert_eq!(row.bound_value, Some(bound));
        assert!((row.margin.unwrap() - (bound - row.meta_est.unwrap())).abs() < 1e-15);
    }

    #[test]
    fn simulate_is_bitwise_deterministic() {
        let config = coin_config(100);
        let a = render_results_csv(&simulate(&config).unwrap());
        let b = render_results_csv(&simulate(&config).unwrap());
        assert_eq!(a, b);
        assert!(a.starts_with("env,predictor,M,T,tau,"));
        assert!(a.ends_with('\n'));
    }

    #[test]
    fn simulate_covers_the_hierarchical_ladder() {
        let config = ExperimentConfig::from_json(
            r#"{
                "environment": {"mixture": {
                    "atoms": [[0.9, 0.1], [0.1, 0.9]],
                    "atom_prior": [0.5, 0.5],
                    "components": [[0.9, 0.1], [0.1, 0.9]]
                }},
                "predictors": ["bayes", {"misspecified": {"prior": [0.9, 0.1]}}],
                "grid": {"m_docs": [2], "t_len": [2], "n_trials": 200},
                "master_seed": 3
            }"#,
        )
        .unwrap();
        let rows = simulate(&config).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].residual.unwrap() < 1e-12);
        assert!(rows[0].meta_est.is_some() && rows[0].intra_est.is_some());
        assert_eq!(rows[1].predictor, "misspecified[0.9 0.1]");
        assert!(rows[1].residual.is_none());
        // Same ladder values shared across the point's rows.
        assert_eq!(rows[0].irr, rows[1].irr);
    }

    #[test]
    fn linrep_rows_leave_the_meta_column_empty() {
        let config = ExperimentConfig::from_json(
            r#"{
                "environment": {"linrep": {"dim": 3, "rank": 1}},
                "predictors": ["psi_informed"],
                "grid": {"m_docs": [2], "t_len": [2], "n_trials": 20},
                "master_seed": 5
            }"#,
        )
        .unwrap();
        let rows = simulate(&config).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].meta_est.is_none());
        assert!(rows[0].intra_est.is_some());
        assert!(rows[0].margin.is_none());
        assert!(rows[0].bound_value.is_some());
    }

    #[test]
    fn csv_quotes_fields_with_commas() {
        let row = ResultRow {
            env: "x(a,b)".into(),
            predictor: "bayes".into(),
            m_docs: 1,
            t_len: 1,
            tau: None,
            loss_mean: 0.5,
            loss_stderr: None,
            irr: None,
            meta_est: None,
            intra_est: None,
            bound_value: None,
            margin: None,
            ess: None,
            seed: 1,
            residual: None,
        };
        let csv = render_results_csv(&[row]);
        assert!(csv.contains("\"x(a,b)\""));
        let data_line = csv.lines().nth(1).unwrap();
        assert_eq!(data_line.matches(',').count(), RESULT_COLUMNS.len() - 1 + 1);
    }

    #[test]
    fn rd_curve_brackets_the_exact_information() {
        let config = ExperimentConfig::from_json(
            r#"{
                "environment": {"coin_pair": {"p": 0.9}},
                "grid": {"m_docs": [1], "t_len": [2], "n_trials": 1},
                "master_seed": 9,
                "rd": {"mode": "single", "n_grid": 40}
            }"#,
        )
        .unwrap();
        let (rows, summaries) = rd_curve(&config).unwrap();
        assert!(!rows.is_empty());
        assert_eq!(summaries.len(), 1);
        let s = &summaries[0];
        let tol = 1e-6 + 1e-8;
        assert!(s.lower <= s.mi_per_step + tol, "lower {} vs mi {}", s.lower, s.mi_per_step);
        assert!(s.upper >= s.mi_per_step - tol, "upper {} vs mi {}", s.upper, s.mi_per_step);
    }

    #[test]
    fn icl_table_respects_the_log_cap() {
        let config = ExperimentConfig::from_json(
            r#"{
                "environment": {"mixture": {
                    "atoms": [[0.9, 0.1], [0.1, 0.9]],
                    "atom_prior": [0.5, 0.5],
                    "components": [[0.9, 0.1], [0.1, 0.9]]
                }},
                "grid": {"m_docs": [1, 2], "t_len": [2], "tau": [1, 2], "n_trials": 1},
                "master_seed": 1
            }"#,
        )
        .unwrap();
        let rows = icl_table(&config).unwrap();
        assert_eq!(rows.len(), 4);
        for row in &rows {
            assert!(row.known_error <= row.cap + 1e-12);
            assert!(row.margin >= -1e-9, "bound violated: {row:?}");
        }
    }

    #[test]
    fn bounds_table_reports_regime_failures_as_notes() {
        let config = ExperimentConfig::from_json(
            r#"{
                "environment": {"coin_pair": {"p": 0.9}},
                "grid": {"m_docs": [1], "t_len": [1], "n_trials": 1},
                "master_seed": 1,
                "bounds": [
                    {"logistic": {"dim": [2], "t_len": [20]}},
                    {"transformer": {"dim": [2], "attn_dim": [2], "context": [1],
                                      "depth": [3], "t_len": [1]}}
                ]
            }"#,
        )
        .unwrap();
        let rows = bounds_table(&config).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].value, Some(bounds::logistic_bound(2, 20).unwrap()));
        assert!(rows[0].note.is_empty());
        assert!(rows[1].value.is_none());
        assert!(rows[1].note.contains("invalid regime"));
    }

    #[test]
    fn manifest_is_reproducible_and_time_free() {
        let a = Manifest::new("simulate", "{}", 7, vec!["results.csv".into()]);
        let b = Manifest::new("simulate", "{}", 7, vec!["results.csv".into()]);
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(
            a.config_sha256,
            "44136fa355b3678a1146ad16f7e8649e94fb4fc21fe77e8310c060f61caaff8a"
        );
        assert!(!a.to_json().contains("time"));
    }
}
