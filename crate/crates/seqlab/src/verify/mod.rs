//! Structured verification: every inequality lemma, identity, and sandwich
//! claim runs as a check that returns a [`CheckReport`] — pass/fail plus the
//! margin, sample counts, and the worst case found — never a bare boolean.
//!
//! Margin conventions: inequalities report `bound − observed`, identities
//! report `−residual`, so a healthy check always has `margin ≥ −tolerance`.
//! Monte Carlo claims carry a one-sided `3·stderr` tolerance; exact claims a
//! fixed absolute one. A check may bundle several claims; the report's
//! headline margin belongs to the binding claim and the full list appears in
//! `notes`.
//!
//! Checks never mutate shared state and derive all randomness from the
//! [`RngStream`] they are handed: re-running a check with its recorded seed
//! reproduces the margin bit for bit, and [`run_battery`] stays deterministic
//! under any thread count because every entry owns a fixed substream salt.

use crate::bounds::misspecified_bound;
use crate::env::enumerate::{JointTable, DEFAULT_CELL_CAP};
use crate::env::logistic::bernoulli_logit_kl;
use crate::env::mixture::MixtureSpec;
use crate::env::tabular::{Kernel, TabularSpec};
use crate::env::transformer::TransformerSpec;
use crate::env::{DocModel, EnvSpec};
use crate::error::{Error, Result};
use crate::info::exact::{
    exact_decomposition, exact_meta_decomposition, exact_misspecified, exact_path_loss,
};
use crate::info::gaussian::{gaussian_channel_distortion_mc, ChannelConstruction};
use crate::info::ib::{ib_curve, sandwich, IbOptions};
use crate::info::icl::{icl_error_known_mixture, icl_exact};
use crate::predict::{polya_expected_unique, polya_predictive, FinitePosterior, HierExact, PredictorState};
use crate::prob::{kl_divergence, softmax, McEstimate, Pmf};
use crate::rng::RngStream;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use std::fmt;

/// Outcome of one verification check.
#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub name: String,
    /// Every claim satisfied `margin ≥ −tolerance`.
    pub passed: bool,
    /// Whether a failure fails a suite run. Report-only checks cover regimes
    /// the theory does not claim (small-M Pólya urns); their flags stay
    /// visible in `notes` without breaking the battery.
    pub asserted: bool,
    /// Binding claim's slack: `bound − observed` for inequalities,
    /// `−residual` for identities.
    pub margin: f64,
    pub tolerance: f64,
    pub n_samples: Option<usize>,
    /// Standard error of the binding claim when it is Monte Carlo.
    pub stderr: Option<f64>,
    /// Inputs achieving the minimum margin, with the substream that
    /// regenerates them when the check is randomized.
    pub worst_case: String,
    pub notes: Vec<String>,
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed {
            "PASS"
        } else if self.asserted {
            "FAIL"
        } else {
            "FLAG"
        };
        write!(
            f,
            "[{tag}] {:<44} margin {:+.3e} (tol {:.1e})",
            self.name, self.margin, self.tolerance
        )?;
        if let Some(se) = self.stderr {
            write!(f, " ± {se:.1e}")?;
        }
        if let Some(n) = self.n_samples {
            write!(f, " n={n}")?;
        }
        Ok(())
    }
}

/// True when every asserted report passed; report-only flags never fail a
/// suite run.
pub fn all_asserted_passed(reports: &[CheckReport]) -> bool {
    reports.iter().all(|r| r.passed || !r.asserted)
}

struct Claim {
    label: String,
    slack: f64,
    tol: f64,
    stderr: Option<f64>,
}

/// Accumulates the claims of one check; `finish` picks the binding claim
/// (smallest `slack + tol`, so any violated claim wins) as the headline.
struct Gauge {
    name: String,
    claims: Vec<Claim>,
    notes: Vec<String>,
    n_samples: Option<usize>,
    worst_case: String,
}

impl Gauge {
    fn new(name: impl Into<String>) -> Self {
        Gauge {
            name: name.into(),
            claims: Vec::new(),
            notes: Vec::new(),
            n_samples: None,
            worst_case: String::new(),
        }
    }

    fn claim(&mut self, label: impl Into<String>, slack: f64, tol: f64) {
        self.claims.push(Claim { label: label.into(), slack, tol, stderr: None });
    }

    fn claim_mc(&mut self, label: impl Into<String>, slack: f64, tol: f64, stderr: f64) {
        self.claims.push(Claim { label: label.into(), slack, tol, stderr: Some(stderr) });
    }

    fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    fn finish(self, asserted: bool) -> CheckReport {
        assert!(!self.claims.is_empty(), "every check asserts at least one claim");
        let mut binding = 0;
        for i in 1..self.claims.len() {
            let (a, b) = (&self.claims[i], &self.claims[binding]);
            // NaN slack must both bind and fail
            if !(a.slack + a.tol >= b.slack + b.tol) {
                binding = i;
            }
        }
        let passed = self.claims.iter().all(|c| c.slack >= -c.tol);
        let mut notes = Vec::with_capacity(self.claims.len() + self.notes.len());
        for c in &self.claims {
            let verdict = if c.slack >= -c.tol { "ok" } else { "VIOLATED" };
            notes.push(format!("{}: margin {:+.6e} (tol {:.2e}) {verdict}", c.label, c.slack, c.tol));
        }
        notes.extend(self.notes);
        let b = &self.claims[binding];
        CheckReport {
            name: self.name,
            passed,
            asserted,
            margin: b.slack,
            tolerance: b.tol,
            n_samples: self.n_samples,
            stderr: b.stderr,
            worst_case: if self.worst_case.is_empty() { b.label.clone() } else { self.worst_case },
            notes,
        }
    }
}

/// Random `(θ, θ̃)` pairs with entries in `[−scale, scale]` and dimension up
/// to `max_dim`: asserts KL(softmax θ ‖ softmax θ̃) ≤ ‖θ−θ̃‖² pointwise.
pub fn check_softmax_kl(
    n_pairs: usize,
    max_dim: usize,
    scale: f64,
    stream: RngStream,
) -> Result<CheckReport> {
    if n_pairs == 0 || max_dim == 0 || !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::invalid("need n_pairs ≥ 1, max_dim ≥ 1, finite scale > 0"));
    }
    let mut min_slack = f64::INFINITY;
    let mut worst = String::new();
    for i in 0..n_pairs {
        let mut rng = stream.substream(i as u64).rng();
        let d = rng.gen_range(1..=max_dim);
        let a: Vec<f64> = (0..d).map(|_| rng.gen_range(-scale..=scale)).collect();
        let b: Vec<f64> = (0..d).map(|_| rng.gen_range(-scale..=scale)).collect();
        let kl = kl_divergence(&softmax(&a), &softmax(&b))?;
        let sq: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
        let slack = sq - kl;
        if slack < min_slack {
            min_slack = slack;
            worst = format!(
                "pair {i} (substream {i}, seed {}): d={d}, kl={kl:.12}, ‖θ−θ̃‖²={sq:.12}",
                stream.master_seed
            );
        }
    }
    let mut g = Gauge::new("softmax-kl");
    g.n_samples = Some(n_pairs);
    g.worst_case = worst;
    g.claim("KL(softmax θ ‖ softmax θ̃) ≤ ‖θ−θ̃‖² pointwise", min_slack, 1e-12);
    Ok(g.finish(true))
}

/// Full-grid sweep of the scalar inequality behind the logistic channel:
/// KL(Ber(σ(x)) ‖ Ber(σ(y))) ≤ (x−y)² for every grid point.
pub fn check_logistic_pointwise(grid_min: f64, grid_max: f64, step: f64) -> Result<CheckReport> {
    if !(step > 0.0) || !grid_min.is_finite() || !grid_max.is_finite() || grid_max <= grid_min {
        return Err(Error::invalid("need finite grid_min < grid_max and step > 0"));
    }
    let n = ((grid_max - grid_min) / step).round() as usize + 1;
    let mut min_slack = f64::INFINITY;
    let mut worst = (f64::NAN, f64::NAN);
    for i in 0..n {
        let x = grid_min + i as f64 * step;
        for j in 0..n {
            let y = grid_min + j as f64 * step;
            let slack = (x - y) * (x - y) - bernoulli_logit_kl(x, y);
            if slack < min_slack {
                min_slack = slack;
                worst = (x, y);
            }
        }
    }
    let mut g = Gauge::new("logistic-pointwise");
    g.n_samples = Some(n * n);
    g.worst_case = format!("(x, y) = ({:.4}, {:.4})", worst.0, worst.1);
    g.claim("KL(Ber(σx) ‖ Ber(σy)) ≤ (x−y)² on the grid", min_slack, 1e-12);
    g.note(format!("grid [{grid_min}, {grid_max}]² at step {step}: {} points", n * n));
    Ok(g.finish(true))
}

fn unit_columns(d: usize, k: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, k);
    for j in 0..k {
        loop {
            let col = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let norm = col.norm();
            if norm > 1e-6 {
                m.set_column(j, &(col / norm));
                break;
            }
        }
    }
    m
}

fn jitter(m: &DMatrix<f64>, sd: f64, rng: &mut impl Rng) -> DMatrix<f64> {
    m.map(|v| v + sd * rng.sample::<f64, _>(StandardNormal))
}

/// Monte Carlo test of the layer Lipschitz constant: over random layer
/// weights and unit-column inputs, E‖f(X)−f(X̃)‖²_F / ‖X−X̃‖²_F ≤ 2(K+K²).
pub fn check_layer_lipschitz(
    dim: usize,
    attn_dim: usize,
    context: usize,
    n_trials: usize,
    stream: RngStream,
) -> Result<CheckReport> {
    if n_trials == 0 {
        return Err(Error::invalid("Lipschitz check needs at least one trial"));
    }
    let spec = TransformerSpec::new(dim, attn_dim, context, 1)?;
    let k = context as f64;
    let bound = 2.0 * (k + k * k);
    let mut samples = Vec::with_capacity(n_trials);
    let mut worst = (f64::NEG_INFINITY, 0usize);
    for i in 0..n_trials {
        let mut rng = stream.substream(i as u64).rng();
        let w = spec.sample_weights(&mut rng);
        let x = unit_columns(dim, context, &mut rng);
        // X = X̃ is excluded from the ratio (division guard)
        let (xt, dist2) = loop {
            let c = unit_columns(dim, context, &mut rng);
            let d2 = (&x - &c).norm_squared();
            if d2 > 1e-12 {
                break (c, d2);
            }
        };
        let fx = spec.layer(&w.value[0], &w.attn[0], &x);
        let fxt = spec.layer(&w.value[0], &w.attn[0], &xt);
        let ratio = (fx - fxt).norm_squared() / dist2;
        if ratio > worst.0 {
            worst = (ratio, i);
        }
        samples.push(ratio);
    }
    let est = McEstimate::from_samples(&samples)?;
    let mut g = Gauge::new(format!("layer-lipschitz(d={dim},r={attn_dim},K={context})"));
    g.n_samples = Some(est.n);
    g.worst_case = format!(
        "trial {} (substream {}, seed {}): ratio {:.6}",
        worst.1, worst.1, stream.master_seed, worst.0
    );
    g.claim_mc(
        format!("E ratio ≤ 2(K+K²) = {bound}"),
        bound - est.mean,
        3.0 * est.stderr,
        est.stderr,
    );
    g.note(format!("mean ratio {:.6} ± {:.6}", est.mean, est.stderr));
    Ok(g.finish(true))
}

/// Two Monte Carlo claims about the transformer parameter channel at noise
/// level ε: (i) one perturbed layer moves outputs by at most 2K²ε(1+Kd) in
/// mean squared Frobenius norm; (ii) cascaded through the remaining layers,
/// the per-step KL distortion stays under εKd(2K+2K²)^{L−i+1} for every
/// perturbed layer i.
pub fn check_perturbation_distortion(
    dim: usize,
    attn_dim: usize,
    context: usize,
    depth: usize,
    epsilon: f64,
    n_trials: usize,
    stream: RngStream,
) -> Result<CheckReport> {
    if !(epsilon > 0.0) || !epsilon.is_finite() || epsilon > 2.0 * dim as f64 {
        return Err(Error::invalid(format!(
            "perturbation lemma needs ε ∈ (0, 2d] = (0, {}], got {epsilon}",
            2 * dim
        )));
    }
    if n_trials == 0 || depth == 0 {
        return Err(Error::invalid("perturbation check needs trials and depth ≥ 1"));
    }
    let k = context as f64;
    let d_f = dim as f64;
    let mut g = Gauge::new(format!(
        "perturbation-distortion(d={dim},r={attn_dim},K={context},L={depth},ε={epsilon})"
    ));

    // (i) one layer, weights jittered with the channel's noise variances
    let spec1 = TransformerSpec::new(dim, attn_dim, context, 1)?;
    let v_sd = epsilon.sqrt() / d_f;
    let a_sd = (epsilon / attn_dim as f64).sqrt();
    let mut samples = Vec::with_capacity(n_trials);
    for i in 0..n_trials {
        let mut rng = stream.substream(i as u64).rng();
        let w = spec1.sample_weights(&mut rng);
        let x = unit_columns(dim, context, &mut rng);
        let v_noisy = jitter(&w.value[0], v_sd, &mut rng);
        let a_noisy = jitter(&w.attn[0], a_sd, &mut rng);
        let diff = spec1.layer(&w.value[0], &w.attn[0], &x) - spec1.layer(&v_noisy, &a_noisy, &x);
        samples.push(diff.norm_squared());
    }
    let est = McEstimate::from_samples(&samples)?;
    let bound_one = 2.0 * k * k * epsilon * (1.0 + k * d_f);
    g.claim_mc(
        format!("(i) one-layer E‖Δf‖²_F ≤ 2K²ε(1+Kd) = {bound_one:.6}"),
        bound_one - est.mean,
        3.0 * est.stderr,
        est.stderr,
    );

    // (ii) end-to-end per-step KL through the sampled forward pass
    let env = EnvSpec::Transformer(TransformerSpec::new(dim, attn_dim, context, depth)?);
    for layer in 1..=depth {
        let construction = ChannelConstruction::TransformerLayer { dim, rank: attn_dim, layer };
        let est = gaussian_channel_distortion_mc(
            &env,
            &construction,
            epsilon,
            n_trials,
            stream.substream(1_000 + layer as u64),
        )?;
        let bound = epsilon * k * d_f * (2.0 * k + 2.0 * k * k).powi((depth - layer + 1) as i32);
        g.claim_mc(
            format!("(ii) per-step KL from layer {layer} ≤ εKd(2K+2K²)^{{L−i+1}} = {bound:.6}"),
            bound - est.mean,
            3.0 * est.stderr,
            est.stderr,
        );
    }
    g.n_samples = Some(n_trials * (1 + depth));
    Ok(g.finish(true))
}

fn per_step_loss(table: &JointTable, state: PredictorState) -> Result<f64> {
    Ok(exact_path_loss(table, state)?.iter().flatten().sum::<f64>() / table.total_steps() as f64)
}

/// Exact decomposition identity on an enumerable environment, plus posterior
/// optimality: every alternative predictor's exact loss is at least the
/// Bayes loss.
pub fn check_decomposition(env: &EnvSpec, m_docs: usize, t_len: usize) -> Result<CheckReport> {
    if m_docs == 0 || t_len == 0 {
        return Err(Error::invalid("decomposition check needs m_docs ≥ 1 and t_len ≥ 1"));
    }
    let doc_lens = vec![t_len; m_docs];
    let (label, rep, alts) = match env {
        EnvSpec::Tabular(spec) => {
            let rep = exact_decomposition(spec, &doc_lens, DEFAULT_CELL_CAP)?;
            let table = JointTable::single_docs(spec, &doc_lens, DEFAULT_CELL_CAP)?;
            let models = || spec.kernels.iter().map(DocModel::Tabular).collect::<Vec<_>>();
            let mut alts = vec![
                (
                    "frozen prior",
                    per_step_loss(
                        &table,
                        PredictorState::Frozen(Box::new(PredictorState::Finite(
                            FinitePosterior::with_prior(models(), &spec.prior)?,
                        ))),
                    )?,
                ),
                ("uniform", per_step_loss(&table, PredictorState::Uniform { vocab: spec.vocab })?),
            ];
            if spec.prior.len() >= 2 {
                let mut tilted: Vec<f64> = spec.prior.probs().to_vec();
                tilted[0] = 0.5 * tilted[0] + 0.5;
                for w in tilted.iter_mut().skip(1) {
                    *w *= 0.5;
                }
                alts.push((
                    "tilted prior",
                    per_step_loss(
                        &table,
                        PredictorState::Finite(FinitePosterior::with_prior(
                            models(),
                            &Pmf::new(tilted)?,
                        )?),
                    )?,
                ));
            }
            ("single", rep, alts)
        }
        EnvSpec::Mixture(spec) => {
            let rep = exact_meta_decomposition(spec, m_docs, t_len, DEFAULT_CELL_CAP)?;
            let table = JointTable::hier(spec, &doc_lens, DEFAULT_CELL_CAP)?;
            let alts = vec![
                (
                    "frozen prior",
                    per_step_loss(
                        &table,
                        PredictorState::Frozen(Box::new(PredictorState::HierExact(
                            HierExact::new(spec, DEFAULT_CELL_CAP)?,
                        ))),
                    )?,
                ),
                ("uniform", per_step_loss(&table, PredictorState::Uniform { vocab: table.vocab })?),
            ];
            ("meta", rep, alts)
        }
        _ => {
            return Err(Error::UnsupportedMode(
                "decomposition check needs an enumerable tabular or mixture environment".into(),
            ))
        }
    };
    let mut g = Gauge::new(format!("decomposition({label},M={m_docs},T={t_len})"));
    g.claim("loss − irreducible − meta − intra residual", -rep.residual, 1e-9);
    for (alt, loss) in &alts {
        g.claim(format!("{alt} ≥ Bayes (posterior optimality)"), loss - rep.total_loss, 1e-12);
    }
    g.note(format!(
        "loss {:.9} = irr {:.9} + meta {:.9} + intra {:.9}",
        rep.total_loss, rep.irreducible, rep.meta_estimation, rep.intra_estimation
    ));
    Ok(g.finish(true))
}

/// Which latent the rate–distortion sandwich compresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SandwichMode {
    /// Compress θ against the whole corpus (single-parameter form).
    Single,
    /// Compress ψ against the multi-document corpus (meta form).
    Meta,
}

/// Computes the bottleneck curve for an enumerable environment and asserts
/// the sandwich `sup min{rate/T, ε} ≤ 𝕀/T ≤ inf rate/T + ε` around the exact
/// mutual information.
pub fn check_rd_sandwich(
    env: &EnvSpec,
    m_docs: usize,
    t_len: usize,
    mode: SandwichMode,
    n_grid: usize,
    stream: RngStream,
) -> Result<CheckReport> {
    if m_docs == 0 || t_len == 0 || n_grid < 2 {
        return Err(Error::invalid("sandwich check needs documents, steps, and ≥ 2 grid points"));
    }
    let doc_lens = vec![t_len; m_docs];
    let (joint, mi, steps, label) = match (env, mode) {
        (EnvSpec::Tabular(spec), SandwichMode::Single) => {
            let table = JointTable::single_docs(spec, &doc_lens, DEFAULT_CELL_CAP)?;
            (table.probs().to_vec(), table.mi_seq_latent(), table.total_steps(), "single")
        }
        (EnvSpec::Mixture(spec), SandwichMode::Meta) => {
            let table = JointTable::hier(spec, &doc_lens, DEFAULT_CELL_CAP)?;
            (table.psi_seq_joint(), table.mi_seq_psi(), table.total_steps(), "meta")
        }
        _ => {
            return Err(Error::UnsupportedMode(
                "single mode needs a tabular environment, meta mode a mixture".into(),
            ))
        }
    };
    let points = ib_curve(&joint, steps, &IbOptions::default(), stream)?;
    let rep = sandwich(&points, mi, steps, n_grid)?;
    let tol = 1e-6 + 1e-8;
    let mut g = Gauge::new(format!("rd-sandwich({label},M={m_docs},T={t_len})"));
    g.claim("sup min{rate/T, ε} ≤ 𝕀/T", rep.mi_per_step - rep.lower, tol);
    g.claim("𝕀/T ≤ inf rate/T + ε", rep.upper - rep.mi_per_step, tol);
    g.worst_case = format!("seed {}, substream id {}", stream.master_seed, stream.stream_id);
    g.note(format!(
        "𝕀/T = {:.9}; sandwich [{:.9}, {:.9}] from {} curve points over {} ε-grid points",
        rep.mi_per_step,
        rep.lower,
        rep.upper,
        points.len(),
        rep.grid.len()
    ));
    Ok(g.finish(true))
}

/// Exact expected unique-category count of a Pólya urn against its Monte
/// Carlo estimate and against R·log(1+M/R) in both log bases. The nats form
/// fails outside large-N/small-M corners (the harmonic sum exceeds the log
/// integral), so only the base-2 form is asserted, and only for M ≥ 2R;
/// margins for both bases are always reported.
pub fn check_polya_unique(
    r_scale: f64,
    n_cats: usize,
    m_draws: usize,
    n_trials: usize,
    stream: RngStream,
) -> Result<CheckReport> {
    if n_trials == 0 || m_draws == 0 {
        return Err(Error::invalid("urn check needs at least one draw and one trial"));
    }
    let exact = polya_expected_unique(r_scale, n_cats, m_draws)?;
    let mut samples = Vec::with_capacity(n_trials);
    for t in 0..n_trials {
        let mut rng = stream.substream(t as u64).rng();
        let mut counts = vec![0u32; n_cats];
        for _ in 0..m_draws {
            let p = polya_predictive(&counts, r_scale)?;
            counts[p.sample(&mut rng) - 1] += 1;
        }
        samples.push(counts.iter().filter(|&&c| c > 0).count() as f64);
    }
    let est = McEstimate::from_samples(&samples)?;
    let bound_nats = r_scale * (1.0 + m_draws as f64 / r_scale).ln();
    let bound_bits = bound_nats / std::f64::consts::LN_2;
    let in_regime = m_draws as f64 >= 2.0 * r_scale;

    let mut g = Gauge::new(format!("polya-unique(R={r_scale},N={n_cats},M={m_draws})"));
    g.n_samples = Some(est.n);
    g.claim_mc(
        "closed form matches Monte Carlo",
        -(est.mean - exact).abs(),
        4.0 * est.stderr + 1e-9,
        est.stderr,
    );
    if in_regime {
        g.claim(format!("E[unique] ≤ R·log₂(1+M/R) = {bound_bits:.6}"), bound_bits - exact, 1e-12);
    } else {
        g.note("M < 2R: outside the asserted regime; margins reported only");
    }
    let nats_margin = bound_nats - exact;
    g.note(format!(
        "exact E[unique] = {exact:.9} (MC {:.4} ± {:.4}); base-2 margin {:+.6}; nats margin {nats_margin:+.6}{}",
        est.mean,
        est.stderr,
        bound_bits - exact,
        if nats_margin < 0.0 { " — nats form VIOLATED here (base sensitivity; not asserted)" } else { "" }
    ));
    Ok(g.finish(in_regime))
}

/// Exact misspecification accounting: the extra loss of a wrong-prior Bayes
/// predictor equals its mean predictive KL (identity) and is at most
/// KL(prior ‖ alt)/(MT) (bound). An infinite prior KL makes the bound
/// vacuous; the identity is still asserted.
pub fn check_misspecified(
    spec: &TabularSpec,
    alt_prior: &Pmf,
    m_docs: usize,
    t_len: usize,
) -> Result<CheckReport> {
    let rep = exact_misspecified(spec, alt_prior, m_docs, t_len, DEFAULT_CELL_CAP)?;
    let mut g = Gauge::new(format!("misspecified(M={m_docs},T={t_len})"));
    g.claim("extra loss equals mean predictive KL (residual)", -rep.residual, 1e-9);
    if rep.prior_kl.is_finite() {
        let bound = misspecified_bound(rep.prior_kl, m_docs, t_len)?;
        g.claim(format!("extra ≤ KL(prior ‖ alt)/(MT) = {bound:.6}"), bound - rep.extra, 1e-9);
    } else {
        g.note("prior KL is infinite: the bound is vacuous and skipped");
    }
    g.note(format!(
        "loss {:.9} (true) vs {:.9} (alt): extra {:.9}, prior KL {:.6}",
        rep.loss_true, rep.loss_alt, rep.extra, rep.prior_kl
    ));
    Ok(g.finish(true))
}

/// In-context estimation error decay on a known-component mixture — capped
/// by ln(N)/τ and nonincreasing in τ — plus the exact prompt/query bound on
/// the same environment for every τ ≤ T in the grid.
pub fn check_icl(
    spec: &MixtureSpec,
    m_docs: usize,
    t_len: usize,
    tau_grid: &[usize],
) -> Result<CheckReport> {
    if tau_grid.is_empty() || m_docs == 0 || t_len == 0 {
        return Err(Error::invalid("in-context check needs documents, steps, and a τ grid"));
    }
    if tau_grid.contains(&0) {
        return Err(Error::invalid("τ must be ≥ 1"));
    }
    let mut grid = tau_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();

    let n = spec.n_components();
    let cap = (n as f64).ln();
    let mut min_cap_slack = f64::INFINITY;
    let mut worst_tau = 0;
    let mut min_step = f64::INFINITY;
    let mut prev = f64::INFINITY;
    let mut curve = Vec::with_capacity(grid.len());
    for &tau in &grid {
        let err = icl_error_known_mixture(spec, tau)?;
        let slack = cap / tau as f64 - err;
        if slack < min_cap_slack {
            min_cap_slack = slack;
            worst_tau = tau;
        }
        if prev.is_finite() {
            min_step = min_step.min(prev - err);
        }
        prev = err;
        curve.push(format!("{tau}:{err:.6}"));
    }

    let mut g = Gauge::new(format!("icl(N={n},M={m_docs},T={t_len})"));
    g.worst_case = format!("τ = {worst_tau}");
    g.claim(format!("in-context error ≤ ln({n})/τ over the grid"), min_cap_slack, 1e-12);
    if grid.len() >= 2 {
        g.claim("per-step in-context error nonincreasing in τ", min_step, 1e-12);
    }
    for &tau in grid.iter().filter(|&&tau| tau <= t_len) {
        let rep = icl_exact(spec, m_docs, t_len, tau, DEFAULT_CELL_CAP)?;
        g.claim(format!("exact prompt/query loss ≤ bound at τ={tau}"), rep.margin, 1e-9);
        g.note(format!(
            "τ={tau}: loss {:.9} vs bound {:.9} (irr {:.9}, meta {:.9}, intra {:.9})",
            rep.loss, rep.bound, rep.irreducible, rep.meta_info, rep.intra_info
        ));
    }
    g.note(format!("error decay (τ:err) {}", curve.join(" ")));
    Ok(g.finish(true))
}

/// The canonical check families, in battery order.
pub const CHECK_FAMILIES: [&str; 9] = [
    "softmax-kl",
    "logistic-pointwise",
    "layer-lipschitz",
    "perturbation-distortion",
    "decomposition",
    "rd-sandwich",
    "polya-unique",
    "misspecified",
    "icl",
];

type CheckFn = Box<dyn Fn(RngStream) -> Result<CheckReport> + Send + Sync>;

fn two_coin_hier() -> Result<MixtureSpec> {
    let coins = TabularSpec::coin_pair(0.9)?;
    MixtureSpec::discrete(
        vec![Pmf::new(vec![0.9, 0.1])?, Pmf::new(vec![0.1, 0.9])?],
        Pmf::uniform(2),
        coins.kernels,
    )
}

fn peaked_mixture(n: usize) -> Result<MixtureSpec> {
    let kernels: Result<Vec<Kernel>> = (0..n)
        .map(|j| {
            let mut p = vec![0.15 / (n as f64 - 1.0); n];
            p[j] = 0.85;
            Ok(Kernel::iid(Pmf::new(p)?))
        })
        .collect();
    MixtureSpec::discrete(vec![Pmf::uniform(n)], Pmf::delta(1, 0), kernels?)
}

fn manifest() -> Vec<(u64, &'static str, CheckFn)> {
    let mut v: Vec<(u64, &'static str, CheckFn)> = Vec::new();
    v.push((0, "softmax-kl", Box::new(|s| check_softmax_kl(100_000, 16, 10.0, s))));
    v.push((1, "logistic-pointwise", Box::new(|_| check_logistic_pointwise(-10.0, 10.0, 0.01))));
    for (i, &d) in [2usize, 4, 8].iter().enumerate() {
        for (j, &r) in [2usize, 4].iter().enumerate() {
            for (l, &k) in [1usize, 2, 4].iter().enumerate() {
                let salt = 10 + (i * 6 + j * 3 + l) as u64;
                v.push((
                    salt,
                    "layer-lipschitz",
                    Box::new(move |s| check_layer_lipschitz(d, r, k, 10_000, s)),
                ));
            }
        }
    }
    for (a, &eps) in [0.01, 0.1].iter().enumerate() {
        for (b, &depth) in [1usize, 2].iter().enumerate() {
            let salt = 40 + (a * 2 + b) as u64;
            v.push((
                salt,
                "perturbation-distortion",
                Box::new(move |s| check_perturbation_distortion(2, 2, 1, depth, eps, 10_000, s)),
            ));
        }
    }
    v.push((
        50,
        "decomposition",
        Box::new(|_| check_decomposition(&EnvSpec::Tabular(TabularSpec::coin_pair(0.9)?), 1, 4)),
    ));
    v.push((
        51,
        "decomposition",
        Box::new(|_| check_decomposition(&EnvSpec::Mixture(two_coin_hier()?), 2, 2)),
    ));
    v.push((
        52,
        "rd-sandwich",
        Box::new(|s| {
            check_rd_sandwich(
                &EnvSpec::Tabular(TabularSpec::coin_pair(0.9)?),
                1,
                2,
                SandwichMode::Single,
                50,
                s,
            )
        }),
    ));
    v.push((
        53,
        "rd-sandwich",
        Box::new(|s| {
            check_rd_sandwich(&EnvSpec::Mixture(two_coin_hier()?), 2, 2, SandwichMode::Meta, 50, s)
        }),
    ));
    v.push((54, "polya-unique", Box::new(|s| check_polya_unique(2.0, 100, 10, 100_000, s))));
    v.push((55, "polya-unique", Box::new(|s| check_polya_unique(1.0, 2, 1, 20_000, s))));
    v.push((
        56,
        "misspecified",
        Box::new(|_| check_misspecified(&TabularSpec::coin_pair(0.9)?, &Pmf::new(vec![0.9, 0.1])?, 1, 1)),
    ));
    v.push((
        57,
        "icl",
        Box::new(|_| check_icl(&peaked_mixture(4)?, 2, 2, &(1..=32).collect::<Vec<_>>())),
    ));
    v.push((58, "icl", Box::new(|_| check_icl(&two_coin_hier()?, 2, 2, &[1, 2]))));
    v
}

/// Runs the verification battery — all entries, or the families named in
/// `select` — with one substream per entry, fixed by the entry's salt, so
/// the reports do not depend on thread count or on which entries run
/// together. Entries appear in canonical order.
pub fn run_battery(seed: u64, select: Option<&[&str]>) -> Result<Vec<CheckReport>> {
    if let Some(wanted) = select {
        if let Some(unknown) = wanted.iter().find(|w| !CHECK_FAMILIES.contains(&w.as_ref())) {
            return Err(Error::invalid(format!(
                "unknown check \"{unknown}\"; families: {}",
                CHECK_FAMILIES.join(", ")
            )));
        }
    }
    let stream = RngStream::new(seed);
    let picked: Vec<(u64, CheckFn)> = manifest()
        .into_iter()
        .filter(|(_, family, _)| select.is_none_or(|s| s.contains(family)))
        .map(|(salt, _, f)| (salt, f))
        .collect();
    picked
        .into_par_iter()
        .map(|(salt, f)| f(stream.substream(salt)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn softmax_kl_holds_and_is_replayable() {
        let r = check_softmax_kl(2_000, 8, 10.0, RngStream::new(11)).unwrap();
        assert!(r.passed, "{r}");
        assert_eq!(r.n_samples, Some(2_000));
        let again = check_softmax_kl(2_000, 8, 10.0, RngStream::new(11)).unwrap();
        assert_eq!(r.margin.to_bits(), again.margin.to_bits());
        assert_eq!(r.worst_case, again.worst_case);
    }

    #[test]
    fn softmax_kl_frozen_pair() {
        // θ = (0,0), θ̃ = (ln 3, 0): KL((½,½) ‖ (¾,¼)) = ½ ln(4/3) ≤ (ln 3)²
        let kl = kl_divergence(&softmax(&[0.0, 0.0]), &softmax(&[3f64.ln(), 0.0])).unwrap();
        assert_abs_diff_eq!(kl, 0.5 * (4f64 / 3.0).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(kl, 0.14384103622589045, epsilon = 1e-12);
        assert!(kl <= 3f64.ln().powi(2));
    }

    #[test]
    fn logistic_pointwise_sweep_is_tight_on_the_diagonal() {
        let r = check_logistic_pointwise(-3.0, 3.0, 0.05).unwrap();
        assert!(r.passed, "{r}");
        assert_abs_diff_eq!(r.margin, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(bernoulli_logit_kl(1.0, 0.0), 0.11094407167172735, epsilon = 1e-12);
        assert!(check_logistic_pointwise(3.0, -3.0, 0.05).is_err());
        assert!(check_logistic_pointwise(-3.0, 3.0, 0.0).is_err());
    }

    #[test]
    fn layer_lipschitz_mean_respects_the_constant() {
        let r = check_layer_lipschitz(2, 2, 1, 1_500, RngStream::new(17)).unwrap();
        assert!(r.passed, "{r}");
        assert!(r.stderr.is_some());
        assert!(r.margin >= -r.tolerance);
    }

    #[test]
    fn perturbation_bounds_hold_in_both_forms() {
        let r = check_perturbation_distortion(2, 2, 1, 1, 0.1, 1_200, RngStream::new(23)).unwrap();
        assert!(r.passed, "{r}");
        assert!(r.notes.iter().any(|n| n.contains("(i)")));
        assert!(r.notes.iter().any(|n| n.contains("(ii)")));
    }

    #[test]
    fn perturbation_rejects_noise_outside_the_lemma_regime() {
        assert!(check_perturbation_distortion(2, 2, 1, 1, 5.0, 100, RngStream::new(1)).is_err());
        assert!(check_perturbation_distortion(2, 2, 1, 1, 0.0, 100, RngStream::new(1)).is_err());
    }

    #[test]
    fn decomposition_check_covers_single_and_meta() {
        let coins = EnvSpec::Tabular(TabularSpec::coin_pair(0.9).unwrap());
        let r = check_decomposition(&coins, 1, 3).unwrap();
        assert!(r.passed, "{r}");
        let hier = EnvSpec::Mixture(two_coin_hier().unwrap());
        let r = check_decomposition(&hier, 2, 2).unwrap();
        assert!(r.passed, "{r}");
        let logistic =
            EnvSpec::Logistic(crate::env::logistic::LogisticSpec::new(2).unwrap());
        assert!(matches!(
            check_decomposition(&logistic, 1, 2),
            Err(Error::UnsupportedMode(_))
        ));
    }

    #[test]
    fn rd_sandwich_check_brackets_both_modes() {
        let coins = EnvSpec::Tabular(TabularSpec::coin_pair(0.9).unwrap());
        let r = check_rd_sandwich(&coins, 1, 2, SandwichMode::Single, 50, RngStream::new(5))
            .unwrap();
        assert!(r.passed, "{r}");
        let hier = EnvSpec::Mixture(two_coin_hier().unwrap());
        let r = check_rd_sandwich(&hier, 2, 2, SandwichMode::Meta, 50, RngStream::new(5)).unwrap();
        assert!(r.passed, "{r}");
        assert!(matches!(
            check_rd_sandwich(&coins, 1, 2, SandwichMode::Meta, 50, RngStream::new(5)),
            Err(Error::UnsupportedMode(_))
        ));
    }

    #[test]
    fn polya_check_flags_the_base_sensitivity() {
        // M ≥ 2R: asserted, and the nats form is visibly violated here
        let r = check_polya_unique(2.0, 100, 10, 20_000, RngStream::new(31)).unwrap();
        assert!(r.passed, "{r}");
        assert!(r.asserted);
        assert!(r.notes.iter().any(|n| n.contains("VIOLATED")), "{:?}", r.notes);
        // M < 2R: report-only, exact value is one unique category
        let r = check_polya_unique(1.0, 2, 1, 5_000, RngStream::new(32)).unwrap();
        assert!(r.passed, "{r}");
        assert!(!r.asserted);
        assert!(r.notes.iter().any(|n| n.contains("outside the asserted regime")));
    }

    #[test]
    fn misspecified_check_matches_the_hand_values() {
        let coins = TabularSpec::coin_pair(0.9).unwrap();
        let alt = Pmf::new(vec![0.9, 0.1]).unwrap();
        let r = check_misspecified(&coins, &alt, 1, 1).unwrap();
        assert!(r.passed, "{r}");
        // the identity residual binds the headline margin; the bound claim —
        // KL((½,½)‖(0.9,0.1)) − extra loss — sits in the notes
        assert_abs_diff_eq!(r.margin, 0.0, epsilon = 1e-12);
        let extra = 0.5 * (-(0.82f64.ln()) - 0.18f64.ln()) - 2f64.ln();
        let want = 0.5108256237659907 - extra;
        assert!(
            r.notes.iter().any(|n| n.contains(&format!("{:+.6e}", want))),
            "{:?}",
            r.notes
        );

        let same = check_misspecified(&coins, &Pmf::uniform(2), 1, 1).unwrap();
        assert!(same.passed);
        assert_abs_diff_eq!(same.margin, 0.0, epsilon = 1e-9);

        let missing = check_misspecified(&coins, &Pmf::delta(2, 0), 1, 2).unwrap();
        assert!(missing.passed, "{missing}");
        assert!(missing.notes.iter().any(|n| n.contains("vacuous")));
    }

    #[test]
    fn icl_check_decays_and_bounds() {
        let grid: Vec<usize> = (1..=12).collect();
        let r = check_icl(&peaked_mixture(4).unwrap(), 1, 2, &grid).unwrap();
        assert!(r.passed, "{r}");
        let r = check_icl(&two_coin_hier().unwrap(), 2, 2, &[1, 2]).unwrap();
        assert!(r.passed, "{r}");
        assert!(r.notes.iter().any(|n| n.contains("error decay")));
    }

    #[test]
    fn battery_runs_a_selected_slice_deterministically() {
        let picked = run_battery(7, Some(&["decomposition", "misspecified"])).unwrap();
        assert_eq!(picked.len(), 3);
        assert!(picked.iter().all(|r| r.passed), "{picked:#?}");
        assert!(all_asserted_passed(&picked));
        let again = run_battery(7, Some(&["decomposition", "misspecified"])).unwrap();
        for (a, b) in picked.iter().zip(&again) {
            assert_eq!(a.margin.to_bits(), b.margin.to_bits());
        }
        assert!(run_battery(7, Some(&["no-such-check"])).is_err());
    }
}
