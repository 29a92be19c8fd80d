//! The gate. Every headline identity, inequality, and closed form in the
//! library, each checked at a fixed tolerance inside a fixed runtime budget,
//! one pass/fail line per claim (`cargo test --test acceptance -- --nocapture`
//! to see the lines; a failed assert carries the same detail in its message).
//!
//! Tolerances are part of the contract: exact enumerations must close their
//! identities to 1e-9, Monte Carlo claims get three standard errors, and the
//! closed-form calculators must reproduce independently hand-derived values
//! to 1e-6 relative. Oracle literals below were frozen from direct evaluation
//! of the defining formulas, not from the library under test.

use std::time::{Duration, Instant};

use seqlab::bounds::{
    entropy_bound, icl_bound, linrep_bound, logistic_bound, misspecified_bound,
    mixture_transformer_bound, sparse_meta_bound, transformer_bound,
};
use seqlab::config::ExperimentConfig;
use seqlab::env::enumerate::JointTable;
use seqlab::env::logistic::{bernoulli_logit_kl, LogisticSpec};
use seqlab::env::mixture::MixtureSpec;
use seqlab::env::tabular::{Kernel, TabularSpec};
use seqlab::env::EnvSpec;
use seqlab::experiment::{render_results_csv, simulate};
use seqlab::info::{
    exact_decomposition, exact_meta_decomposition, exact_misspecified, gaussian_channel_rate,
    icl_error_known_mixture, icl_exact, paired_diff, run_trials, ChannelConstruction,
};
use seqlab::predict::{PredictorKind, PredictorSettings};
use seqlab::prob::{kl_divergence, softmax, Pmf};
use seqlab::rng::RngStream;
use seqlab::verify::{
    check_layer_lipschitz, check_logistic_pointwise, check_perturbation_distortion,
    check_rd_sandwich, check_softmax_kl, SandwichMode,
};

const CAP: u128 = 1 << 24;

/// Prints the one-line verdict and enforces the runtime budget.
fn gate(name: &str, budget: Duration, detail: String, started: Instant) {
    let elapsed = started.elapsed();
    println!("[PASS] {name}: {detail} ({elapsed:.2?}, budget {budget:?})");
    assert!(
        elapsed <= budget,
        "[FAIL] {name}: runtime {elapsed:?} exceeded its {budget:?} budget"
    );
}

fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs()
}

/// ψ ∈ {(0.9,0.1), (0.1,0.9)} equiprobable over the two 0.9/0.1 coins.
fn two_coin_mixture() -> MixtureSpec {
    MixtureSpec::discrete(
        vec![
            Pmf::new(vec![0.9, 0.1]).unwrap(),
            Pmf::new(vec![0.1, 0.9]).unwrap(),
        ],
        Pmf::uniform(2),
        TabularSpec::coin_pair(0.9).unwrap().kernels,
    )
    .unwrap()
}

#[test]
fn two_term_identity_on_the_coin_pair() {
    let t0 = Instant::now();
    let spec = TabularSpec::coin_pair(0.9).unwrap();
    let mut worst = 0.0f64;
    for t in [1usize, 2, 4] {
        let rep = exact_decomposition(&spec, &[t], CAP).unwrap();
        assert!(
            rep.residual < 1e-9,
            "[FAIL] two-term identity: T={t} residual {:.3e} ≥ 1e-9",
            rep.residual
        );
        worst = worst.max(rep.residual);
    }
    // hand values at T=1: loss ln 2 (uniform marginal predictive),
    // irreducible −(0.9 ln 0.9 + 0.1 ln 0.1), estimation the difference
    let rep = exact_decomposition(&spec, &[1], CAP).unwrap();
    for (got, want, label) in [
        (rep.total_loss, 0.6931471805599453, "loss"),
        (rep.irreducible, 0.3250829733914482, "irreducible"),
        (rep.meta_estimation, 0.3680642071684971, "estimation"),
    ] {
        assert!(
            (got - want).abs() < 1e-6,
            "[FAIL] two-term identity: T=1 {label} {got:.12} differs from {want:.12}"
        );
    }
    gate(
        "two-term identity",
        Duration::from_secs(1),
        format!("residual ≤ {worst:.1e} over T ∈ {{1,2,4}}; T=1 values match to 1e-6"),
        t0,
    );
}

#[test]
fn four_term_identity_on_the_two_coin_mixture() {
    let t0 = Instant::now();
    let spec = two_coin_mixture();
    let rep = exact_meta_decomposition(&spec, 2, 2, CAP).unwrap();
    assert!(
        rep.residual < 1e-9,
        "[FAIL] four-term identity: residual {:.3e} ≥ 1e-9",
        rep.residual
    );
    let table = JointTable::hier(&spec, &[2, 2], CAP).unwrap();
    let spread =
        (table.mi_doc_component_given_psi(0) - table.mi_doc_component_given_psi(1)).abs();
    assert!(
        spread <= 1e-10,
        "[FAIL] four-term identity: within-document terms differ by {spread:.3e} > 1e-10"
    );
    gate(
        "four-term identity",
        Duration::from_secs(10),
        format!(
            "M=2 T=2 residual {:.1e}; per-document information spread {spread:.1e}",
            rep.residual
        ),
        t0,
    );
}

#[test]
fn rate_distortion_sandwich_on_both_bottlenecks() {
    let t0 = Instant::now();
    let coin = EnvSpec::Tabular(TabularSpec::coin_pair(0.9).unwrap());
    let single =
        check_rd_sandwich(&coin, 1, 2, SandwichMode::Single, 50, RngStream::new(7)).unwrap();
    assert!(single.passed, "[FAIL] sandwich (single): {single}");
    let hier = EnvSpec::Mixture(two_coin_mixture());
    let meta =
        check_rd_sandwich(&hier, 2, 2, SandwichMode::Meta, 50, RngStream::new(7)).unwrap();
    assert!(meta.passed, "[FAIL] sandwich (meta): {meta}");
    gate(
        "rate-distortion sandwich",
        Duration::from_secs(60),
        format!(
            "50-point ε-grids at tol 1e-6 + 1e-8; margins {:+.1e} (single), {:+.1e} (meta)",
            single.margin, meta.margin
        ),
        t0,
    );
}

#[test]
fn softmax_kl_dominated_by_squared_distance() {
    let t0 = Instant::now();
    let rep = check_softmax_kl(100_000, 16, 10.0, RngStream::new(5)).unwrap();
    assert!(rep.passed, "[FAIL] softmax-kl: {rep}");
    gate(
        "softmax KL vs squared distance",
        Duration::from_secs(10),
        format!("10^5 pairs, d ≤ 16, entries in [−10,10]; min slack {:+.3e}", rep.margin),
        t0,
    );
}

#[test]
fn logistic_kl_grid_has_no_violations() {
    let t0 = Instant::now();
    let rep = check_logistic_pointwise(-10.0, 10.0, 0.01).unwrap();
    assert!(rep.passed, "[FAIL] logistic grid: {rep}");
    gate(
        "logistic pointwise inequality",
        Duration::from_secs(30),
        format!(
            "full [−10,10]² grid at step 0.01 ({} points); min slack {:+.3e}",
            rep.n_samples.unwrap_or(0),
            rep.margin
        ),
        t0,
    );
}

#[test]
fn layer_lipschitz_constant_over_the_size_grid() {
    let t0 = Instant::now();
    let mut worst = f64::INFINITY;
    let mut idx = 0u64;
    for d in [2usize, 4, 8] {
        for r in [2usize, 4] {
            for k in [1usize, 2, 4] {
                let rep =
                    check_layer_lipschitz(d, r, k, 10_000, RngStream::new(13).substream(idx))
                        .unwrap();
                assert!(rep.passed, "[FAIL] layer Lipschitz (d={d},r={r},K={k}): {rep}");
                worst = worst.min(rep.margin);
                idx += 1;
            }
        }
    }
    gate(
        "layer Lipschitz constant",
        Duration::from_secs(60),
        format!("18 (d,r,K) settings at n=10^4; tightest margin {worst:+.3e} vs 3·stderr"),
        t0,
    );
}

#[test]
fn perturbation_distortion_within_both_bounds() {
    let t0 = Instant::now();
    let mut worst = f64::INFINITY;
    let mut idx = 0u64;
    for eps in [0.01f64, 0.1] {
        for depth in [1usize, 2] {
            let rep = check_perturbation_distortion(
                2,
                2,
                1,
                depth,
                eps,
                10_000,
                RngStream::new(19).substream(idx),
            )
            .unwrap();
            assert!(rep.passed, "[FAIL] perturbation (ε={eps}, L={depth}): {rep}");
            worst = worst.min(rep.margin);
            idx += 1;
        }
    }
    gate(
        "perturbation distortion",
        Duration::from_secs(120),
        format!(
            "one-layer and cascaded bounds for ε ∈ {{0.01,0.1}}, L ∈ {{1,2}}; tightest margin {worst:+.3e}"
        ),
        t0,
    );
}

#[test]
fn particle_gap_under_the_logistic_bound() {
    let t0 = Instant::now();
    let env = EnvSpec::Logistic(LogisticSpec::new(2).unwrap());
    let settings =
        PredictorSettings { n_particles: 100_000, exact_cap: 1, resample_frac: 0.0 };
    let runs = run_trials(
        &env,
        &[PredictorKind::Bayes, PredictorKind::Omniscient],
        &settings,
        1,
        20,
        200,
        RngStream::new(31),
    )
    .unwrap();
    let gap = paired_diff(&runs[0], &runs[1]).unwrap();
    let bound = logistic_bound(2, 20).unwrap();
    assert!(
        gap.mean <= bound + 3.0 * gap.stderr,
        "[FAIL] logistic particle gap: {:.6} > {:.6} + 3·{:.1e}",
        gap.mean,
        bound,
        gap.stderr
    );
    let ess = runs[0].mean_ess.expect("particle predictor reports an effective sample size");
    assert!(ess >= 1e3, "[FAIL] logistic particle gap: mean ESS {ess:.0} < 10³");
    gate(
        "logistic excess-loss bound",
        Duration::from_secs(120),
        format!(
            "10^5 particles, d=2, T=20, 200 trials: gap {:.5} ± {:.5} ≤ {:.5}; mean ESS {:.0}",
            gap.mean, gap.stderr, bound, ess
        ),
        t0,
    );
}

#[test]
fn in_context_error_decay_and_exact_bound() {
    let t0 = Instant::now();
    // four known, well-separated coins under near-uniform mixing
    let kernels: Vec<Kernel> = [0.85, 0.6, 0.4, 0.15]
        .into_iter()
        .map(|p| Kernel::iid(Pmf::new(vec![p, 1.0 - p]).unwrap()))
        .collect();
    let known = MixtureSpec::discrete(
        vec![Pmf::new(vec![0.4, 0.3, 0.2, 0.1]).unwrap()],
        Pmf::uniform(1),
        kernels,
    )
    .unwrap();
    let ceiling = 4f64.ln();
    let mut tightest = f64::INFINITY;
    for tau in 1..=32usize {
        let err = icl_error_known_mixture(&known, tau).unwrap();
        let cap_tau = ceiling / tau as f64;
        assert!(
            err <= cap_tau + 1e-12,
            "[FAIL] in-context decay: τ={tau} error {err:.9} > ln(4)/τ = {cap_tau:.9}"
        );
        tightest = tightest.min(cap_tau - err);
    }
    // prompt-conditioned query loss vs its three-term ceiling, exactly
    let hier = two_coin_mixture();
    let mut min_margin = f64::INFINITY;
    for m_docs in [1usize, 2, 4] {
        let ex = icl_exact(&hier, m_docs, 2, 2, CAP).unwrap();
        assert!(
            ex.margin >= -1e-9,
            "[FAIL] in-context bound: M={m_docs} loss {:.9} exceeds bound {:.9}",
            ex.loss,
            ex.bound
        );
        min_margin = min_margin.min(ex.margin);
    }
    gate(
        "in-context error decay",
        Duration::from_secs(60),
        format!(
            "N=4 error ≤ ln(4)/τ for τ ∈ 1..=32 (tightest slack {tightest:.1e}); \
             exact prompt bound margin ≥ {min_margin:.1e} for M ∈ {{1,2,4}}"
        ),
        t0,
    );
}

#[test]
fn misspecified_prior_cost_matches_enumeration() {
    let t0 = Instant::now();
    let spec = TabularSpec::coin_pair(0.9).unwrap();
    let alt = Pmf::new(vec![0.9, 0.1]).unwrap();
    let rep = exact_misspecified(&spec, &alt, 1, 1, CAP).unwrap();
    // −(ln 0.82 + ln 0.18)/2 − ln 2, and KL((½,½) ‖ (0.9,0.1)) = ln(25/9)/2
    let extra_oracle = 0.26347750284793714;
    let kl_oracle = 0.5108256237659907;
    assert!(
        (rep.extra - extra_oracle).abs() <= 1e-5,
        "[FAIL] misspecified prior: extra {:.9} differs from {extra_oracle:.9}",
        rep.extra
    );
    assert!(
        rep.extra <= kl_oracle + 1e-12,
        "[FAIL] misspecified prior: extra {:.9} exceeds prior KL {kl_oracle:.9}",
        rep.extra
    );
    assert!(
        (rep.prior_kl - kl_oracle).abs() < 1e-9,
        "[FAIL] misspecified prior: KL {:.12} differs from {kl_oracle:.12}",
        rep.prior_kl
    );
    assert!(
        rep.residual < 1e-9,
        "[FAIL] misspecified prior: chain-rule residual {:.3e} ≥ 1e-9",
        rep.residual
    );
    gate(
        "misspecified-prior cost",
        Duration::from_secs(1),
        format!(
            "extra {:.7} (oracle {extra_oracle:.7}) ≤ KL {:.7}; residual {:.1e}",
            rep.extra, rep.prior_kl, rep.residual
        ),
        t0,
    );
}

#[test]
fn closed_forms_match_hand_values() {
    let t0 = Instant::now();
    // frozen from direct evaluation of the defining formulas
    let cases: Vec<(&str, f64, f64)> = vec![
        ("logistic_bound(10,100)", logistic_bound(10, 100).unwrap(), 0.11263814842476841),
        (
            "transformer_bound(2,2,1,1,100)",
            transformer_bound(2, 2, 1, 1, 100).unwrap(),
            0.5070430509910364,
        ),
        ("linrep_bound(4,2,10,10)", linrep_bound(4, 2, 10, 10).unwrap(), 0.45145990604895925),
        ("sparse_meta_bound(2,10,100)", sparse_meta_bound(2, 10, 100).unwrap(), 24.754071864452655),
        (
            "mixture_transformer_bound(2,2,1,1,10,10,2,1)",
            mixture_transformer_bound(2, 2, 1, 1, 10, 10, 2, 1).unwrap(),
            1.7322102345776953,
        ),
        (
            "entropy_bound(ln2,ln3,4,5)",
            entropy_bound(2f64.ln(), 3f64.ln(), 4, 5).unwrap(),
            0.2543798167616192,
        ),
        (
            "misspecified_bound(0.51083,2,5)",
            misspecified_bound(0.51083, 2, 5).unwrap(),
            0.051083,
        ),
        (
            "channel_rate(logistic d=10, ε=0.05)",
            gaussian_channel_rate(&ChannelConstruction::Logistic { dim: 10 }, 0.05).unwrap(),
            6.26381484247684,
        ),
        (
            "channel_rate(task r=2, ε=0.25)",
            gaussian_channel_rate(&ChannelConstruction::LinRepTask { rank: 2 }, 0.25).unwrap(),
            1.0986122886681098,
        ),
        (
            "kl((½,½) ‖ (¾,¼))",
            kl_divergence(&[0.5, 0.5], &[0.75, 0.25]).unwrap(),
            0.14384103622589042,
        ),
        ("bernoulli_logit_kl(1,0)", bernoulli_logit_kl(1.0, 0.0), 0.11094407167172735),
    ];
    let mut worst = 0.0f64;
    for (label, got, want) in &cases {
        let err = rel_err(*got, *want);
        assert!(err < 1e-6, "[FAIL] closed forms: {label} = {got:.15}, expected {want:.15}");
        worst = worst.max(err);
    }

    // softmax of (ln 1, ln 2, ln 3) is exactly (1/6, 2/6, 3/6)
    let sm = softmax(&[0.0, 2f64.ln(), 3f64.ln()]);
    for (got, want) in sm.iter().zip([1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]) {
        assert!(
            (got - want).abs() < 1e-12,
            "[FAIL] closed forms: softmax(ln 1..3) gave {sm:?}"
        );
    }
    // the quadratic lemma at θ=(0,0), θ̃=(ln3,0): KL 0.143841 ≤ (ln 3)²
    let lemma_kl = kl_divergence(&softmax(&[0.0, 0.0]), &softmax(&[3f64.ln(), 0.0])).unwrap();
    assert!(
        (lemma_kl - 0.14384103622589042).abs() < 1e-12 && lemma_kl <= 3f64.ln().powi(2),
        "[FAIL] closed forms: quadratic-lemma spot value {lemma_kl:.12}"
    );
    // bound arithmetic: the in-context assembly and its large-M form
    let icl = icl_bound(0.325, 0.4, 0.2, 4, 2).unwrap();
    assert!(
        (icl.full - (0.325 / 2.0 + 0.4 / 8.0 + 0.2 / 2.0)).abs() < 1e-15
            && (icl.large_m - (0.325 / 2.0 + 0.2 / 2.0)).abs() < 1e-15,
        "[FAIL] closed forms: in-context assembly gave {icl:?}"
    );

    gate(
        "closed-form calculators",
        Duration::from_secs(1),
        format!("{} hand values reproduced; worst relative error {worst:.1e}", cases.len() + 3),
        t0,
    );
}

#[test]
fn csv_identical_across_thread_counts() {
    let t0 = Instant::now();
    // one exact hierarchical run and one resampling particle run
    let mixture = r#"{
        "environment": {"mixture": {
            "atoms": [[0.9, 0.1], [0.1, 0.9]],
            "atom_prior": [0.5, 0.5],
            "components": [[0.9, 0.1], [0.1, 0.9]]
        }},
        "predictors": ["bayes", "psi_informed"],
        "grid": {"m_docs": [2], "t_len": [3], "n_trials": 300},
        "master_seed": 20260818
    }"#;
    let logistic = r#"{
        "environment": {"logistic": {"dim": 2}},
        "grid": {"m_docs": [1], "t_len": [6], "n_trials": 200},
        "settings": {"n_particles": 2048, "exact_cap": 1, "resample_frac": 0.5},
        "master_seed": 7
    }"#;
    for (label, text) in [("mixture", mixture), ("logistic", logistic)] {
        let config = ExperimentConfig::from_json(text).unwrap();
        let render = |threads: usize| {
            let pool =
                rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| render_results_csv(&simulate(&config).unwrap()))
        };
        let one = render(1);
        let eight = render(8);
        assert!(one.lines().count() > 1, "[FAIL] determinism: {label} run produced no rows");
        assert!(
            one == eight,
            "[FAIL] determinism: {label} CSV differs between 1 and 8 threads"
        );
    }
    gate(
        "byte-identical reruns",
        Duration::from_secs(120),
        "exact-hierarchical and resampling-particle runs at 1 and 8 threads".into(),
        t0,
    );
}
