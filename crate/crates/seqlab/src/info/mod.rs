//! Information-theoretic accounting: exact loss decompositions on enumerable
//! environments, Monte Carlo counterparts, rate–distortion machinery, and
//! Gaussian-channel rate/distortion calculators.

pub mod exact;
pub mod gaussian;
pub mod ib;
pub mod icl;
pub mod loss;

use serde::Serialize;

pub use exact::{
    exact_decomposition, exact_meta_decomposition, exact_misspecified, exact_path_loss,
    exact_predictive_gap, exact_psi_informed_loss,
};
pub use gaussian::{gaussian_channel_distortion_mc, gaussian_channel_rate, ChannelConstruction};
pub use ib::{ib_curve, sandwich, IbOptions, SandwichReport};
pub use icl::{icl_error_known_mixture, icl_exact, mi_counts_iid, IclExact};
pub use loss::{estimate_log_loss, mc_meta_terms, paired_diff, run_trials, KindRun};

/// How a [`DecompositionReport`] was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DecompositionMode {
    Exact,
    MonteCarlo,
}

/// Per-term standard errors for a Monte Carlo decomposition.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TermErrors {
    pub total: f64,
    pub irreducible: f64,
    pub meta: f64,
    pub intra: f64,
}

/// Average log loss split into irreducible entropy, meta-level estimation,
/// and within-document estimation, all in nats per step.
///
/// Environments with a single shared parameter carry their whole estimation
/// term in `meta_estimation` (the parameter persists across documents) and
/// have `intra_estimation = 0`.
#[derive(Debug, Clone, Serialize)]
pub struct DecompositionReport {
    pub mode: DecompositionMode,
    pub total_loss: f64,
    pub irreducible: f64,
    pub meta_estimation: f64,
    pub intra_estimation: f64,
    /// |total − (irreducible + meta + intra)|. Exact mode must drive this to
    /// numerical noise; Monte Carlo mode telescopes to zero by construction.
    pub residual: f64,
    /// Standard errors, Monte Carlo mode only.
    pub stderr: Option<TermErrors>,
}

/// One achievable point on a rate–distortion curve.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RdPoint {
    /// Per-step distortion ε in nats.
    pub epsilon: f64,
    /// Channel rate 𝕀(θ; θ̃) in nats.
    pub rate: f64,
    /// Relevant information 𝕀(H; θ̃) in nats.
    pub relevant_info: f64,
}
