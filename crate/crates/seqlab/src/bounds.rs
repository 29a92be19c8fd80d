//! Closed-form regret bounds, all in nats per step unless noted. Each
//! calculator validates its regime and errors rather than extrapolating a
//! formula where its derivation does not hold.

use crate::error::{Error, Result};

fn positive(name: &str, v: usize) -> Result<f64> {
    if v == 0 {
        return Err(Error::invalid(format!("{name} must be ≥ 1")));
    }
    Ok(v as f64)
}

/// Estimation-error bound for logistic regression with θ on the unit ball of
/// ℝᵈ: d/(2T)·(1 + ln(1 + T/(4d))).
pub fn logistic_bound(dim: usize, t_len: usize) -> Result<f64> {
    let d = positive("dim", dim)?;
    let t = positive("t_len", t_len)?;
    Ok(d / (2.0 * t) * (1.0 + (1.0 + t / (4.0 * d)).ln()))
}

/// Estimation-error bound for the depth-L, context-K softmax transformer:
/// (d²+r²)L²·ln(4K²)/T + (d²+r²)L·ln(2KT²/L)/(2T).
pub fn transformer_bound(
    dim: usize,
    attn_dim: usize,
    context: usize,
    depth: usize,
    t_len: usize,
) -> Result<f64> {
    let d = positive("dim", dim)?;
    let r = positive("attn_dim", attn_dim)?;
    let k = positive("context", context)?;
    let l = positive("depth", depth)?;
    let t = positive("t_len", t_len)?;
    let arg = 2.0 * k * t * t / l;
    if arg <= 1.0 {
        return Err(Error::InvalidRegime(format!(
            "transformer bound needs 2KT²/L > 1, got {arg}"
        )));
    }
    let params = d * d + r * r;
    Ok(params * l * l * (4.0 * k * k).ln() / t + params * l * arg.ln() / (2.0 * t))
}

/// Meta-learning bound for the linear-representation environment:
/// dr(1 + ln(1 + M/r))/(2MT) + r(1 + ln(1 + 2T/r))/(2T).
pub fn linrep_bound(dim: usize, rank: usize, m_docs: usize, t_len: usize) -> Result<f64> {
    let d = positive("dim", dim)?;
    let r = positive("rank", rank)?;
    let m = positive("m_docs", m_docs)?;
    let t = positive("t_len", t_len)?;
    if rank > dim {
        return Err(Error::InvalidRegime(format!(
            "representation rank {rank} exceeds ambient dimension {dim}"
        )));
    }
    let meta = d * r * (1.0 + (1.0 + m / r).ln()) / (2.0 * m * t);
    let intra = r * (1.0 + (1.0 + 2.0 * t / r).ln()) / (2.0 * t);
    Ok(meta + intra)
}

/// Description length, in total nats, of which component each of M documents
/// uses when at most R distinct components out of N appear:
/// R·ln(1 + M/R)·ln(MN).
pub fn sparse_meta_bound(support: usize, m_docs: usize, n_components: usize) -> Result<f64> {
    let r = positive("support", support)?;
    let m = positive("m_docs", m_docs)?;
    let n = positive("n_components", n_components)?;
    if support > m_docs {
        return Err(Error::invalid(format!(
            "support {support} cannot exceed the document count {m_docs}"
        )));
    }
    Ok(r * (1.0 + m / r).ln() * (m * n).ln())
}

/// Full bound for a sparse mixture of transformers, per step:
/// R·ln(1+M/R)·ln(MN)/(MT) + R·ln(1+M/R)(d²+r²)L²·ln(4K²MT²)/(MT) + ln(N)/T.
#[allow(clippy::too_many_arguments)]
pub fn mixture_transformer_bound(
    dim: usize,
    attn_dim: usize,
    context: usize,
    depth: usize,
    m_docs: usize,
    t_len: usize,
    n_components: usize,
    support: usize,
) -> Result<f64> {
    let d = positive("dim", dim)?;
    let r = positive("attn_dim", attn_dim)?;
    let k = positive("context", context)?;
    let l = positive("depth", depth)?;
    let m = positive("m_docs", m_docs)?;
    let t = positive("t_len", t_len)?;
    let n = positive("n_components", n_components)?;
    let rs = positive("support", support)?;
    if attn_dim > dim {
        return Err(Error::InvalidRegime(format!(
            "attention dimension {attn_dim} exceeds embedding dimension {dim}"
        )));
    }
    if support > m_docs {
        return Err(Error::invalid(format!(
            "support {support} cannot exceed the document count {m_docs}"
        )));
    }
    let occupancy = rs * (1.0 + m / rs).ln();
    let assignments = occupancy * (m * n).ln() / (m * t);
    let weights =
        occupancy * (d * d + r * r) * l * l * (4.0 * k * k * m * t * t).ln() / (m * t);
    let selection = n.ln() / t;
    Ok(assignments + weights + selection)
}

/// Generic hierarchical bound from exact latent entropies:
/// ℍ(ψ)/(MT) + ℍ(θ|ψ)/T.
pub fn entropy_bound(
    h_psi: f64,
    h_theta_given_psi: f64,
    m_docs: usize,
    t_len: usize,
) -> Result<f64> {
    let m = positive("m_docs", m_docs)?;
    let t = positive("t_len", t_len)?;
    if h_psi < 0.0 || h_theta_given_psi < 0.0 {
        return Err(Error::invalid("entropies must be nonnegative"));
    }
    Ok(h_psi / (m * t) + h_theta_given_psi / t)
}

/// Extra per-step loss of Bayes under a wrong prior: KL(true ‖ alternative)
/// over the horizon, kl_prior/(MT).
pub fn misspecified_bound(kl_prior: f64, m_docs: usize, t_len: usize) -> Result<f64> {
    let m = positive("m_docs", m_docs)?;
    let t = positive("t_len", t_len)?;
    if kl_prior < 0.0 {
        return Err(Error::invalid("prior divergence must be nonnegative"));
    }
    Ok(kl_prior / (m * t))
}

/// In-context prediction bound assembled from exact information quantities
/// (all three in total nats over their respective variables).
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct IclBound {
    /// ℍ(D|θ)/τ + 𝕀(H;ψ)/(Mτ) + 𝕀(D;θ|ψ)/τ.
    pub full: f64,
    /// The M → ∞ form: the meta term dropped.
    pub large_m: f64,
}

pub fn icl_bound(
    h_query_given_theta: f64,
    meta_info: f64,
    intra_info: f64,
    m_docs: usize,
    tau: usize,
) -> Result<IclBound> {
    let m = positive("m_docs", m_docs)?;
    let tau_f = positive("tau", tau)?;
    if h_query_given_theta < 0.0 || meta_info < 0.0 || intra_info < 0.0 {
        return Err(Error::invalid("information quantities must be nonnegative"));
    }
    let large_m = h_query_given_theta / tau_f + intra_info / tau_f;
    Ok(IclBound { full: large_m + meta_info / (m * tau_f), large_m })
}
