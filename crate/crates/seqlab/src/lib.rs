//! A numerical laboratory for Bayesian sequence prediction.
//!
//! The crate builds generative environments whose documents are produced by
//! latent parameters (optionally two-level: shared meta parameters plus
//! per-document parameters), runs optimal and deliberately handicapped
//! predictors against them, and measures everything in nats: cumulative
//! log-loss, its exact decomposition into irreducible / meta / intra terms,
//! rate-distortion curves for the latent parameters, and closed-form error
//! bounds. Exact enumeration backs every identity that is checkable at desk
//! scale; Monte Carlo with explicit seeds and standard errors covers the
//! rest.
//!
//! Start with the runnable examples (`cargo run --release --example …`):
//!
//! * `decomposition` — the two-term loss identity on a two-coin environment
//! * `meta_decomposition` — the four-term identity on a hierarchical mixture
//! * `rd_sandwich` — information-bottleneck curve bracketing the estimation error
//! * `transformer_env` — the softmax-attention environment end to end
//! * `logistic_particles` — particle prediction vs. the logistic bound
//! * `mixture_inference` — exact vs. sequential Monte Carlo mixture posteriors
//! * `icl_decay` — in-context estimation error against context length
//! * `bounds_table` — every closed-form bound on a parameter grid
//! * `misspecified_prior` — the price of a wrong prior, exactly
//!
//! The `seqlab` binary drives the same machinery from JSON configs
//! (`simulate`, `verify`, `rd-curve`, `icl`, `bounds`).

pub mod bounds;
pub mod config;
pub mod data;
pub mod experiment;
pub mod env;
pub mod error;
pub mod info;
pub mod predict;
pub mod prob;
pub mod rng;
pub mod verify;

pub use data::{Corpus, Document, Token};
pub use error::{Error, Result};
pub use prob::{McEstimate, Pmf};
pub use rng::RngStream;
