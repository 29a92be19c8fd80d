//! JSON experiment configuration for the `seqlab` binary.
//!
//! One document describes the environment, the predictors under study, the
//! evaluation grid, and optional sections for the rate–distortion and bound
//! subcommands; each subcommand reads the sections it needs and ignores the
//! rest. `configs/` in the repository root holds annotated samples together
//! with a field-by-field schema.
//!
//! Validation is strict: unknown fields, empty grids, τ > T, malformed
//! probability vectors, and unknown check names are all rejected up front so
//! a bad configuration never reaches the simulation layer.

use serde::{Deserialize, Serialize};

use crate::env::linrep::LinRepSpec;
use crate::env::logistic::LogisticSpec;
use crate::env::mixture::{ComponentSource, MixingPrior, MixtureSpec};
use crate::env::tabular::{Kernel, TabularSpec};
use crate::env::transformer::TransformerSpec;
use crate::env::EnvSpec;
use crate::error::{Error, Result};
use crate::predict::{PredictorKind, PredictorSettings};
use crate::prob::Pmf;
use crate::verify::{SandwichMode, CHECK_FAMILIES};

/// Top-level experiment description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvConfig,
    /// Predictors the `simulate` subcommand reports rows for. The
    /// conditioning ladder needed for the decomposition columns is run in
    /// addition to these, whether or not it is listed.
    #[serde(default = "default_predictors")]
    pub predictors: Vec<PredictorConfig>,
    pub grid: GridConfig,
    pub master_seed: u64,
    #[serde(default)]
    pub settings: SettingsConfig,
    /// Check families for `verify`; empty selects the full battery.
    #[serde(default)]
    pub checks: Vec<String>,
    /// Rate–distortion section for `rd-curve`.
    #[serde(default)]
    pub rd: Option<RdConfig>,
    /// Parameter grids for the `bounds` table.
    #[serde(default)]
    pub bounds: Vec<BoundConfig>,
    /// Basename for artifacts inside the output directory.
    #[serde(default = "default_output")]
    pub output: String,
}

fn default_predictors() -> Vec<PredictorConfig> {
    vec![PredictorConfig::Bayes]
}

fn default_output() -> String {
    "results".into()
}

impl ExperimentConfig {
    /// Parses and validates a configuration document. Parse errors keep
    /// serde's line/column diagnostics; validation errors name the offending
    /// field.
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("parse: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        // Surface environment and predictor problems at load time rather
        // than mid-run.
        self.environment.build().map_err(|e| Error::Config(format!("environment: {e}")))?;
        for p in &self.predictors {
            p.build().map_err(|e| Error::Config(format!("predictors: {e}")))?;
        }
        self.settings.validate()?;
        for name in &self.checks {
            if !CHECK_FAMILIES.contains(&name.as_str()) {
                return Err(Error::Config(format!(
                    "checks: unknown family {name:?}; known families: {}",
                    CHECK_FAMILIES.join(", ")
                )));
            }
        }
        if let Some(rd) = &self.rd {
            rd.validate(&self.environment)?;
        }
        if self.output.is_empty() || self.output.contains(['/', '\\']) {
            return Err(Error::Config("output: must be a bare file stem".into()));
        }
        Ok(())
    }

    pub fn build_env(&self) -> Result<EnvSpec> {
        self.environment.build()
    }

    pub fn predictor_kinds(&self) -> Result<Vec<PredictorKind>> {
        self.predictors.iter().map(PredictorConfig::build).collect()
    }

    pub fn predictor_settings(&self) -> PredictorSettings {
        PredictorSettings {
            n_particles: self.settings.n_particles,
            exact_cap: self.settings.exact_cap as u128,
            resample_frac: self.settings.resample_frac,
        }
    }
}

/// Environment description. Externally tagged: `{"coin_pair": {"p": 0.9}}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvConfig {
    /// Two memoryless coins with heads probabilities p and 1−p under a
    /// uniform prior.
    CoinPair { p: f64 },
    /// Memoryless tabular family: one categorical row per latent value.
    Tabular { prior: Vec<f64>, components: Vec<Vec<f64>> },
    /// Finite mixture: per-document components drawn from explicit mixing
    /// atoms.
    Mixture { atoms: Vec<Vec<f64>>, atom_prior: Vec<f64>, components: Vec<Vec<f64>> },
    /// Symmetric Dirichlet(R/N, …, R/N) mixing over memoryless components.
    DirichletMixture { r_scale: f64, components: Vec<Vec<f64>> },
    /// Bernoulli logistic regression with standard Gaussian weights.
    Logistic { dim: usize },
    /// Depth-L softmax transformer with Gaussian weights.
    Transformer { vocab: usize, attn_dim: usize, context: usize, depth: usize },
    /// Gaussian linear-representation meta-environment.
    Linrep { dim: usize, rank: usize },
}

fn iid_kernels(components: &[Vec<f64>]) -> Result<Vec<Kernel>> {
    components.iter().map(|row| Ok(Kernel::iid(Pmf::new(row.clone())?))).collect()
}

impl EnvConfig {
    pub fn build(&self) -> Result<EnvSpec> {
        match self {
            EnvConfig::CoinPair { p } => Ok(EnvSpec::Tabular(TabularSpec::coin_pair(*p)?)),
            EnvConfig::Tabular { prior, components } => Ok(EnvSpec::Tabular(TabularSpec::new(
                Pmf::new(prior.clone())?,
                iid_kernels(components)?,
            )?)),
            EnvConfig::Mixture { atoms, atom_prior, components } => {
                let atoms: Result<Vec<Pmf>> =
                    atoms.iter().map(|a| Pmf::new(a.clone())).collect();
                Ok(EnvSpec::Mixture(MixtureSpec::discrete(
                    atoms?,
                    Pmf::new(atom_prior.clone())?,
                    iid_kernels(components)?,
                )?))
            }
            EnvConfig::DirichletMixture { r_scale, components } => {
                Ok(EnvSpec::Mixture(MixtureSpec::new(
                    MixingPrior::Dirichlet { r_scale: *r_scale },
                    ComponentSource::Tabular { kernels: iid_kernels(components)? },
                )?))
            }
            EnvConfig::Logistic { dim } => Ok(EnvSpec::Logistic(LogisticSpec::new(*dim)?)),
            EnvConfig::Transformer { vocab, attn_dim, context, depth } => Ok(
                EnvSpec::Transformer(TransformerSpec::new(*vocab, *attn_dim, *context, *depth)?),
            ),
            EnvConfig::Linrep { dim, rank } => Ok(EnvSpec::LinRep(LinRepSpec::new(*dim, *rank)?)),
        }
    }

    /// Short comma-free label for result tables.
    pub fn label(&self) -> String {
        match self {
            EnvConfig::CoinPair { p } => format!("coin_pair(p={p})"),
            EnvConfig::Tabular { components, .. } => format!("tabular(n={})", components.len()),
            EnvConfig::Mixture { atoms, components, .. } => {
                format!("mixture(atoms={} n={})", atoms.len(), components.len())
            }
            EnvConfig::DirichletMixture { r_scale, components } => {
                format!("dirichlet(r={} n={})", r_scale, components.len())
            }
            EnvConfig::Logistic { dim } => format!("logistic(d={dim})"),
            EnvConfig::Transformer { vocab, attn_dim, context, depth } => {
                format!("transformer(d={vocab} r={attn_dim} k={context} l={depth})")
            }
            EnvConfig::Linrep { dim, rank } => format!("linrep(d={dim} r={rank})"),
        }
    }
}

/// Predictor selection. Unit variants serialize as bare strings
/// (`"bayes"`); the misspecified predictor carries its prior.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PredictorConfig {
    Bayes,
    Omniscient,
    PsiInformed,
    FrozenPrior,
    Uniform,
    Misspecified { prior: Vec<f64> },
}

impl PredictorConfig {
    pub fn build(&self) -> Result<PredictorKind> {
        Ok(match self {
            PredictorConfig::Bayes => PredictorKind::Bayes,
            PredictorConfig::Omniscient => PredictorKind::Omniscient,
            PredictorConfig::PsiInformed => PredictorKind::PsiInformed,
            PredictorConfig::FrozenPrior => PredictorKind::FrozenPrior,
            PredictorConfig::Uniform => PredictorKind::Uniform,
            PredictorConfig::Misspecified { prior } => {
                PredictorKind::Misspecified { prior: Pmf::new(prior.clone())? }
            }
        })
    }
}

/// Evaluation grid: the `simulate` subcommand runs the full m_docs × t_len
/// product; `icl` additionally sweeps `tau`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub m_docs: Vec<usize>,
    pub t_len: Vec<usize>,
    /// Query lengths for in-context prediction; every τ must satisfy τ ≤ T
    /// for all grid T.
    #[serde(default)]
    pub tau: Vec<usize>,
    #[serde(default = "default_trials")]
    pub n_trials: usize,
}

fn default_trials() -> usize {
    1000
}

impl GridConfig {
    fn validate(&self) -> Result<()> {
        if self.m_docs.is_empty() {
            return Err(Error::Config("grid.m_docs: grid must be nonempty".into()));
        }
        if self.t_len.is_empty() {
            return Err(Error::Config("grid.t_len: grid must be nonempty".into()));
        }
        if let Some(&m) = self.m_docs.iter().find(|&&m| m == 0) {
            return Err(Error::Config(format!("grid.m_docs: documents per task must be ≥ 1, got {m}")));
        }
        if let Some(&t) = self.t_len.iter().find(|&&t| t == 0) {
            return Err(Error::Config(format!("grid.t_len: document length must be ≥ 1, got {t}")));
        }
        if self.n_trials == 0 {
            return Err(Error::Config("grid.n_trials: need at least one trial".into()));
        }
        let t_min = *self.t_len.iter().min().expect("nonempty");
        for &tau in &self.tau {
            if tau == 0 {
                return Err(Error::Config("grid.tau: query length must be ≥ 1".into()));
            }
            if tau > t_min {
                return Err(Error::Config(format!(
                    "grid.tau: τ = {tau} exceeds the smallest grid.t_len = {t_min}; \
                     in-context queries need τ ≤ T"
                )));
            }
        }
        Ok(())
    }
}

/// Posterior-approximation knobs, mirroring `PredictorSettings`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SettingsConfig {
    pub n_particles: usize,
    pub exact_cap: u64,
    pub resample_frac: f64,
}

impl Default for SettingsConfig {
    fn default() -> Self {
        let s = PredictorSettings::default();
        SettingsConfig {
            n_particles: s.n_particles,
            exact_cap: s.exact_cap as u64,
            resample_frac: s.resample_frac,
        }
    }
}

impl SettingsConfig {
    fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return Err(Error::Config("settings.n_particles: need at least one particle".into()));
        }
        if self.exact_cap == 0 {
            return Err(Error::Config("settings.exact_cap: need a positive hypothesis budget".into()));
        }
        if !(0.0..=1.0).contains(&self.resample_frac) {
            return Err(Error::Config("settings.resample_frac: must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Rate–distortion section: which latent to compress and how many ε-grid
/// points the sandwich uses.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RdConfig {
    pub mode: SandwichMode,
    #[serde(default = "default_rd_grid")]
    pub n_grid: usize,
}

fn default_rd_grid() -> usize {
    50
}

impl RdConfig {
    fn validate(&self, env: &EnvConfig) -> Result<()> {
        if self.n_grid < 2 {
            return Err(Error::Config("rd.n_grid: sandwich needs at least two grid points".into()));
        }
        let compatible = match self.mode {
            SandwichMode::Single => {
                matches!(env, EnvConfig::CoinPair { .. } | EnvConfig::Tabular { .. })
            }
            SandwichMode::Meta => matches!(env, EnvConfig::Mixture { .. }),
        };
        if !compatible {
            return Err(Error::Config(
                "rd.mode: single mode needs a tabular environment, meta mode a finite mixture"
                    .into(),
            ));
        }
        Ok(())
    }
}

/// One row family of the bound table; every listed vector is swept as a
/// cross product.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundConfig {
    Logistic {
        dim: Vec<usize>,
        t_len: Vec<usize>,
    },
    Transformer {
        dim: Vec<usize>,
        attn_dim: Vec<usize>,
        context: Vec<usize>,
        depth: Vec<usize>,
        t_len: Vec<usize>,
    },
    Linrep {
        dim: Vec<usize>,
        rank: Vec<usize>,
        m_docs: Vec<usize>,
        t_len: Vec<usize>,
    },
    SparseMeta {
        support: Vec<usize>,
        m_docs: Vec<usize>,
        n_components: Vec<usize>,
    },
    MixtureTransformer {
        dim: Vec<usize>,
        attn_dim: Vec<usize>,
        context: Vec<usize>,
        depth: Vec<usize>,
        n_components: Vec<usize>,
        support: Vec<usize>,
        m_docs: Vec<usize>,
        t_len: Vec<usize>,
    },
    Entropy {
        h_psi: Vec<f64>,
        h_theta_given_psi: Vec<f64>,
        m_docs: Vec<usize>,
        t_len: Vec<usize>,
    },
    Misspecified {
        kl_prior: Vec<f64>,
        m_docs: Vec<usize>,
        t_len: Vec<usize>,
    },
    Icl {
        h_query_given_theta: Vec<f64>,
        meta_info: Vec<f64>,
        intra_info: Vec<f64>,
        m_docs: Vec<usize>,
        tau: Vec<usize>,
    },
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "environment": {"coin_pair": {"p": 0.9}},
        "grid": {"m_docs": [1], "t_len": [2], "n_trials": 10},
        "master_seed": 7
    }"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let c = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.predictors.len(), 1);
        assert!(matches!(c.predictors[0], PredictorConfig::Bayes));
        assert_eq!(c.settings.n_particles, PredictorSettings::default().n_particles);
        assert_eq!(c.output, "results");
        assert!(c.build_env().is_ok());
        assert_eq!(c.environment.label(), "coin_pair(p=0.9)");
    }

    #[test]
    fn unknown_fields_and_bad_grids_are_rejected() {
        let unknown = MINIMAL.replace("\"master_seed\": 7", "\"master_seed\": 7, \"banana\": 1");
        let err = ExperimentConfig::from_json(&unknown).unwrap_err();
        assert!(err.to_string().contains("banana"), "{err}");

        let empty = MINIMAL.replace("\"m_docs\": [1]", "\"m_docs\": []");
        let err = ExperimentConfig::from_json(&empty).unwrap_err();
        assert!(err.to_string().contains("m_docs"), "{err}");

        let zero = MINIMAL.replace("\"t_len\": [2]", "\"t_len\": [2, 0]");
        let err = ExperimentConfig::from_json(&zero).unwrap_err();
        assert!(err.to_string().contains("t_len"), "{err}");
    }

    #[test]
    fn tau_must_fit_in_every_document() {
        let ok = MINIMAL.replace("\"t_len\": [2]", "\"t_len\": [2, 4], \"tau\": [1, 2]");
        assert!(ExperimentConfig::from_json(&ok).is_ok());

        let too_long = MINIMAL.replace("\"t_len\": [2]", "\"t_len\": [2, 4], \"tau\": [3]");
        let err = ExperimentConfig::from_json(&too_long).unwrap_err();
        assert!(err.to_string().contains("τ ≤ T"), "{err}");
    }

    #[test]
    fn environment_probabilities_are_validated_at_load() {
        let bad = MINIMAL.replace("{\"coin_pair\": {\"p\": 0.9}}", "{\"coin_pair\": {\"p\": 1.5}}");
        let err = ExperimentConfig::from_json(&bad).unwrap_err();
        assert!(err.to_string().starts_with("config error: environment:"), "{err}");
    }

    #[test]
    fn check_names_and_rd_modes_are_validated() {
        let bad = MINIMAL.replace("\"master_seed\": 7", "\"master_seed\": 7, \"checks\": [\"nope\"]");
        let err = ExperimentConfig::from_json(&bad).unwrap_err();
        assert!(err.to_string().contains("unknown family"), "{err}");

        let rd = MINIMAL.replace(
            "\"master_seed\": 7",
            "\"master_seed\": 7, \"rd\": {\"mode\": \"meta\"}",
        );
        let err = ExperimentConfig::from_json(&rd).unwrap_err();
        assert!(err.to_string().contains("rd.mode"), "{err}");
    }

    #[test]
    fn every_environment_variant_builds() {
        let cases = [
            r#"{"tabular": {"prior": [0.5, 0.5], "components": [[0.9, 0.1], [0.1, 0.9]]}}"#,
            r#"{"mixture": {"atoms": [[0.9, 0.1]], "atom_prior": [1.0],
                "components": [[0.9, 0.1], [0.1, 0.9]]}}"#,
            r#"{"dirichlet_mixture": {"r_scale": 2.0, "components": [[0.8, 0.2], [0.2, 0.8]]}}"#,
            r#"{"logistic": {"dim": 2}}"#,
            r#"{"transformer": {"vocab": 2, "attn_dim": 2, "context": 1, "depth": 1}}"#,
            r#"{"linrep": {"dim": 4, "rank": 2}}"#,
        ];
        for case in cases {
            let env: EnvConfig = serde_json::from_str(case).unwrap();
            env.build().unwrap_or_else(|e| panic!("{case}: {e}"));
            assert!(!env.label().contains(','), "labels must stay comma-free: {}", env.label());
        }
    }

    #[test]
    fn misspecified_predictor_carries_its_prior() {
        let with = MINIMAL.replace(
            "\"master_seed\": 7",
            "\"master_seed\": 7, \"predictors\": [\"bayes\", {\"misspecified\": {\"prior\": [0.9, 0.1]}}]",
        );
        let c = ExperimentConfig::from_json(&with).unwrap();
        let kinds = c.predictor_kinds().unwrap();
        assert_eq!(kinds.len(), 2);
        assert!(matches!(&kinds[1], PredictorKind::Misspecified { prior } if prior.len() == 2));
    }
}
