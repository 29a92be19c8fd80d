//! Finite-state environments: the latent parameter picks one of finitely many
//! windowed Markov kernels over a finite vocabulary.

use crate::data::Token;
use crate::error::{Error, Result};
use crate::prob::Pmf;
use serde::{Deserialize, Serialize};

/// A window-`w` autoregressive kernel: the law of the next token depends on
/// the last `min(t, w)` tokens. `rows[k]` holds one pmf per context of length
/// `k` (so `rows[0]` is the initial-token law); contexts are indexed
/// big-endian, earliest token most significant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    vocab: usize,
    window: usize,
    rows: Vec<Vec<Pmf>>,
}

impl Kernel {
    pub fn new(vocab: usize, window: usize, rows: Vec<Vec<Pmf>>) -> Result<Self> {
        if vocab == 0 {
            return Err(Error::invalid("kernel vocab must be ≥ 1"));
        }
        if rows.len() != window + 1 {
            return Err(Error::invalid(format!(
                "kernel with window {window} needs {} row groups, got {}",
                window + 1,
                rows.len()
            )));
        }
        for (k, group) in rows.iter().enumerate() {
            let want = vocab.pow(k as u32);
            if group.len() != want {
                return Err(Error::invalid(format!(
                    "context length {k} needs {want} rows, got {}",
                    group.len()
                )));
            }
            if group.iter().any(|p| p.len() != vocab) {
                return Err(Error::invalid("kernel row arity must equal vocab"));
            }
        }
        Ok(Kernel { vocab, window, rows })
    }

    /// Memoryless kernel: every token iid from `pmf`.
    pub fn iid(pmf: Pmf) -> Self {
        Kernel { vocab: pmf.len(), window: 0, rows: vec![vec![pmf]] }
    }

    /// Order-1 kernel: `init` for the first token, `rows[j]` after token j+1.
    pub fn markov(init: Pmf, rows: Vec<Pmf>) -> Result<Self> {
        let vocab = init.len();
        Kernel::new(vocab, 1, vec![vec![init], rows])
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Law of token `t` (0-based) given the prefix `tokens[..t]`.
    pub fn step_pmf(&self, tokens: &[Token], t: usize) -> &Pmf {
        let k = t.min(self.window);
        let ctx = &tokens[t - k..t];
        &self.rows[k][self.context_index(ctx)]
    }

    fn context_index(&self, ctx: &[Token]) -> usize {
        ctx.iter().fold(0, |acc, &tok| acc * self.vocab + (tok - 1))
    }
}

/// A finite prior over finitely many kernels sharing one vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularSpec {
    pub vocab: usize,
    pub prior: Pmf,
    pub kernels: Vec<Kernel>,
}

impl TabularSpec {
    pub fn new(prior: Pmf, kernels: Vec<Kernel>) -> Result<Self> {
        if kernels.is_empty() {
            return Err(Error::invalid("need at least one kernel"));
        }
        if prior.len() != kernels.len() {
            return Err(Error::invalid(format!(
                "prior has {} atoms for {} kernels",
                prior.len(),
                kernels.len()
            )));
        }
        let vocab = kernels[0].vocab();
        if kernels.iter().any(|k| k.vocab() != vocab) {
            return Err(Error::invalid("kernels must share one vocabulary"));
        }
        Ok(TabularSpec { vocab, prior, kernels })
    }

    /// The two-coin environment: two iid binary kernels [p, 1−p] and
    /// [1−p, p] under a uniform prior.
    pub fn coin_pair(p: f64) -> Result<Self> {
        let a = Kernel::iid(Pmf::new(vec![p, 1.0 - p])?);
        let b = Kernel::iid(Pmf::new(vec![1.0 - p, p])?);
        TabularSpec::new(Pmf::uniform(2), vec![a, b])
    }

    /// Same environment, different prior — what a misspecified predictor
    /// believes. Data generation keeps using the original spec.
    pub fn with_prior(&self, prior: Pmf) -> Result<Self> {
        if prior.len() != self.kernels.len() {
            return Err(Error::invalid("alternative prior arity mismatch"));
        }
        Ok(TabularSpec { vocab: self.vocab, prior, kernels: self.kernels.clone() })
    }

    pub fn n_states(&self) -> usize {
        self.kernels.len()
    }
}
