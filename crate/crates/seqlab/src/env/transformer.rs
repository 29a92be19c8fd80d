//! A small softmax-attention sequence model with random weights.
//!
//! Tokens live in `1..=d` with fixed unit-norm embeddings (one-hot by
//! default). The state is a d×K matrix holding the embeddings of the last K
//! tokens (left-padded by repeating the first token while t < K). Each of L
//! layers applies column-wise softmax attention followed by a value map and a
//! clip of every column to the unit ball; the next token is drawn from the
//! softmax of the final state's right-most column.

use crate::data::Token;
use crate::error::{Error, Result};
use crate::prob::{clip_columns, softmax, Pmf};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone, PartialEq)]
pub struct TransformerSpec {
    /// Vocabulary and embedding dimension d.
    pub vocab: usize,
    /// Attention dimension r: attention matrices carry r² free entries.
    pub attn_dim: usize,
    /// Context length K.
    pub context: usize,
    /// Layer count L.
    pub depth: usize,
    /// d×d with column j−1 = Φ_j; every column unit norm.
    pub embeddings: DMatrix<f64>,
    /// Law of the first token.
    pub init: Pmf,
}

/// One weight draw: per layer an r×r attention core and a d×d value map.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformerWeights {
    pub attn: Vec<DMatrix<f64>>,
    pub value: Vec<DMatrix<f64>>,
}

impl TransformerSpec {
    /// One-hot embeddings, uniform initial token.
    pub fn new(vocab: usize, attn_dim: usize, context: usize, depth: usize) -> Result<Self> {
        if vocab == 0 || attn_dim == 0 || context == 0 || depth == 0 {
            return Err(Error::invalid("transformer dims must all be ≥ 1"));
        }
        Ok(TransformerSpec {
            vocab,
            attn_dim,
            context,
            depth,
            embeddings: DMatrix::identity(vocab, vocab),
            init: Pmf::uniform(vocab),
        })
    }

    pub fn with_embeddings(mut self, embeddings: DMatrix<f64>) -> Result<Self> {
        if embeddings.nrows() != self.vocab || embeddings.ncols() != self.vocab {
            return Err(Error::invalid("embeddings must be d×d"));
        }
        for col in embeddings.column_iter() {
            if (col.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::invalid("embedding columns must be unit norm"));
            }
        }
        self.embeddings = embeddings;
        Ok(self)
    }

    /// Attention entries N(0,1); value entries N(0, 1/d).
    pub fn sample_weights(&self, rng: &mut impl Rng) -> TransformerWeights {
        let d = self.vocab;
        let r = self.attn_dim;
        let v_sd = (1.0 / d as f64).sqrt();
        let mut attn = Vec::with_capacity(self.depth);
        let mut value = Vec::with_capacity(self.depth);
        for _ in 0..self.depth {
            attn.push(DMatrix::from_fn(r, r, |_, _| rng.sample::<f64, _>(StandardNormal)));
            value.push(DMatrix::from_fn(d, d, |_, _| {
                v_sd * rng.sample::<f64, _>(StandardNormal)
            }));
        }
        TransformerWeights { attn, value }
    }

    /// One layer: X ↦ Clip(V · X · softmax(XᵀAX/√r)).
    ///
    /// The attention core is r×r while X is d×K; the effective d×d matrix
    /// embeds the top-left min(r,d)×min(r,d) block of the core and is zero
    /// elsewhere, so only the leading coordinates attend. With r = d this is
    /// the identity embedding.
    pub fn layer(&self, value: &DMatrix<f64>, attn_core: &DMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
        let m = self.attn_dim.min(self.vocab);
        let x_top = x.rows(0, m);
        let scores = (x_top.transpose() * attn_core.view((0, 0), (m, m)) * x_top)
            / (self.attn_dim as f64).sqrt();
        let k = x.ncols();
        let mut attn_mat = DMatrix::zeros(k, k);
        for j in 0..k {
            let col = softmax(scores.column(j).as_slice());
            for i in 0..k {
                attn_mat[(i, j)] = col[i];
            }
        }
        let mut out = value * x * attn_mat;
        clip_columns(&mut out);
        out
    }

    /// Full forward pass from a window of the last ≤K tokens (earliest
    /// first); shorter windows are left-padded by repeating their first
    /// entry. Returns the next-token law.
    pub fn forward(&self, weights: &TransformerWeights, window: &[Token]) -> Result<Pmf> {
        let k = self.context;
        if window.is_empty() || window.len() > k {
            return Err(Error::invalid(format!(
                "window must hold 1..={} tokens, got {}",
                k,
                window.len()
            )));
        }
        if let Some(&bad) = window.iter().find(|&&t| t == 0 || t > self.vocab) {
            return Err(Error::invalid(format!("token {bad} outside 1..={}", self.vocab)));
        }
        let mut u = DMatrix::zeros(self.vocab, k);
        for j in 0..k {
            let tok = window[j.saturating_sub(k - window.len())];
            u.set_column(j, &self.embeddings.column(tok - 1));
        }
        for (value, attn) in weights.value.iter().zip(&weights.attn) {
            u = self.layer(value, attn, &u);
        }
        Ok(Pmf::from_logits(u.column(k - 1).as_slice()))
    }
}
