//! Documents and corpora. Tokens are 1-based integers in `1..=vocab`; the
//! logistic environment additionally carries one exogenous covariate per step
//! (observed before the step's scored token and free of log-loss itself).

use nalgebra::DVector;

/// 1-based token.
pub type Token = usize;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Document {
    pub tokens: Vec<Token>,
    /// Exogenous per-step inputs; empty for every environment except the
    /// logistic one, where `inputs[t]` is the covariate scored by `tokens[t]`.
    pub inputs: Vec<DVector<f64>>,
}

impl Document {
    pub fn from_tokens(tokens: Vec<Token>) -> Self {
        Document { tokens, inputs: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

pub type Corpus = Vec<Document>;
