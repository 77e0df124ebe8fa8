// SPDX-License-Identifier: MIT OR Apache-2.0

//! Finite autoregressive language models that can be enumerated exactly.
//!
//! A model is a deterministic encoder from context strings to representations plus
//! a softmax head `p(w | h) = softmax(β (U h + b))` over the vocabulary including EOS.
//! Strings are truncated at `max_len` words: once a context holds `max_len` words the
//! next symbol is EOS with probability one.

mod causal;
mod enumerate;
mod presets;
mod sample;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::concept::{ConceptId, ContextString, Rep, Vocab};
use crate::error::{Error, Result};

pub use causal::{build_causal_toy, CausalToyConfig, CausalToyLm, PriorKind};
pub use enumerate::{enumerate_strings, DEFAULT_ENUMERATION_BUDGET};
pub(crate) use enumerate::walk_paths;
pub use presets::{build_counterexample, Counterexample};
pub use sample::{sample_corpus, CorpusRecord, CorpusSample, SamplerConfig};

/// Softmax output layer shared by every toy model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmHead {
    vocab: Vocab,
    dim: usize,
    /// One row of length `dim` per vocabulary entry (EOS included).
    unembedding: Vec<Vec<f64>>,
    bias: Vec<f64>,
    inv_temperature: f64,
    max_len: usize,
}

impl LmHead {
    pub fn new(
        vocab: Vocab,
        dim: usize,
        unembedding: Vec<Vec<f64>>,
        bias: Vec<f64>,
        inv_temperature: f64,
        max_len: usize,
    ) -> Result<Self> {
        if unembedding.len() != vocab.len() {
            return Err(Error::DimensionMismatch {
                what: "unembedding rows vs vocabulary",
                expected: vocab.len(),
                got: unembedding.len(),
            });
        }
        if let Some(row) = unembedding.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                what: "unembedding row",
                expected: dim,
                got: row.len(),
            });
        }
        if bias.len() != vocab.len() {
            return Err(Error::DimensionMismatch {
                what: "bias vs vocabulary",
                expected: vocab.len(),
                got: bias.len(),
            });
        }
        if !(inv_temperature > 0.0 && inv_temperature.is_finite()) {
            return Err(Error::domain("inverse temperature must be positive and finite"));
        }
        if max_len == 0 {
            return Err(Error::domain("max_len must be at least 1"));
        }
        if unembedding.iter().flatten().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::domain("head parameters must be finite"));
        }
        Ok(Self {
            vocab,
            dim,
            unembedding,
            bias,
            inv_temperature,
            max_len,
        })
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn inv_temperature(&self) -> f64 {
        self.inv_temperature
    }

    /// `β (U h + b)`.
    pub fn logits(&self, h: &Rep) -> Result<Vec<f64>> {
        h.check_dim(self.dim, "representation vs model")?;
        Ok(self
            .unembedding
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| self.inv_temperature * (h.dot(row) + b))
            .collect())
    }

    /// Unconstrained next-symbol distribution at `h` (no length truncation).
    pub fn dist(&self, h: &Rep) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(h)?))
    }

    /// Next-symbol distribution for a context of `prefix_len` words.
    pub fn next_dist(&self, h: &Rep, prefix_len: usize) -> Result<Vec<f64>> {
        h.check_dim(self.dim, "representation vs model")?;
        if prefix_len >= self.max_len {
            let mut p = vec![0.0; self.vocab.len()];
            p[self.vocab.eos()] = 1.0;
            return Ok(p);
        }
        self.dist(h)
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// One representation the model may use at a context.
#[derive(Debug, Clone, PartialEq)]
pub struct RepBranch {
    /// Latent concept drawn before the representation, if the model has one.
    pub latent: Option<ConceptId>,
    pub rep: Rep,
    pub weight: f64,
}

/// Common surface of deterministic and latent-concept toy models.
pub trait LanguageModel {
    fn head(&self) -> &LmHead;

    /// Representations available at `context` with their probabilities.
    /// Deterministic encoders return a single branch of weight one.
    fn rep_branches(&self, context: &ContextString) -> Result<Vec<RepBranch>>;

    fn vocab(&self) -> &Vocab {
        self.head().vocab()
    }

    fn dim(&self) -> usize {
        self.head().dim()
    }

    fn max_len(&self) -> usize {
        self.head().max_len()
    }

    fn head_dist(&self, h: &Rep) -> Result<Vec<f64>> {
        self.head().dist(h)
    }

    fn next_dist(&self, h: &Rep, prefix_len: usize) -> Result<Vec<f64>> {
        self.head().next_dist(h, prefix_len)
    }
}

/// Maps context strings to representations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Encoder {
    /// Explicit lookup table.
    Table {
        #[serde(with = "table_entries")]
        entries: BTreeMap<ContextString, Rep>,
    },
    /// `h_t = tanh(A h_{t-1} + B u(x_t))` starting from `h0`.
    Recurrent {
        h0: Vec<f64>,
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        embeddings: Vec<Vec<f64>>,
    },
}

mod table_entries {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Entry {
        context: ContextString,
        rep: Rep,
    }

    pub fn serialize<S: Serializer>(map: &BTreeMap<ContextString, Rep>, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v: Vec<Entry> = map
            .iter()
            .map(|(context, rep)| Entry {
                context: context.clone(),
                rep: rep.clone(),
            })
            .collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<BTreeMap<ContextString, Rep>, D::Error> {
        let v: Vec<Entry> = Vec::deserialize(d)?;
        Ok(v.into_iter().map(|e| (e.context, e.rep)).collect())
    }
}

/// A toy model with a deterministic encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyLm {
    head: LmHead,
    encoder: Encoder,
}

impl ToyLm {
    pub fn new(head: LmHead, encoder: Encoder) -> Result<Self> {
        let d = head.dim();
        match &encoder {
            Encoder::Table { entries } => {
                for (ctx, rep) in entries {
                    rep.check_dim(d, "table encoder entry")?;
                    if ctx.tokens().iter().any(|&t| t >= head.vocab().len() || head.vocab().is_eos(t)) {
                        return Err(Error::domain("table encoder context contains invalid tokens"));
                    }
                }
            }
            Encoder::Recurrent { h0, a, b, embeddings } => {
                if h0.len() != d {
                    return Err(Error::DimensionMismatch {
                        what: "h0",
                        expected: d,
                        got: h0.len(),
                    });
                }
                for m in [a, b] {
                    if m.len() != d || m.iter().any(|r| r.len() != d) {
                        return Err(Error::domain("recurrent matrices must be d × d"));
                    }
                }
                if embeddings.len() != head.vocab().len() || embeddings.iter().any(|e| e.len() != d) {
                    return Err(Error::domain("one d-dimensional embedding per vocabulary entry required"));
                }
            }
        }
        Ok(Self { head, encoder })
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    /// Representation of `context`. Deterministic.
    pub fn encode(&self, context: &ContextString) -> Result<Rep> {
        if context.len() >= self.head.max_len() {
            return Err(Error::domain(format!(
                "context of length {} is not shorter than max_len {}",
                context.len(),
                self.head.max_len()
            )));
        }
        match &self.encoder {
            Encoder::Table { entries } => entries
                .get(context)
                .cloned()
                .ok_or_else(|| Error::domain(format!("table encoder has no entry for context {:?}", context.tokens()))),
            Encoder::Recurrent { h0, a, b, embeddings } => {
                let mut h = h0.clone();
                for &w in context.tokens() {
                    let u = embeddings
                        .get(w)
                        .ok_or_else(|| Error::domain(format!("word id {w} out of range")))?;
                    h = (0..h.len())
                        .map(|i| {
                            let s: f64 = (0..h.len()).map(|j| a[i][j] * h[j] + b[i][j] * u[j]).sum();
                            s.tanh()
                        })
                        .collect();
                }
                Rep::new(h)
            }
        }
    }
}

impl LanguageModel for ToyLm {
    fn head(&self) -> &LmHead {
        &self.head
    }

    fn rep_branches(&self, context: &ContextString) -> Result<Vec<RepBranch>> {
        Ok(vec![RepBranch {
            latent: None,
            rep: self.encode(context)?,
            weight: 1.0,
        }])
    }
}

/// Encodes `context` with `lm`.
pub fn encode(lm: &ToyLm, context: &ContextString) -> Result<Rep> {
    lm.encode(context)
}

/// Next-symbol distribution at `h` for a context of `prefix_len` words.
pub fn next_dist(lm: &dyn LanguageModel, h: &Rep, prefix_len: usize) -> Result<Vec<f64>> {
    lm.next_dist(h, prefix_len)
}

/// Serializable wrapper around either kind of toy model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum AnyLm {
    Plain(ToyLm),
    Causal(CausalToyLm),
}

impl AnyLm {
    pub fn as_dyn(&self) -> &dyn LanguageModel {
        match self {
            Self::Plain(lm) => lm,
            Self::Causal(lm) => lm,
        }
    }
}
