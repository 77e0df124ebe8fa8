// SPDX-License-Identifier: MIT OR Apache-2.0

//! Seeded ancestral and nucleus sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LanguageModel;
use crate::concept::{ConceptAnnotator, ConceptId, ContextString, Rep, WordId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Nucleus mass in (0, 1]; 1 means plain ancestral sampling.
    pub top_p: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { top_p: 1.0 }
    }
}

/// One emitted word with the representation it was drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub string_index: usize,
    pub position: usize,
    pub word: WordId,
    /// Latent concept if the model drew one, otherwise the annotation of `word`.
    pub concept: ConceptId,
    pub rep: Rep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSample {
    pub n_strings: usize,
    pub seed: u64,
    pub top_p: f64,
    /// Number of sampled strings that were empty.
    pub n_empty: usize,
    pub records: Vec<CorpusRecord>,
}

impl CorpusSample {
    pub fn reps(&self) -> Vec<Rep> {
        self.records.iter().map(|r| r.rep.clone()).collect()
    }

    pub fn concepts(&self) -> Vec<ConceptId> {
        self.records.iter().map(|r| r.concept).collect()
    }
}

fn nucleus(dist: &[f64], top_p: f64) -> Vec<(usize, f64)> {
    let mut order: Vec<usize> = (0..dist.len()).filter(|&i| dist[i] > 0.0).collect();
    if top_p >= 1.0 {
        return order.into_iter().map(|i| (i, dist[i])).collect();
    }
    order.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(a.cmp(&b)));
    let mut kept = Vec::new();
    let mut mass = 0.0;
    for i in order {
        kept.push((i, dist[i]));
        mass += dist[i];
        if mass >= top_p {
            break;
        }
    }
    kept.into_iter().map(|(i, p)| (i, p / mass)).collect()
}

fn draw(rng: &mut ChaCha8Rng, items: &[(usize, f64)]) -> usize {
    let u: f64 = rng.random();
    let total: f64 = items.iter().map(|(_, p)| p).sum();
    let mut acc = 0.0;
    for &(i, p) in items {
        acc += p / total;
        if u < acc {
            return i;
        }
    }
    items.last().expect("non-empty support").0
}

/// Samples `n_strings` strings and records every emitted word.
pub fn sample_corpus(
    lm: &dyn LanguageModel,
    annotator: &ConceptAnnotator,
    n_strings: usize,
    sampler: SamplerConfig,
    seed: u64,
) -> Result<CorpusSample> {
    if n_strings == 0 {
        return Err(Error::domain("n_strings must be positive"));
    }
    if !(sampler.top_p > 0.0 && sampler.top_p <= 1.0) {
        return Err(Error::domain("top_p must lie in (0, 1]"));
    }
    if annotator.vocab_len() != lm.vocab().len() {
        return Err(Error::DimensionMismatch {
            what: "annotator vs vocabulary",
            expected: lm.vocab().len(),
            got: annotator.vocab_len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eos = lm.vocab().eos();
    let mut records = Vec::new();
    let mut n_empty = 0;
    for s in 0..n_strings {
        let mut ctx = ContextString::empty();
        loop {
            if ctx.len() >= lm.max_len() {
                break;
            }
            let branches = lm.rep_branches(&ctx)?;
            let branch = if branches.len() == 1 {
                &branches[0]
            } else {
                let weights: Vec<(usize, f64)> = branches.iter().map(|b| b.weight).enumerate().collect();
                &branches[draw(&mut rng, &weights)]
            };
            let dist = lm.next_dist(&branch.rep, ctx.len())?;
            let w = draw(&mut rng, &nucleus(&dist, sampler.top_p));
            if w == eos {
                break;
            }
            let concept = match branch.latent {
                Some(c) => c,
                None => annotator.annotate(&ctx, w)?,
            };
            records.push(CorpusRecord {
                string_index: s,
                position: ctx.len(),
                word: w,
                concept,
                rep: branch.rep.clone(),
            });
            ctx = ctx.extended(w);
        }
        if ctx.is_empty() {
            n_empty += 1;
        }
    }
    Ok(CorpusSample {
        n_strings,
        seed,
        top_p: sampler.top_p,
        n_empty,
        records,
    })
}
