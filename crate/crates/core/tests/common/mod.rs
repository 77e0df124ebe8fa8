// SPDX-License-Identifier: MIT OR Apache-2.0

#![allow(dead_code)]

use concept_subspace::counterfactual::{build_counterfactual, CounterfactualTable};
use concept_subspace::distribution::{build_unigram_exact, UnigramTable};
use concept_subspace::lm::{build_causal_toy, CausalToyConfig, CausalToyLm, LanguageModel, PriorKind, DEFAULT_ENUMERATION_BUDGET};
use concept_subspace::{ConceptAnnotator, Projector};

/// The 20 seeded causal toys shared by several checks: d ≤ 8, at most 16 contexts.
pub fn seeded_toy_config(seed: u64) -> CausalToyConfig {
    let dim = 2 + (seed % 7) as usize;
    let n_concepts = (2 + (seed % 3) as usize).min(dim);
    CausalToyConfig {
        dim,
        n_concepts,
        n_lemmas: 2 + (seed % 2) as usize,
        n_contexts: 1 + (seed * 5 % 16) as usize,
        max_len: 2,
        prior: if seed % 2 == 0 { PriorKind::Random } else { PriorKind::Uniform },
        seed,
    }
}

pub fn seeded_toys() -> Vec<CausalToyLm> {
    (0..20).map(|s| build_causal_toy(&seeded_toy_config(s)).unwrap()).collect()
}

/// Exact `p̃` and `q̃`, both conditioned on substantive concepts.
pub fn exact_tables(
    lm: &dyn LanguageModel,
    annotator: &ConceptAnnotator,
    p: &Projector,
) -> (UnigramTable, CounterfactualTable) {
    let table = build_unigram_exact(lm, annotator, DEFAULT_ENUMERATION_BUDGET)
        .unwrap()
        .condition_non_na()
        .unwrap();
    let q = build_counterfactual(&table, lm, annotator, p)
        .unwrap()
        .condition_non_na()
        .unwrap();
    (table, q)
}

/// `H(p)` in bits for a two-point distribution.
pub fn binary_entropy(p: f64) -> f64 {
    -(p * p.log2() + (1.0 - p) * (1.0 - p).log2())
}
