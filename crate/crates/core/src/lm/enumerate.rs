// SPDX-License-Identifier: MIT OR Apache-2.0

//! Exhaustive depth-first walk over all strings of positive probability.

use std::collections::BTreeMap;

use super::LanguageModel;
use crate::concept::{ContextString, Rep, WordId};
use crate::error::{Error, Result};

/// Default bound on the number of visited prefix nodes.
pub const DEFAULT_ENUMERATION_BUDGET: usize = 1_000_000;

/// One emitted word on a path, with the representation it was drawn from.
#[derive(Debug, Clone)]
pub(crate) struct Step {
    pub word: WordId,
    pub rep: Rep,
}

/// Visits every complete path (words plus latent choices) with its probability.
///
/// Paths ending in EOS are reported once per prefix with the EOS mass summed over
/// latent branches. Branches of exactly zero probability are pruned.
pub(crate) fn walk_paths(
    lm: &dyn LanguageModel,
    budget: usize,
    mut on_leaf: impl FnMut(&[Step], f64) -> Result<()>,
) -> Result<()> {
    let mut nodes = 0usize;
    let mut steps = Vec::new();
    visit(lm, budget, &mut nodes, &ContextString::empty(), &mut steps, 1.0, &mut on_leaf)
}

fn visit(
    lm: &dyn LanguageModel,
    budget: usize,
    nodes: &mut usize,
    ctx: &ContextString,
    steps: &mut Vec<Step>,
    prob: f64,
    on_leaf: &mut impl FnMut(&[Step], f64) -> Result<()>,
) -> Result<()> {
    *nodes += 1;
    if *nodes > budget {
        return Err(Error::Resource {
            what: "string enumeration",
            bound: budget,
        });
    }
    if ctx.len() >= lm.max_len() {
        return on_leaf(steps, prob);
    }
    let eos = lm.vocab().eos();
    let mut eos_mass = 0.0;
    for branch in lm.rep_branches(ctx)? {
        if branch.weight == 0.0 {
            continue;
        }
        let dist = lm.next_dist(&branch.rep, ctx.len())?;
        eos_mass += branch.weight * dist[eos];
        for (w, &pw) in dist.iter().enumerate() {
            let p = prob * branch.weight * pw;
            if w == eos || p == 0.0 {
                continue;
            }
            steps.push(Step {
                word: w,
                rep: branch.rep.clone(),
            });
            let r = visit(lm, budget, nodes, &ctx.extended(w), steps, p, on_leaf);
            steps.pop();
            r?;
        }
    }
    let p = prob * eos_mass;
    if p > 0.0 {
        on_leaf(steps, p)?;
    }
    Ok(())
}

/// All strings of positive probability with their probabilities, latent choices
/// marginalized. Strings are returned in lexicographic id order.
pub fn enumerate_strings(lm: &dyn LanguageModel, budget: usize) -> Result<Vec<(Vec<WordId>, f64)>> {
    let mut out: BTreeMap<Vec<WordId>, f64> = BTreeMap::new();
    walk_paths(lm, budget, |steps, p| {
        *out.entry(steps.iter().map(|s| s.word).collect()).or_insert(0.0) += p;
        Ok(())
    })?;
    Ok(out.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::concept::Vocab;
    use crate::lm::{Encoder, LmHead, ToyLm};

    fn uniform_lm(n_words: usize, max_len: usize) -> ToyLm {
        let vocab = Vocab::new((0..n_words).map(|i| format!("w{i}")), "<eos>").unwrap();
        let head = LmHead::new(vocab, 1, vec![vec![0.0]; n_words + 1], vec![0.0; n_words + 1], 1.0, max_len).unwrap();
        let enc = Encoder::Recurrent {
            h0: vec![0.0],
            a: vec![vec![0.0]],
            b: vec![vec![0.0]],
            embeddings: vec![vec![0.0]; n_words + 1],
        };
        ToyLm::new(head, enc).unwrap()
    }

    #[test]
    fn uniform_model_probabilities() {
        // Two words + EOS, uniform, max_len 2.
        let lm = uniform_lm(2, 2);
        let strings = enumerate_strings(&lm, DEFAULT_ENUMERATION_BUDGET).unwrap();
        // ε, 2 one-word strings, 4 two-word strings.
        assert_eq!(strings.len(), 7);
        let get = |s: &[usize]| strings.iter().find(|(x, _)| x == s).unwrap().1;
        assert!((get(&[]) - 1.0 / 3.0).abs() < 1e-15);
        assert!((get(&[0]) - 1.0 / 9.0).abs() < 1e-15);
        assert!((get(&[1, 0]) - 1.0 / 9.0).abs() < 1e-15);
        let total: f64 = strings.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn budget_exceeded_is_resource_error() {
        let lm = uniform_lm(5, 6);
        assert!(matches!(enumerate_strings(&lm, 100), Err(Error::Resource { .. })));
    }
}
