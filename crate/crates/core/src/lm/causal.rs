// SPDX-License-Identifier: MIT OR Apache-2.0

//! Toy model that samples a latent concept before each word.
//!
//! The representation is `h(x, c) = ctx(x) + e_c`, where `ctx(x)` lies in the
//! non-concept subspace (the range of the ground-truth projector) and `e_c` in its
//! orthogonal complement. Words form a lemma × concept grid and the unembedding
//! row of word `(i, j)` is `a_i + b_j` with `a_i` in the non-concept subspace and
//! `b_j = e_j`, so the head factorizes into a lemma part read from `h⊥` and a
//! concept part read from `h∥`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{walk_paths, LanguageModel, LmHead, RepBranch};
use crate::concept::{ConceptAnnotator, ConceptId, ConceptSet, ContextString, Rep, Vocab, WordId};
use crate::error::{Error, Result};
use crate::geometry::{orthonormal_column_basis, Projector};

/// How the latent concept prior depends on the context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    /// Uniform over concepts, independent of context.
    Uniform,
    /// A random distribution per context slot.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalToyConfig {
    pub dim: usize,
    /// Number of substantive concept values.
    pub n_concepts: usize,
    pub n_lemmas: usize,
    /// Number of distinct context components.
    pub n_contexts: usize,
    pub max_len: usize,
    pub prior: PriorKind,
    pub seed: u64,
}

impl Default for CausalToyConfig {
    fn default() -> Self {
        Self {
            dim: 4,
            n_concepts: 2,
            n_lemmas: 3,
            n_contexts: 4,
            max_len: 2,
            prior: PriorKind::Uniform,
            seed: 0,
        }
    }
}

/// Norm of the concept components. The logit gap between the drawn concept and
/// any other is at least `CONCEPT_NORM²`, so leakage is below `e^-64`.
const CONCEPT_NORM: f64 = 8.0;
const LEMMA_NORM: f64 = 1.5;
const CONTEXT_NORM: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalToyLm {
    head: LmHead,
    annotator: ConceptAnnotator,
    ground_truth: Projector,
    context_components: Vec<Rep>,
    /// `concept_components[c]`, `None` for n/a.
    concept_components: Vec<Option<Rep>>,
    /// Prior over concepts per context slot, indexed by concept id (n/a has 0).
    priors: Vec<Vec<f64>>,
    lemma_of: Vec<Option<usize>>,
}

impl CausalToyLm {
    pub fn annotator(&self) -> &ConceptAnnotator {
        &self.annotator
    }

    pub fn concepts(&self) -> &ConceptSet {
        self.annotator.concepts()
    }

    /// Projector onto the non-concept subspace.
    pub fn ground_truth(&self) -> &Projector {
        &self.ground_truth
    }

    pub fn n_slots(&self) -> usize {
        self.context_components.len()
    }

    /// Deterministic context → slot assignment.
    pub fn slot(&self, context: &ContextString) -> usize {
        let n = self.context_components.len() as u64;
        let v = self.head.vocab().len() as u64 + 1;
        let mut acc = 0u64;
        for &t in context.tokens() {
            acc = (acc * v + t as u64 + 1) % n;
        }
        acc as usize
    }

    pub fn context_component(&self, slot: usize) -> &Rep {
        &self.context_components[slot]
    }

    pub fn concept_component(&self, c: ConceptId) -> Option<&Rep> {
        self.concept_components.get(c).and_then(Option::as_ref)
    }

    /// γ(c | slot), indexed by concept id.
    pub fn prior(&self, slot: usize) -> &[f64] {
        &self.priors[slot]
    }

    /// `h(x, c)`.
    pub fn rep(&self, context: &ContextString, c: ConceptId) -> Result<Rep> {
        let e = self
            .concept_component(c)
            .ok_or_else(|| Error::domain(format!("concept {c} has no component")))?;
        Ok(self.context_components[self.slot(context)].add(e))
    }

    pub fn lemma_of(&self, w: WordId) -> Option<usize> {
        self.lemma_of.get(w).copied().flatten()
    }

    /// The word with the given lemma and concept.
    pub fn word_for(&self, lemma: usize, c: ConceptId) -> Option<WordId> {
        (0..self.lemma_of.len()).find(|&w| self.lemma_of[w] == Some(lemma) && self.annotator.concept_of(w).ok() == Some(c))
    }

    pub fn n_lemmas(&self) -> usize {
        self.lemma_of.iter().flatten().max().map_or(0, |m| m + 1)
    }

    /// Weight of each reachable context in the induced distribution: every string
    /// gives `p(x) / |x|` to each of its proper prefixes that is followed by a word.
    pub fn context_weights(&self, budget: usize) -> Result<Vec<(ContextString, f64)>> {
        let mut acc: BTreeMap<ContextString, f64> = BTreeMap::new();
        walk_paths(self, budget, |steps, p| {
            let share = p / steps.len().max(1) as f64;
            let words: Vec<WordId> = steps.iter().map(|s| s.word).collect();
            for t in 0..steps.len() {
                *acc.entry(ContextString::new(words[..t].to_vec(), self.head.vocab())?).or_insert(0.0) += share;
            }
            Ok(())
        })?;
        let z: f64 = acc.values().sum();
        Ok(acc.into_iter().map(|(c, w)| (c, w / z)).collect())
    }
}

impl LanguageModel for CausalToyLm {
    fn head(&self) -> &LmHead {
        &self.head
    }

    fn rep_branches(&self, context: &ContextString) -> Result<Vec<RepBranch>> {
        let slot = self.slot(context);
        let mut out = Vec::new();
        for (c, &g) in self.priors[slot].iter().enumerate() {
            if g > 0.0 {
                out.push(RepBranch {
                    latent: Some(c),
                    rep: self.rep(context, c)?,
                    weight: g,
                });
            }
        }
        Ok(out)
    }
}

fn random_unit(rng: &mut ChaCha8Rng, basis: &DMatrix<f64>) -> Vec<f64> {
    loop {
        let coeffs: Vec<f64> = (0..basis.ncols()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = coeffs.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm > 1e-3 {
            let v = basis * nalgebra::DVector::from_vec(coeffs);
            let n = v.norm();
            return v.iter().map(|x| x / n).collect();
        }
    }
}

/// Regular simplex vertices in `r = k - 1` dimensions, unit norm.
fn simplex(k: usize) -> Vec<Vec<f64>> {
    if k == 1 {
        return vec![vec![]];
    }
    let centered = DMatrix::from_fn(k, k, |i, j| if i == j { 1.0 } else { 0.0 } - 1.0 / k as f64);
    let basis = orthonormal_column_basis(&centered, 1e-10);
    (0..k)
        .map(|j| {
            let v: Vec<f64> = (0..basis.ncols()).map(|a| basis[(j, a)]).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / n).collect()
        })
        .collect()
}

/// Builds a seeded causal toy model.
pub fn build_causal_toy(config: &CausalToyConfig) -> Result<CausalToyLm> {
    let CausalToyConfig {
        dim: d,
        n_concepts: k,
        n_lemmas: m,
        n_contexts,
        max_len,
        prior,
        seed,
    } = *config;
    if k == 0 || m == 0 || n_contexts == 0 {
        return Err(Error::domain("need at least one concept, lemma, and context"));
    }
    let r = k - 1;
    if d < 2 || d < r + 1 {
        return Err(Error::domain(format!(
            "dimension {d} too small for a concept subspace of rank {r} plus a non-concept direction"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let raw = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    let q = raw.qr().q();
    let concept_basis = q.columns(0, r).into_owned();
    let other_basis = q.columns(r, d - r).into_owned();
    let ground_truth = Projector::from_orthonormal_removed(&concept_basis)?;

    let vertices = simplex(k);
    let concept_vecs: Vec<Vec<f64>> = vertices
        .iter()
        .map(|v| {
            let mut e = vec![0.0; d];
            for (a, coeff) in v.iter().enumerate() {
                for (i, ei) in e.iter_mut().enumerate() {
                    *ei += CONCEPT_NORM * coeff * concept_basis[(i, a)];
                }
            }
            e
        })
        .collect();
    let lemma_vecs: Vec<Vec<f64>> = (0..m)
        .map(|_| random_unit(&mut rng, &other_basis).into_iter().map(|x| LEMMA_NORM * x).collect())
        .collect();
    let context_components: Vec<Rep> = (0..n_contexts)
        .map(|_| {
            let scale = rng.random_range(0.2..1.0) * CONTEXT_NORM;
            Rep::new(random_unit(&mut rng, &other_basis).into_iter().map(|x| scale * x).collect())
        })
        .collect::<Result<_>>()?;

    let mut concept_names = vec!["n/a".to_string()];
    concept_names.extend((0..k).map(|j| format!("c{j}")));
    let concepts = ConceptSet::new(concept_names.clone(), 0)?;

    let mut words = Vec::new();
    let mut lemma_of = Vec::new();
    let mut mapping = Vec::new();
    let mut unembedding = Vec::new();
    for (i, a) in lemma_vecs.iter().enumerate() {
        for (j, b) in concept_vecs.iter().enumerate() {
            words.push(format!("w{i}_{}", concept_names[j + 1]));
            lemma_of.push(Some(i));
            mapping.push(j + 1);
            unembedding.push(a.iter().zip(b).map(|(x, y)| x + y).collect::<Vec<f64>>());
        }
    }
    let n_words = words.len();
    let vocab = Vocab::new(words, "<eos>")?;
    lemma_of.push(None);
    mapping.push(0);
    unembedding.push(vec![0.0; d]);
    let mut bias = vec![0.0; n_words + 1];
    bias[vocab.eos()] = -1000.0;
    let annotator = ConceptAnnotator::new(&vocab, concepts, mapping)?;
    let head = LmHead::new(vocab, d, unembedding, bias, 1.0, max_len)?;

    let priors = (0..n_contexts)
        .map(|_| {
            let mut p = vec![0.0; k + 1];
            match prior {
                PriorKind::Uniform => p[1..].iter_mut().for_each(|x| *x = 1.0 / k as f64),
                PriorKind::Random => {
                    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
                    let z: f64 = raw.iter().sum();
                    for (j, v) in raw.into_iter().enumerate() {
                        p[j + 1] = v / z;
                    }
                }
            }
            p
        })
        .collect();

    let mut concept_components = vec![None];
    concept_components.extend(concept_vecs.into_iter().map(|e| Some(Rep::from_vec_unchecked(e))));

    Ok(CausalToyLm {
        head,
        annotator,
        ground_truth,
        context_components,
        concept_components,
        priors,
        lemma_of,
    })
}
