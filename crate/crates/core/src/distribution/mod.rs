// SPDX-License-Identifier: MIT OR Apache-2.0

//! The induced joint distribution over (word, concept, representation).
//!
//! Each string `x` contributes `p(x) / |x|` to every (word, concept, representation)
//! triple it emits, where `|x|` counts words but not EOS. The empty string has no
//! emitted words; its mass is recorded as `excluded_mass` and the table is
//! renormalized over the rest.

mod joint;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

pub use joint::{conditional_mi, entropy, mutual_information, JointDist};

use crate::concept::{ConceptAnnotator, ConceptId, ConceptSet, Rep, WordId};
use crate::error::{Error, Result};
use crate::geometry::Projector;
use crate::lm::{walk_paths, CorpusSample, LanguageModel};

/// Index into a [`RepRegistry`].
pub type RepId = usize;

/// Decimal places used to decide that two representations are identical.
pub const DEFAULT_REP_DECIMALS: i32 = 9;

/// Deduplicates representations after rounding each coordinate.
#[derive(Debug, Clone)]
pub struct RepRegistry {
    reps: Vec<Rep>,
    index: HashMap<Vec<i64>, RepId>,
    scale: f64,
}

impl Default for RepRegistry {
    fn default() -> Self {
        Self::new(DEFAULT_REP_DECIMALS)
    }
}

impl RepRegistry {
    pub fn new(decimals: i32) -> Self {
        Self {
            reps: Vec::new(),
            index: HashMap::new(),
            scale: 10f64.powi(decimals),
        }
    }

    fn key(&self, rep: &Rep) -> Vec<i64> {
        rep.as_slice().iter().map(|v| (v * self.scale).round() as i64).collect()
    }

    /// Id of `rep`, registering it on first sight. The first representative of a
    /// rounding class is kept.
    pub fn intern(&mut self, rep: &Rep) -> RepId {
        let key = self.key(rep);
        if let Some(&id) = self.index.get(&key) {
            return id;
        }
        let id = self.reps.len();
        self.reps.push(rep.clone());
        self.index.insert(key, id);
        id
    }

    pub fn lookup(&self, rep: &Rep) -> Option<RepId> {
        self.index.get(&self.key(rep)).copied()
    }

    pub fn get(&self, id: RepId) -> &Rep {
        &self.reps[id]
    }

    pub fn reps(&self) -> &[Rep] {
        &self.reps
    }

    pub fn len(&self) -> usize {
        self.reps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reps.is_empty()
    }

    fn empty_like(&self) -> Self {
        Self {
            reps: Vec::new(),
            index: HashMap::new(),
            scale: self.scale,
        }
    }
}

/// How a table was estimated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TableMode {
    Exact,
    MonteCarlo { n_strings: usize, seed: u64, top_p: f64 },
    Records { n_records: usize },
}

/// Which half of the split a projected table keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// `P h`.
    Perp,
    /// `(I - P) h`.
    Par,
}

/// Joint distribution over (word, concept, representation).
#[derive(Debug, Clone)]
pub struct UnigramTable {
    concepts: ConceptSet,
    n_words: usize,
    registry: RepRegistry,
    cells: BTreeMap<(WordId, ConceptId, RepId), f64>,
    mode: TableMode,
    excluded_mass: f64,
    na_mass_dropped: Option<f64>,
}

impl UnigramTable {
    fn empty(concepts: ConceptSet, n_words: usize, registry: RepRegistry, mode: TableMode) -> Self {
        Self {
            concepts,
            n_words,
            registry,
            cells: BTreeMap::new(),
            mode,
            excluded_mass: 0.0,
            na_mass_dropped: None,
        }
    }

    fn add(&mut self, w: WordId, c: ConceptId, rep: &Rep, p: f64) {
        let h = self.registry.intern(rep);
        *self.cells.entry((w, c, h)).or_insert(0.0) += p;
    }

    fn normalize(&mut self) -> Result<()> {
        let z: f64 = self.cells.values().sum();
        if !(z > 0.0) {
            return Err(Error::domain("induced distribution has no mass"));
        }
        self.cells.values_mut().for_each(|p| *p /= z);
        Ok(())
    }

    pub fn concepts(&self) -> &ConceptSet {
        &self.concepts
    }

    pub fn n_words(&self) -> usize {
        self.n_words
    }

    pub fn registry(&self) -> &RepRegistry {
        &self.registry
    }

    pub fn mode(&self) -> &TableMode {
        &self.mode
    }

    /// Mass of the empty string, removed before normalization.
    pub fn excluded_mass(&self) -> f64 {
        self.excluded_mass
    }

    /// Mass of n/a cells removed by [`UnigramTable::condition_non_na`], if applied.
    pub fn na_mass_dropped(&self) -> Option<f64> {
        self.na_mass_dropped
    }

    pub fn cells(&self) -> impl Iterator<Item = ((WordId, ConceptId, RepId), f64)> + '_ {
        self.cells.iter().map(|(&k, &p)| (k, p))
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.cells.values().sum()
    }

    /// `p̃(h)` indexed by rep id.
    pub fn rep_marginal(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.registry.len()];
        for (&(_, _, h), &p) in &self.cells {
            m[h] += p;
        }
        m
    }

    /// `p̃(c)` indexed by concept id.
    pub fn concept_marginal(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.concepts.len()];
        for (&(_, c, _), &p) in &self.cells {
            m[c] += p;
        }
        m
    }

    /// Joint over (concept, representation).
    pub fn concept_rep_joint(&self) -> JointDist<2> {
        let mut j = JointDist::new(["concept", "rep"]);
        for (&(_, c, h), &p) in &self.cells {
            j.add([c, h], p);
        }
        j
    }

    /// Joint over (word, representation, concept).
    pub fn word_rep_concept_joint(&self) -> JointDist<3> {
        let mut j = JointDist::new(["word", "rep", "concept"]);
        for (&(w, c, h), &p) in &self.cells {
            j.add([w, h, c], p);
        }
        j
    }

    /// `I(C; H)` in bits.
    pub fn mi_concept_rep(&self) -> f64 {
        mutual_information(&self.concept_rep_joint())
    }

    /// `I(X; H | C)` in bits.
    pub fn mi_word_rep_given_concept(&self) -> f64 {
        conditional_mi(&self.word_rep_concept_joint())
    }

    /// Conditions on `c ≠ n/a` and renormalizes.
    pub fn condition_non_na(&self) -> Result<Self> {
        let na = self.concepts.na();
        let mut out = self.clone();
        let dropped: f64 = self.cells.iter().filter(|(k, _)| k.1 == na).map(|(_, p)| p).sum();
        out.cells.retain(|k, _| k.1 != na);
        if out.cells.values().sum::<f64>() <= 0.0 {
            return Err(Error::domain("no mass on substantive concept values"));
        }
        out.normalize()?;
        out.na_mass_dropped = Some(dropped / self.total());
        Ok(out)
    }

    /// Replaces every representation by `P h` or `(I - P) h`.
    pub fn project(&self, p: &Projector, side: Side) -> Result<Self> {
        let mut map = Vec::with_capacity(self.registry.len());
        let mut registry = self.registry.empty_like();
        for rep in self.registry.reps() {
            let r = match side {
                Side::Perp => p.perp(rep)?,
                Side::Par => p.par(rep)?,
            };
            map.push(registry.intern(&r));
        }
        let mut out = self.clone();
        out.registry = registry;
        out.cells = BTreeMap::new();
        for (&(w, c, h), &q) in &self.cells {
            *out.cells.entry((w, c, map[h])).or_insert(0.0) += q;
        }
        Ok(out)
    }

    /// Marginal of the projected representation, as (representation, mass) pairs.
    pub fn projected_marginal(&self, p: &Projector, side: Side) -> Result<Vec<(Rep, f64)>> {
        let t = self.project(p, side)?;
        Ok(t.rep_marginal()
            .into_iter()
            .enumerate()
            .map(|(id, m)| (t.registry.get(id).clone(), m))
            .collect())
    }

    /// Builds a table from weighted (word, concept, representation) triples.
    pub fn from_weighted(
        concepts: ConceptSet,
        n_words: usize,
        entries: impl IntoIterator<Item = (WordId, ConceptId, Rep, f64)>,
        mode: TableMode,
    ) -> Result<Self> {
        let mut t = Self::empty(concepts, n_words, RepRegistry::default(), mode);
        for (w, c, rep, p) in entries {
            if w >= n_words {
                return Err(Error::domain(format!("word id {w} out of range")));
            }
            if c >= t.concepts.len() {
                return Err(Error::domain(format!("concept id {c} out of range")));
            }
            if !(p >= 0.0 && p.is_finite()) {
                return Err(Error::domain("weights must be finite and non-negative"));
            }
            t.add(w, c, &rep, p);
        }
        t.normalize()?;
        Ok(t)
    }
}

/// Exact induced table by enumerating every string of positive probability.
pub fn build_unigram_exact(lm: &dyn LanguageModel, annotator: &ConceptAnnotator, budget: usize) -> Result<UnigramTable> {
    check_annotator(lm, annotator)?;
    let mut t = UnigramTable::empty(
        annotator.concepts().clone(),
        lm.vocab().len(),
        RepRegistry::default(),
        TableMode::Exact,
    );
    let mut excluded = 0.0;
    walk_paths(lm, budget, |steps, p| {
        if steps.is_empty() {
            excluded += p;
            return Ok(());
        }
        let share = p / steps.len() as f64;
        for s in steps {
            let c = annotator.concept_of(s.word)?;
            t.add(s.word, c, &s.rep, share);
        }
        Ok(())
    })?;
    t.excluded_mass = excluded;
    t.normalize()?;
    Ok(t)
}

/// Monte-Carlo estimate of the induced table from sampled strings.
///
/// Each non-empty sampled string has weight `1 / n`, split evenly over its words.
pub fn build_unigram_mc(sample: &CorpusSample, annotator: &ConceptAnnotator) -> Result<UnigramTable> {
    let mut lengths: BTreeMap<usize, usize> = BTreeMap::new();
    for r in &sample.records {
        *lengths.entry(r.string_index).or_insert(0) += 1;
    }
    let mut t = UnigramTable::empty(
        annotator.concepts().clone(),
        annotator.vocab_len(),
        RepRegistry::default(),
        TableMode::MonteCarlo {
            n_strings: sample.n_strings,
            seed: sample.seed,
            top_p: sample.top_p,
        },
    );
    for r in &sample.records {
        let c = annotator.concept_of(r.word)?;
        t.add(r.word, c, &r.rep, 1.0 / lengths[&r.string_index] as f64);
    }
    t.excluded_mass = sample.n_empty as f64 / sample.n_strings as f64;
    t.normalize()?;
    Ok(t)
}

fn check_annotator(lm: &dyn LanguageModel, annotator: &ConceptAnnotator) -> Result<()> {
    if annotator.vocab_len() != lm.vocab().len() {
        return Err(Error::DimensionMismatch {
            what: "annotator vs vocabulary",
            expected: lm.vocab().len(),
            got: annotator.vocab_len(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{build_counterexample, sample_corpus, SamplerConfig, DEFAULT_ENUMERATION_BUDGET};

    #[test]
    fn registry_merges_within_rounding() {
        let mut r = RepRegistry::default();
        let a = r.intern(&Rep::new(vec![1.0, 2.0]).unwrap());
        let b = r.intern(&Rep::new(vec![1.0 + 1e-13, 2.0]).unwrap());
        let c = r.intern(&Rep::new(vec![1.0 + 1e-6, 2.0]).unwrap());
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(r.len(), 2);
    }

    #[test]
    fn counterexample_table_entries() {
        let ce = build_counterexample().unwrap();
        let t = build_unigram_exact(&ce.lm, &ce.annotator, DEFAULT_ENUMERATION_BUDGET).unwrap();
        assert!((t.total() - 1.0).abs() < 1e-12);
        let v = ce.lm.vocab();
        let cell = |w: &str, c: &str, h: [f64; 2]| {
            let w = v.id(w).unwrap();
            let c = t.concepts().id(c).unwrap();
            let h = t.registry().lookup(&Rep::new(h.to_vec()).unwrap()).unwrap();
            t.cells().find(|(k, _)| *k == (w, c, h)).map(|(_, p)| p).unwrap_or(0.0)
        };
        // Each two-word string splits its mass between its two positions.
        assert!((cell("goes", "sg", [1.0, -1.0]) - 0.35).abs() < 1e-12);
        assert!((cell("walk", "pl", [-1.0, 1.0]) - 0.15).abs() < 1e-12);
        assert!((cell("kid", "n/a", [0.0, 0.0]) - 0.35).abs() < 1e-12);
        assert!(t.excluded_mass() < 1e-80);
    }

    #[test]
    fn non_na_conditioning_matches_table_one() {
        let ce = build_counterexample().unwrap();
        let t = build_unigram_exact(&ce.lm, &ce.annotator, DEFAULT_ENUMERATION_BUDGET)
            .unwrap()
            .condition_non_na()
            .unwrap();
        assert!((t.na_mass_dropped().unwrap() - 0.5).abs() < 1e-12);
        let h = -(0.7f64 * 0.7f64.log2() + 0.3 * 0.3f64.log2());
        assert!((t.mi_concept_rep() - h).abs() < 1e-9);
        assert!(t.mi_word_rep_given_concept() < 1e-9);
    }

    #[test]
    fn projection_merges_reps() {
        let ce = build_counterexample().unwrap();
        let t = build_unigram_exact(&ce.lm, &ce.annotator, DEFAULT_ENUMERATION_BUDGET).unwrap();
        let perp = t.project(&ce.ground_truth, Side::Perp).unwrap();
        assert!((perp.total() - 1.0).abs() < 1e-12);
        let zero = t.project(&Projector::zero(2), Side::Perp).unwrap();
        assert_eq!(zero.registry().len(), 1);
        assert!(zero.mi_concept_rep() < 1e-15);
    }

    #[test]
    fn monte_carlo_converges_to_exact() {
        let ce = build_counterexample().unwrap();
        let exact = build_unigram_exact(&ce.lm, &ce.annotator, DEFAULT_ENUMERATION_BUDGET).unwrap();
        let sample = sample_corpus(&ce.lm, &ce.annotator, 20_000, SamplerConfig::default(), 5).unwrap();
        let mc = build_unigram_mc(&sample, &ce.annotator).unwrap();
        assert!((mc.total() - 1.0).abs() < 1e-12);
        assert!((mc.mi_concept_rep() - exact.mi_concept_rep()).abs() < 0.03);
    }
}
