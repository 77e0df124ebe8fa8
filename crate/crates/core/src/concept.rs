// SPDX-License-Identifier: MIT OR Apache-2.0

//! Vocabulary, concept sets, the word-to-concept annotator, and representation vectors.
//!
//! Everything here is immutable once built. Indices into a [`Vocab`] are plain
//! `usize` word ids; indices into a [`ConceptSet`] are `usize` concept ids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of a word in a [`Vocab`].
pub type WordId = usize;
/// Index of a value in a [`ConceptSet`].
pub type ConceptId = usize;

/// Word identifiers plus one end-of-string symbol.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "VocabRepr", into = "VocabRepr")]
pub struct Vocab {
    words: Vec<String>,
    eos: WordId,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    words: Vec<String>,
    eos: WordId,
}

impl TryFrom<VocabRepr> for Vocab {
    type Error = Error;
    fn try_from(r: VocabRepr) -> Result<Self> {
        Vocab::with_eos_at(r.words, r.eos)
    }
}

impl From<Vocab> for VocabRepr {
    fn from(v: Vocab) -> Self {
        Self {
            words: v.words,
            eos: v.eos,
        }
    }
}

impl Vocab {
    /// Builds a vocabulary from `words` and appends `eos_name` as the EOS entry.
    pub fn new<S: Into<String>>(words: impl IntoIterator<Item = S>, eos_name: &str) -> Result<Self> {
        let mut words: Vec<String> = words.into_iter().map(Into::into).collect();
        let eos = words.len();
        words.push(eos_name.to_string());
        Self::with_eos_at(words, eos)
    }

    /// Builds a vocabulary whose EOS symbol already sits at index `eos`.
    pub fn with_eos_at(words: Vec<String>, eos: WordId) -> Result<Self> {
        if eos >= words.len() {
            return Err(Error::domain(format!(
                "EOS index {eos} outside vocabulary of size {}",
                words.len()
            )));
        }
        check_distinct(&words, "vocabulary")?;
        Ok(Self { words, eos })
    }

    /// Number of entries including EOS.
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn eos(&self) -> WordId {
        self.eos
    }

    pub fn is_eos(&self, w: WordId) -> bool {
        w == self.eos
    }

    pub fn word(&self, w: WordId) -> Option<&str> {
        self.words.get(w).map(String::as_str)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn id(&self, word: &str) -> Option<WordId> {
        self.words.iter().position(|w| w == word)
    }

    /// Looks up a word and fails with a domain error when it is unknown.
    pub fn require(&self, word: &str) -> Result<WordId> {
        self.id(word)
            .ok_or_else(|| Error::domain(format!("unknown word `{word}`")))
    }
}

/// The finite set of values a concept can take, one of which is n/a.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ConceptSetRepr", into = "ConceptSetRepr")]
pub struct ConceptSet {
    values: Vec<String>,
    na: ConceptId,
}

#[derive(Serialize, Deserialize)]
struct ConceptSetRepr {
    values: Vec<String>,
    na_index: ConceptId,
}

impl TryFrom<ConceptSetRepr> for ConceptSet {
    type Error = Error;
    fn try_from(r: ConceptSetRepr) -> Result<Self> {
        ConceptSet::new(r.values, r.na_index)
    }
}

impl From<ConceptSet> for ConceptSetRepr {
    fn from(c: ConceptSet) -> Self {
        Self {
            values: c.values,
            na_index: c.na,
        }
    }
}

impl ConceptSet {
    pub fn new<S: Into<String>>(values: impl IntoIterator<Item = S>, na_index: ConceptId) -> Result<Self> {
        let values: Vec<String> = values.into_iter().map(Into::into).collect();
        if values.len() < 2 {
            return Err(Error::domain(
                "a concept set needs n/a plus at least one substantive value",
            ));
        }
        if na_index >= values.len() {
            return Err(Error::domain(format!("n/a index {na_index} out of range")));
        }
        check_distinct(&values, "concept set")?;
        Ok(Self {
            values,
            na: na_index,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn na(&self) -> ConceptId {
        self.na
    }

    pub fn is_na(&self, c: ConceptId) -> bool {
        c == self.na
    }

    pub fn name(&self, c: ConceptId) -> Option<&str> {
        self.values.get(c).map(String::as_str)
    }

    pub fn values(&self) -> &[String] {
        &self.values
    }

    pub fn id(&self, name: &str) -> Option<ConceptId> {
        self.values.iter().position(|v| v == name)
    }

    /// Concept ids other than n/a, in construction order.
    pub fn substantive(&self) -> impl Iterator<Item = ConceptId> + '_ {
        (0..self.values.len()).filter(move |&c| c != self.na)
    }
}

fn check_distinct(items: &[String], what: &str) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for item in items {
        if !seen.insert(item.as_str()) {
            return Err(Error::domain(format!("duplicate entry `{item}` in {what}")));
        }
    }
    Ok(())
}

/// A context string: word ids emitted so far. Never contains EOS.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContextString(Vec<WordId>);

impl ContextString {
    pub fn empty() -> Self {
        Self(Vec::new())
    }

    /// Builds a context, rejecting EOS tokens and out-of-range ids.
    pub fn new(tokens: Vec<WordId>, vocab: &Vocab) -> Result<Self> {
        for &t in &tokens {
            if t >= vocab.len() {
                return Err(Error::domain(format!("word id {t} out of range")));
            }
            if vocab.is_eos(t) {
                return Err(Error::domain("context strings cannot contain EOS"));
            }
        }
        Ok(Self(tokens))
    }

    pub fn from_words(words: &[&str], vocab: &Vocab) -> Result<Self> {
        let ids = words
            .iter()
            .map(|w| vocab.require(w))
            .collect::<Result<Vec<_>>>()?;
        Self::new(ids, vocab)
    }

    pub fn tokens(&self) -> &[WordId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Returns a new context with `w` appended. The caller guarantees `w` is not EOS.
    pub fn extended(&self, w: WordId) -> Self {
        let mut t = self.0.clone();
        t.push(w);
        Self(t)
    }
}

/// A real-valued representation vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Rep(Vec<f64>);

impl Rep {
    /// Wraps a vector, rejecting non-finite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!(
                "representation entry {i} is not finite"
            )));
        }
        Ok(Self(values))
    }

    pub fn zeros(d: usize) -> Self {
        Self(vec![0.0; d])
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn add(&self, other: &Rep) -> Rep {
        debug_assert_eq!(self.dim(), other.dim());
        Rep(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        self.0.iter().zip(other).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    pub(crate) fn check_dim(&self, expected: usize, what: &'static str) -> Result<()> {
        if self.dim() != expected {
            return Err(Error::DimensionMismatch {
                what,
                expected,
                got: self.dim(),
            });
        }
        Ok(())
    }
}

/// Deterministic, context-free mapping from words to concept values.
///
/// Viewed as a conditional distribution over concepts given (context, word), it puts
/// mass one on a single value. EOS always maps to n/a.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptAnnotator {
    concepts: ConceptSet,
    mapping: Vec<ConceptId>,
}

impl ConceptAnnotator {
    /// `mapping[w]` is the concept of word `w`; the EOS slot must be n/a.
    pub fn new(vocab: &Vocab, concepts: ConceptSet, mapping: Vec<ConceptId>) -> Result<Self> {
        if mapping.len() != vocab.len() {
            return Err(Error::DimensionMismatch {
                what: "annotator mapping vs vocabulary",
                expected: vocab.len(),
                got: mapping.len(),
            });
        }
        if let Some(&c) = mapping.iter().find(|&&c| c >= concepts.len()) {
            return Err(Error::domain(format!("concept id {c} out of range")));
        }
        if mapping[vocab.eos()] != concepts.na() {
            return Err(Error::domain("EOS must be annotated n/a"));
        }
        Ok(Self { concepts, mapping })
    }

    /// Builds an annotator from word/value name pairs. Unlisted words get n/a.
    pub fn from_pairs(vocab: &Vocab, concepts: ConceptSet, pairs: &[(&str, &str)]) -> Result<Self> {
        let mut mapping = vec![concepts.na(); vocab.len()];
        for (word, value) in pairs {
            let w = vocab.require(word)?;
            let c = concepts
                .id(value)
                .ok_or_else(|| Error::domain(format!("unknown concept value `{value}`")))?;
            mapping[w] = c;
        }
        Self::new(vocab, concepts, mapping)
    }

    pub fn concepts(&self) -> &ConceptSet {
        &self.concepts
    }

    pub fn vocab_len(&self) -> usize {
        self.mapping.len()
    }

    /// The concept of `word` in `context`. The context is accepted but unused:
    /// the annotator is context-free.
    pub fn annotate(&self, _context: &ContextString, word: WordId) -> Result<ConceptId> {
        self.concept_of(word)
    }

    pub fn concept_of(&self, word: WordId) -> Result<ConceptId> {
        self.mapping
            .get(word)
            .copied()
            .ok_or_else(|| Error::domain(format!("word id {word} out of range")))
    }

    /// ι(c | x, w) as a probability: 1 on the annotated value, 0 elsewhere.
    pub fn prob(&self, context: &ContextString, word: WordId, c: ConceptId) -> Result<f64> {
        Ok(if self.annotate(context, word)? == c {
            1.0
        } else {
            0.0
        })
    }

    /// Words annotated with concept `c`.
    pub fn words_with(&self, c: ConceptId) -> impl Iterator<Item = WordId> + '_ {
        self.mapping
            .iter()
            .enumerate()
            .filter(move |(_, &m)| m == c)
            .map(|(w, _)| w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn number_setup() -> (Vocab, ConceptAnnotator) {
        let vocab = Vocab::new(["The", "kids", "walk", "walks", "consternation"], "<eos>").unwrap();
        let concepts = ConceptSet::new(["n/a", "sg", "pl"], 0).unwrap();
        let ann = ConceptAnnotator::from_pairs(&vocab, concepts, &[("walk", "pl"), ("walks", "sg")]).unwrap();
        (vocab, ann)
    }

    #[test]
    fn annotates_plural_verb() {
        let (vocab, ann) = number_setup();
        let ctx = ContextString::from_words(&["The", "kids"], &vocab).unwrap();
        let walk = vocab.require("walk").unwrap();
        let pl = ann.concepts().id("pl").unwrap();
        assert_eq!(ann.annotate(&ctx, walk).unwrap(), pl);
        assert_eq!(ann.prob(&ctx, walk, pl).unwrap(), 1.0);
        assert_eq!(ann.prob(&ctx, walk, ann.concepts().id("sg").unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn eos_and_unlisted_words_are_na() {
        let (vocab, ann) = number_setup();
        let na = ann.concepts().na();
        assert_eq!(ann.annotate(&ContextString::empty(), vocab.eos()).unwrap(), na);
        let w = vocab.require("consternation").unwrap();
        assert_eq!(ann.annotate(&ContextString::empty(), w).unwrap(), na);
    }

    #[test]
    fn context_free_and_normalized() {
        let (vocab, ann) = number_setup();
        let c1 = ContextString::empty();
        let c2 = ContextString::from_words(&["The", "kids"], &vocab).unwrap();
        for w in 0..vocab.len() {
            assert_eq!(ann.annotate(&c1, w).unwrap(), ann.annotate(&c2, w).unwrap());
            let total: f64 = (0..ann.concepts().len())
                .map(|c| ann.prob(&c1, w, c).unwrap())
                .sum();
            assert_eq!(total, 1.0);
        }
    }

    #[test]
    fn invalid_word_is_domain_error() {
        let (vocab, ann) = number_setup();
        assert!(matches!(
            ann.annotate(&ContextString::empty(), vocab.len()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn construction_invariants() {
        assert!(Vocab::new(["a", "a"], "<eos>").is_err());
        assert!(Vocab::new(["a"], "a").is_err());
        assert!(ConceptSet::new(["n/a"], 0).is_err());
        assert!(ConceptSet::new(["n/a", "x"], 2).is_err());
        assert!(Rep::new(vec![1.0, f64::NAN]).is_err());
        let vocab = Vocab::new(["a"], "<eos>").unwrap();
        assert!(ContextString::new(vec![vocab.eos()], &vocab).is_err());
        let concepts = ConceptSet::new(["n/a", "x"], 0).unwrap();
        assert!(ConceptAnnotator::new(&vocab, concepts, vec![0, 1]).is_err());
    }
}
