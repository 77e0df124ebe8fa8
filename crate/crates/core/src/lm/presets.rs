// SPDX-License-Identifier: MIT OR Apache-2.0

//! The two-dimensional subject/verb agreement model.
//!
//! Axis 0 encodes the lemma (`go` = +1, `walk` = -1) and axis 1 the grammatical
//! number (singular = -1, plural = +1). A one-word context `kid` or `kids` fixes
//! both coordinates, so the number concept is perfectly predictable from axis 0
//! in the data even though the head reads number only from axis 1.

use std::collections::BTreeMap;

use super::{Encoder, LmHead, ToyLm};
use crate::causal::ForcedChoiceItem;
use crate::concept::{ConceptAnnotator, ConceptSet, ContextString, Rep, Vocab};
use crate::error::Result;
use crate::geometry::Projector;

const BETA: f64 = 20.0;
/// Scale of the verb rows and of the noun bias; large enough that all leakage
/// between the noun and verb positions is below 1e-80.
const SCALE: f64 = 10.0;
const P_KID: f64 = 0.7;

/// The agreement model together with its annotation and ground truth.
#[derive(Debug, Clone)]
pub struct Counterexample {
    pub lm: ToyLm,
    pub annotator: ConceptAnnotator,
    /// Keeps axis 0, removes axis 1.
    pub ground_truth: Projector,
    pub items: Vec<ForcedChoiceItem>,
}

pub fn build_counterexample() -> Result<Counterexample> {
    let vocab = Vocab::new(["kid", "kids", "walks", "walk", "goes", "go"], "<eos>")?;
    let concepts = ConceptSet::new(["n/a", "sg", "pl"], 0)?;
    let annotator = ConceptAnnotator::from_pairs(
        &vocab,
        concepts,
        &[("goes", "sg"), ("walks", "sg"), ("go", "pl"), ("walk", "pl")],
    )?;

    let id = |w: &str| vocab.require(w);
    let mut unembedding = vec![vec![0.0, 0.0]; vocab.len()];
    let mut bias = vec![0.0; vocab.len()];
    for (w, lemma, number) in [("goes", 1.0, -1.0), ("go", 1.0, 1.0), ("walks", -1.0, -1.0), ("walk", -1.0, 1.0)] {
        unembedding[id(w)?] = vec![SCALE * lemma, SCALE * number];
    }
    bias[id("kid")?] = SCALE + P_KID.ln() / BETA;
    bias[id("kids")?] = SCALE + (1.0 - P_KID).ln() / BETA;
    bias[vocab.eos()] = -1000.0;

    let origin = Rep::zeros(2);
    let mut entries = BTreeMap::new();
    entries.insert(ContextString::empty(), origin.clone());
    entries.insert(ContextString::from_words(&["kid"], &vocab)?, Rep::new(vec![1.0, -1.0])?);
    entries.insert(ContextString::from_words(&["kids"], &vocab)?, Rep::new(vec![-1.0, 1.0])?);
    for w in ["walks", "walk", "goes", "go"] {
        entries.insert(ContextString::from_words(&[w], &vocab)?, origin.clone());
    }

    let head = LmHead::new(vocab.clone(), 2, unembedding, bias, BETA, 2)?;
    let lm = ToyLm::new(head, Encoder::Table { entries })?;

    let sg = annotator.concepts().id("sg").expect("sg");
    let pl = annotator.concepts().id("pl").expect("pl");
    let items = vec![
        ForcedChoiceItem {
            context: ContextString::from_words(&["kid"], &vocab)?,
            fact: id("goes")?,
            foil: id("go")?,
            fact_concept: sg,
            foil_concept: pl,
        },
        ForcedChoiceItem {
            context: ContextString::from_words(&["kids"], &vocab)?,
            fact: id("walk")?,
            foil: id("walks")?,
            fact_concept: pl,
            foil_concept: sg,
        },
    ];

    Ok(Counterexample {
        lm,
        annotator,
        ground_truth: Projector::keep_coordinates(&[true, false]),
        items,
    })
}
