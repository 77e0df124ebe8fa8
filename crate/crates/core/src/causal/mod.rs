// SPDX-License-Identifier: MIT OR Apache-2.0

//! Do-interventions on the concept part of a representation.
//!
//! `do(C = c)` keeps `P h` and replaces the concept part by that of a stored
//! representation with concept `c`, averaging the head distribution uniformly over
//! the pool for `c`.

mod theorem;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use theorem::{theorem1_check, DoFactorization, Theorem1Report, THEOREM1_TOL};

use crate::concept::{ConceptAnnotator, ConceptId, ConceptSet, ContextString, Rep, WordId};
use crate::error::{Error, Result};
use crate::geometry::Projector;
use crate::lm::{CausalToyLm, CorpusSample, LanguageModel, ToyLm, DEFAULT_ENUMERATION_BUDGET};

/// Stored representations grouped by concept value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RepPool {
    pools: BTreeMap<ConceptId, Vec<Rep>>,
}

impl RepPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, c: ConceptId, rep: Rep) {
        self.pools.entry(c).or_default().push(rep);
    }

    pub fn get(&self, c: ConceptId) -> &[Rep] {
        self.pools.get(&c).map_or(&[], Vec::as_slice)
    }

    pub fn concepts(&self) -> impl Iterator<Item = ConceptId> + '_ {
        self.pools.keys().copied()
    }

    pub fn sizes(&self) -> BTreeMap<ConceptId, usize> {
        self.pools.iter().map(|(&c, v)| (c, v.len())).collect()
    }
}

/// Groups the sampled representations by their recorded concept, skipping n/a.
pub fn build_rep_pool(sample: &CorpusSample, concepts: &ConceptSet) -> RepPool {
    let mut pool = RepPool::new();
    for r in &sample.records {
        if !concepts.is_na(r.concept) {
            pool.push(r.concept, r.rep.clone());
        }
    }
    pool
}

/// Head distribution under `do(C = target)` at `h`.
pub fn do_intervene(lm: &dyn LanguageModel, h: &Rep, p: &Projector, target: ConceptId, pool: &RepPool) -> Result<Vec<f64>> {
    let donors = pool.get(target);
    if donors.is_empty() {
        return Err(Error::domain(format!("representation pool for concept {target} is empty")));
    }
    let perp = p.perp(h)?;
    let mut acc = vec![0.0; lm.vocab().len()];
    for g in donors {
        let dist = lm.head_dist(&perp.add(&p.par(g)?))?;
        acc.iter_mut().zip(&dist).for_each(|(a, d)| *a += d);
    }
    let n = donors.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

/// `Σ_{h∥} p̃(h∥) p(w | P h + h∥)`: the word distribution with the concept part
/// drawn from its marginal.
pub fn counterfactual_conditional(lm: &dyn LanguageModel, h: &Rep, p: &Projector, par_marginal: &[(Rep, f64)]) -> Result<Vec<f64>> {
    let total: f64 = par_marginal.iter().map(|(_, m)| m).sum();
    if !(total > 0.0) {
        return Err(Error::domain("concept-part marginal has no mass"));
    }
    let perp = p.perp(h)?;
    let mut acc = vec![0.0; lm.vocab().len()];
    for (g, m) in par_marginal {
        if *m <= 0.0 {
            continue;
        }
        let dist = lm.head_dist(&perp.add(g))?;
        acc.iter_mut().zip(&dist).for_each(|(a, d)| *a += m / total * d);
    }
    Ok(acc)
}

/// A context with a correct continuation and a minimally different foil.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcedChoiceItem {
    pub context: ContextString,
    pub fact: WordId,
    pub foil: WordId,
    pub fact_concept: ConceptId,
    pub foil_concept: ConceptId,
}

/// Produces the representation a forced-choice item is scored at.
pub trait ItemEncoder {
    fn item_rep(&self, item: &ForcedChoiceItem) -> Result<Rep>;
}

impl ItemEncoder for ToyLm {
    fn item_rep(&self, item: &ForcedChoiceItem) -> Result<Rep> {
        self.encode(&item.context)
    }
}

impl ItemEncoder for CausalToyLm {
    /// The representation with the latent concept set to the fact's concept.
    fn item_rep(&self, item: &ForcedChoiceItem) -> Result<Rep> {
        self.rep(&item.context, item.fact_concept)
    }
}

/// Success counts for one (fact concept → foil concept) direction.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DirectionStats {
    pub n_items: usize,
    pub orig_score: f64,
    pub erased_score: f64,
    pub do_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcedChoiceResult {
    pub n_items: usize,
    /// Fraction of items where the fact beats the foil.
    pub orig_acc: f64,
    /// Same, at `P h`.
    pub erased_acc: f64,
    /// Fraction of items where the foil beats the fact under `do(C = foil concept)`.
    pub do_acc: f64,
    pub by_direction: BTreeMap<String, DirectionStats>,
}

/// 1 if `a > b`, 1/2 on an exact tie, 0 otherwise.
fn score(a: f64, b: f64) -> f64 {
    if a > b {
        1.0
    } else if a == b {
        0.5
    } else {
        0.0
    }
}

/// Scores forced-choice items before erasure, after erasure, and under `do`.
pub fn forced_choice_eval<L: LanguageModel + ItemEncoder>(
    lm: &L,
    annotator: &ConceptAnnotator,
    p: &Projector,
    items: &[ForcedChoiceItem],
    pool: &RepPool,
) -> Result<ForcedChoiceResult> {
    if items.is_empty() {
        return Err(Error::domain("no forced-choice items"));
    }
    let concepts = annotator.concepts();
    let mut by_direction: BTreeMap<String, DirectionStats> = BTreeMap::new();
    let (mut orig, mut erased, mut done) = (0.0, 0.0, 0.0);
    for item in items {
        if annotator.concept_of(item.fact)? != item.fact_concept || annotator.concept_of(item.foil)? != item.foil_concept {
            return Err(Error::domain("item concepts disagree with the annotator"));
        }
        if item.fact_concept == item.foil_concept || concepts.is_na(item.fact_concept) || concepts.is_na(item.foil_concept) {
            return Err(Error::domain("fact and foil need distinct substantive concepts"));
        }
        let h = lm.item_rep(item)?;
        let po = lm.next_dist(&h, item.context.len())?;
        let pe = lm.head_dist(&p.perp(&h)?)?;
        let pd = do_intervene(lm, &h, p, item.foil_concept, pool)?;
        let so = score(po[item.fact], po[item.foil]);
        let se = score(pe[item.fact], pe[item.foil]);
        let sd = score(pd[item.foil], pd[item.fact]);
        orig += so;
        erased += se;
        done += sd;
        let key = format!(
            "{}->{}",
            concepts.name(item.fact_concept).unwrap_or("?"),
            concepts.name(item.foil_concept).unwrap_or("?")
        );
        let d = by_direction.entry(key).or_default();
        d.n_items += 1;
        d.orig_score += so;
        d.erased_score += se;
        d.do_score += sd;
    }
    let n = items.len() as f64;
    Ok(ForcedChoiceResult {
        n_items: items.len(),
        orig_acc: orig / n,
        erased_acc: erased / n,
        do_acc: done / n,
        by_direction,
    })
}

/// Forced-choice items for a causal toy: for every reachable context and concept,
/// the most likely word of that concept against the same lemma with the next
/// concept value.
pub fn causal_items(lm: &CausalToyLm) -> Result<Vec<ForcedChoiceItem>> {
    let subs: Vec<ConceptId> = lm.concepts().substantive().collect();
    if subs.len() < 2 {
        return Err(Error::domain("forced choice needs at least two concept values"));
    }
    let mut items = Vec::new();
    for (ctx, _) in lm.context_weights(DEFAULT_ENUMERATION_BUDGET)? {
        for (k, &c) in subs.iter().enumerate() {
            let foil_c = subs[(k + 1) % subs.len()];
            let dist = lm.head_dist(&lm.rep(&ctx, c)?)?;
            let fact = lm
                .annotator()
                .words_with(c)
                .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
                .ok_or_else(|| Error::domain("concept has no words"))?;
            let lemma = lm.lemma_of(fact).expect("grid word");
            let foil = lm.word_for(lemma, foil_c).expect("grid word");
            items.push(ForcedChoiceItem {
                context: ctx.clone(),
                fact,
                foil,
                fact_concept: c,
                foil_concept: foil_c,
            });
        }
    }
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{build_causal_toy, build_counterexample, sample_corpus, CausalToyConfig, SamplerConfig};

    #[test]
    fn counterexample_forced_choice() {
        let ce = build_counterexample().unwrap();
        let sample = sample_corpus(&ce.lm, &ce.annotator, 2000, SamplerConfig::default(), 1).unwrap();
        let pool = build_rep_pool(&sample, ce.annotator.concepts());
        let r = forced_choice_eval(&ce.lm, &ce.annotator, &ce.ground_truth, &ce.items, &pool).unwrap();
        assert_eq!(r.orig_acc, 1.0);
        assert_eq!(r.do_acc, 1.0);
        assert_eq!(r.erased_acc, 0.5);
        assert_eq!(r.by_direction.len(), 2);
    }

    #[test]
    fn identity_projector_intervention_is_a_no_op_on_perp() {
        // With P = I the concept part is zero, so do() cannot change anything.
        let ce = build_counterexample().unwrap();
        let mut pool = RepPool::new();
        pool.push(2, Rep::new(vec![-1.0, 1.0]).unwrap());
        let h = Rep::new(vec![1.0, -1.0]).unwrap();
        let d = do_intervene(&ce.lm, &h, &Projector::identity(2), 2, &pool).unwrap();
        assert_eq!(d, ce.lm.head_dist(&h).unwrap());
    }

    #[test]
    fn empty_pool_is_domain_error() {
        let ce = build_counterexample().unwrap();
        let r = do_intervene(&ce.lm, &Rep::zeros(2), &ce.ground_truth, 1, &RepPool::new());
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn causal_toy_interventions_flip_concept() {
        let lm = build_causal_toy(&CausalToyConfig {
            n_concepts: 3,
            dim: 5,
            ..Default::default()
        })
        .unwrap();
        let items = causal_items(&lm).unwrap();
        let sample = sample_corpus(&lm, lm.annotator(), 500, SamplerConfig::default(), 2).unwrap();
        let pool = build_rep_pool(&sample, lm.concepts());
        let r = forced_choice_eval(&lm, lm.annotator(), lm.ground_truth(), &items, &pool).unwrap();
        assert_eq!(r.orig_acc, 1.0);
        assert_eq!(r.do_acc, 1.0);
    }

    #[test]
    fn conditional_over_point_mass_equals_head() {
        let ce = build_counterexample().unwrap();
        let h = Rep::new(vec![1.0, -1.0]).unwrap();
        let par = vec![(ce.ground_truth.par(&h).unwrap(), 1.0)];
        let d = counterfactual_conditional(&ce.lm, &h, &ce.ground_truth, &par).unwrap();
        let e = ce.lm.head_dist(&h).unwrap();
        assert!(d.iter().zip(&e).all(|(a, b)| (a - b).abs() < 1e-15));
    }
}
