// SPDX-License-Identifier: MIT OR Apache-2.0

//! The interventional joint `p(w | h⊥ + h∥) p(h⊥) p(h∥ | c) p(c)` and its four
//! information quantities.
//!
//! When `h∥` is a deterministic function of `c` all four vanish: the non-concept
//! part carries no concept information, the concept part carries all of it, and
//! given `c` the word depends on the representation only through `h⊥`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::concept::{ConceptAnnotator, ConceptId, Rep};
use crate::distribution::{conditional_mi, mutual_information, JointDist, RepRegistry};
use crate::error::{Error, Result};
use crate::geometry::Projector;
use crate::lm::{CausalToyLm, LanguageModel, LmHead, DEFAULT_ENUMERATION_BUDGET};

/// Absolute tolerance in bits for the four quantities.
pub const THEOREM1_TOL: f64 = 1e-9;
const NORMALIZATION_TOL: f64 = 1e-12;
const RANGE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoFactorization {
    head: LmHead,
    annotator: ConceptAnnotator,
    perp: Vec<(Rep, f64)>,
    par: BTreeMap<ConceptId, Vec<(Rep, f64)>>,
    prior: BTreeMap<ConceptId, f64>,
}

fn check_normalized(what: &str, masses: impl IntoIterator<Item = f64>) -> Result<()> {
    let mut z = 0.0;
    for m in masses {
        if !(m >= 0.0 && m.is_finite()) {
            return Err(Error::domain(format!("{what} has a negative or non-finite mass")));
        }
        z += m;
    }
    if (z - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::domain(format!("{what} sums to {z}, not 1")));
    }
    Ok(())
}

impl DoFactorization {
    pub fn new(
        head: LmHead,
        annotator: ConceptAnnotator,
        perp: Vec<(Rep, f64)>,
        par: BTreeMap<ConceptId, Vec<(Rep, f64)>>,
        prior: BTreeMap<ConceptId, f64>,
    ) -> Result<Self> {
        let f = Self {
            head,
            annotator,
            perp,
            par,
            prior,
        };
        f.validate()?;
        Ok(f)
    }

    /// Checks normalization, dimensions, and that the prior avoids n/a.
    pub fn validate(&self) -> Result<()> {
        if self.annotator.vocab_len() != self.head.vocab().len() {
            return Err(Error::DimensionMismatch {
                what: "annotator vs vocabulary",
                expected: self.head.vocab().len(),
                got: self.annotator.vocab_len(),
            });
        }
        check_normalized("p(h⊥)", self.perp.iter().map(|(_, m)| *m))?;
        check_normalized("p(c)", self.prior.values().copied())?;
        for (&c, &pc) in &self.prior {
            if pc > 0.0 && self.annotator.concepts().is_na(c) {
                return Err(Error::domain("the concept prior puts mass on n/a"));
            }
            if c >= self.annotator.concepts().len() {
                return Err(Error::domain(format!("concept id {c} out of range")));
            }
            let cond = self
                .par
                .get(&c)
                .ok_or_else(|| Error::domain(format!("no p(h∥ | c) for concept {c}")))?;
            check_normalized("p(h∥ | c)", cond.iter().map(|(_, m)| *m))?;
        }
        let d = self.head.dim();
        for (h, _) in self.perp.iter().chain(self.par.values().flatten()) {
            h.check_dim(d, "pool representation")?;
        }
        Ok(())
    }

    /// Builds the factorization a causal toy model induces under `p`.
    ///
    /// `p(h⊥)` and `p(h∥ | c)` are the distributions of `P h` and `(I - P) h` over
    /// contexts weighted as in the induced distribution and over latent concepts.
    pub fn from_causal_toy(lm: &CausalToyLm, p: &Projector) -> Result<Self> {
        if p.dim() != lm.dim() {
            return Err(Error::DimensionMismatch {
                what: "projector vs model",
                expected: lm.dim(),
                got: p.dim(),
            });
        }
        let mut perp_reg = RepRegistry::default();
        let mut perp_mass: Vec<f64> = Vec::new();
        let mut par_regs: BTreeMap<ConceptId, (RepRegistry, Vec<f64>)> = BTreeMap::new();
        let mut prior: BTreeMap<ConceptId, f64> = BTreeMap::new();
        for (ctx, w) in lm.context_weights(DEFAULT_ENUMERATION_BUDGET)? {
            let slot = lm.slot(&ctx);
            for (c, &g) in lm.prior(slot).iter().enumerate() {
                if g <= 0.0 {
                    continue;
                }
                let m = w * g;
                let (hperp, hpar) = p.split(&lm.rep(&ctx, c)?)?;
                let id = perp_reg.intern(&hperp);
                if id == perp_mass.len() {
                    perp_mass.push(0.0);
                }
                perp_mass[id] += m;
                let (reg, masses) = par_regs.entry(c).or_insert_with(|| (RepRegistry::default(), Vec::new()));
                let id = reg.intern(&hpar);
                if id == masses.len() {
                    masses.push(0.0);
                }
                masses[id] += m;
                *prior.entry(c).or_insert(0.0) += m;
            }
        }
        let perp = perp_reg.reps().iter().cloned().zip(perp_mass).collect();
        let par = par_regs
            .into_iter()
            .map(|(c, (reg, masses))| {
                let z = prior[&c];
                (c, reg.reps().iter().cloned().zip(masses.into_iter().map(|m| m / z)).collect())
            })
            .collect();
        Self::new(lm.head().clone(), lm.annotator().clone(), perp, par, prior)
    }

    pub fn head(&self) -> &LmHead {
        &self.head
    }

    pub fn perp(&self) -> &[(Rep, f64)] {
        &self.perp
    }

    pub fn par(&self, c: ConceptId) -> &[(Rep, f64)] {
        self.par.get(&c).map_or(&[], Vec::as_slice)
    }

    pub fn prior(&self) -> &BTreeMap<ConceptId, f64> {
        &self.prior
    }

    /// The same factorization with concept ids renamed by `map`.
    pub fn relabeled(&self, map: &BTreeMap<ConceptId, ConceptId>) -> Result<Self> {
        let rename = |c: ConceptId| map.get(&c).copied().unwrap_or(c);
        Self::new(
            self.head.clone(),
            self.annotator.clone(),
            self.perp.clone(),
            self.par.iter().map(|(&c, v)| (rename(c), v.clone())).collect(),
            self.prior.iter().map(|(&c, &m)| (rename(c), m)).collect(),
        )
    }
}

/// The four quantities that vanish for a correct concept subspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Report {
    /// `MI(C; H⊥)`.
    pub erasure: f64,
    /// `MI(C; H) - MI(C; H∥)`.
    pub encapsulation_gap: f64,
    /// `MI(X; H∥ | C)`.
    pub containment: f64,
    /// `MI(X; H | C) - MI(X; H⊥ | C)`.
    pub stability_gap: f64,
    pub max_abs: f64,
    pub tolerance: f64,
    pub holds: bool,
    /// Whether `p(h∥ | c)` is a point mass for every `c`.
    pub par_deterministic: bool,
}

/// Evaluates the four quantities on the interventional joint.
///
/// Every `h⊥` must lie in the range of `p` and every `h∥` in its complement.
pub fn theorem1_check(fact: &DoFactorization, p: &Projector, annotator: &ConceptAnnotator) -> Result<Theorem1Report> {
    fact.validate()?;
    if p.dim() != fact.head.dim() {
        return Err(Error::DimensionMismatch {
            what: "projector vs factorization",
            expected: fact.head.dim(),
            got: p.dim(),
        });
    }
    if annotator.vocab_len() != fact.head.vocab().len() {
        return Err(Error::DimensionMismatch {
            what: "annotator vs vocabulary",
            expected: fact.head.vocab().len(),
            got: annotator.vocab_len(),
        });
    }
    let off = |v: &Rep| v.norm_sq().sqrt();
    for (h, _) in &fact.perp {
        if off(&p.par(h)?) > RANGE_TOL * off(h).max(1.0) {
            return Err(Error::domain("an h⊥ is not in the range of the projector"));
        }
    }
    for (h, _) in fact.par.values().flatten() {
        if off(&p.perp(h)?) > RANGE_TOL * off(h).max(1.0) {
            return Err(Error::domain("an h∥ is not in the null space of the projector"));
        }
    }

    let n_perp = fact.perp.len();
    let mut par_reg = RepRegistry::default();
    let mut c_perp = JointDist::new(["concept", "perp"]);
    let mut c_par = JointDist::new(["concept", "par"]);
    let mut c_full = JointDist::new(["concept", "rep"]);
    let mut x_par = JointDist::new(["word", "par", "concept"]);
    let mut x_perp = JointDist::new(["word", "perp", "concept"]);
    let mut x_full = JointDist::new(["word", "rep", "concept"]);
    let mut par_deterministic = true;
    for (&c, &pc) in &fact.prior {
        if pc <= 0.0 {
            continue;
        }
        let cond = fact.par(c);
        par_deterministic &= cond.iter().filter(|(_, m)| *m > 0.0).count() <= 1;
        for (hpar, q) in cond {
            let i = par_reg.intern(hpar);
            for (j, (hperp, r)) in fact.perp.iter().enumerate() {
                let m = pc * q * r;
                if m <= 0.0 {
                    continue;
                }
                let full = i * n_perp + j;
                let dist = fact.head.dist(&hperp.add(hpar))?;
                for (w, &pw) in dist.iter().enumerate() {
                    let mw = m * pw;
                    if mw <= 0.0 {
                        continue;
                    }
                    c_perp.add([c, j], mw);
                    c_par.add([c, i], mw);
                    c_full.add([c, full], mw);
                    x_par.add([w, i, c], mw);
                    x_perp.add([w, j, c], mw);
                    x_full.add([w, full, c], mw);
                }
            }
        }
    }
    let erasure = mutual_information(&c_perp);
    let encapsulation_gap = mutual_information(&c_full) - mutual_information(&c_par);
    let containment = conditional_mi(&x_par);
    let stability_gap = conditional_mi(&x_full) - conditional_mi(&x_perp);
    let max_abs = [erasure, encapsulation_gap, containment, stability_gap]
        .iter()
        .fold(0.0f64, |a, v| a.max(v.abs()));
    Ok(Theorem1Report {
        erasure,
        encapsulation_gap,
        containment,
        stability_gap,
        max_abs,
        tolerance: THEOREM1_TOL,
        holds: max_abs <= THEOREM1_TOL,
        par_deterministic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{build_causal_toy, CausalToyConfig, PriorKind};

    fn toy(seed: u64) -> CausalToyLm {
        build_causal_toy(&CausalToyConfig {
            dim: 4,
            n_concepts: 3,
            prior: PriorKind::Random,
            seed,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn oracle_projector_zeroes_all_four() {
        let lm = toy(3);
        let f = DoFactorization::from_causal_toy(&lm, lm.ground_truth()).unwrap();
        let r = theorem1_check(&f, lm.ground_truth(), lm.annotator()).unwrap();
        assert!(r.par_deterministic);
        assert!(r.holds, "{r:?}");
    }

    #[test]
    fn relabeling_concepts_preserves_the_result() {
        let lm = toy(4);
        let f = DoFactorization::from_causal_toy(&lm, lm.ground_truth()).unwrap();
        let swapped = f.relabeled(&BTreeMap::from([(1, 3), (3, 1)])).unwrap();
        let a = theorem1_check(&f, lm.ground_truth(), lm.annotator()).unwrap();
        let b = theorem1_check(&swapped, lm.ground_truth(), lm.annotator()).unwrap();
        assert!((a.max_abs - b.max_abs).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_pool_is_rejected() {
        let lm = toy(5);
        let f = DoFactorization::from_causal_toy(&lm, lm.ground_truth()).unwrap();
        let r = theorem1_check(&f, &Projector::zero(4), lm.annotator());
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn unnormalized_prior_is_rejected() {
        let lm = toy(6);
        let f = DoFactorization::from_causal_toy(&lm, lm.ground_truth()).unwrap();
        let mut prior = f.prior().clone();
        *prior.get_mut(&1).unwrap() += 0.1;
        let r = DoFactorization::new(
            f.head().clone(),
            lm.annotator().clone(),
            f.perp().to_vec(),
            f.par.clone(),
            prior,
        );
        assert!(matches!(r, Err(Error::Domain(_))));
    }
}
