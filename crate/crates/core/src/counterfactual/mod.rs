// SPDX-License-Identifier: MIT OR Apache-2.0

//! The counterfactual distribution and the information ratios built on it.
//!
//! Given the induced table `p̃` and a projector `P`, the counterfactual table pairs
//! every concept part `h∥` with every non-concept part `h⊥` independently:
//!
//! `q̃(w, c, h∥, h⊥) = ι(c | w) · p(w | h∥ + h⊥) · p̃(h∥) · p̃(h⊥)`
//!
//! Because the annotator ignores context, the sum over contexts collapses and only
//! the two marginals are needed.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::concept::{ConceptAnnotator, ConceptId, ConceptSet, Rep, WordId};
use crate::distribution::{conditional_mi, mutual_information, JointDist, RepId, RepRegistry, Side, TableMode, UnigramTable};
use crate::error::{Error, Result};
use crate::geometry::Projector;
use crate::lm::LanguageModel;

/// Recombined pairs whose marginal product is below this are dropped.
pub const PAIR_CUTOFF: f64 = 1e-15;
/// Default bound on the number of recombined pairs.
pub const DEFAULT_MAX_PAIRS: usize = 4_000_000;
/// Information denominators at or below this many bits make a ratio undefined.
pub const ZERO_DENOMINATOR: f64 = 1e-12;

/// Which representation the concept or word is paired with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepView {
    /// The recombined `h∥ + h⊥`.
    Full,
    Par,
    Perp,
}

#[derive(Debug, Clone)]
pub struct CounterfactualTable {
    concepts: ConceptSet,
    n_words: usize,
    par: RepRegistry,
    perp: RepRegistry,
    par_probs: Vec<f64>,
    perp_probs: Vec<f64>,
    cells: BTreeMap<(WordId, ConceptId, RepId, RepId), f64>,
    n_pairs: usize,
    dropped_pair_mass: f64,
    na_mass_dropped: Option<f64>,
}

fn marginal_of(table: &UnigramTable, p: &Projector, side: Side) -> Result<(RepRegistry, Vec<f64>)> {
    let t = table.project(p, side)?;
    Ok((t.registry().clone(), t.rep_marginal()))
}

/// Builds `q̃` from `table`, the model head, the annotator, and `P`.
pub fn build_counterfactual(
    table: &UnigramTable,
    lm: &dyn LanguageModel,
    annotator: &ConceptAnnotator,
    p: &Projector,
) -> Result<CounterfactualTable> {
    build_counterfactual_bounded(table, lm, annotator, p, DEFAULT_MAX_PAIRS)
}

pub fn build_counterfactual_bounded(
    table: &UnigramTable,
    lm: &dyn LanguageModel,
    annotator: &ConceptAnnotator,
    p: &Projector,
    max_pairs: usize,
) -> Result<CounterfactualTable> {
    if p.dim() != lm.dim() {
        return Err(Error::DimensionMismatch {
            what: "projector vs model",
            expected: lm.dim(),
            got: p.dim(),
        });
    }
    if annotator.vocab_len() != lm.vocab().len() || table.n_words() != lm.vocab().len() {
        return Err(Error::DimensionMismatch {
            what: "vocabulary sizes of table, annotator, and model",
            expected: lm.vocab().len(),
            got: annotator.vocab_len(),
        });
    }
    let (par, par_probs) = marginal_of(table, p, Side::Par)?;
    let (perp, perp_probs) = marginal_of(table, p, Side::Perp)?;
    if par.len().saturating_mul(perp.len()) > max_pairs {
        return Err(Error::Resource {
            what: "recombined representation pairs",
            bound: max_pairs,
        });
    }
    let concept_of: Vec<ConceptId> = (0..lm.vocab().len())
        .map(|w| annotator.concept_of(w))
        .collect::<Result<_>>()?;

    let mut cells = BTreeMap::new();
    let mut dropped = 0.0;
    let mut n_pairs = 0;
    for (i, &a) in par_probs.iter().enumerate() {
        for (j, &b) in perp_probs.iter().enumerate() {
            let prod = a * b;
            if prod < PAIR_CUTOFF {
                dropped += prod;
                continue;
            }
            n_pairs += 1;
            let h = par.get(i).add(perp.get(j));
            let dist = lm.head_dist(&h)?;
            for (w, &pw) in dist.iter().enumerate() {
                if pw > 0.0 {
                    *cells.entry((w, concept_of[w], i, j)).or_insert(0.0) += prod * pw;
                }
            }
        }
    }
    let z: f64 = cells.values().sum();
    if !(z > 0.0) {
        return Err(Error::domain("counterfactual distribution has no mass"));
    }
    cells.values_mut().for_each(|v| *v /= z);
    Ok(CounterfactualTable {
        concepts: table.concepts().clone(),
        n_words: table.n_words(),
        par,
        perp,
        par_probs,
        perp_probs,
        cells,
        n_pairs,
        dropped_pair_mass: dropped,
        na_mass_dropped: None,
    })
}

impl CounterfactualTable {
    pub fn concepts(&self) -> &ConceptSet {
        &self.concepts
    }

    pub fn n_words(&self) -> usize {
        self.n_words
    }

    pub fn par_registry(&self) -> &RepRegistry {
        &self.par
    }

    pub fn perp_registry(&self) -> &RepRegistry {
        &self.perp
    }

    /// `p̃(h∥)` indexed by par id.
    pub fn par_marginal(&self) -> &[f64] {
        &self.par_probs
    }

    /// `p̃(h⊥)` indexed by perp id.
    pub fn perp_marginal(&self) -> &[f64] {
        &self.perp_probs
    }

    /// Number of recombined (h∥, h⊥) pairs kept.
    pub fn n_pairs(&self) -> usize {
        self.n_pairs
    }

    /// Marginal product mass of the pairs dropped below [`PAIR_CUTOFF`].
    pub fn dropped_pair_mass(&self) -> f64 {
        self.dropped_pair_mass
    }

    pub fn na_mass_dropped(&self) -> Option<f64> {
        self.na_mass_dropped
    }

    pub fn cells(&self) -> impl Iterator<Item = ((WordId, ConceptId, RepId, RepId), f64)> + '_ {
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

    /// The recombined representation `h∥ + h⊥`.
    pub fn rep(&self, par: RepId, perp: RepId) -> Rep {
        self.par.get(par).add(self.perp.get(perp))
    }

    fn view_index(&self, view: RepView, i: RepId, j: RepId) -> usize {
        match view {
            RepView::Full => i * self.perp.len() + j,
            RepView::Par => i,
            RepView::Perp => j,
        }
    }

    /// Joint over (concept, view).
    pub fn concept_joint(&self, view: RepView) -> JointDist<2> {
        let mut out = JointDist::new(["concept", "rep"]);
        for (&(_, c, i, j), &p) in &self.cells {
            out.add([c, self.view_index(view, i, j)], p);
        }
        out
    }

    /// Joint over (word, view, concept).
    pub fn word_joint(&self, view: RepView) -> JointDist<3> {
        let mut out = JointDist::new(["word", "rep", "concept"]);
        for (&(w, c, i, j), &p) in &self.cells {
            out.add([w, self.view_index(view, i, j), c], p);
        }
        out
    }

    /// Joint over (h∥, h⊥).
    pub fn par_perp_joint(&self) -> JointDist<2> {
        let mut out = JointDist::new(["par", "perp"]);
        for (&(_, _, i, j), &p) in &self.cells {
            out.add([i, j], p);
        }
        out
    }

    /// Conditions on `c ≠ n/a` and renormalizes.
    pub fn condition_non_na(&self) -> Result<Self> {
        let na = self.concepts.na();
        let total = self.total();
        let mut out = self.clone();
        out.cells.retain(|k, _| k.1 != na);
        let z: f64 = out.cells.values().sum();
        if !(z > 0.0) {
            return Err(Error::domain("no counterfactual mass on substantive concept values"));
        }
        out.cells.values_mut().for_each(|v| *v /= z);
        out.na_mass_dropped = Some(1.0 - z / total);
        Ok(out)
    }
}

/// `MI_q(C; view)` in bits.
pub fn mi_q(q: &CounterfactualTable, view: RepView) -> f64 {
    mutual_information(&q.concept_joint(view))
}

/// `MI_q(X; view | C)` in bits.
pub fn mi_q_conditional(q: &CounterfactualTable, view: RepView) -> f64 {
    conditional_mi(&q.word_joint(view))
}

/// Every information quantity the ratios are built from, in bits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InformationTerms {
    pub mi_c_h: f64,
    pub mi_c_hperp: f64,
    pub mi_x_h_given_c: f64,
    pub mi_q_c_h: f64,
    pub mi_q_c_hperp: f64,
    pub mi_q_c_hpar: f64,
    pub mi_q_x_h_given_c: f64,
    pub mi_q_x_hpar_given_c: f64,
    pub mi_q_x_hperp_given_c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioKind {
    Erasure,
    CorrelationalErasure,
    Encapsulation,
    Reconstructed,
    Containment,
    Stability,
}

impl RatioKind {
    pub const ALL: [RatioKind; 6] = [
        Self::Erasure,
        Self::CorrelationalErasure,
        Self::Encapsulation,
        Self::Reconstructed,
        Self::Containment,
        Self::Stability,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Erasure => "erasure",
            Self::CorrelationalErasure => "correlational_erasure",
            Self::Encapsulation => "encapsulation",
            Self::Reconstructed => "reconstructed",
            Self::Containment => "containment",
            Self::Stability => "stability",
        }
    }

    pub fn denominator(self) -> &'static str {
        match self {
            Self::Containment | Self::Stability => "MI(X;H|C)",
            _ => "MI(C;H)",
        }
    }
}

/// The six ratios. `None` when the denominator is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ratios {
    pub erasure: Option<f64>,
    pub correlational_erasure: Option<f64>,
    pub encapsulation: Option<f64>,
    pub reconstructed: Option<f64>,
    pub containment: Option<f64>,
    pub stability: Option<f64>,
}

impl Ratios {
    pub fn from_terms(t: &InformationTerms) -> Self {
        let over = |num: f64, den: f64| (den > ZERO_DENOMINATOR).then(|| num / den);
        Self {
            erasure: over(t.mi_c_h - t.mi_q_c_hperp, t.mi_c_h),
            correlational_erasure: over(t.mi_c_h - t.mi_c_hperp, t.mi_c_h),
            encapsulation: over(t.mi_q_c_hpar, t.mi_c_h),
            reconstructed: over(t.mi_q_c_hpar + t.mi_q_c_hperp, t.mi_c_h),
            containment: over(t.mi_x_h_given_c - t.mi_q_x_hpar_given_c, t.mi_x_h_given_c),
            stability: over(t.mi_q_x_hperp_given_c, t.mi_x_h_given_c),
        }
    }

    pub fn value(&self, kind: RatioKind) -> Option<f64> {
        match kind {
            RatioKind::Erasure => self.erasure,
            RatioKind::CorrelationalErasure => self.correlational_erasure,
            RatioKind::Encapsulation => self.encapsulation,
            RatioKind::Reconstructed => self.reconstructed,
            RatioKind::Containment => self.containment,
            RatioKind::Stability => self.stability,
        }
    }

    /// The ratio, or [`Error::ZeroDenominator`] if it is undefined.
    pub fn get(&self, kind: RatioKind) -> Result<f64> {
        self.value(kind).ok_or(Error::ZeroDenominator {
            ratio: kind.name(),
            denominator: kind.denominator(),
        })
    }
}

/// Whether each ε-criterion holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonFlags {
    pub epsilon: f64,
    /// `MI_q(C; H⊥) < ε`.
    pub eraser: bool,
    /// `MI_q(C; H) - MI_q(C; H∥) < ε`.
    pub encapsulator: bool,
    /// `MI_q(X; H∥ | C) < ε`.
    pub contained: bool,
    /// `MI_q(X; H | C) - MI_q(X; H⊥ | C) < ε`.
    pub stabilizer: bool,
}

impl EpsilonFlags {
    pub fn from_terms(t: &InformationTerms, epsilon: f64) -> Self {
        Self {
            epsilon,
            eraser: t.mi_q_c_hperp < epsilon,
            encapsulator: t.mi_q_c_h - t.mi_q_c_hpar < epsilon,
            contained: t.mi_q_x_hpar_given_c < epsilon,
            stabilizer: t.mi_q_x_h_given_c - t.mi_q_x_hperp_given_c < epsilon,
        }
    }
}

/// Where the numbers came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSummary {
    pub mode: TableMode,
    pub p_cells: usize,
    pub distinct_reps: usize,
    pub distinct_par: usize,
    pub distinct_perp: usize,
    pub recombined_pairs: usize,
    pub q_cells: usize,
    pub excluded_mass: f64,
    pub dropped_pair_mass: f64,
    pub p_na_mass_dropped: Option<f64>,
    pub q_na_mass_dropped: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub terms: InformationTerms,
    pub ratios: Ratios,
    pub flags: EpsilonFlags,
    pub decomposition: Decomposition,
    pub tables: TableSummary,
}

/// Computes every term, ratio, and flag from `p̃` and the `q̃` built from it.
pub fn compute_metrics(
    p_table: &UnigramTable,
    q_table: &CounterfactualTable,
    projector: &Projector,
    epsilon: f64,
) -> Result<MetricsReport> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::domain("epsilon must be finite and non-negative"));
    }
    let perp_table = p_table.project(projector, Side::Perp)?;
    let terms = InformationTerms {
        mi_c_h: p_table.mi_concept_rep(),
        mi_c_hperp: perp_table.mi_concept_rep(),
        mi_x_h_given_c: p_table.mi_word_rep_given_concept(),
        mi_q_c_h: mi_q(q_table, RepView::Full),
        mi_q_c_hperp: mi_q(q_table, RepView::Perp),
        mi_q_c_hpar: mi_q(q_table, RepView::Par),
        mi_q_x_h_given_c: mi_q_conditional(q_table, RepView::Full),
        mi_q_x_hpar_given_c: mi_q_conditional(q_table, RepView::Par),
        mi_q_x_hperp_given_c: mi_q_conditional(q_table, RepView::Perp),
    };
    Ok(MetricsReport {
        ratios: Ratios::from_terms(&terms),
        flags: EpsilonFlags::from_terms(&terms, epsilon),
        decomposition: Decomposition::from_values(terms.mi_q_c_h, terms.mi_q_c_hperp, terms.mi_q_c_hpar, DECOMPOSITION_TOL),
        tables: TableSummary {
            mode: p_table.mode().clone(),
            p_cells: p_table.len(),
            distinct_reps: p_table.registry().len(),
            distinct_par: q_table.par_registry().len(),
            distinct_perp: q_table.perp_registry().len(),
            recombined_pairs: q_table.n_pairs(),
            q_cells: q_table.len(),
            excluded_mass: p_table.excluded_mass(),
            dropped_pair_mass: q_table.dropped_pair_mass(),
            p_na_mass_dropped: p_table.na_mass_dropped(),
            q_na_mass_dropped: q_table.na_mass_dropped(),
        },
        terms,
    })
}

/// Default tolerance for the additive decomposition check, in bits.
pub const DECOMPOSITION_TOL: f64 = 1e-9;

/// `MI_q(C; H)` against `MI_q(C; H⊥) + MI_q(C; H∥)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub mi_q_c_h: f64,
    pub mi_q_c_hperp: f64,
    pub mi_q_c_hpar: f64,
    pub gap: f64,
    pub tolerance: f64,
    pub holds: bool,
}

impl Decomposition {
    fn from_values(full: f64, perp: f64, par: f64, tolerance: f64) -> Self {
        let gap = (full - perp - par).abs();
        Self {
            mi_q_c_h: full,
            mi_q_c_hperp: perp,
            mi_q_c_hpar: par,
            gap,
            tolerance,
            holds: gap <= tolerance,
        }
    }
}

/// Checks the additive decomposition of `MI_q(C; H)` on `q`.
pub fn check_decomposition(q: &CounterfactualTable, tolerance: f64) -> Decomposition {
    Decomposition::from_values(
        mi_q(q, RepView::Full),
        mi_q(q, RepView::Perp),
        mi_q(q, RepView::Par),
        tolerance,
    )
}
