// SPDX-License-Identifier: MIT OR Apache-2.0

//! Counterfactual information metrics and do-interventions for linear concept
//! subspaces of toy autoregressive language models.
//!
//! A representation `h` is split by an orthogonal projector `P` into a non-concept
//! part `h⊥ = P h` and a concept part `h∥ = (I - P) h`. The crate builds the
//! induced joint distribution over (word, concept, representation), the
//! counterfactual distribution that recombines the two parts independently, and
//! reports the information-theoretic ratios and do-intervention accuracies that
//! describe how well `P` isolates the concept.

pub mod causal;
pub mod concept;
pub mod counterfactual;
pub mod distribution;
pub mod error;
pub mod geometry;
pub mod io;
pub mod lm;

#[doc(hidden)]
pub mod cli;

pub use concept::{ConceptAnnotator, ConceptId, ConceptSet, ContextString, Rep, Vocab, WordId};
pub use error::{Error, Result};
pub use geometry::Projector;
