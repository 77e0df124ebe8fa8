// SPDX-License-Identifier: MIT OR Apache-2.0

//! Files exchanged between pipeline stages: binary record files, JSON model and
//! projector documents, and run reports.

mod records;
mod report;

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub use records::{read_records, write_record_file, write_records, RepRecord, RepRecordFile, FORMAT_VERSION, HEADER_LEN, MAGIC};
pub use report::{
    check_units, correlational_section, decomposition_section, fit_section, forced_choice_section, metrics_section,
    table_mode_value, tagged, theorem1_section, RunReport, Unit, SCHEMA_VERSION,
};

use crate::causal::ForcedChoiceItem;
use crate::concept::ConceptAnnotator;
use crate::error::{Error, Result};
use crate::geometry::{FitMode, FitStats, FittedEraser, Projector};
use crate::lm::AnyLm;

/// A model with its annotation, optional ground truth, and forced-choice items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmDocument {
    pub schema_version: u32,
    pub lm: AnyLm,
    pub annotator: ConceptAnnotator,
    pub ground_truth: Option<Projector>,
    pub items: Vec<ForcedChoiceItem>,
}

impl LmDocument {
    pub fn validate(&self) -> Result<()> {
        let lm = self.lm.as_dyn();
        if self.annotator.vocab_len() != lm.vocab().len() {
            return Err(Error::DimensionMismatch {
                what: "annotator vs vocabulary",
                expected: lm.vocab().len(),
                got: self.annotator.vocab_len(),
            });
        }
        if let Some(p) = &self.ground_truth {
            p.validate()?;
            if p.dim() != lm.dim() {
                return Err(Error::DimensionMismatch {
                    what: "ground truth vs model",
                    expected: lm.dim(),
                    got: p.dim(),
                });
            }
        }
        Ok(())
    }
}

/// Row-major affine eraser `h ↦ M h + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObliqueDocument {
    pub dim: usize,
    pub rank_removed: usize,
    pub matrix: Vec<f64>,
    pub bias: Vec<f64>,
}

/// A stored projector with the way it was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectorDocument {
    pub schema_version: u32,
    /// `oracle`, `orthogonal_guarded`, or `leace_oblique`.
    pub mode: String,
    pub projector: Option<Projector>,
    pub oblique: Option<ObliqueDocument>,
    pub fit: Option<FitStats>,
}

impl ProjectorDocument {
    pub fn oracle(p: Projector) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            mode: "oracle".into(),
            projector: Some(p),
            oblique: None,
            fit: None,
        }
    }

    pub fn fitted(eraser: &FittedEraser, stats: FitStats) -> Self {
        let (projector, oblique) = match eraser {
            FittedEraser::Orthogonal(p) => (Some(p.clone()), None),
            FittedEraser::Oblique(e) => {
                let d = e.matrix.nrows();
                let matrix = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| e.matrix[(i, j)]).collect();
                (
                    None,
                    Some(ObliqueDocument {
                        dim: d,
                        rank_removed: e.rank_removed,
                        matrix,
                        bias: e.bias.iter().copied().collect(),
                    }),
                )
            }
        };
        let mode = match stats.mode {
            FitMode::OrthogonalGuarded => "orthogonal_guarded",
            FitMode::LeaceOblique => "leace_oblique",
        };
        Self {
            schema_version: SCHEMA_VERSION,
            mode: mode.into(),
            projector,
            oblique,
            fit: Some(stats),
        }
    }

    /// The orthogonal projector, or a domain error for oblique erasers.
    pub fn require_projector(&self) -> Result<&Projector> {
        self.projector
            .as_ref()
            .ok_or_else(|| Error::domain("this document holds an oblique eraser, which cannot split representations"))
    }
}

fn check_schema(version: u32, path: &Path) -> Result<()> {
    if version != SCHEMA_VERSION {
        return Err(Error::domain(format!(
            "{}: unsupported schema version {version}",
            path.display()
        )));
    }
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&s)?)
}

pub fn read_lm_document(path: &Path) -> Result<LmDocument> {
    let doc: LmDocument = read_json(path)?;
    check_schema(doc.schema_version, path)?;
    doc.validate()?;
    Ok(doc)
}

pub fn read_projector_document(path: &Path) -> Result<ProjectorDocument> {
    let doc: ProjectorDocument = read_json(path)?;
    check_schema(doc.schema_version, path)?;
    if let Some(p) = &doc.projector {
        p.validate()?;
    }
    Ok(doc)
}
