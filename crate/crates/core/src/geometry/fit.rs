// SPDX-License-Identifier: MIT OR Apache-2.0

//! Closed-form linear concept erasure from labeled representations.
//!
//! Both modes make the erased representations linearly guarded: their
//! cross-covariance with the one-hot labels vanishes on the training data.
//! The orthogonal mode removes the column space of the centered cross-covariance
//! `Σ_hz` with a symmetric projector. The oblique mode is the minimum-distortion
//! eraser computed in whitened coordinates; it is not an orthogonal projector and
//! is never used to split representations.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{orthonormal_column_basis, orthonormal_column_basis_with_values, Projector};
use crate::concept::Rep;
use crate::error::{Error, Result};

/// Relative singular-value cutoff for rank decisions.
const RANK_CUTOFF: f64 = 1e-10;
/// Below this (relative to the rep scale) the cross-covariance counts as zero.
const ZERO_CROSS_COV: f64 = 1e-12;

/// Representations with class labels over the substantive (non-n/a) concept values.
#[derive(Debug, Clone)]
pub struct LabeledRepSet {
    reps: DMatrix<f64>,
    labels: Vec<usize>,
    n_classes: usize,
    rep_mean: DVector<f64>,
    label_mean: DVector<f64>,
}

impl LabeledRepSet {
    /// `labels[i] < n_classes` is the class of `reps[i]`.
    pub fn new(reps: &[Rep], labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if reps.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                what: "labels vs reps",
                expected: reps.len(),
                got: labels.len(),
            });
        }
        if reps.len() < 2 {
            return Err(Error::domain("need at least two labeled representations"));
        }
        let d = reps[0].dim();
        for r in reps {
            r.check_dim(d, "labeled representation")?;
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::domain(format!("label {l} out of range for {n_classes} classes")));
        }
        let first = labels[0];
        if labels.iter().all(|&l| l == first) {
            return Err(Error::domain("all labels are identical; nothing to erase"));
        }
        let n = reps.len();
        let mut m = DMatrix::zeros(n, d);
        for (i, r) in reps.iter().enumerate() {
            for (j, &v) in r.as_slice().iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        let rep_mean = DVector::from_iterator(d, (0..d).map(|j| m.column(j).mean()));
        let mut label_mean = DVector::zeros(n_classes);
        for &l in &labels {
            label_mean[l] += 1.0;
        }
        label_mean /= n as f64;
        Ok(Self {
            reps: m,
            labels,
            n_classes,
            rep_mean,
            label_mean,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.reps.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn rep_mean(&self) -> &DVector<f64> {
        &self.rep_mean
    }

    /// Centered cross-covariance `Σ_hz` (`d × n_classes`).
    pub fn cross_covariance(&self) -> DMatrix<f64> {
        let n = self.len() as f64;
        let mut cov = DMatrix::zeros(self.dim(), self.n_classes);
        for (i, &l) in self.labels.iter().enumerate() {
            let h = self.reps.row(i).transpose() - &self.rep_mean;
            for c in 0..self.n_classes {
                let z = if c == l { 1.0 } else { 0.0 } - self.label_mean[c];
                if z != 0.0 {
                    cov.column_mut(c).axpy(z / n, &h, 1.0);
                }
            }
        }
        cov
    }

    /// Centered covariance `Σ_hh` (`d × d`).
    pub fn covariance(&self) -> DMatrix<f64> {
        let n = self.len() as f64;
        let mut centered = self.reps.clone();
        for mut row in centered.row_iter_mut() {
            row -= self.rep_mean.transpose();
        }
        centered.transpose() * &centered / n
    }

    /// Root-mean-square norm of the centered representations.
    fn scale(&self) -> f64 {
        self.covariance().trace().max(0.0).sqrt()
    }
}

/// Which eraser to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    OrthogonalGuarded,
    LeaceOblique,
}

/// Affine eraser `h ↦ M h + b` produced by the oblique mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ObliqueEraser {
    pub matrix: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub rank_removed: usize,
}

impl ObliqueEraser {
    pub fn apply(&self, h: &Rep) -> Result<Rep> {
        h.check_dim(self.matrix.ncols(), "eraser vs representation")?;
        let out = &self.matrix * DVector::from_column_slice(h.as_slice()) + &self.bias;
        Rep::new(out.iter().copied().collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FittedEraser {
    Orthogonal(Projector),
    Oblique(ObliqueEraser),
}

impl FittedEraser {
    /// Linear part of the eraser.
    pub fn linear_part(&self) -> &DMatrix<f64> {
        match self {
            Self::Orthogonal(p) => p.matrix(),
            Self::Oblique(e) => &e.matrix,
        }
    }

    pub fn as_projector(&self) -> Option<&Projector> {
        match self {
            Self::Orthogonal(p) => Some(p),
            Self::Oblique(_) => None,
        }
    }
}

/// Diagnostics recorded during fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitStats {
    pub mode: FitMode,
    pub n_samples: usize,
    /// Singular values of `Σ_hz`, descending.
    pub singular_values: Vec<f64>,
    pub rank_removed: usize,
    /// Set when `Σ_hz` vanished and the identity projector was returned.
    pub zero_cross_covariance: bool,
    /// Set when fewer than `n_classes - 1` directions survived the cutoff.
    pub rank_deficient: bool,
    /// `max |M Σ_hz|` on the training data.
    pub guardedness_residual: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub eraser: FittedEraser,
    pub stats: FitStats,
}

/// Fits a concept eraser to labeled representations.
pub fn fit_guarded_projector(data: &LabeledRepSet, mode: FitMode) -> Result<FitResult> {
    let d = data.dim();
    let cross = data.cross_covariance();
    let (basis, singular_values) = orthonormal_column_basis_with_values(&cross, RANK_CUTOFF);
    let sigma_max = singular_values.first().copied().unwrap_or(0.0);
    let zero = sigma_max <= ZERO_CROSS_COV * data.scale().max(f64::MIN_POSITIVE);
    let expected_rank = data.n_classes().saturating_sub(1);

    let eraser = if zero {
        match mode {
            FitMode::OrthogonalGuarded => FittedEraser::Orthogonal(Projector::identity(d)),
            FitMode::LeaceOblique => FittedEraser::Oblique(ObliqueEraser {
                matrix: DMatrix::identity(d, d),
                bias: DVector::zeros(d),
                rank_removed: 0,
            }),
        }
    } else {
        match mode {
            FitMode::OrthogonalGuarded => FittedEraser::Orthogonal(Projector::from_orthonormal_removed(&basis)?),
            FitMode::LeaceOblique => FittedEraser::Oblique(fit_oblique(data, &cross)?),
        }
    };
    let rank_removed = match &eraser {
        FittedEraser::Orthogonal(p) => p.rank_removed(),
        FittedEraser::Oblique(e) => e.rank_removed,
    };
    let guardedness_residual = (eraser.linear_part() * &cross).amax();
    Ok(FitResult {
        eraser,
        stats: FitStats {
            mode,
            n_samples: data.len(),
            singular_values,
            rank_removed,
            zero_cross_covariance: zero,
            rank_deficient: !zero && rank_removed < expected_rank,
            guardedness_residual,
        },
    })
}

/// Minimum-distortion eraser: `x ↦ x - W⁺ P_W W (x - μ)` with `W = Σ_hh^{-1/2}`
/// and `P_W` the orthogonal projector onto the column space of `W Σ_hz`.
fn fit_oblique(data: &LabeledRepSet, cross: &DMatrix<f64>) -> Result<ObliqueEraser> {
    let d = data.dim();
    let eig = SymmetricEigen::new(data.covariance());
    let lambda_max = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let mut whiten = DMatrix::zeros(d, d);
    let mut unwhiten = DMatrix::zeros(d, d);
    for i in 0..d {
        let l = eig.eigenvalues[i];
        if l > RANK_CUTOFF * lambda_max {
            let v = eig.eigenvectors.column(i);
            whiten += (v * v.transpose()) / l.sqrt();
            unwhiten += (v * v.transpose()) * l.sqrt();
        }
    }
    let q = orthonormal_column_basis(&(&whiten * cross), RANK_CUTOFF);
    let rank_removed = q.ncols();
    let proj = &q * q.transpose();
    let removal = &unwhiten * proj * &whiten;
    let matrix = DMatrix::identity(d, d) - &removal;
    let bias = &removal * data.rep_mean();
    Ok(ObliqueEraser {
        matrix,
        bias,
        rank_removed,
    })
}
