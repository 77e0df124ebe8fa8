// SPDX-License-Identifier: MIT OR Apache-2.0

//! Orthogonal projectors that split a representation into a non-concept part
//! `P h` and a concept part `(I - P) h`, plus subspace fitting.
//!
//! A [`Projector`] always stores the symmetric idempotent matrix `P` that projects
//! *onto the non-concept subspace*; the removed (concept) subspace is the range of
//! `I - P` and has dimension `rank_removed`.

mod fit;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::concept::Rep;
use crate::error::{Error, Result};
use crate::lm::CausalToyLm;

pub use fit::{fit_guarded_projector, FitMode, FitResult, FitStats, FittedEraser, LabeledRepSet, ObliqueEraser};

pub(crate) const SYMMETRY_TOL: f64 = 1e-10;
pub(crate) const IDEMPOTENCE_TOL: f64 = 1e-8;
pub(crate) const TRACE_TOL: f64 = 1e-6;

/// Symmetric idempotent projection onto the non-concept subspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProjectorRepr", into = "ProjectorRepr")]
pub struct Projector {
    matrix: DMatrix<f64>,
    rank_removed: usize,
}

/// Row-major wire form used in JSON reports.
#[derive(Serialize, Deserialize)]
struct ProjectorRepr {
    dim: usize,
    rank_removed: usize,
    matrix: Vec<f64>,
}

impl TryFrom<ProjectorRepr> for Projector {
    type Error = Error;
    fn try_from(r: ProjectorRepr) -> Result<Self> {
        if r.matrix.len() != r.dim * r.dim {
            return Err(Error::DimensionMismatch {
                what: "projector matrix entries",
                expected: r.dim * r.dim,
                got: r.matrix.len(),
            });
        }
        Projector::from_matrix(DMatrix::from_row_slice(r.dim, r.dim, &r.matrix), r.rank_removed)
    }
}

impl From<Projector> for ProjectorRepr {
    fn from(p: Projector) -> Self {
        let d = p.dim();
        let mut matrix = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                matrix.push(p.matrix[(i, j)]);
            }
        }
        Self {
            dim: d,
            rank_removed: p.rank_removed,
            matrix,
        }
    }
}

impl Projector {
    /// Validates and wraps an explicit matrix.
    pub fn from_matrix(matrix: DMatrix<f64>, rank_removed: usize) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::domain("projector matrix must be square"));
        }
        let p = Self {
            matrix,
            rank_removed,
        };
        p.validate()?;
        Ok(p)
    }

    /// `P = I`: nothing is removed.
    pub fn identity(d: usize) -> Self {
        Self {
            matrix: DMatrix::identity(d, d),
            rank_removed: 0,
        }
    }

    /// `P = 0`: everything is removed.
    pub fn zero(d: usize) -> Self {
        Self {
            matrix: DMatrix::zeros(d, d),
            rank_removed: d,
        }
    }

    /// Diagonal projector keeping the coordinates flagged `true`.
    pub fn keep_coordinates(keep: &[bool]) -> Self {
        let d = keep.len();
        let diag = DVector::from_iterator(d, keep.iter().map(|&k| if k { 1.0 } else { 0.0 }));
        Self {
            matrix: DMatrix::from_diagonal(&diag),
            rank_removed: keep.iter().filter(|&&k| !k).count(),
        }
    }

    /// `I - U Uᵀ` for a `d × k` matrix `U` with orthonormal columns.
    pub fn from_orthonormal_removed(basis: &DMatrix<f64>) -> Result<Self> {
        let d = basis.nrows();
        let gram = basis.transpose() * basis;
        let k = basis.ncols();
        if (gram - DMatrix::<f64>::identity(k, k)).amax() > 1e-8 {
            return Err(Error::domain("removed basis is not orthonormal"));
        }
        let mut m = DMatrix::identity(d, d) - basis * basis.transpose();
        symmetrize(&mut m);
        Self::from_matrix(m, k)
    }

    /// Removes the span of `directions` (each of length `d`), dropping
    /// numerically dependent directions.
    pub fn removing_span(d: usize, directions: &[Vec<f64>]) -> Result<Self> {
        if directions.is_empty() {
            return Ok(Self::identity(d));
        }
        for v in directions {
            if v.len() != d {
                return Err(Error::DimensionMismatch {
                    what: "removed direction",
                    expected: d,
                    got: v.len(),
                });
            }
        }
        let cols: Vec<DVector<f64>> = directions.iter().map(|v| DVector::from_column_slice(v)).collect();
        let m = DMatrix::from_columns(&cols);
        let basis = orthonormal_column_basis(&m, 1e-10);
        Self::from_orthonormal_removed(&basis)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn rank_removed(&self) -> usize {
        self.rank_removed
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Checks symmetry, idempotence, and the trace/rank relation.
    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.rank_removed > d {
            return Err(Error::domain("rank_removed exceeds dimension"));
        }
        let asym = (&self.matrix - self.matrix.transpose()).amax();
        if asym > SYMMETRY_TOL {
            return Err(Error::domain(format!("projector not symmetric (max |P - Pᵀ| = {asym:e})")));
        }
        let idem = (&self.matrix * &self.matrix - &self.matrix).amax();
        if idem > IDEMPOTENCE_TOL {
            return Err(Error::domain(format!("projector not idempotent (max |P² - P| = {idem:e})")));
        }
        let expected = (d - self.rank_removed) as f64;
        if (self.matrix.trace() - expected).abs() > TRACE_TOL {
            return Err(Error::domain(format!(
                "trace {} does not match d - rank_removed = {expected}",
                self.matrix.trace()
            )));
        }
        Ok(())
    }

    /// `P h`, the non-concept component.
    pub fn perp(&self, h: &Rep) -> Result<Rep> {
        h.check_dim(self.dim(), "projector vs representation")?;
        Ok(Rep::from_vec_unchecked(self.mul(h.as_slice())))
    }

    /// `(I - P) h`, the concept component.
    pub fn par(&self, h: &Rep) -> Result<Rep> {
        h.check_dim(self.dim(), "projector vs representation")?;
        let ph = self.mul(h.as_slice());
        Ok(Rep::from_vec_unchecked(
            h.as_slice().iter().zip(&ph).map(|(a, b)| a - b).collect(),
        ))
    }

    /// Splits `h` into `(P h, (I - P) h)`.
    pub fn split(&self, h: &Rep) -> Result<(Rep, Rep)> {
        Ok((self.perp(h)?, self.par(h)?))
    }

    /// Orthonormal basis (`d × rank`) of the removed subspace.
    pub fn removed_basis(&self) -> DMatrix<f64> {
        let d = self.dim();
        let complement = DMatrix::identity(d, d) - &self.matrix;
        let eig = nalgebra::SymmetricEigen::new(complement);
        let cols: Vec<DVector<f64>> = (0..d)
            .filter(|&i| eig.eigenvalues[i] > 0.5)
            .map(|i| eig.eigenvectors.column(i).into_owned())
            .collect();
        if cols.is_empty() {
            DMatrix::zeros(d, 0)
        } else {
            DMatrix::from_columns(&cols)
        }
    }

    fn mul(&self, h: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d)
            .map(|i| (0..d).map(|j| self.matrix[(i, j)] * h[j]).sum())
            .collect()
    }
}

/// Splits `h` into its non-concept and concept components under `p`.
pub fn split(p: &Projector, h: &Rep) -> Result<(Rep, Rep)> {
    p.split(h)
}

/// Largest principal angle in degrees between the removed subspaces of two projectors.
pub fn subspace_angle(a: &Projector, b: &Projector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            what: "projector dimensions",
            expected: a.dim(),
            got: b.dim(),
        });
    }
    if a.rank_removed() != b.rank_removed() {
        return Err(Error::domain(format!(
            "rank mismatch: {} vs {}",
            a.rank_removed(),
            b.rank_removed()
        )));
    }
    if a.rank_removed() == 0 {
        return Ok(0.0);
    }
    let ua = a.removed_basis();
    let ub = b.removed_basis();
    // acos alone is inaccurate near zero, so pair the cosine with the sine
    // `‖P_a U_b‖` of the same angle.
    let cos = (ua.transpose() * &ub)
        .singular_values()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
        .clamp(0.0, 1.0);
    let sin = (a.matrix() * &ub)
        .singular_values()
        .iter()
        .copied()
        .fold(0.0, f64::max)
        .clamp(0.0, 1.0);
    Ok(sin.atan2(cos).to_degrees())
}

/// The ground-truth projector of a synthetic causal model.
pub fn oracle_projector(lm: &CausalToyLm) -> Projector {
    lm.ground_truth().clone()
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m = (&*m + t) * 0.5;
}

/// Left singular vectors of `m` whose singular value exceeds `rel_cutoff * σ_max`.
pub(crate) fn orthonormal_column_basis(m: &DMatrix<f64>, rel_cutoff: f64) -> DMatrix<f64> {
    let (basis, _) = orthonormal_column_basis_with_values(m, rel_cutoff);
    basis
}

pub(crate) fn orthonormal_column_basis_with_values(
    m: &DMatrix<f64>,
    rel_cutoff: f64,
) -> (DMatrix<f64>, Vec<f64>) {
    let d = m.nrows();
    if m.ncols() == 0 || d == 0 {
        return (DMatrix::zeros(d, 0), Vec::new());
    }
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let values: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let max = values.first().copied().unwrap_or(0.0);
    let cols: Vec<DVector<f64>> = order
        .iter()
        .filter(|&&i| max > 0.0 && svd.singular_values[i] > rel_cutoff * max)
        .map(|&i| v_t.row(i).transpose())
        .collect();
    if cols.is_empty() {
        return (DMatrix::zeros(d, 0), values);
    }
    // The iterative SVD can leave U off the column space by ~1e-8. Any `m x` lies in
    // the column space exactly, so orthonormalize `m V` instead.
    let w = m * DMatrix::from_columns(&cols);
    (w.qr().q(), values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rep(v: &[f64]) -> Rep {
        Rep::new(v.to_vec()).unwrap()
    }

    #[test]
    fn split_identity_and_zero() {
        let h = rep(&[1.5, -2.0, 0.25]);
        let (perp, par) = Projector::identity(3).split(&h).unwrap();
        assert_eq!(perp, h);
        assert_eq!(par, Rep::zeros(3));
        let (perp, par) = Projector::zero(3).split(&h).unwrap();
        assert_eq!(perp, Rep::zeros(3));
        assert_eq!(par, h);
    }

    #[test]
    fn split_coordinate_projector() {
        let p = Projector::keep_coordinates(&[true, false]);
        let (perp, par) = p.split(&rep(&[3.0, 5.0])).unwrap();
        assert_eq!(perp.as_slice(), &[3.0, 0.0]);
        assert_eq!(par.as_slice(), &[0.0, 5.0]);
    }

    #[test]
    fn split_dimension_mismatch() {
        let p = Projector::identity(2);
        assert!(matches!(
            p.split(&rep(&[1.0, 2.0, 3.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rejects_non_projectors() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(Projector::from_matrix(m, 0).is_err());
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        assert!(Projector::from_matrix(m, 0).is_err());
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(Projector::from_matrix(m.clone(), 0).is_err());
        assert!(Projector::from_matrix(m, 1).is_ok());
    }

    #[test]
    fn removing_span_drops_dependent_directions() {
        let p = Projector::removing_span(3, &[vec![1.0, 1.0, 0.0], vec![2.0, 2.0, 0.0]]).unwrap();
        assert_eq!(p.rank_removed(), 1);
        p.validate().unwrap();
        let v = p.perp(&rep(&[1.0, 1.0, 0.0])).unwrap();
        assert!(v.as_slice().iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn principal_angles() {
        let a = Projector::keep_coordinates(&[true, false]);
        let b = Projector::keep_coordinates(&[false, true]);
        assert!(subspace_angle(&a, &a).unwrap().abs() < 1e-6);
        assert!((subspace_angle(&a, &b).unwrap() - 90.0).abs() < 1e-6);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let c = Projector::removing_span(2, &[vec![s, s]]).unwrap();
        assert!((subspace_angle(&a, &c).unwrap() - 45.0).abs() < 1e-6);
        assert!(subspace_angle(&a, &Projector::identity(2)).is_err());
    }

    #[test]
    fn json_round_trip_is_row_major() {
        let p = Projector::keep_coordinates(&[true, false]);
        let json = serde_json::to_value(&p).unwrap();
        assert_eq!(json["matrix"], serde_json::json!([1.0, 0.0, 0.0, 0.0]));
        let back: Projector = serde_json::from_value(json).unwrap();
        assert_eq!(back, p);
    }
}
