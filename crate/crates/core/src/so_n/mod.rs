//! Dense linear algebra on SO(n) and its Lie algebra so(n).
//!
//! The three matrix newtypes carry their structural invariant:
//! [`SkewMatrix`] and [`SymMatrix`] are exactly (anti)symmetric as stored,
//! [`Rotation`] is orthogonal with positive determinant up to a tolerance
//! checked at construction.

mod expm;
mod functions;
mod schur;
mod tridiag;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::tolerances::Tolerances;

pub use expm::{expm, expm_skew};
pub use functions::{
    correction, correction_if_contraction, correction_unchecked, is_contraction, logm_rotation, logm_rotation_with,
    nearest_rotation, SqrtMethod,
};
pub use schur::{skew_schur, BlockLayout, SkewSchur};
pub use tridiag::{skew_tridiagonalize, GramSpectrum, SkewTridiagonal};

/// Dense real matrix used throughout the crate.
pub type Mat = DMatrix<f64>;

fn check_square(a: &Mat) -> Result<usize> {
    let (r, c) = a.shape();
    if r != c {
        return Err(Error::ShapeMismatch {
            expected: (r, r),
            actual: (r, c),
        });
    }
    if r < 2 {
        return Err(Error::InvalidDimension(r));
    }
    Ok(r)
}

/// An element of so(n).
#[derive(Debug, Clone, PartialEq)]
pub struct SkewMatrix(Mat);

impl SkewMatrix {
    /// Skew-symmetric part `(A - A^T)/2` of a square matrix.
    pub fn from_matrix(a: &Mat) -> Result<Self> {
        check_square(a)?;
        Ok(Self::antisymmetrize(a))
    }

    pub(crate) fn antisymmetrize(a: &Mat) -> Self {
        let n = a.nrows();
        let mut out = Mat::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (a[(i, j)] - a[(j, i)]);
                out[(i, j)] = v;
                out[(j, i)] = -v;
            }
        }
        SkewMatrix(out)
    }

    /// Builds the matrix from its strictly upper triangular entries in
    /// row-major order, i.e. the coordinates against [`skew_basis`].
    pub fn from_upper(n: usize, upper: &[f64]) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidDimension(n));
        }
        let d = n * (n - 1) / 2;
        if upper.len() != d {
            return Err(Error::DriverMismatch {
                model: d,
                got: upper.len(),
            });
        }
        let mut out = Mat::zeros(n, n);
        let mut k = 0;
        for a in 0..n {
            for b in (a + 1)..n {
                out[(a, b)] = upper[k];
                out[(b, a)] = -upper[k];
                k += 1;
            }
        }
        Ok(SkewMatrix(out))
    }

    pub fn zeros(n: usize) -> Self {
        SkewMatrix(Mat::zeros(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Mat {
        &self.0
    }

    pub fn into_matrix(self) -> Mat {
        self.0
    }

    /// Strictly upper triangular entries, row-major.
    pub fn upper(&self) -> Vec<f64> {
        let n = self.dim();
        let mut out = Vec::with_capacity(n * (n - 1) / 2);
        for a in 0..n {
            for b in (a + 1)..n {
                out.push(self.0[(a, b)]);
            }
        }
        out
    }

    pub fn norm_fro(&self) -> f64 {
        self.0.norm()
    }

    /// Largest block angle, equal to the spectral norm.
    pub fn norm_spectral(&self) -> f64 {
        let gram = self.0.transpose() * &self.0;
        let eig = gram.symmetric_eigenvalues();
        eig.iter().fold(0.0_f64, |m, &v| m.max(v)).sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        SkewMatrix(&self.0 * s)
    }

    /// `self + s * other`, still exactly skew.
    pub fn add_scaled(&self, s: f64, other: &SkewMatrix) -> Self {
        SkewMatrix(&self.0 + &other.0 * s)
    }
}

/// A real symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(Mat);

impl SymMatrix {
    /// Symmetric part `(A + A^T)/2` of a square matrix.
    pub fn from_matrix(a: &Mat) -> Result<Self> {
        check_square(a)?;
        Ok(Self::symmetrize(a))
    }

    pub(crate) fn symmetrize(a: &Mat) -> Self {
        let n = a.nrows();
        let mut out = Mat::zeros(n, n);
        for i in 0..n {
            out[(i, i)] = a[(i, i)];
            for j in (i + 1)..n {
                let v = 0.5 * (a[(i, j)] + a[(j, i)]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        SymMatrix(out)
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(Mat::zeros(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Mat {
        &self.0
    }

    pub fn into_matrix(self) -> Mat {
        self.0
    }

    pub fn norm_fro(&self) -> f64 {
        self.0.norm()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.0.symmetric_eigenvalues().iter().copied().collect()
    }
}

/// An element of SO(n).
#[derive(Debug, Clone, PartialEq)]
pub struct Rotation(Mat);

impl Rotation {
    /// Validates orthogonality against `tol.orth_tol` and the sign of the
    /// determinant.
    pub fn new(m: Mat, tol: &Tolerances) -> Result<Self> {
        Self::with_tolerance(m, tol.orth_tol)
    }

    pub fn with_tolerance(m: Mat, orth_tol: f64) -> Result<Self> {
        check_square(&m)?;
        let defect = orthogonality_defect(&m);
        if !(defect <= orth_tol) {
            return Err(Error::NotOrthogonal {
                defect,
                tol: orth_tol,
            });
        }
        let det = m.determinant();
        if !(det > 0.0) {
            return Err(Error::NegativeDeterminant(det));
        }
        Ok(Rotation(m))
    }

    /// Wraps a matrix without checking it. Step maps use this on outputs
    /// that are rotations by construction.
    pub fn new_unchecked(m: Mat) -> Self {
        Rotation(m)
    }

    pub fn identity(n: usize) -> Self {
        Rotation(Mat::identity(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Mat {
        &self.0
    }

    pub fn into_matrix(self) -> Mat {
        self.0
    }

    pub fn transpose(&self) -> Rotation {
        Rotation(self.0.transpose())
    }

    pub fn compose(&self, other: &Rotation) -> Rotation {
        Rotation(&self.0 * &other.0)
    }

    pub fn defect(&self) -> f64 {
        orthogonality_defect(&self.0)
    }
}

/// Canonical basis `E_j = e_ab - e_ba` of so(n), pairs `a < b` in
/// lexicographic order.
pub fn skew_basis(n: usize) -> Result<Vec<SkewMatrix>> {
    if n < 2 {
        return Err(Error::InvalidDimension(n));
    }
    let mut basis = Vec::with_capacity(n * (n - 1) / 2);
    for a in 0..n {
        for b in (a + 1)..n {
            let mut m = Mat::zeros(n, n);
            m[(a, b)] = 1.0;
            m[(b, a)] = -1.0;
            basis.push(SkewMatrix(m));
        }
    }
    Ok(basis)
}

/// Index pairs `(a, b)` matching [`skew_basis`].
pub fn basis_pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |a| ((a + 1)..n).map(move |b| (a, b)))
}

/// Orthogonal projection of `a` onto the tangent space at `r`:
/// `(A - R A^T R) / 2`.
pub fn project_tangent(r: &Rotation, a: &Mat) -> Result<Mat> {
    let n = r.dim();
    if a.shape() != (n, n) {
        return Err(Error::ShapeMismatch {
            expected: (n, n),
            actual: a.shape(),
        });
    }
    let rm = r.matrix();
    Ok((a - rm * a.transpose() * rm) * 0.5)
}

/// `||M^T M - I||_F`.
pub fn orthogonality_defect(m: &Mat) -> f64 {
    let n = m.ncols();
    let mut g = m.transpose() * m;
    for i in 0..n {
        g[(i, i)] -= 1.0;
    }
    g.norm()
}

/// Riemannian distance `||log(R1^T R2)||_F`.
pub fn geodesic_distance(r1: &Rotation, r2: &Rotation, tol: &Tolerances) -> Result<f64> {
    let rel = Rotation::new_unchecked(r1.matrix().transpose() * r2.matrix());
    Ok(logm_rotation_with(&rel, tol.log_tol)?.norm_fro())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn basis_small_dimensions() {
        let b2 = skew_basis(2).unwrap();
        assert_eq!(b2.len(), 1);
        assert_eq!(
            b2[0].matrix(),
            &Mat::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])
        );

        let b3 = skew_basis(3).unwrap();
        assert_eq!(b3.len(), 3);
        for e in &b3 {
            let nnz = e.matrix().iter().filter(|v| **v != 0.0).count();
            assert_eq!(nnz, 2);
            assert!(close(e.norm_fro(), 2f64.sqrt(), 1e-15));
        }

        assert_eq!(skew_basis(6).unwrap().len(), 15);
        assert_eq!(skew_basis(1), Err(Error::InvalidDimension(1)));
    }

    #[test]
    fn basis_order_is_lexicographic() {
        let pairs: Vec<_> = basis_pairs(4).collect();
        assert_eq!(pairs, vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        for (e, (a, b)) in skew_basis(4).unwrap().iter().zip(pairs) {
            assert_eq!(e.matrix()[(a, b)], 1.0);
            assert_eq!(e.matrix()[(b, a)], -1.0);
        }
    }

    #[test]
    fn skew_constructor_is_exact() {
        let a = Mat::from_fn(4, 4, |i, j| (i as f64 + 0.3).sin() * (j as f64 * 1.7).cos());
        let z = SkewMatrix::from_matrix(&a).unwrap();
        assert_eq!(z.matrix() + z.matrix().transpose(), Mat::zeros(4, 4));
        let s = SymMatrix::from_matrix(&a).unwrap();
        assert_eq!(s.matrix(), &s.matrix().transpose());
        assert!(SkewMatrix::from_matrix(&Mat::zeros(2, 3)).is_err());
    }

    #[test]
    fn upper_coordinates_round_trip() {
        let z = SkewMatrix::from_upper(3, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(z.upper(), vec![1.0, 2.0, 3.0]);
        assert_eq!(z.matrix()[(2, 1)], -3.0);
    }

    #[test]
    fn projection_identity_case() {
        let a = Mat::from_fn(3, 3, |i, j| (3 * i + j) as f64);
        let p = project_tangent(&Rotation::identity(3), &a).unwrap();
        assert_eq!(p, (&a - a.transpose()) * 0.5);
    }

    #[test]
    fn projection_shape_mismatch() {
        let err = project_tangent(&Rotation::identity(3), &Mat::zeros(2, 2)).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { .. }));
    }

    #[test]
    fn defect_examples() {
        assert_eq!(orthogonality_defect(&Mat::identity(3, 3)), 0.0);
        let d = orthogonality_defect(&(Mat::identity(3, 3) * 2.0));
        assert!(close(d, 3.0 * 3f64.sqrt(), 1e-14));
    }

    #[test]
    fn rotation_rejects_reflections_and_non_orthogonal() {
        let tol = Tolerances::default();
        let refl = Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -1.0]));
        assert!(matches!(
            Rotation::new(refl, &tol),
            Err(Error::NegativeDeterminant(_))
        ));
        assert!(matches!(
            Rotation::new(Mat::identity(2, 2) * 1.1, &tol),
            Err(Error::NotOrthogonal { .. })
        ));
        assert!(Rotation::new(Mat::identity(4, 4), &tol).is_ok());
    }

    #[test]
    fn distance_examples() {
        let tol = Tolerances::default();
        let i2 = Rotation::identity(2);
        assert_eq!(geodesic_distance(&i2, &i2, &tol).unwrap(), 0.0);
        let theta: f64 = 0.7;
        let r = Rotation::new(
            Mat::from_row_slice(2, 2, &[theta.cos(), theta.sin(), -theta.sin(), theta.cos()]),
            &tol,
        )
        .unwrap();
        let d = geodesic_distance(&i2, &r, &tol).unwrap();
        assert!(close(d, 2f64.sqrt() * theta, 1e-14));
    }
}
