use nalgebra::{Cholesky, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::tridiag::{skew_tridiagonalize, GramSpectrum};
use super::{Mat, Rotation, SkewMatrix, SymMatrix};
use crate::error::{Error, Result};

/// How the normal correction `sqrt(I - Z^T Z) - I` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SqrtMethod {
    /// Spectral evaluation, exact up to rounding.
    #[default]
    Exact,
    /// Binomial series of `sqrt(I - X) - I` in `X = Z^T Z`, truncated at the
    /// given degree.
    Taylor(u32),
}

/// Whether `I - Z^T Z - margin I` admits a Cholesky factorization, i.e.
/// every block angle satisfies `1 - l^2 > margin`.
pub fn is_contraction(z: &SkewMatrix, margin: f64) -> bool {
    let zm = z.matrix();
    let n = z.dim();
    let mut a = -(zm.transpose() * zm);
    for i in 0..n {
        a[(i, i)] += 1.0 - margin;
    }
    let a = SymMatrix::symmetrize(&a).into_matrix();
    match Cholesky::new(a) {
        Some(ch) => ch.l_dirty().diagonal().iter().all(|&d| d > 0.0),
        None => false,
    }
}

/// Normal correction `C = sqrt(I - Z^T Z) - I`, making `I + Z + C` a rotation.
///
/// Fails with [`Error::NotAContraction`] when `I - Z^T Z - margin I` is not
/// positive definite.
pub fn correction(z: &SkewMatrix, method: SqrtMethod, margin: f64) -> Result<SymMatrix> {
    if !is_contraction(z, margin) {
        return Err(Error::NotAContraction {
            max_angle: z.norm_spectral(),
            margin,
        });
    }
    Ok(correction_unchecked(z, method))
}

/// [`correction`] without the positive-definiteness test.
///
/// The exact path evaluates `sqrt(1 - x) - 1` on the spectrum of `Z^T Z`.
/// With `Z = P E_n(l) P^T`, `Z^T Z = P D_n(l^2) P^T`, so this is the matrix
/// `P D_n(sqrt(1 - l^2) - 1) P^T`; the spectrum is taken from the skew
/// tridiagonal form, which never needs the block pairing.
pub fn correction_unchecked(z: &SkewMatrix, method: SqrtMethod) -> SymMatrix {
    match method {
        SqrtMethod::Exact => exact_from_spectrum(&skew_tridiagonalize(z).gram_spectrum()),
        SqrtMethod::Taylor(order) => {
            let zm = z.matrix();
            let gram = SymMatrix::symmetrize(&(zm.transpose() * zm)).into_matrix();
            let coeffs = sqrt_series_coefficients(order);
            let n = z.dim();
            // Horner in X: X (c1 + X (c2 + ... + X c_k)).
            let mut acc = Mat::zeros(n, n);
            for &c in coeffs.iter().rev() {
                acc = &gram * acc;
                for i in 0..n {
                    acc[(i, i)] += c;
                }
            }
            SymMatrix::symmetrize(&(&gram * acc))
        }
    }
}

fn exact_from_spectrum(spec: &GramSpectrum) -> SymMatrix {
    // sqrt(1 - x) - 1 = x g(x) with g(x) = -1 / (1 + sqrt(1 - x)).
    spec.map_gram(|x| -1.0 / (1.0 + (1.0 - x.min(1.0)).sqrt()))
}

/// The correction, or `None` when `I - Z^T Z - margin I` is not positive
/// definite. The exact method reads the test off the spectrum it computes
/// anyway (largest eigenvalue of `Z^T Z` below `1 - margin`).
pub fn correction_if_contraction(
    z: &SkewMatrix,
    method: SqrtMethod,
    margin: f64,
) -> Option<SymMatrix> {
    match method {
        SqrtMethod::Exact => {
            let spec = skew_tridiagonalize(z).gram_spectrum();
            (spec.max_eigenvalue() < 1.0 - margin).then(|| exact_from_spectrum(&spec))
        }
        SqrtMethod::Taylor(_) => {
            is_contraction(z, margin).then(|| correction_unchecked(z, method))
        }
    }
}

/// Coefficients `c_1..c_k` of `sqrt(1 - x) - 1 = sum c_j x^j`.
pub(crate) fn sqrt_series_coefficients(order: u32) -> Vec<f64> {
    // c_1 = -1/2 and c_{j+1} / c_j = (2j - 1) / (2j + 2).
    let mut out = Vec::with_capacity(order as usize);
    let mut c = -0.5;
    for j in 1..=order {
        out.push(c);
        let j = j as f64;
        c *= (2.0 * j - 1.0) / (2.0 * j + 2.0);
    }
    out
}

/// `theta / sin(theta)` as a function of `c = cos(theta)`.
fn angle_over_sine(c: f64) -> f64 {
    let x = 1.0 - c;
    if x < 1e-6 {
        1.0 + x / 3.0 + 2.0 * x * x / 15.0
    } else {
        let s = (x * (1.0 + c)).sqrt();
        s.atan2(c) / s
    }
}

/// Principal logarithm of a rotation, with the default `log_tol`.
pub fn logm_rotation(r: &Rotation) -> Result<SkewMatrix> {
    logm_rotation_with(r, crate::tolerances::Tolerances::default().log_tol)
}

/// Principal logarithm of a rotation.
///
/// With `A = (R - R^T)/2` and `S = (R + R^T)/2`, a rotation block by `t`
/// contributes `sin t` to `A` and `cos t` to `S`, and `A` commutes with `S`.
/// Hence `log R = A g(S)` with `g(cos t) = t / sin t` applied spectrally to
/// `S`, which never needs the block pairing.
pub fn logm_rotation_with(r: &Rotation, log_tol: f64) -> Result<SkewMatrix> {
    let rm = r.matrix();
    let skew = SkewMatrix::antisymmetrize(rm);
    let sym = SymMatrix::symmetrize(rm);
    let eig = SymmetricEigen::new(sym.into_matrix());

    let mut weights = eig.eigenvalues.clone();
    for w in weights.iter_mut() {
        let c = w.clamp(-1.0, 1.0);
        let angle = c.acos();
        if std::f64::consts::PI - angle < log_tol {
            return Err(Error::AngleAtPi {
                angle,
                tol: log_tol,
            });
        }
        *w = angle_over_sine(c);
    }
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (k, mut col) in scaled.column_iter_mut().enumerate() {
        col *= weights[k];
    }
    let g = scaled * v.transpose();
    Ok(SkewMatrix::antisymmetrize(&(skew.matrix() * g)))
}

/// Orthogonal polar factor `M (M^T M)^{-1/2}`, the closest orthogonal matrix
/// in Frobenius norm. Used to evaluate coefficients slightly off the group.
pub fn nearest_rotation(m: &Mat) -> Mat {
    let gram = SymMatrix::symmetrize(&(m.transpose() * m)).into_matrix();
    let eig = SymmetricEigen::new(gram);
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (k, mut col) in scaled.column_iter_mut().enumerate() {
        let lam = eig.eigenvalues[k].max(f64::MIN_POSITIVE);
        col /= lam.sqrt();
    }
    m * (scaled * v.transpose())
}
