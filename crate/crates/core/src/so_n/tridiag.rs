//! Householder reduction `Z = Q T Q^T` of a skew matrix, `T` skew-tridiagonal.
//!
//! `T` only couples even to odd indices, so spectral functions of `Z^T Z`
//! cost one reduction plus one symmetric tridiagonal eigenproblem of half
//! size instead of a full-size eigendecomposition.

use nalgebra::DVector;

use super::{Mat, SkewMatrix, SymMatrix};

#[derive(Debug, Clone)]
pub struct SkewTridiagonal {
    /// Orthogonal factor.
    pub q: Mat,
    /// Superdiagonal of `T`: `T[i, i + 1] = e[i] = -T[i + 1, i]`.
    pub e: Vec<f64>,
}

/// Dot product with independent partial sums so the loop vectorizes.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Eigen-decomposition of the symmetric tridiagonal matrix with diagonal `d`
/// and off-diagonal `off` (`off[i]` couples `i` and `i + 1`) by implicit QL
/// with Wilkinson-type shifts (the EISPACK `tql2` iteration).
fn tridiagonal_eigen(mut d: Vec<f64>, off: &[f64]) -> (DVector<f64>, Mat) {
    let n = d.len();
    let mut v = Mat::identity(n, n);
    if n == 0 {
        return (DVector::zeros(0), v);
    }
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(&off[..n - 1]);

    let mut f = 0.0;
    let mut tst1 = 0.0f64;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            loop {
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let (mut c, mut c2, mut c3) = (1.0, 1.0, 1.0);
                let el1 = e[l + 1];
                let (mut s, mut s2) = (0.0, 0.0);
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    let h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    let (left, right) = v.as_mut_slice().split_at_mut((i + 1) * n);
                    let vi = &mut left[i * n..];
                    let vi1 = &mut right[..n];
                    for (a, b) in vi.iter_mut().zip(vi1.iter_mut()) {
                        let h = *b;
                        *b = s * *a + c * h;
                        *a = c * *a - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    (DVector::from_vec(d), v)
}

pub fn skew_tridiagonalize(z: &SkewMatrix) -> SkewTridiagonal {
    let n = z.dim();
    if n < 2 {
        return SkewTridiagonal {
            q: Mat::identity(n, n),
            e: Vec::new(),
        };
    }
    // Column-major working copy; only the strict lower triangle is kept up
    // to date. Reflector k is stored below the subdiagonal of column k.
    let mut a: Vec<f64> = z.matrix().as_slice().to_vec();
    let mut e = vec![0.0; n - 1];
    let mut betas = vec![0.0; n.saturating_sub(2)];
    let mut p = vec![0.0; n];

    for k in 0..n - 2 {
        let m = n - k - 1;
        let (head, tail) = a.split_at_mut((k + 1) * n);
        let v = &mut head[k * n + k + 1..k * n + n];
        let xnorm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if xnorm == 0.0 {
            continue;
        }
        let alpha = if v[0] > 0.0 { -xnorm } else { xnorm };
        v[0] -= alpha;
        let beta = 2.0 / v.iter().map(|x| x * x).sum::<f64>();
        betas[k] = beta;
        e[k] = -alpha;

        // p = B v for the skew trailing block B, from its lower triangle.
        let p = &mut p[..m];
        p.fill(0.0);
        for jj in 0..m {
            let col = &tail[jj * n + k + 1..jj * n + n];
            let vj = v[jj];
            for (pi, ci) in p[jj + 1..].iter_mut().zip(&col[jj + 1..]) {
                *pi += ci * vj;
            }
            p[jj] -= dot(&col[jj + 1..], &v[jj + 1..]);
        }
        // B += beta (v p^T - p v^T), lower triangle only.
        for jj in 0..m {
            let col = &mut tail[jj * n + k + 1..jj * n + n];
            let (bp, bv) = (beta * p[jj], beta * v[jj]);
            for ((ci, vi), pi) in col[jj + 1..].iter_mut().zip(&v[jj + 1..]).zip(&p[jj + 1..]) {
                *ci += vi * bp - pi * bv;
            }
        }
    }
    e[n - 2] = -a[(n - 2) * n + n - 1];

    // Q = H_0 H_1 ... H_{n-3}, accumulated from the right end.
    let mut q = Mat::identity(n, n);
    let qs = q.as_mut_slice();
    for k in (0..n - 2).rev() {
        let beta = betas[k];
        if beta == 0.0 {
            continue;
        }
        let v = &a[k * n + k + 1..k * n + n];
        for j in k + 1..n {
            let col = &mut qs[j * n + k + 1..j * n + n];
            let bs = beta * dot(col, v);
            for (c, vi) in col.iter_mut().zip(v) {
                *c -= bs * vi;
            }
        }
    }
    SkewTridiagonal { q, e }
}

impl SkewTridiagonal {
    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn tridiagonal(&self) -> Mat {
        let n = self.dim();
        let mut t = Mat::zeros(n, n);
        for (i, &v) in self.e.iter().enumerate() {
            t[(i, i + 1)] = v;
            t[(i + 1, i)] = -v;
        }
        t
    }

    /// Spectral data of `Z^T Z`.
    ///
    /// In (even, odd) index order `T = [[0, B], [-B^T, 0]]` with `B` lower
    /// bidiagonal, so `T^T T = diag(B B^T, B^T B)`. Only `B^T B = V L V^T` is
    /// diagonalized; the even part follows from `B g(B^T B) B^T = B B^T g(B B^T)`.
    pub fn gram_spectrum(&self) -> GramSpectrum {
        let n = self.dim();
        let e = |i: usize| self.e.get(i).copied().unwrap_or(0.0);
        let m_odd = n / 2;

        // B[c, c] = e[2c], B[c + 1, c] = -e[2c + 1].
        let diag: Vec<f64> = (0..m_odd)
            .map(|c| e(2 * c).powi(2) + e(2 * c + 1).powi(2))
            .collect();
        let off: Vec<f64> = (0..m_odd)
            .map(|c| -e(2 * c + 1) * e(2 * c + 2))
            .collect();
        let (eigenvalues, vectors) = tridiagonal_eigen(diag, &off);

        // [Q_e B | Q_o] V.
        let mut basis = Mat::zeros(n, 2 * m_odd);
        for c in 0..m_odd {
            let mut col = basis.column_mut(c);
            col.axpy(e(2 * c), &self.q.column(2 * c), 0.0);
            if 2 * c + 2 < n {
                col.axpy(-e(2 * c + 1), &self.q.column(2 * c + 2), 1.0);
            }
            basis.set_column(m_odd + c, &self.q.column(2 * c + 1));
        }
        let w_even = basis.columns(0, m_odd) * &vectors;
        let w_odd = basis.columns(m_odd, m_odd) * &vectors;
        GramSpectrum {
            w_even,
            w_odd,
            eigenvalues,
        }
    }
}

/// Eigenvalues `l` of `B^T B` with eigenvectors `W_o` (odd part) and the
/// paired even-part directions `W_e = Q_e B V`, whose columns have norm
/// `sqrt(l)`.
#[derive(Debug, Clone)]
pub struct GramSpectrum {
    w_even: Mat,
    w_odd: Mat,
    eigenvalues: DVector<f64>,
}

impl GramSpectrum {
    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(0.0, f64::max)
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// `X g(X)` for `X = Z^T Z`.
    pub fn map_gram(&self, g: impl Fn(f64) -> f64) -> SymMatrix {
        let n = self.w_odd.nrows();
        let m = self.eigenvalues.len();
        if m == 0 {
            return SymMatrix::zeros(n);
        }
        let mut w = Mat::zeros(n, 2 * m);
        w.columns_mut(0, m).copy_from(&self.w_even);
        w.columns_mut(m, m).copy_from(&self.w_odd);
        let mut scaled = w.clone();
        for k in 0..m {
            let l = self.eigenvalues[k].max(0.0);
            let gl = g(l);
            scaled.column_mut(k).scale_mut(gl);
            scaled.column_mut(m + k).scale_mut(l * gl);
        }
        SymMatrix::symmetrize(&(scaled * w.transpose()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::so_n::orthogonality_defect;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_skew(n: usize, rng: &mut impl Rng) -> SkewMatrix {
        let a = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        SkewMatrix::from_matrix(&a).unwrap()
    }

    #[test]
    fn reduction_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for n in 2..=12 {
            let z = random_skew(n, &mut rng);
            let td = skew_tridiagonalize(&z);
            assert!(orthogonality_defect(&td.q) < 1e-13);
            let back = &td.q * td.tridiagonal() * td.q.transpose();
            assert!((back - z.matrix()).norm() < 1e-13 * (1.0 + z.norm_fro()), "n = {n}");
        }
    }

    #[test]
    fn spectrum_matches_dense_gram() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for n in 2..=11 {
            let z = random_skew(n, &mut rng);
            let gram = z.matrix().transpose() * z.matrix();
            let spec = skew_tridiagonalize(&z).gram_spectrum();
            assert!((spec.map_gram(|_| 1.0).matrix() - &gram).norm() < 1e-12);
            assert!((spec.map_gram(|x| x).matrix() - &gram * &gram).norm() < 1e-12);
            let top = gram.symmetric_eigenvalues().max();
            assert!((spec.max_eigenvalue() - top).abs() < 1e-12);
        }
    }

    #[test]
    fn tridiagonal_solver_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for n in 1..=30 {
            let d: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut off: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            // Include exact splits.
            if n > 4 {
                off[2] = 0.0;
            }
            let mut x = Mat::from_diagonal(&DVector::from_vec(d.clone()));
            for i in 0..n - 1 {
                x[(i, i + 1)] = off[i];
                x[(i + 1, i)] = off[i];
            }
            let (l, v) = tridiagonal_eigen(d, &off);
            assert!(orthogonality_defect(&v) < 1e-13);
            let back = &v * Mat::from_diagonal(&l) * v.transpose();
            assert!((back - &x).norm() < 1e-13 * (1.0 + x.norm()), "n = {n}");
        }
    }

    #[test]
    fn already_tridiagonal_and_zero_inputs() {
        let z = SkewMatrix::zeros(5);
        let spec = skew_tridiagonalize(&z).gram_spectrum();
        assert_eq!(spec.max_eigenvalue(), 0.0);
        let z = SkewMatrix::from_upper(2, &[0.6]).unwrap();
        let td = skew_tridiagonalize(&z);
        assert_eq!(td.e, vec![0.6]);
    }
}
