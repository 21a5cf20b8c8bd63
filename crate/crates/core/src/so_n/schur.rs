//! Real block Schur form `Z = P E_n(l_1, ..., l_k) P^T` of a skew matrix.
//!
//! Built from the symmetric eigendecomposition of `Z^T Z`, whose spectrum is
//! `{l_i^2}` with every nonzero value repeated twice. Eigenvectors are grouped
//! into clusters of (numerically) equal eigenvalues; inside a cluster `Z` acts
//! as a skew map of the cluster subspace, and a vector `u` is paired with
//! `-Z u / |Z u|` to form one 2x2 block. The block angle is then read off as
//! `p1^T Z p2`, so any rounding in the pairing only shows up as a tiny
//! off-block residual.

use nalgebra::{DVector, SymmetricEigen};

use super::{Mat, SkewMatrix, SymMatrix};

/// Relative gap below which eigenvalues of `Z^T Z` are treated as one cluster.
const CLUSTER_RTOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockLayout {
    /// Number of 2x2 blocks, `floor(n/2)`.
    pub blocks: usize,
    /// Number of trailing 1x1 zero blocks, `n mod 2`.
    pub trailing: usize,
}

#[derive(Debug, Clone)]
pub struct SkewSchur {
    /// Orthogonal change of basis; columns `2i, 2i+1` span block `i`.
    pub p: Mat,
    /// Block angles, sorted by decreasing magnitude.
    pub angles: Vec<f64>,
    pub layout: BlockLayout,
}

impl SkewSchur {
    pub fn dim(&self) -> usize {
        self.p.nrows()
    }

    /// `E_n(l_1, ..., l_k)`.
    pub fn block_form(&self) -> Mat {
        block_skew(self.dim(), &self.angles)
    }

    /// `P E_n(l) P^T`.
    pub fn reconstruct(&self) -> Mat {
        &self.p * self.block_form() * self.p.transpose()
    }

    /// `P E_n(f(l_1), ..., f(l_k)) P^T`.
    pub fn map_angles(&self, f: impl Fn(f64) -> f64) -> SkewMatrix {
        let mapped: Vec<f64> = self.angles.iter().map(|&l| f(l)).collect();
        let m = &self.p * block_skew(self.dim(), &mapped) * self.p.transpose();
        SkewMatrix::antisymmetrize(&m)
    }

    /// `P D_n(f(l_1), ..., f(l_k)) P^T`, with `trailing` on the 1x1 block.
    pub fn map_diagonal(&self, f: impl Fn(f64) -> f64, trailing: f64) -> SymMatrix {
        let n = self.dim();
        let mut diag = DVector::from_element(n, trailing);
        for (i, &l) in self.angles.iter().enumerate() {
            let v = f(l);
            diag[2 * i] = v;
            diag[2 * i + 1] = v;
        }
        let m = &self.p * Mat::from_diagonal(&diag) * self.p.transpose();
        SymMatrix::symmetrize(&m)
    }
}

/// `E_n(l_1, ..., l_k)`: 2x2 blocks `[[0, l], [-l, 0]]` then zeros.
pub(crate) fn block_skew(n: usize, angles: &[f64]) -> Mat {
    let mut e = Mat::zeros(n, n);
    for (i, &l) in angles.iter().enumerate() {
        e[(2 * i, 2 * i + 1)] = l;
        e[(2 * i + 1, 2 * i)] = -l;
    }
    e
}

fn orthogonalize(v: &mut DVector<f64>, against: &[DVector<f64>]) {
    // Two passes of classical Gram-Schmidt.
    for _ in 0..2 {
        for q in against {
            let c = q.dot(v);
            v.axpy(-c, q, 1.0);
        }
    }
}

/// Picks the standard basis vector with the largest component outside
/// `span(chosen)`, orthonormalized.
fn fresh_direction(m: usize, chosen: &[DVector<f64>]) -> DVector<f64> {
    let mut best: Option<(f64, DVector<f64>)> = None;
    for k in 0..m {
        let mut v = DVector::zeros(m);
        v[k] = 1.0;
        orthogonalize(&mut v, chosen);
        let nrm = v.norm();
        if best.as_ref().is_none_or(|(b, _)| nrm > *b) {
            best = Some((nrm, v));
        }
    }
    let (nrm, v) = best.expect("cluster has at least one free direction");
    v / nrm
}

/// Unit vector outside `span(chosen)` that `zc` stretches the most, so that
/// distinct angles sharing a cluster still land in separate blocks.
fn dominant_direction(zc: &Mat, chosen: &[DVector<f64>], znorm: f64) -> DVector<f64> {
    let m = zc.nrows();
    let mut proj = Mat::identity(m, m);
    for c in chosen {
        proj -= c * c.transpose();
    }
    let restricted = &proj * zc * &proj;
    if restricted.norm() <= f64::EPSILON * znorm || restricted.norm() < f64::MIN_POSITIVE {
        return fresh_direction(m, chosen);
    }
    let eig = SymmetricEigen::new(restricted.transpose() * &restricted);
    let top = eig.eigenvalues.imax();
    let mut u = eig.eigenvectors.column(top).into_owned();
    orthogonalize(&mut u, chosen);
    let un = u.norm();
    if un < 0.5 {
        return fresh_direction(m, chosen);
    }
    u / un
}

/// Block Schur decomposition of a skew matrix.
pub fn skew_schur(z: &SkewMatrix) -> SkewSchur {
    let n = z.dim();
    let zm = z.matrix();
    let gram = SymMatrix::symmetrize(&(zm.transpose() * zm));
    let eig = SymmetricEigen::new(gram.into_matrix());

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let gap = CLUSTER_RTOL * top;

    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for &idx in &order {
        match clusters.last_mut() {
            Some(c) if eig.eigenvalues[*c.last().unwrap()] - eig.eigenvalues[idx] <= gap => {
                c.push(idx)
            }
            _ => clusters.push(vec![idx]),
        }
    }

    let znorm = zm.norm();
    let mut pairs: Vec<(DVector<f64>, DVector<f64>)> = Vec::with_capacity(n / 2);
    let mut singles: Vec<DVector<f64>> = Vec::new();

    for cluster in &clusters {
        let m = cluster.len();
        let q = Mat::from_fn(n, m, |i, k| eig.eigenvectors[(i, cluster[k])]);
        let zc = q.transpose() * zm * &q;
        let mut chosen: Vec<DVector<f64>> = Vec::with_capacity(m);
        let mut local_pairs = Vec::new();
        while chosen.len() + 2 <= m {
            let u = dominant_direction(&zc, &chosen, znorm);
            let mut w = -(&zc * &u);
            let mut with_u = chosen.clone();
            with_u.push(u.clone());
            orthogonalize(&mut w, &with_u);
            let wn = w.norm();
            let v = if wn > f64::EPSILON * znorm && wn > f64::MIN_POSITIVE {
                let mut v = w / wn;
                orthogonalize(&mut v, &with_u);
                let vn = v.norm();
                v / vn
            } else {
                fresh_direction(m, &with_u)
            };
            chosen.push(u.clone());
            chosen.push(v.clone());
            local_pairs.push((u, v));
        }
        for (u, v) in local_pairs {
            pairs.push((&q * u, &q * v));
        }
        if chosen.len() < m {
            singles.push(&q * fresh_direction(m, &chosen));
        }
    }

    // Odd clusters only arise from the kernel; pair leftovers with each
    // other and keep at most one as the trailing zero block.
    let mut singles = singles.into_iter();
    let mut leftover = Vec::new();
    while let Some(a) = singles.next() {
        match singles.next() {
            Some(b) => pairs.push((a, b)),
            None => leftover.push(a),
        }
    }

    let mut blocks: Vec<(f64, DVector<f64>, DVector<f64>)> = pairs
        .into_iter()
        .map(|(p1, p2)| {
            let angle = p1.dot(&(zm * &p2));
            (angle, p1, p2)
        })
        .collect();
    blocks.sort_by(|a, b| b.0.abs().total_cmp(&a.0.abs()));

    let mut p = Mat::zeros(n, n);
    let mut angles = Vec::with_capacity(blocks.len());
    for (i, (angle, p1, p2)) in blocks.into_iter().enumerate() {
        p.set_column(2 * i, &p1);
        p.set_column(2 * i + 1, &p2);
        angles.push(angle);
    }
    if let Some(last) = leftover.first() {
        p.set_column(n - 1, last);
    }

    SkewSchur {
        p,
        angles,
        layout: BlockLayout {
            blocks: n / 2,
            trailing: n % 2,
        },
    }
}
