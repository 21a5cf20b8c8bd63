//! Matrix exponential by scaling and squaring with diagonal Padé
//! approximants of degree 3, 5, 7, 9 or 13, chosen from the 1-norm as in
//! Higham (2005), "The scaling and squaring method for the matrix
//! exponential revisited".

use super::{Mat, Rotation, SkewMatrix};

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

const THETA3: f64 = 1.495585217958292e-2;
const THETA5: f64 = 2.539_398_330_063_23e-1;
const THETA7: f64 = 9.504178996162932e-1;
const THETA9: f64 = 2.097847961257068e0;
const THETA13: f64 = 5.371920351148152e0;

fn norm1(a: &Mat) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn add_identity(mut a: Mat, c: f64) -> Mat {
    for i in 0..a.nrows() {
        a[(i, i)] += c;
    }
    a
}

/// `(U, V)` of the degree-m approximant, `r_m = (V - U)^{-1} (V + U)`, for
/// m in {3, 5, 7, 9}.
fn pade_low(a: &Mat, b: &[f64]) -> (Mat, Mat) {
    let n = a.nrows();
    let a2 = a * a;
    let m = b.len() - 1;
    let mut powers = vec![Mat::identity(n, n), a2.clone()];
    while powers.len() * 2 <= m {
        let next = powers.last().unwrap() * &a2;
        powers.push(next);
    }
    let mut u = Mat::zeros(n, n);
    let mut v = Mat::zeros(n, n);
    for (k, p) in powers.iter().enumerate() {
        if 2 * k < m {
            u += p * b[2 * k + 1];
        }
        v += p * b[2 * k];
    }
    (a * u, v)
}

fn pade13(a: &Mat) -> (Mat, Mat) {
    let n = a.nrows();
    let b = &B13;
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u = a * add_identity(inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3], b[1]);
    let inner_v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = add_identity(inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2], b[0]);
    debug_assert_eq!(u.nrows(), n);
    (u, v)
}

/// Principal matrix exponential of a square matrix.
pub fn expm(a: &Mat) -> Mat {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    if n == 0 {
        return Mat::zeros(0, 0);
    }
    let nrm = norm1(a);
    let (u, v, squarings) = if nrm <= THETA3 {
        let (u, v) = pade_low(a, &B3);
        (u, v, 0)
    } else if nrm <= THETA5 {
        let (u, v) = pade_low(a, &B5);
        (u, v, 0)
    } else if nrm <= THETA7 {
        let (u, v) = pade_low(a, &B7);
        (u, v, 0)
    } else if nrm <= THETA9 {
        let (u, v) = pade_low(a, &B9);
        (u, v, 0)
    } else {
        let s = (nrm / THETA13).log2().ceil().max(0.0) as i32;
        let scaled = a * 2f64.powi(-s);
        let (u, v) = pade13(&scaled);
        (u, v, s)
    };
    let denom = &v - &u;
    let numer = &v + &u;
    let mut r = denom
        .lu()
        .solve(&numer)
        .expect("Padé denominator is nonsingular within its theta bound");
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

/// Group exponential so(n) -> SO(n).
pub fn expm_skew(z: &SkewMatrix) -> Rotation {
    Rotation::new_unchecked(expm(z.matrix()))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Truncated Taylor series with many terms; an independent oracle for
    /// matrices of modest norm.
    fn taylor_exp(a: &Mat) -> Mat {
        let n = a.nrows();
        let mut term = Mat::identity(n, n);
        let mut sum = term.clone();
        for k in 1..80 {
            term = &term * a / k as f64;
            sum += &term;
        }
        sum
    }

    #[test]
    fn zero_gives_identity() {
        assert_eq!(expm(&Mat::zeros(3, 3)), Mat::identity(3, 3));
    }

    #[test]
    fn planar_rotation_closed_form() {
        for theta in [1e-4, 0.2, 0.9, 2.0, 3.0, 7.5] {
            let z = SkewMatrix::from_upper(2, &[theta]).unwrap();
            let r = expm_skew(&z);
            let expected =
                Mat::from_row_slice(2, 2, &[theta.cos(), theta.sin(), -theta.sin(), theta.cos()]);
            assert!((r.matrix() - expected).norm() < 1e-14, "theta {theta}");
        }
    }

    #[test]
    fn every_degree_matches_series() {
        let base = Mat::from_fn(4, 4, |i, j| ((i * 4 + j) as f64 * 0.37).sin());
        let n1 = norm1(&base);
        for target in [0.01, 0.2, 0.9, 2.0, 5.0, 12.0] {
            let a = &base * (target / n1);
            let rel = (expm(&a) - taylor_exp(&a)).norm() / taylor_exp(&a).norm();
            assert!(rel < 1e-13, "norm {target}: rel err {rel:e}");
        }
    }
}
