//! Coefficients of multiplicative SDEs on SO(n),
//!
//! ```text
//! dR = R B_{o,S}(R, t) dt + sum_j R B_j(R, t) o dW_j        (Stratonovich)
//! dR = R B_{o,I}(R, t) dt + sum_j R B_j(R, t) dW_j          (Itô)
//! B_{o,I} = B_{o,S} + 1/2 sum_j K_j + 1/2 sum_j B_j^2
//! K_j = sum_{r,s} dB_j/dR_{rs} (R B_j)_{rs}
//! ```
//!
//! Coefficients take a plain matrix rather than a [`Rotation`] because the
//! K_j terms are ambient derivatives: finite differences and the Euclidean
//! baseline both evaluate them slightly off the group.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::so_n::{
    logm_rotation_with, nearest_rotation, orthogonality_defect, skew_basis, Mat, Rotation,
    SkewMatrix, SymMatrix,
};
use crate::tolerances::Tolerances;

/// Coefficient bundle of a multiplicative SDE on SO(n).
pub trait SdeModel: Send + Sync {
    fn dim(&self) -> usize;

    /// Number of Brownian drivers `d`.
    fn drivers(&self) -> usize;

    /// Stratonovich drift `B_{o,S}(R, t)`.
    fn drift_strat(&self, r: &Mat, t: f64) -> Result<SkewMatrix>;

    /// Diffusion coefficient `B_j(R, t)`, `j < drivers()`.
    fn diffusion(&self, r: &Mat, t: f64, j: usize) -> SkewMatrix;

    /// Closed form of `sum_j K_j`, when the model has one.
    fn k_terms(&self, _r: &Mat, _t: f64) -> Option<SkewMatrix> {
        None
    }

    /// Closed-form Itô drift `B_{o,I}` that replaces the conversion.
    fn ito_drift_override(&self, _r: &Mat, _t: f64) -> Result<Option<Mat>> {
        Ok(None)
    }

    /// `sum_j B_j^2`. The default sums over all drivers.
    fn diffusion_square_sum(&self, r: &Mat, t: f64) -> SymMatrix {
        let n = self.dim();
        let mut acc = Mat::zeros(n, n);
        for j in 0..self.drivers() {
            let b = self.diffusion(r, t, j);
            acc += b.matrix() * b.matrix();
        }
        SymMatrix::symmetrize(&acc)
    }

    /// `sum_j w_j B_j`. The default sums over all drivers.
    fn diffusion_combination(&self, r: &Mat, t: f64, weights: &[f64]) -> SkewMatrix {
        let n = self.dim();
        let mut acc = Mat::zeros(n, n);
        for (j, &w) in weights.iter().enumerate() {
            if w != 0.0 {
                acc += self.diffusion(r, t, j).matrix() * w;
            }
        }
        SkewMatrix::antisymmetrize(&acc)
    }
}

/// Itô drift split into its tangent (skew) and pinning (symmetric) parts.
#[derive(Debug, Clone)]
pub struct ItoDrift {
    pub value: Mat,
    pub skew_part: SkewMatrix,
    pub sym_part: SymMatrix,
}

impl ItoDrift {
    fn from_value(value: Mat) -> Self {
        let skew_part = SkewMatrix::antisymmetrize(&value);
        let sym_part = SymMatrix::symmetrize(&value);
        Self {
            value,
            skew_part,
            sym_part,
        }
    }
}

pub fn sum_diffusion_squares(model: &dyn SdeModel, r: &Mat, t: f64) -> SymMatrix {
    model.diffusion_square_sum(r, t)
}

/// Central difference of `B_j` along the ambient direction `R B_j`:
/// `[B_j(R + h R B_j) - B_j(R - h R B_j)] / 2h`.
pub fn k_term_fd(model: &dyn SdeModel, r: &Mat, t: f64, j: usize, h: f64) -> SkewMatrix {
    let b = model.diffusion(r, t, j);
    let dir = r * b.matrix() * h;
    let plus = model.diffusion(&(r + &dir), t, j);
    let minus = model.diffusion(&(r - &dir), t, j);
    SkewMatrix::antisymmetrize(&((plus.matrix() - minus.matrix()) / (2.0 * h)))
}

/// `sum_j K_j` by finite differences.
pub fn k_sum_fd(model: &dyn SdeModel, r: &Mat, t: f64, h: f64) -> SkewMatrix {
    let n = model.dim();
    let mut acc = Mat::zeros(n, n);
    for j in 0..model.drivers() {
        acc += k_term_fd(model, r, t, j, h).matrix();
    }
    SkewMatrix::antisymmetrize(&acc)
}

/// Richardson-style self-consistency of the finite differences:
/// `||K(h) - K(h/10)||_F` for the summed K terms.
pub fn k_sum_fd_discrepancy(model: &dyn SdeModel, r: &Mat, t: f64, h: f64) -> f64 {
    (k_sum_fd(model, r, t, h).matrix() - k_sum_fd(model, r, t, h / 10.0).matrix()).norm()
}

fn assemble(drift: &SkewMatrix, k_sum: &SkewMatrix, sq: &SymMatrix) -> ItoDrift {
    let value = drift.matrix() + k_sum.matrix() * 0.5 + sq.matrix() * 0.5;
    ItoDrift::from_value(value)
}

/// Stratonovich-to-Itô conversion, using the model's closed-form K terms
/// when available and finite differences with step `tol.fd_step` otherwise.
pub fn strat_to_ito(model: &dyn SdeModel, r: &Mat, t: f64, tol: &Tolerances) -> Result<ItoDrift> {
    let drift = model.drift_strat(r, t)?;
    let k_sum = match model.k_terms(r, t) {
        Some(k) => k,
        None => k_sum_fd(model, r, t, tol.fd_step),
    };
    Ok(assemble(&drift, &k_sum, &model.diffusion_square_sum(r, t)))
}

/// Conversion that always differentiates numerically, ignoring closed forms.
pub fn strat_to_ito_fd(model: &dyn SdeModel, r: &Mat, t: f64, h: f64) -> Result<ItoDrift> {
    let drift = model.drift_strat(r, t)?;
    let k_sum = k_sum_fd(model, r, t, h);
    Ok(assemble(&drift, &k_sum, &model.diffusion_square_sum(r, t)))
}

/// The drift the integrators use: the model's closed-form Itô drift if it
/// provides one, the converted drift otherwise.
pub fn ito_drift(model: &dyn SdeModel, r: &Mat, t: f64, tol: &Tolerances) -> Result<ItoDrift> {
    match model.ito_drift_override(r, t)? {
        Some(value) => Ok(ItoDrift::from_value(value)),
        None => strat_to_ito(model, r, t, tol),
    }
}

fn check_dim(n: usize) -> Result<()> {
    if n < 2 {
        Err(Error::InvalidDimension(n))
    } else {
        Ok(())
    }
}

/// Brownian motion on SO(n): `B_j = E_j / sqrt(2)`, Itô drift
/// `-(n - 1)/4 I`.
#[derive(Debug, Clone)]
pub struct BrownianModel {
    n: usize,
    basis: Vec<SkewMatrix>,
}

pub fn brownian_model(n: usize) -> Result<BrownianModel> {
    check_dim(n)?;
    Ok(BrownianModel {
        n,
        basis: skew_basis(n)?,
    })
}

impl SdeModel for BrownianModel {
    fn dim(&self) -> usize {
        self.n
    }

    fn drivers(&self) -> usize {
        self.basis.len()
    }

    fn drift_strat(&self, _r: &Mat, _t: f64) -> Result<SkewMatrix> {
        Ok(SkewMatrix::zeros(self.n))
    }

    fn diffusion(&self, _r: &Mat, _t: f64, j: usize) -> SkewMatrix {
        self.basis[j].scale(std::f64::consts::FRAC_1_SQRT_2)
    }

    fn k_terms(&self, _r: &Mat, _t: f64) -> Option<SkewMatrix> {
        Some(SkewMatrix::zeros(self.n))
    }

    fn ito_drift_override(&self, _r: &Mat, _t: f64) -> Result<Option<Mat>> {
        let n = self.n as f64;
        Ok(Some(Mat::identity(self.n, self.n) * (-(n - 1.0) / 4.0)))
    }

    fn diffusion_square_sum(&self, _r: &Mat, _t: f64) -> SymMatrix {
        let n = self.n as f64;
        SymMatrix::symmetrize(&(Mat::identity(self.n, self.n) * (-(n - 1.0) / 2.0)))
    }

    fn diffusion_combination(&self, _r: &Mat, _t: f64, weights: &[f64]) -> SkewMatrix {
        let scaled: Vec<f64> = weights
            .iter()
            .map(|w| w * std::f64::consts::FRAC_1_SQRT_2)
            .collect();
        SkewMatrix::from_upper(self.n, &scaled).expect("one weight per driver")
    }
}

/// Which Itô drift the descent model hands to the integrators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftSource {
    /// Converted from the Stratonovich form with the closed-form K terms,
    /// giving the `tau / (4n) (R - R^T)` skew correction.
    #[default]
    Converted,
    /// Published closed form with a `tau / (2n) (R - R^T)` skew correction.
    Printed,
}

/// Noisy gradient descent of `F(R) = 1/2 ||log R||_F^2`:
/// `B_{o,S} = -log R`, `B_j = tau(R) E_j`, `tau(R) = 1/2 - tr(R) / 2n`.
#[derive(Debug, Clone)]
pub struct DescentModel {
    n: usize,
    drift_source: DriftSource,
    basis: Vec<SkewMatrix>,
    log_tol: f64,
}

pub fn descent_model(n: usize, drift_source: DriftSource) -> Result<DescentModel> {
    check_dim(n)?;
    Ok(DescentModel {
        n,
        drift_source,
        basis: skew_basis(n)?,
        log_tol: Tolerances::default().log_tol,
    })
}

/// Off-group arguments are projected to the closest rotation before the
/// logarithm; this defect threshold decides when that is needed.
const PROJECT_ABOVE: f64 = 1e-12;

impl DescentModel {
    pub fn drift_source(&self) -> DriftSource {
        self.drift_source
    }

    pub fn with_log_tol(mut self, log_tol: f64) -> Self {
        self.log_tol = log_tol;
        self
    }

    /// Noise scale `tau(R) = 1/2 - tr(R) / 2n`.
    pub fn tau(&self, r: &Mat) -> f64 {
        0.5 - r.trace() / (2.0 * self.n as f64)
    }

    fn log(&self, r: &Mat) -> Result<SkewMatrix> {
        let rot = if orthogonality_defect(r) > PROJECT_ABOVE {
            Rotation::new_unchecked(nearest_rotation(r))
        } else {
            Rotation::new_unchecked(r.clone())
        };
        logm_rotation_with(&rot, self.log_tol)
    }

    /// Closed-form `sum_j K_j = tau / (2n) (R - R^T)`.
    fn k_sum(&self, r: &Mat) -> SkewMatrix {
        let c = self.tau(r) / (2.0 * self.n as f64);
        SkewMatrix::antisymmetrize(&((r - r.transpose()) * c))
    }
}

impl SdeModel for DescentModel {
    fn dim(&self) -> usize {
        self.n
    }

    fn drivers(&self) -> usize {
        self.basis.len()
    }

    fn drift_strat(&self, r: &Mat, _t: f64) -> Result<SkewMatrix> {
        Ok(self.log(r)?.scale(-1.0))
    }

    fn diffusion(&self, r: &Mat, _t: f64, j: usize) -> SkewMatrix {
        self.basis[j].scale(self.tau(r))
    }

    fn k_terms(&self, r: &Mat, _t: f64) -> Option<SkewMatrix> {
        Some(self.k_sum(r))
    }

    fn ito_drift_override(&self, r: &Mat, t: f64) -> Result<Option<Mat>> {
        match self.drift_source {
            DriftSource::Converted => Ok(None),
            DriftSource::Printed => {
                let n = self.n as f64;
                let tau = self.tau(r);
                // The pinning term -tau^2 (n - 1) / 2 I, evaluated exactly as the
                // converted drift does so the symmetric parts coincide.
                let pinning = self.diffusion_square_sum(r, t).into_matrix() * 0.5;
                let value = -self.log(r)?.into_matrix() + (r - r.transpose()) * (tau / (2.0 * n));
                Ok(Some(value + pinning))
            }
        }
    }

    fn diffusion_square_sum(&self, r: &Mat, _t: f64) -> SymMatrix {
        let tau = self.tau(r);
        let n = self.n as f64;
        SymMatrix::symmetrize(&(Mat::identity(self.n, self.n) * (-(n - 1.0) * tau * tau)))
    }

    fn diffusion_combination(&self, r: &Mat, _t: f64, weights: &[f64]) -> SkewMatrix {
        let tau = self.tau(r);
        let scaled: Vec<f64> = weights.iter().map(|w| w * tau).collect();
        SkewMatrix::from_upper(self.n, &scaled).expect("one weight per driver")
    }
}

type DriftFn = dyn Fn(&Mat, f64) -> SkewMatrix + Send + Sync;
type DiffusionFn = dyn Fn(&Mat, f64, usize) -> SkewMatrix + Send + Sync;

/// Model assembled from closures; all other coefficients use the generic
/// defaults (finite-difference K terms, brute-force sums).
pub struct CustomModel {
    n: usize,
    d: usize,
    drift: Box<DriftFn>,
    diffusion: Box<DiffusionFn>,
}

impl CustomModel {
    pub fn new(
        n: usize,
        d: usize,
        drift: impl Fn(&Mat, f64) -> SkewMatrix + Send + Sync + 'static,
        diffusion: impl Fn(&Mat, f64, usize) -> SkewMatrix + Send + Sync + 'static,
    ) -> Result<Self> {
        check_dim(n)?;
        Ok(Self {
            n,
            d,
            drift: Box::new(drift),
            diffusion: Box::new(diffusion),
        })
    }
}

impl SdeModel for CustomModel {
    fn dim(&self) -> usize {
        self.n
    }

    fn drivers(&self) -> usize {
        self.d
    }

    fn drift_strat(&self, r: &Mat, t: f64) -> Result<SkewMatrix> {
        Ok((self.drift)(r, t))
    }

    fn diffusion(&self, r: &Mat, t: f64, j: usize) -> SkewMatrix {
        (self.diffusion)(r, t, j)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{random_rotation, substream, Purpose};

    /// Brute-force sum over the basis, independent of the model overrides.
    fn basis_square_sum(n: usize) -> Mat {
        let mut acc = Mat::zeros(n, n);
        for e in skew_basis(n).unwrap() {
            acc += e.matrix() * e.matrix();
        }
        acc
    }

    #[test]
    fn basis_square_identity() {
        for n in 2..=8 {
            let expected = Mat::identity(n, n) * -((n - 1) as f64);
            assert_eq!(basis_square_sum(n), expected);
        }
    }

    #[test]
    fn brownian_square_sum_matches_brute_force() {
        let mut rng = substream(5, 0, Purpose::Init);
        for n in 2..=8 {
            let m = brownian_model(n).unwrap();
            let r = random_rotation(n, &mut rng);
            let fast = m.diffusion_square_sum(r.matrix(), 0.0);
            let expected = Mat::identity(n, n) * (-((n - 1) as f64) / 2.0);
            assert!((fast.matrix() - &expected).norm() < 1e-14);
            // Generic default through a closure model with the same B_j.
            let basis = skew_basis(n).unwrap();
            let generic = CustomModel::new(
                n,
                basis.len(),
                move |_, _| SkewMatrix::zeros(n),
                move |_, _, j| basis[j].scale(std::f64::consts::FRAC_1_SQRT_2),
            )
            .unwrap();
            let slow = generic.diffusion_square_sum(r.matrix(), 0.0);
            assert!((slow.matrix() - &expected).norm() < 1e-14);
        }
    }

    #[test]
    fn zero_diffusion_square_sum() {
        let m = CustomModel::new(3, 2, |_, _| SkewMatrix::zeros(3), |_, _, _| SkewMatrix::zeros(3))
            .unwrap();
        assert_eq!(m.diffusion_square_sum(&Mat::identity(3, 3), 0.0).norm_fro(), 0.0);
    }

    #[test]
    fn brownian_construction() {
        let m = brownian_model(2).unwrap();
        assert_eq!(m.drivers(), 1);
        let b = m.diffusion(&Mat::identity(2, 2), 0.0, 0);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(b.matrix(), &Mat::from_row_slice(2, 2, &[0.0, h, -h, 0.0]));
        assert_eq!(brownian_model(6).unwrap().drivers(), 15);
        assert!(brownian_model(1).is_err());
    }

    #[test]
    fn brownian_k_terms_vanish_exactly() {
        let m = brownian_model(4).unwrap();
        let mut rng = substream(2, 0, Purpose::Init);
        for h in [1e-3, 1e-5, 0.37] {
            let r = random_rotation(4, &mut rng);
            for j in 0..m.drivers() {
                assert_eq!(k_term_fd(&m, r.matrix(), 0.0, j, h).norm_fro(), 0.0);
            }
        }
    }

    #[test]
    fn brownian_conversion_matches_closed_form() {
        let tol = Tolerances::default();
        for n in 2..=6 {
            let m = brownian_model(n).unwrap();
            let r = Mat::identity(n, n);
            let conv = strat_to_ito(&m, &r, 0.0, &tol).unwrap();
            let closed = m.ito_drift_override(&r, 0.0).unwrap().unwrap();
            assert!((conv.value - &closed).norm() < 1e-12);
            let expected = Mat::identity(n, n) * (-((n - 1) as f64) / 4.0);
            assert!((closed - expected).norm() < 1e-15);
        }
    }

    #[test]
    fn ode_case_has_no_correction() {
        let m = CustomModel::new(
            3,
            0,
            |r, _| SkewMatrix::antisymmetrize(&(r * 2.0)),
            |_, _, _| unreachable!(),
        )
        .unwrap();
        let r = random_rotation(3, &mut substream(9, 0, Purpose::Init));
        let drift = strat_to_ito(&m, r.matrix(), 0.0, &Tolerances::default()).unwrap();
        let strat = m.drift_strat(r.matrix(), 0.0).unwrap();
        assert_eq!(drift.value, strat.into_matrix());
    }

    #[test]
    fn descent_equilibrium_at_identity() {
        let m = descent_model(4, DriftSource::Converted).unwrap();
        let i = Mat::identity(4, 4);
        assert_eq!(m.tau(&i), 0.0);
        assert_eq!(m.diffusion(&i, 0.0, 2).norm_fro(), 0.0);
        let drift = ito_drift(&m, &i, 0.0, &Tolerances::default()).unwrap();
        assert_eq!(drift.value.norm(), 0.0);
        for j in 0..m.drivers() {
            assert_eq!(k_term_fd(&m, &i, 0.0, j, 1e-5).norm_fro(), 0.0);
        }
    }

    #[test]
    fn descent_tau_for_planar_rotation() {
        let n = 5;
        let m = descent_model(n, DriftSource::Converted).unwrap();
        for theta in [1e-3, 0.1, 1.0] {
            let z = skew_basis(n).unwrap()[3].scale(theta);
            let r = crate::so_n::expm_skew(&z);
            let expected = (1.0 - theta.cos()) / n as f64;
            assert!((m.tau(r.matrix()) - expected).abs() < 1e-15);
            assert!(m.tau(r.matrix()) > 0.0);
        }
    }

    #[test]
    fn descent_fd_richardson_consistency() {
        let m = descent_model(4, DriftSource::Converted).unwrap();
        let mut rng = substream(4, 0, Purpose::Init);
        for _ in 0..10 {
            let r = random_rotation(4, &mut rng);
            for j in 0..m.drivers() {
                let a = k_term_fd(&m, r.matrix(), 0.0, j, 1e-4);
                let b = k_term_fd(&m, r.matrix(), 0.0, j, 1e-5);
                assert!((a.matrix() - b.matrix()).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn drift_sources_differ_only_in_skew_coefficient() {
        let n = 4;
        let conv = descent_model(n, DriftSource::Converted).unwrap();
        let printed = descent_model(n, DriftSource::Printed).unwrap();
        let tol = Tolerances::default();
        let mut rng = substream(6, 0, Purpose::Init);
        for _ in 0..10 {
            let r = random_rotation(n, &mut rng);
            let rm = r.matrix();
            let a = ito_drift(&conv, rm, 0.0, &tol).unwrap();
            let b = ito_drift(&printed, rm, 0.0, &tol).unwrap();
            assert!((a.sym_part.matrix() - b.sym_part.matrix()).norm() < 1e-15);
            // Printed minus converted is tau/(4n) (R - R^T).
            let tau = conv.tau(rm);
            let expected = (rm - rm.transpose()) * (tau / (4.0 * n as f64));
            let diff = b.skew_part.matrix() - a.skew_part.matrix();
            assert!((diff - expected).norm() < 1e-14);
        }
    }

    #[test]
    fn descent_symmetric_part_is_pinning_term() {
        let n = 4;
        let m = descent_model(n, DriftSource::Converted).unwrap();
        let r = random_rotation(n, &mut substream(8, 0, Purpose::Init));
        let drift = ito_drift(&m, r.matrix(), 0.0, &Tolerances::default()).unwrap();
        let tau = m.tau(r.matrix());
        let expected = Mat::identity(n, n) * (-tau * tau * (n as f64 - 1.0) / 2.0);
        assert!((drift.sym_part.matrix() - expected).norm() < 1e-6);
        assert!(drift.sym_part.eigenvalues().iter().all(|&v| v <= 0.0));
    }
}
