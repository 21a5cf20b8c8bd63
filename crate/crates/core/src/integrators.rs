//! One-step maps and path simulation.
//!
//! All schemes share the tangent increment
//!
//! ```text
//! Z = skew(B_{o,I}) delta + sum_j B_j sqrt(delta) eps_j
//! ```
//!
//! evaluated at the left endpoint. S-TaSP maps it to `R (I + Z + C)` with
//! `C = sqrt(I - Z^T Z) - I`, SL-EM to `R exp(Z)`. The Euclidean baseline
//! ignores the group and adds `R B_{o,I} delta + sum_j R B_j dW_j`.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{fill_standard_normal, substream, Purpose};
use crate::sde_model::{ito_drift, SdeModel};
use crate::so_n::{
    correction_if_contraction, expm_skew, orthogonality_defect, Mat, Rotation,
    SkewMatrix, SqrtMethod,
};
use crate::tolerances::Tolerances;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Tasp,
    Slem,
    Euclidean,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Tasp => "tasp",
            Scheme::Slem => "slem",
            Scheme::Euclidean => "euclidean",
        }
    }

    pub fn preserves_geometry(self) -> bool {
        !matches!(self, Scheme::Euclidean)
    }
}

/// Brownian increments of one path on a uniform grid, row-major
/// `m_steps x d`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTable {
    pub d: usize,
    pub m_steps: usize,
    pub delta: f64,
    pub increments: Vec<f64>,
    pub seed: u64,
    pub path_id: u64,
}

impl NoiseTable {
    pub fn zeros(d: usize, m_steps: usize, delta: f64) -> Self {
        Self {
            d,
            m_steps,
            delta,
            increments: vec![0.0; d * m_steps],
            seed: 0,
            path_id: 0,
        }
    }

    /// Increments `dW_j` of step `m`.
    pub fn row(&self, m: usize) -> &[f64] {
        &self.increments[m * self.d..(m + 1) * self.d]
    }
}

/// Noise table of path 0 for `seed`.
pub fn generate_noise(d: usize, m_steps: usize, delta: f64, seed: u64) -> NoiseTable {
    generate_path_noise(d, m_steps, delta, seed, 0)
}

/// Noise table drawn from the main stream of `(seed, path_id)`; entries are
/// i.i.d. `N(0, delta)`.
pub fn generate_path_noise(
    d: usize,
    m_steps: usize,
    delta: f64,
    seed: u64,
    path_id: u64,
) -> NoiseTable {
    let mut rng = substream(seed, path_id, Purpose::Main);
    let mut increments = vec![0.0; d * m_steps];
    fill_standard_normal(&mut rng, &mut increments);
    let sd = delta.sqrt();
    for v in increments.iter_mut() {
        *v *= sd;
    }
    NoiseTable {
        d,
        m_steps,
        delta,
        increments,
        seed,
        path_id,
    }
}

/// Same Brownian path on a grid `factor` times coarser: each row is the sum
/// of `factor` consecutive fine rows.
pub fn coarsen(noise: &NoiseTable, factor: usize) -> Result<NoiseTable> {
    if factor == 0 || !noise.m_steps.is_multiple_of(factor) {
        return Err(Error::NonDivisibleCoarsening {
            factor,
            steps: noise.m_steps,
        });
    }
    let m_steps = noise.m_steps / factor;
    let d = noise.d;
    let mut increments = vec![0.0; m_steps * d];
    for (m, out) in increments.chunks_mut(d.max(1)).enumerate().take(m_steps) {
        for k in 0..factor {
            for (o, v) in out.iter_mut().zip(noise.row(m * factor + k)) {
                *o += v;
            }
        }
    }
    Ok(NoiseTable {
        d,
        m_steps,
        delta: noise.delta * factor as f64,
        increments,
        seed: noise.seed,
        path_id: noise.path_id,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    pub delta: f64,
    pub sqrt_method: SqrtMethod,
    pub pd_margin: f64,
    pub max_retries: usize,
    /// Record the orthogonality defect after every step.
    pub record_diagnostics: bool,
    /// Record wall time of every step map.
    pub record_timing: bool,
    /// Keep every `record_stride`-th state in the path record.
    pub record_stride: usize,
    pub tol: Tolerances,
}

impl StepConfig {
    pub fn new(delta: f64) -> Self {
        let tol = Tolerances::default();
        Self {
            delta,
            sqrt_method: SqrtMethod::Exact,
            pd_margin: tol.pd_margin,
            max_retries: 100,
            record_diagnostics: true,
            record_timing: false,
            record_stride: 1,
            tol,
        }
    }

    pub fn with_sqrt_method(mut self, method: SqrtMethod) -> Self {
        self.sqrt_method = method;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    pub fn with_timing(mut self, on: bool) -> Self {
        self.record_timing = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidStepConfig(msg.to_string()));
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad("delta must be positive and finite");
        }
        if self.max_retries < 1 {
            return bad("max_retries must be at least 1");
        }
        if !(0.0..1.0).contains(&self.pd_margin) {
            return bad("pd_margin must lie in [0, 1)");
        }
        if self.record_stride < 1 {
            return bad("record_stride must be at least 1");
        }
        if let SqrtMethod::Taylor(0) = self.sqrt_method {
            return bad("taylor order must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepDiagnostics {
    /// Rejected increments before acceptance.
    pub retries: usize,
    /// `||R^T R - I||_F` of the new state, when recorded.
    pub defect: Option<f64>,
    /// Determinant of the new state, when recorded.
    pub det: Option<f64>,
    /// Wall time of the step map, zero when timing is off.
    pub nanos: u64,
}

/// Drift part of the tangent increment, `skew(B_{o,I}) delta`.
fn drift_increment(
    model: &dyn SdeModel,
    r: &Mat,
    t: f64,
    delta: f64,
    tol: &Tolerances,
) -> Result<SkewMatrix> {
    Ok(ito_drift(model, r, t, tol)?.skew_part.scale(delta))
}

fn check_eps(model: &dyn SdeModel, eps: &[f64]) -> Result<()> {
    if eps.len() != model.drivers() {
        return Err(Error::DriverMismatch {
            model: model.drivers(),
            got: eps.len(),
        });
    }
    Ok(())
}

/// `Z = (B_{o,I} - 1/2 sum_j B_j^2) delta + sum_j B_j sqrt(delta) eps_j`.
///
/// The symmetric part of `B_{o,I}` is exactly the pinning term, so the drift
/// factor is the skew part of the Itô drift and `Z` is skew by construction.
pub fn tangent_increment(
    model: &dyn SdeModel,
    r: &Mat,
    t: f64,
    delta: f64,
    eps: &[f64],
    tol: &Tolerances,
) -> Result<SkewMatrix> {
    check_eps(model, eps)?;
    let drift = drift_increment(model, r, t, delta, tol)?;
    let noise = model.diffusion_combination(r, t, eps);
    Ok(drift.add_scaled(delta.sqrt(), &noise))
}

fn defect_if(cfg: &StepConfig, m: &Mat) -> Option<f64> {
    cfg.record_diagnostics.then(|| orthogonality_defect(m))
}

fn det_if(cfg: &StepConfig, m: &Mat) -> Option<f64> {
    cfg.record_diagnostics.then(|| m.determinant())
}

fn elapsed(start: Option<Instant>) -> u64 {
    start.map_or(0, |s| s.elapsed().as_nanos() as u64)
}

/// S-TaSP step with standard normal draws `eps`. Rejected increments are
/// redrawn from `resample`.
pub fn tasp_step_with<R: Rng + ?Sized>(
    model: &dyn SdeModel,
    r: &Rotation,
    t: f64,
    cfg: &StepConfig,
    eps: &[f64],
    resample: &mut R,
) -> Result<(Rotation, StepDiagnostics)> {
    check_eps(model, eps)?;
    let start = cfg.record_timing.then(Instant::now);
    let rm = r.matrix();
    let drift = drift_increment(model, rm, t, cfg.delta, &cfg.tol)?;
    let sd = cfg.delta.sqrt();

    let mut z = drift.add_scaled(sd, &model.diffusion_combination(rm, t, eps));
    let mut retries = 0;
    let mut redraw = vec![0.0; eps.len()];
    let c = loop {
        if let Some(c) = correction_if_contraction(&z, cfg.sqrt_method, cfg.pd_margin) {
            break c;
        }
        retries += 1;
        if retries >= cfg.max_retries {
            return Err(Error::RetriesExhausted { retries });
        }
        fill_standard_normal(resample, &mut redraw);
        z = drift.add_scaled(sd, &model.diffusion_combination(rm, t, &redraw));
    };

    let mut local = z.into_matrix() + c.into_matrix();
    for i in 0..local.nrows() {
        local[(i, i)] += 1.0;
    }
    let next = rm * local;
    let nanos = elapsed(start);
    let diag = StepDiagnostics {
        retries,
        defect: defect_if(cfg, &next),
        det: det_if(cfg, &next),
        nanos,
    };
    Ok((Rotation::new_unchecked(next), diag))
}

/// S-TaSP step drawing its increments from `rng`.
pub fn tasp_step<R: Rng + ?Sized>(
    model: &dyn SdeModel,
    r: &Rotation,
    t: f64,
    cfg: &StepConfig,
    rng: &mut R,
) -> Result<(Rotation, StepDiagnostics)> {
    let mut eps = vec![0.0; model.drivers()];
    fill_standard_normal(rng, &mut eps);
    tasp_step_with(model, r, t, cfg, &eps, rng)
}

/// SL-EM step `R exp(Z)` with standard normal draws `eps`.
pub fn slem_step_with(
    model: &dyn SdeModel,
    r: &Rotation,
    t: f64,
    cfg: &StepConfig,
    eps: &[f64],
) -> Result<(Rotation, StepDiagnostics)> {
    let start = cfg.record_timing.then(Instant::now);
    let z = tangent_increment(model, r.matrix(), t, cfg.delta, eps, &cfg.tol)?;
    let next = r.matrix() * expm_skew(&z).into_matrix();
    let nanos = elapsed(start);
    let diag = StepDiagnostics {
        retries: 0,
        defect: defect_if(cfg, &next),
        det: det_if(cfg, &next),
        nanos,
    };
    Ok((Rotation::new_unchecked(next), diag))
}

pub fn slem_step<R: Rng + ?Sized>(
    model: &dyn SdeModel,
    r: &Rotation,
    t: f64,
    cfg: &StepConfig,
    rng: &mut R,
) -> Result<(Rotation, StepDiagnostics)> {
    let mut eps = vec![0.0; model.drivers()];
    fill_standard_normal(rng, &mut eps);
    slem_step_with(model, r, t, cfg, &eps)
}

/// Euclidean Euler-Maruyama `M + M B_{o,I} delta + sum_j M B_j sqrt(delta) eps_j`,
/// with no correction back to the group.
pub fn euclidean_em_step_with(
    model: &dyn SdeModel,
    m: &Mat,
    t: f64,
    cfg: &StepConfig,
    eps: &[f64],
) -> Result<(Mat, StepDiagnostics)> {
    check_eps(model, eps)?;
    let start = cfg.record_timing.then(Instant::now);
    let drift = ito_drift(model, m, t, &cfg.tol)?;
    let noise = model.diffusion_combination(m, t, eps);
    let increment = drift.value * cfg.delta + noise.into_matrix() * cfg.delta.sqrt();
    let next = m + m * increment;
    let nanos = elapsed(start);
    let diag = StepDiagnostics {
        retries: 0,
        defect: defect_if(cfg, &next),
        det: det_if(cfg, &next),
        nanos,
    };
    Ok((next, diag))
}

pub fn euclidean_em_step<R: Rng + ?Sized>(
    model: &dyn SdeModel,
    m: &Mat,
    t: f64,
    cfg: &StepConfig,
    rng: &mut R,
) -> Result<Mat> {
    let mut eps = vec![0.0; model.drivers()];
    fill_standard_normal(rng, &mut eps);
    Ok(euclidean_em_step_with(model, m, t, cfg, &eps)?.0)
}

/// One simulated trajectory with per-step diagnostics.
#[derive(Debug, Clone)]
pub struct PathRecord {
    pub scheme: Scheme,
    pub delta: f64,
    /// Number of steps between consecutive recorded states.
    pub stride: usize,
    /// Times of the recorded states, `k * stride * delta`.
    pub times: Vec<f64>,
    /// Recorded states; rotations for geometry-preserving schemes.
    pub states: Vec<Mat>,
    /// Orthogonality defect after each step (empty when not recorded).
    pub defects: Vec<f64>,
    /// Determinant after each step (empty when not recorded).
    pub determinants: Vec<f64>,
    /// Rejected increments at each step.
    pub retries: Vec<usize>,
    /// Wall time of each step map in nanoseconds (zeros when not timed).
    pub step_nanos: Vec<u64>,
}

impl PathRecord {
    pub fn steps(&self) -> usize {
        self.retries.len()
    }

    pub fn final_state(&self) -> &Mat {
        self.states.last().expect("path holds its initial state")
    }

    /// Recorded state `k` validated as a rotation.
    pub fn rotation(&self, k: usize, tol: &Tolerances) -> Result<Rotation> {
        Rotation::new(self.states[k].clone(), tol)
    }

    pub fn max_defect(&self) -> f64 {
        self.defects.iter().copied().fold(0.0, f64::max)
    }

    pub fn min_det(&self) -> f64 {
        self.determinants.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Runs `scheme` over every row of `noise`, starting from `r0`.
///
/// Rejected S-TaSP increments are redrawn from the resample stream of the
/// table's `(seed, path_id)`, so the table itself stays shared between
/// schemes and between coarsenings of the same path.
pub fn simulate_path(
    model: &dyn SdeModel,
    scheme: Scheme,
    r0: &Rotation,
    noise: &NoiseTable,
    cfg: &StepConfig,
) -> Result<PathRecord> {
    cfg.validate()?;
    if noise.d != model.drivers() {
        return Err(Error::DriverMismatch {
            model: model.drivers(),
            got: noise.d,
        });
    }
    if (cfg.delta - noise.delta).abs() > 1e-12 * noise.delta {
        return Err(Error::StepSizeMismatch {
            config: cfg.delta,
            noise: noise.delta,
        });
    }
    if r0.dim() != model.dim() {
        return Err(Error::ShapeMismatch {
            expected: (model.dim(), model.dim()),
            actual: (r0.dim(), r0.dim()),
        });
    }

    let m_steps = noise.m_steps;
    let stride = cfg.record_stride;
    let mut rec = PathRecord {
        scheme,
        delta: cfg.delta,
        stride,
        times: Vec::with_capacity(m_steps / stride + 1),
        states: Vec::with_capacity(m_steps / stride + 1),
        defects: Vec::with_capacity(if cfg.record_diagnostics { m_steps } else { 0 }),
        determinants: Vec::with_capacity(if cfg.record_diagnostics { m_steps } else { 0 }),
        retries: Vec::with_capacity(m_steps),
        step_nanos: Vec::with_capacity(m_steps),
    };
    rec.times.push(0.0);
    rec.states.push(r0.matrix().clone());

    let mut resample = substream(noise.seed, noise.path_id, Purpose::Resample);
    let inv_sd = 1.0 / cfg.delta.sqrt();
    let mut eps = vec![0.0; noise.d];
    let mut state = r0.matrix().clone();

    for m in 0..m_steps {
        for (e, w) in eps.iter_mut().zip(noise.row(m)) {
            *e = w * inv_sd;
        }
        let t = m as f64 * cfg.delta;
        let at = |source| Error::AtStep {
            step: m,
            source: Box::new(source),
        };
        let (next, diag) = match scheme {
            Scheme::Tasp => {
                let r = Rotation::new_unchecked(state);
                let (next, diag) =
                    tasp_step_with(model, &r, t, cfg, &eps, &mut resample).map_err(at)?;
                (next.into_matrix(), diag)
            }
            Scheme::Slem => {
                let r = Rotation::new_unchecked(state);
                let (next, diag) = slem_step_with(model, &r, t, cfg, &eps).map_err(at)?;
                (next.into_matrix(), diag)
            }
            Scheme::Euclidean => euclidean_em_step_with(model, &state, t, cfg, &eps).map_err(at)?,
        };
        state = next;
        rec.retries.push(diag.retries);
        rec.step_nanos.push(diag.nanos);
        if let Some(d) = diag.defect {
            rec.defects.push(d);
        }
        if let Some(d) = diag.det {
            rec.determinants.push(d);
        }
        if (m + 1) % stride == 0 {
            rec.times.push((m + 1) as f64 * cfg.delta);
            rec.states.push(state.clone());
        }
    }
    Ok(rec)
}
