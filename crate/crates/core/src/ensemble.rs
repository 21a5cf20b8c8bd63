//! Monte-Carlo ensembles of independent paths.
//!
//! Every path draws from its own RNG substreams, so results are identical
//! whether paths run on the rayon pool or one after another.

use serde::{Deserialize, Serialize};

use crate::analysis::{fit_order, mean, sup_sq_distance, ConvergenceReport};
use crate::error::{Error, Result};
use crate::integrators::{coarsen, generate_path_noise, simulate_path, PathRecord, Scheme, StepConfig};
use crate::rng::{random_rotation, substream, Purpose};
use crate::sde_model::SdeModel;
use crate::so_n::Rotation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    /// rayon data-parallel map; falls back to sequential without the
    /// `parallel` feature.
    Parallel,
    Sequential,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// `f(0), ..., f(count - 1)` in index order.
pub fn map_paths<T, F>(exec: Execution, count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..count).into_par_iter().map(f).collect()
        }
        _ => (0..count).map(f).collect(),
    }
}

/// Like [`map_paths`]; on failure returns the error of the lowest index.
pub fn try_map_paths<T, F>(exec: Execution, count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    map_paths(exec, count, f).into_iter().collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    Identity,
    Fixed(Rotation),
    /// Independent per path, from the path's init stream.
    Random,
}

impl InitialState {
    pub fn for_path(&self, n: usize, seed: u64, path_id: u64) -> Rotation {
        match self {
            InitialState::Identity => Rotation::identity(n),
            InitialState::Fixed(r) => r.clone(),
            InitialState::Random => random_rotation(n, &mut substream(seed, path_id, Purpose::Init)),
        }
    }
}

#[derive(Clone)]
pub struct EnsembleSpec<'a> {
    pub model: &'a dyn SdeModel,
    pub scheme: Scheme,
    pub cfg: StepConfig,
    pub m_steps: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub initial: InitialState,
}

pub fn simulate_one(spec: &EnsembleSpec<'_>, path_id: u64) -> Result<PathRecord> {
    let noise = generate_path_noise(
        spec.model.drivers(),
        spec.m_steps,
        spec.cfg.delta,
        spec.seed,
        path_id,
    );
    let r0 = spec.initial.for_path(spec.model.dim(), spec.seed, path_id);
    simulate_path(spec.model, spec.scheme, &r0, &noise, &spec.cfg)
}

pub fn simulate_ensemble(spec: &EnsembleSpec<'_>, exec: Execution) -> Result<Vec<PathRecord>> {
    try_map_paths(exec, spec.n_paths, |i| simulate_one(spec, i as u64))
}

/// Number of steps of size `delta` in `[0, t_final]`, if it is an integer.
pub fn steps_for(t_final: f64, delta: f64) -> Result<usize> {
    if !(delta > 0.0 && t_final >= 0.0) {
        return Err(Error::InvalidStepConfig(format!(
            "need delta > 0 and T >= 0, got delta = {delta}, T = {t_final}"
        )));
    }
    let ratio = t_final / delta;
    let m = ratio.round();
    if (ratio - m).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::InvalidStepConfig(format!(
            "T / delta = {ratio} is not an integer"
        )));
    }
    Ok(m as usize)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceSpec {
    /// Coarse step sizes; each must be an integer multiple of `reference_delta`.
    pub deltas: Vec<f64>,
    pub reference_delta: f64,
    pub reference_scheme: Scheme,
    pub schemes: Vec<Scheme>,
    pub t_final: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub initial: InitialState,
    /// Template for every run; `delta` and `record_stride` are overridden.
    pub cfg: StepConfig,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Squared sup-distances of every coarse run to the reference, indexed
/// `[scheme][delta]`, for one path.
fn coupled_path_errors(model: &dyn SdeModel, spec: &ConvergenceSpec, factors: &[usize], path_id: u64) -> Result<Vec<Vec<f64>>> {
    let m_ref = steps_for(spec.t_final, spec.reference_delta)?;
    let fine = generate_path_noise(model.drivers(), m_ref, spec.reference_delta, spec.seed, path_id);
    let r0 = spec.initial.for_path(model.dim(), spec.seed, path_id);

    let stride = factors.iter().copied().fold(0, gcd);
    let mut ref_cfg = spec.cfg;
    ref_cfg.delta = spec.reference_delta;
    ref_cfg.record_stride = stride;
    let reference = simulate_path(model, spec.reference_scheme, &r0, &fine, &ref_cfg)?;

    let mut out = Vec::with_capacity(spec.schemes.len());
    for &scheme in &spec.schemes {
        let mut row = Vec::with_capacity(factors.len());
        for (&delta, &factor) in spec.deltas.iter().zip(factors) {
            let noise = coarsen(&fine, factor)?;
            let mut cfg = spec.cfg;
            cfg.delta = delta;
            cfg.record_stride = 1;
            let coarse = simulate_path(model, scheme, &r0, &noise, &cfg)?;
            row.push(sup_sq_distance(&coarse, &reference)?);
        }
        out.push(row);
    }
    Ok(out)
}

/// Strong convergence study with coupled noise: every coarse path is driven
/// by sums of the reference path's increments. Returns one report per entry
/// of `spec.schemes`.
pub fn convergence_study(
    model: &dyn SdeModel,
    spec: &ConvergenceSpec,
    exec: Execution,
) -> Result<Vec<ConvergenceReport>> {
    if spec.n_paths == 0 {
        return Err(Error::InvalidStepConfig("n_paths must be positive".into()));
    }
    let factors = spec
        .deltas
        .iter()
        .map(|&d| {
            steps_for(spec.t_final, d)?;
            steps_for(d, spec.reference_delta).map_err(|_| Error::NonDivisibleCoarsening {
                factor: (d / spec.reference_delta).round() as usize,
                steps: steps_for(spec.t_final, spec.reference_delta).unwrap_or(0),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if factors.contains(&0) {
        return Err(Error::InvalidStepConfig(
            "coarse steps must not be smaller than the reference step".into(),
        ));
    }

    let per_path = try_map_paths(exec, spec.n_paths, |i| {
        coupled_path_errors(model, spec, &factors, i as u64)
    })?;

    spec.schemes
        .iter()
        .enumerate()
        .map(|(s, _)| {
            let errors: Vec<f64> = (0..spec.deltas.len())
                .map(|k| {
                    let sq: Vec<f64> = per_path.iter().map(|p| p[s][k]).collect();
                    mean(&sq).sqrt()
                })
                .collect();
            fit_order(&spec.deltas, &errors, spec.n_paths)
        })
        .collect()
}
