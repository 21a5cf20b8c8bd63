//! Post-processing of simulated paths: strong error and order fits,
//! distributional checks of log-increments, QQ data and timing summaries.
//!
//! Reductions over paths use [`pairwise_sum`] so results do not depend on
//! how paths were scheduled.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrators::{PathRecord, Scheme};
use crate::so_n::{logm_rotation_with, Mat, Rotation};
use crate::tolerances::Tolerances;

/// Sum with a fixed binary-tree shape.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2..=8 => values.iter().sum(),
        n => {
            let (a, b) = values.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

pub fn mean(values: &[f64]) -> f64 {
    pairwise_sum(values) / values.len() as f64
}

/// Unbiased sample variance.
pub fn variance(values: &[f64]) -> f64 {
    let m = mean(values);
    let sq: Vec<f64> = values.iter().map(|v| (v - m) * (v - m)).collect();
    pairwise_sum(&sq) / (values.len() as f64 - 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// Step sizes, strictly decreasing.
    pub deltas: Vec<f64>,
    /// Strong error estimate for each step size.
    pub errors: Vec<f64>,
    /// Fitted order: slope of `log error` against `log delta`.
    pub slope: f64,
    pub intercept: f64,
    pub n_paths: usize,
    pub stderr_slope: f64,
}

/// Index step on the reference record matching one recorded step of the
/// coarse record.
fn grid_ratio(coarse: &PathRecord, reference: &PathRecord) -> Result<usize> {
    let coarse_step = coarse.delta * coarse.stride as f64;
    let ref_step = reference.delta * reference.stride as f64;
    let ratio = coarse_step / ref_step;
    let rounded = ratio.round();
    if rounded < 1.0 || (ratio - rounded).abs() > 1e-9 * ratio {
        return Err(Error::UnpairedPaths(format!(
            "reference grid step {ref_step} does not refine coarse grid step {coarse_step}"
        )));
    }
    let k = rounded as usize;
    if (coarse.states.len() - 1) * k > reference.states.len() - 1 {
        return Err(Error::UnpairedPaths(
            "reference path is shorter than the coarse path".into(),
        ));
    }
    Ok(k)
}

/// `max_k ||coarse(t_k) - reference(t_k)||_F^2` over the coarse record times.
pub fn sup_sq_distance(coarse: &PathRecord, reference: &PathRecord) -> Result<f64> {
    let k = grid_ratio(coarse, reference)?;
    Ok(coarse
        .states
        .iter()
        .enumerate()
        .map(|(i, s)| (s - &reference.states[i * k]).norm_squared())
        .fold(0.0, f64::max))
}

/// Monte-Carlo estimate of `E[max_t ||R(t) - R_hat(t)||_F^2]^(1/2)` over
/// paired paths, comparing at the coarse grid times.
pub fn strong_error(coarse: &[PathRecord], reference: &[PathRecord]) -> Result<f64> {
    if coarse.len() != reference.len() || coarse.is_empty() {
        return Err(Error::UnpairedPaths(format!(
            "{} coarse paths vs {} reference paths",
            coarse.len(),
            reference.len()
        )));
    }
    let sups = coarse
        .iter()
        .zip(reference)
        .map(|(c, r)| sup_sq_distance(c, r))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean(&sups).sqrt())
}

/// Least-squares fit of `log error = slope * log delta + intercept`.
pub fn fit_order(deltas: &[f64], errors: &[f64], n_paths: usize) -> Result<ConvergenceReport> {
    if deltas.len() != errors.len() {
        return Err(Error::InvalidData("deltas and errors differ in length".into()));
    }
    if deltas.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: deltas.len(),
        });
    }
    if errors.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(Error::InvalidData("errors must be positive and finite".into()));
    }
    let mut pts: Vec<(f64, f64)> = deltas.iter().copied().zip(errors.iter().copied()).collect();
    pts.sort_by(|a, b| b.0.total_cmp(&a.0));
    if pts.windows(2).any(|w| !(w[0].0 > w[1].0)) || pts.last().unwrap().0 <= 0.0 {
        return Err(Error::InvalidData("step sizes must be distinct and positive".into()));
    }

    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let k = xs.len() as f64;
    let mx = mean(&xs);
    let my = mean(&ys);
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let stderr_slope = (ssr / (k - 2.0) / sxx).sqrt();

    Ok(ConvergenceReport {
        deltas: pts.iter().map(|p| p.0).collect(),
        errors: pts.iter().map(|p| p.1).collect(),
        slope,
        intercept,
        n_paths,
        stderr_slope,
    })
}

/// Scaling applied to the log-increment entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogScale {
    /// Divide by `sqrt(h / 2)`, `h` the time between recorded states; the
    /// result is approximately standard normal for Brownian motion.
    Standardized,
    Raw,
}

/// Strictly upper triangular entries of `log(R_{k-1}^T R_k)` for every pair
/// of consecutive recorded states, pooled.
pub fn log_increment_samples(
    path: &PathRecord,
    scale: LogScale,
    tol: &Tolerances,
) -> Result<Vec<f64>> {
    let h = path.delta * path.stride as f64;
    let factor = match scale {
        LogScale::Standardized => 1.0 / (h / 2.0).sqrt(),
        LogScale::Raw => 1.0,
    };
    let n = path.states.first().map_or(0, |s| s.nrows());
    let mut out = Vec::with_capacity(path.states.len().saturating_sub(1) * n * (n - 1) / 2);
    for w in path.states.windows(2) {
        let rel = Rotation::new_unchecked(w[0].transpose() * &w[1]);
        let log = logm_rotation_with(&rel, tol.log_tol)?;
        out.extend(log.upper().into_iter().map(|v| v * factor));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QqData {
    pub sample_q: Vec<f64>,
    pub theory_q: Vec<f64>,
}

impl QqData {
    /// Largest `|sample_q - theory_q|` over the central `fraction` of the
    /// plotting positions.
    pub fn max_deviation(&self, fraction: f64) -> f64 {
        let n = self.sample_q.len();
        let tail = (1.0 - fraction) / 2.0;
        self.sample_q
            .iter()
            .zip(&self.theory_q)
            .enumerate()
            .filter(|(i, _)| {
                let p = (*i as f64 + 0.5) / n as f64;
                p >= tail && p <= 1.0 - tail
            })
            .map(|(_, (s, t))| (s - t).abs())
            .fold(0.0, f64::max)
    }
}

/// Sorted samples against standard normal quantiles at `(i - 0.5) / N`.
pub fn qq_against_normal(samples: &[f64]) -> Result<QqData> {
    if samples.len() < 10 {
        return Err(Error::TooFewPoints {
            needed: 10,
            got: samples.len(),
        });
    }
    let mut sample_q = samples.to_vec();
    sample_q.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    let theory_q = (0..samples.len())
        .map(|i| normal_quantile((i as f64 + 0.5) / n))
        .collect();
    Ok(QqData { sample_q, theory_q })
}

/// Standard normal quantile function, P. J. Acklam's rational
/// approximation (relative error below 1.2e-9).
pub fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383_577_518_672_69e2,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p > 1.0 - P_LOW {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// `(t, ||R(t) - I||_F)` for every recorded state.
pub fn convergence_to_identity(path: &PathRecord) -> Vec<(f64, f64)> {
    path.times
        .iter()
        .zip(&path.states)
        .map(|(&t, s)| {
            let n = s.nrows();
            (t, (s - Mat::identity(n, n)).norm())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub scheme: Scheme,
    pub n: usize,
    pub mean_ns: f64,
    pub median_ns: f64,
    pub steps: usize,
}

/// Per-scheme step-time statistics, skipping the first `warmup` steps of
/// every path.
pub fn timing_summary(groups: &[(Scheme, &[PathRecord])], warmup: usize) -> Result<Vec<TimingRow>> {
    let mut rows = Vec::with_capacity(groups.len());
    for (scheme, paths) in groups {
        let mut nanos: Vec<f64> = paths
            .iter()
            .flat_map(|p| p.step_nanos.iter().skip(warmup).map(|&v| v as f64))
            .collect();
        if nanos.is_empty() || nanos.iter().all(|&v| v == 0.0) {
            return Err(Error::EmptyDiagnostics);
        }
        let mean_ns = mean(&nanos);
        nanos.sort_by(f64::total_cmp);
        let mid = nanos.len() / 2;
        let median_ns = if nanos.len().is_multiple_of(2) {
            0.5 * (nanos[mid - 1] + nanos[mid])
        } else {
            nanos[mid]
        };
        let n = paths
            .iter()
            .find_map(|p| p.states.first().map(|s| s.nrows()))
            .unwrap_or(0);
        rows.push(TimingRow {
            scheme: *scheme,
            n,
            mean_ns,
            median_ns,
            steps: nanos.len(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_path(state: Mat, delta: f64, steps: usize) -> PathRecord {
        PathRecord {
            scheme: Scheme::Tasp,
            delta,
            stride: 1,
            times: (0..=steps).map(|k| k as f64 * delta).collect(),
            states: vec![state; steps + 1],
            defects: vec![0.0; steps],
            determinants: vec![1.0; steps],
            retries: vec![0; steps],
            step_nanos: vec![0; steps],
        }
    }

    #[test]
    fn pairwise_sum_matches_naive() {
        let v: Vec<f64> = (0..1000).map(|i| (i as f64).sqrt()).collect();
        let naive: f64 = v.iter().sum();
        assert!((pairwise_sum(&v) - naive).abs() < 1e-9);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn strong_error_examples() {
        let a = constant_path(Mat::identity(3, 3), 0.1, 10);
        assert_eq!(strong_error(std::slice::from_ref(&a), std::slice::from_ref(&a)).unwrap(), 0.0);

        let offset = Mat::from_fn(3, 3, |i, j| (i + 2 * j) as f64 * 0.01);
        let b = constant_path(Mat::identity(3, 3) + &offset, 0.1, 10);
        let e = strong_error(std::slice::from_ref(&b), std::slice::from_ref(&a)).unwrap();
        assert!((e - offset.norm()).abs() < 1e-15);

        // Homogeneity: doubling the difference doubles the error.
        let c = constant_path(Mat::identity(3, 3) + &offset * 2.0, 0.1, 10);
        let e2 = strong_error(&[c], std::slice::from_ref(&a)).unwrap();
        assert!((e2 - 2.0 * e).abs() < 1e-14);
    }

    #[test]
    fn strong_error_on_refined_grid() {
        let coarse = constant_path(Mat::identity(2, 2), 0.4, 5);
        let mut fine = constant_path(Mat::identity(2, 2), 0.1, 20);
        // Perturb a fine state that is not on the coarse grid.
        fine.states[3] *= 2.0;
        assert_eq!(strong_error(std::slice::from_ref(&coarse), &[fine.clone()]).unwrap(), 0.0);
        fine.states[8] *= 3.0;
        let e = strong_error(&[coarse], &[fine]).unwrap();
        assert!((e - 2.0 * 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn strong_error_rejects_bad_pairs() {
        let a = constant_path(Mat::identity(2, 2), 0.1, 10);
        let b = constant_path(Mat::identity(2, 2), 0.15, 10);
        assert!(matches!(strong_error(std::slice::from_ref(&a), &[b]), Err(Error::UnpairedPaths(_))));
        assert!(matches!(strong_error(std::slice::from_ref(&a), &[]), Err(Error::UnpairedPaths(_))));
        let short = constant_path(Mat::identity(2, 2), 0.1, 5);
        assert!(strong_error(&[a], &[short]).is_err());
    }

    #[test]
    fn fit_recovers_exact_slopes() {
        let deltas: Vec<f64> = (6..=10).map(|k| 2f64.powi(-k)).collect();
        for order in [0.5, 1.0, 1.5] {
            let errors: Vec<f64> = deltas.iter().map(|d| 3.0 * d.powf(order)).collect();
            let rep = fit_order(&deltas, &errors, 1).unwrap();
            assert!((rep.slope - order).abs() < 1e-12);
            assert!((rep.intercept - 3f64.ln()).abs() < 1e-11);
            assert!(rep.stderr_slope < 1e-12);
        }
        // Input order does not matter; the report is sorted.
        let errors: Vec<f64> = deltas.iter().map(|d| d.sqrt()).collect();
        let mut rd = deltas.clone();
        let mut re = errors.clone();
        rd.reverse();
        re.reverse();
        let rep = fit_order(&rd, &re, 1).unwrap();
        assert!(rep.deltas.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn fit_needs_three_points() {
        assert_eq!(
            fit_order(&[0.1, 0.05], &[1.0, 0.7], 1),
            Err(Error::TooFewPoints { needed: 3, got: 2 })
        );
        assert!(fit_order(&[0.1, 0.05, 0.01], &[1.0, 0.0, 0.1], 1).is_err());
    }

    #[test]
    fn log_increments_of_constant_path() {
        let r = crate::rng::random_rotation(4, &mut crate::rng::substream(1, 0, crate::rng::Purpose::Init));
        let p = constant_path(r.into_matrix(), 0.01, 20);
        let s = log_increment_samples(&p, LogScale::Standardized, &Tolerances::default()).unwrap();
        assert_eq!(s.len(), 20 * 6);
        assert!(s.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn qq_examples() {
        let zeros = vec![0.0; 20];
        let qq = qq_against_normal(&zeros).unwrap();
        assert!(qq.sample_q.iter().all(|&v| v == 0.0));
        assert!(qq.theory_q.windows(2).all(|w| w[0] < w[1]));

        let sym: Vec<f64> = (1..=10).flat_map(|k| [k as f64, -(k as f64)]).collect();
        let qq = qq_against_normal(&sym).unwrap();
        let m = qq.sample_q.len();
        for i in 0..m {
            assert_eq!(qq.sample_q[i], -qq.sample_q[m - 1 - i]);
            assert!((qq.theory_q[i] + qq.theory_q[m - 1 - i]).abs() < 1e-12);
        }

        assert!(matches!(
            qq_against_normal(&[1.0; 9]),
            Err(Error::TooFewPoints { .. })
        ));
    }

    #[test]
    fn identity_distance() {
        let p = constant_path(Mat::identity(3, 3), 0.5, 4);
        let d = convergence_to_identity(&p);
        assert_eq!(d.len(), 5);
        assert!(d.iter().all(|&(_, v)| v == 0.0));
        assert_eq!(d[4].0, 2.0);
    }

    #[test]
    fn timing_examples() {
        let mut p = constant_path(Mat::identity(3, 3), 0.1, 10);
        p.step_nanos = vec![250; 10];
        let rows = timing_summary(&[(Scheme::Tasp, std::slice::from_ref(&p))], 0).unwrap();
        assert_eq!(rows[0].mean_ns, 250.0);
        assert_eq!(rows[0].median_ns, 250.0);
        assert_eq!(rows[0].steps, 10);
        assert_eq!(rows[0].n, 3);

        let empty = constant_path(Mat::identity(3, 3), 0.1, 0);
        assert_eq!(
            timing_summary(&[(Scheme::Slem, std::slice::from_ref(&empty))], 0),
            Err(Error::EmptyDiagnostics)
        );
    }
}
