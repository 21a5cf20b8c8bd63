use std::time::Instant;

use rotasde_core::analysis::{
    fit_order, log_increment_samples, qq_against_normal, timing_summary, variance,
    ConvergenceReport, LogScale,
};
use rotasde_core::ensemble::{convergence_study, map_paths, steps_for, ConvergenceSpec, Execution};
use rotasde_core::integrators::{
    generate_path_noise, simulate_path, NoiseTable, PathRecord, Scheme, StepConfig,
};
use rotasde_core::sde_model::{brownian_model, descent_model, SdeModel};
use rotasde_core::so_n::orthogonality_defect;
use rotasde_core::Tolerances;
use serde_json::{json, Value};

use crate::config::{Experiment, ExperimentConfig, ModelKind};
use crate::error::CliError;
use crate::output::{num, OutputSet};

/// Benchmarks with fewer measured steps than this get a warning.
pub const MIN_BENCHMARK_STEPS: usize = 10_000;

/// Wall-clock split between simulation and file output.
#[derive(Debug, Default, Clone, Copy)]
pub struct Timings {
    pub compute: f64,
    pub write: f64,
}

pub struct Outcome {
    pub summary: Value,
    pub timings: Timings,
}

pub fn run(
    experiment: Experiment,
    cfg: &ExperimentConfig,
    out: &mut OutputSet,
) -> Result<Outcome, CliError> {
    match experiment {
        Experiment::Simulate => simulate(cfg, out),
        Experiment::Converge => converge(cfg, out),
        Experiment::BrownianStats => brownian_stats(cfg, out),
        Experiment::CheckGeometry => check_geometry(cfg, out),
        Experiment::Benchmark => benchmark(cfg, out),
    }
}

fn build_model(cfg: &ExperimentConfig) -> Result<Box<dyn SdeModel>, CliError> {
    let model: Box<dyn SdeModel> = match cfg.model {
        ModelKind::Brownian => Box::new(brownian_model(cfg.n).map_err(|e| CliError::from_core("n", e))?),
        ModelKind::Descent => Box::new(
            descent_model(cfg.n, cfg.drift_source.into()).map_err(|e| CliError::from_core("n", e))?,
        ),
    };
    Ok(model)
}

fn single_scheme(cfg: &ExperimentConfig, experiment: Experiment) -> Result<Scheme, CliError> {
    match cfg.schemes.as_slice() {
        [s] => Ok(*s),
        _ => Err(CliError::Config(format!(
            "schemes: {experiment} takes exactly one scheme, got {}",
            cfg.schemes.len()
        ))),
    }
}

/// One path per id, each driven by its own noise substream; errors carry
/// the scheme and the lowest failing path id.
fn run_paths(
    model: &dyn SdeModel,
    scheme: Scheme,
    cfg: &ExperimentConfig,
    step: &StepConfig,
    zero_noise: bool,
    exec: Execution,
) -> Result<Vec<PathRecord>, CliError> {
    let m_steps = cfg.m_steps();
    let initial = cfg.initial_state()?;
    let results = map_paths(exec, cfg.n_paths, |i| {
        let noise = if zero_noise {
            NoiseTable::zeros(model.drivers(), m_steps, step.delta)
        } else {
            generate_path_noise(model.drivers(), m_steps, step.delta, cfg.seed, i as u64)
        };
        let r0 = initial.for_path(model.dim(), cfg.seed, i as u64);
        simulate_path(model, scheme, &r0, &noise, step)
    });
    results
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| CliError::from_core(&format!("{} path {i}", scheme.name()), e)))
        .collect()
}

fn simulate(cfg: &ExperimentConfig, out: &mut OutputSet) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let scheme = single_scheme(cfg, Experiment::Simulate)?;
    let model = build_model(cfg)?;
    let mut step = cfg.step_config(cfg.delta);
    step.record_stride = cfg.record_stride;
    let paths = run_paths(model.as_ref(), scheme, cfg, &step, false, Execution::default())?;
    let compute = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let n = cfg.n;
    let mut header: Vec<String> = ["path_id", "step", "time"].map(String::from).to_vec();
    for i in 0..n {
        for j in 0..n {
            header.push(format!("r_{i}_{j}"));
        }
    }
    header.extend(["defect", "retries", "step_nanos"].map(String::from));
    let mut w = out.csv("trajectory.csv", &header)?;
    let mut max_defect = 0.0f64;
    let mut total_retries = 0usize;
    for (path_id, p) in paths.iter().enumerate() {
        total_retries += p.retries.iter().sum::<usize>();
        for (k, state) in p.states.iter().enumerate().skip(1) {
            let m = k * p.stride;
            let defect = p.defects[m - 1];
            max_defect = max_defect.max(defect);
            let mut row = Vec::with_capacity(header.len());
            row.push(path_id.to_string());
            row.push(m.to_string());
            row.push(num(p.times[k]));
            // nalgebra storage is column-major; the file is row-major.
            for i in 0..n {
                for j in 0..n {
                    row.push(num(state[(i, j)]));
                }
            }
            row.push(num(defect));
            row.push(p.retries[m - 1].to_string());
            row.push(p.step_nanos[m - 1].to_string());
            w.row(&row)?;
        }
    }
    w.finish()?;
    println!(
        "simulate: {} path(s) of {} steps, scheme {}, max defect {max_defect:.3e}, {total_retries} retries",
        cfg.n_paths,
        cfg.m_steps(),
        scheme.name()
    );
    Ok(Outcome {
        summary: json!({
            "scheme": scheme.name(),
            "steps": cfg.m_steps(),
            "max_defect": max_defect,
            "total_retries": total_retries,
        }),
        timings: Timings {
            compute,
            write: start.elapsed().as_secs_f64(),
        },
    })
}

fn validate_convergence(cfg: &ExperimentConfig) -> Result<f64, CliError> {
    if cfg.deltas.len() < 3 {
        return Err(CliError::Config(format!(
            "deltas: need at least 3 step sizes, got {}",
            cfg.deltas.len()
        )));
    }
    let reference = cfg
        .reference_delta
        .ok_or_else(|| CliError::Config("reference_delta: required by converge".into()))?;
    if !(reference > 0.0) {
        return Err(CliError::Config("reference_delta: must be positive".into()));
    }
    for &d in &cfg.deltas {
        if steps_for(cfg.t_final, d).map_or(true, |m| m == 0) {
            return Err(CliError::Config(format!(
                "deltas: t_final / {d} is not a positive integer"
            )));
        }
        if steps_for(d, reference).map_or(true, |m| m < 2) {
            return Err(CliError::Config(format!(
                "reference_delta: {reference} does not divide delta {d} into at least two steps"
            )));
        }
    }
    Ok(reference)
}

fn converge(cfg: &ExperimentConfig, out: &mut OutputSet) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let reference_delta = validate_convergence(cfg)?;
    let model = build_model(cfg)?;
    let reports: Vec<ConvergenceReport> = match cfg.synthetic_error_exponent {
        Some(p) => {
            let errors: Vec<f64> = cfg.deltas.iter().map(|d| d.powf(p)).collect();
            let report = fit_order(&cfg.deltas, &errors, cfg.n_paths)
                .map_err(|e| CliError::from_core("synthetic errors", e))?;
            vec![report; cfg.schemes.len()]
        }
        None => {
            let spec = ConvergenceSpec {
                deltas: cfg.deltas.clone(),
                reference_delta,
                reference_scheme: cfg.reference_scheme,
                schemes: cfg.schemes.clone(),
                t_final: cfg.t_final,
                n_paths: cfg.n_paths,
                seed: cfg.seed,
                initial: cfg.initial_state()?,
                cfg: cfg.step_config(reference_delta),
            };
            convergence_study(model.as_ref(), &spec, Execution::default())
                .map_err(|e| CliError::from_core("convergence study", e))?
        }
    };
    let compute = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let header = ["scheme", "delta", "error", "n_paths"].map(String::from);
    let mut w = out.csv("convergence.csv", &header)?;
    for (scheme, r) in cfg.schemes.iter().zip(&reports) {
        for (d, e) in r.deltas.iter().zip(&r.errors) {
            w.row(&[
                scheme.name().to_string(),
                num(*d),
                num(*e),
                r.n_paths.to_string(),
            ])?;
        }
    }
    w.finish()?;
    let orders: Vec<Value> = cfg
        .schemes
        .iter()
        .zip(&reports)
        .map(|(s, r)| {
            println!(
                "converge: {} slope {:.4} (stderr {:.4}) over {} paths",
                s.name(),
                r.slope,
                r.stderr_slope,
                r.n_paths
            );
            json!({
                "scheme": s.name(),
                "slope": r.slope,
                "stderr": r.stderr_slope,
                "intercept": r.intercept,
            })
        })
        .collect();
    let order = json!({
        "reference_delta": reference_delta,
        "reference_scheme": cfg.reference_scheme.name(),
        "synthetic": cfg.synthetic_error_exponent.is_some(),
        "schemes": orders,
    });
    out.json("order.json", &order)?;
    Ok(Outcome {
        summary: order,
        timings: Timings {
            compute,
            write: start.elapsed().as_secs_f64(),
        },
    })
}

fn brownian_stats(cfg: &ExperimentConfig, out: &mut OutputSet) -> Result<Outcome, CliError> {
    let start = Instant::now();
    if cfg.model != ModelKind::Brownian {
        return Err(CliError::Config(
            "model: brownian-stats needs the brownian model".into(),
        ));
    }
    let scheme = single_scheme(cfg, Experiment::BrownianStats)?;
    if !scheme.preserves_geometry() {
        return Err(CliError::Config(
            "schemes: log increments need a scheme that stays on the group".into(),
        ));
    }
    let model = build_model(cfg)?;
    let mut step = cfg.step_config(cfg.delta);
    step.record_stride = cfg.record_stride;
    let paths = run_paths(model.as_ref(), scheme, cfg, &step, cfg.zero_noise, Execution::default())?;
    let tol = Tolerances::default();
    let mut samples = Vec::new();
    for (i, p) in paths.iter().enumerate() {
        let s = log_increment_samples(p, LogScale::Standardized, &tol)
            .map_err(|e| CliError::from_core(&format!("path {i}"), e))?;
        samples.extend(s);
    }
    let qq = qq_against_normal(&samples).map_err(|e| CliError::from_core("qq", e))?;
    let pooled = variance(&samples);
    let deviation = qq.max_deviation(0.98);
    let compute = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let mut w = out.csv("qq.csv", &["theory_q", "sample_q"].map(String::from))?;
    for (t, s) in qq.theory_q.iter().zip(&qq.sample_q) {
        w.row(&[num(*t), num(*s)])?;
    }
    w.finish()?;
    let stats = json!({
        "scheme": scheme.name(),
        "pooled_variance": pooled,
        "sample_count": samples.len(),
        "qq_max_deviation_central_98": deviation,
        "n_paths": cfg.n_paths,
        "zero_noise": cfg.zero_noise,
    });
    out.json("variance.json", &stats)?;
    println!(
        "brownian-stats: pooled standardized variance {pooled:.5} from {} samples, QQ deviation {deviation:.4}",
        samples.len()
    );
    Ok(Outcome {
        summary: stats,
        timings: Timings {
            compute,
            write: start.elapsed().as_secs_f64(),
        },
    })
}

fn check_geometry(cfg: &ExperimentConfig, out: &mut OutputSet) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let model = build_model(cfg)?;
    let m_steps = cfg.m_steps();
    let mut step = cfg.step_config(cfg.delta);
    step.record_stride = m_steps;
    let initial = cfg.initial_state()?;
    // Worst defect over paths at each time, one column per scheme.
    let mut columns = Vec::with_capacity(cfg.schemes.len());
    let mut summary = serde_json::Map::new();
    for &scheme in &cfg.schemes {
        let paths = run_paths(model.as_ref(), scheme, cfg, &step, false, Execution::default())?;
        let mut worst = vec![0.0f64; m_steps + 1];
        for (i, p) in paths.iter().enumerate() {
            let r0 = initial.for_path(cfg.n, cfg.seed, i as u64);
            worst[0] = worst[0].max(orthogonality_defect(r0.matrix()));
            for (w, d) in worst[1..].iter_mut().zip(&p.defects) {
                *w = w.max(*d);
            }
        }
        let max_defect = worst.iter().copied().fold(0.0, f64::max);
        let min_det = paths.iter().map(|p| p.min_det()).fold(f64::INFINITY, f64::min);
        println!(
            "check-geometry: {} max defect {max_defect:.3e}, min det {min_det:.6}",
            scheme.name()
        );
        summary.insert(
            scheme.name().to_string(),
            json!({"max_defect": max_defect, "min_det": min_det}),
        );
        columns.push(worst);
    }
    let compute = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let mut header = vec!["time".to_string()];
    header.extend(cfg.schemes.iter().map(|s| format!("defect_{}", s.name())));
    let mut w = out.csv("defect.csv", &header)?;
    for m in 0..=m_steps {
        let mut row = vec![num(m as f64 * cfg.delta)];
        row.extend(columns.iter().map(|c| num(c[m])));
        w.row(&row)?;
    }
    w.finish()?;
    Ok(Outcome {
        summary: Value::Object(summary),
        timings: Timings {
            compute,
            write: start.elapsed().as_secs_f64(),
        },
    })
}

fn benchmark(cfg: &ExperimentConfig, out: &mut OutputSet) -> Result<Outcome, CliError> {
    let start = Instant::now();
    if !(cfg.schemes.contains(&Scheme::Tasp) && cfg.schemes.contains(&Scheme::Slem)) {
        return Err(CliError::Config(
            "schemes: benchmark compares tasp against slem; list both".into(),
        ));
    }
    let m_steps = cfg.m_steps();
    if cfg.warmup_steps >= m_steps {
        return Err(CliError::Config(format!(
            "warmup_steps: {} leaves nothing to measure out of {m_steps} steps",
            cfg.warmup_steps
        )));
    }
    let measured = (m_steps - cfg.warmup_steps) * cfg.n_paths;
    if measured < MIN_BENCHMARK_STEPS {
        eprintln!(
            "warning: only {measured} measured steps per scheme (fewer than {MIN_BENCHMARK_STEPS}); timings will be noisy"
        );
    }
    let model = build_model(cfg)?;
    let mut step = cfg.step_config(cfg.delta).with_timing(true);
    step.record_stride = m_steps;
    step.record_diagnostics = false;
    let initial = cfg.initial_state()?;

    // Sequential and interleaved by path so that drift in machine load
    // affects every scheme alike.
    let mut records: Vec<Vec<PathRecord>> = vec![Vec::new(); cfg.schemes.len()];
    for i in 0..cfg.n_paths {
        let noise = generate_path_noise(model.drivers(), m_steps, cfg.delta, cfg.seed, i as u64);
        let r0 = initial.for_path(cfg.n, cfg.seed, i as u64);
        for (k, &scheme) in cfg.schemes.iter().enumerate() {
            let p = simulate_path(model.as_ref(), scheme, &r0, &noise, &step)
                .map_err(|e| CliError::from_core(&format!("{} path {i}", scheme.name()), e))?;
            records[k].push(p);
        }
    }
    let groups: Vec<(Scheme, &[PathRecord])> = cfg
        .schemes
        .iter()
        .zip(&records)
        .map(|(s, r)| (*s, r.as_slice()))
        .collect();
    let rows = timing_summary(&groups, cfg.warmup_steps)
        .map_err(|e| CliError::from_core("timing", e))?;
    let compute = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let header = ["scheme", "n", "mean_ns", "median_ns", "steps"].map(String::from);
    let mut w = out.csv("timing.csv", &header)?;
    for r in &rows {
        w.row(&[
            r.scheme.name().to_string(),
            r.n.to_string(),
            num(r.mean_ns),
            num(r.median_ns),
            r.steps.to_string(),
        ])?;
    }
    w.finish()?;
    let mean_of = |s: Scheme| rows.iter().find(|r| r.scheme == s).map(|r| r.mean_ns);
    let ratio = match (mean_of(Scheme::Tasp), mean_of(Scheme::Slem)) {
        (Some(a), Some(b)) => a / b,
        _ => f64::NAN,
    };
    println!("benchmark: n = {}, mean step time tasp / slem = {ratio:.3}", cfg.n);
    Ok(Outcome {
        summary: json!({"tasp_over_slem_mean": ratio, "measured_steps": measured}),
        timings: Timings {
            compute,
            write: start.elapsed().as_secs_f64(),
        },
    })
}
