use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rotasde_core::integrators::{slem_step_with, tasp_step_with, StepConfig};
use rotasde_core::rng::{random_rotation, standard_normal, substream, Purpose};
use rotasde_core::sde_model::{descent_model, DriftSource, SdeModel};
use rotasde_core::so_n::SqrtMethod;

fn step_maps(c: &mut Criterion) {
    let mut group = c.benchmark_group("step");
    for n in [3usize, 10, 30, 50] {
        let model = descent_model(n, DriftSource::Converted).unwrap();
        let mut rng = substream(1, 0, Purpose::Init);
        let r = random_rotation(n, &mut rng);
        let eps: Vec<f64> = (0..model.drivers()).map(|_| standard_normal(&mut rng)).collect();
        let cfg = StepConfig::new(1e-3);
        let taylor = cfg.with_sqrt_method(SqrtMethod::Taylor(5));
        let mut resample = substream(1, 0, Purpose::Resample);

        group.bench_function(BenchmarkId::new("tasp_exact", n), |b| {
            b.iter(|| tasp_step_with(&model, &r, 0.0, &cfg, &eps, &mut resample).unwrap())
        });
        group.bench_function(BenchmarkId::new("tasp_taylor5", n), |b| {
            b.iter(|| tasp_step_with(&model, &r, 0.0, &taylor, &eps, &mut resample).unwrap())
        });
        group.bench_function(BenchmarkId::new("slem", n), |b| {
            b.iter(|| slem_step_with(&model, &r, 0.0, &cfg, &eps).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, step_maps);
criterion_main!(benches);
