use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rotasde_core::ensemble::{simulate_ensemble, EnsembleSpec, Execution, InitialState};
use rotasde_core::integrators::{Scheme, StepConfig};
use rotasde_core::sde_model::{brownian_model, descent_model, DriftSource};

fn ensembles(c: &mut Criterion) {
    let mut group = c.benchmark_group("ensemble");
    group.sample_size(10);
    let brownian = brownian_model(6).unwrap();
    let descent = descent_model(6, DriftSource::Converted).unwrap();
    for (name, model) in [
        ("brownian_n6", &brownian as &dyn rotasde_core::sde_model::SdeModel),
        ("descent_n6", &descent),
    ] {
        let spec = EnsembleSpec {
            model,
            scheme: Scheme::Tasp,
            cfg: StepConfig::new(0.01).with_stride(100),
            m_steps: 200,
            n_paths: 64,
            seed: 7,
            initial: InitialState::Random,
        };
        for exec in [Execution::Parallel, Execution::Sequential] {
            group.bench_with_input(BenchmarkId::new(name, format!("{exec:?}")), &exec, |b, &exec| {
                b.iter(|| simulate_ensemble(&spec, exec).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, ensembles);
criterion_main!(benches);
