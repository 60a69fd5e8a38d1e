use bandloc::disorder::{sample_phases, IndexRange, PhaseDistribution};
use bandloc::spectral::spectral_averaging_experiment;
use bandloc::transfer::{lyapunov_sweep, LyapunovConfig};
use bandloc::{BandParameters, Exec};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn lyapunov(c: &mut Criterion) {
    let p = BandParameters::new(0.5).unwrap();
    let nu = PhaseDistribution::uniform();
    let alphas: Vec<f64> = (0..8).map(|i| i as f64 * 0.7).collect();
    let cfg = LyapunovConfig::new(2_000, 8, 1);
    let mut g = c.benchmark_group("lyapunov_sweep");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| lyapunov_sweep(&nu, &p, &alphas, &cfg, exec).unwrap())
        });
    }
    g.finish();
}

fn averaging(c: &mut Criterion) {
    let p = BandParameters::new(0.5).unwrap();
    let range = IndexRange::new(-30, 29).unwrap();
    let omega = sample_phases(&PhaseDistribution::uniform(), 3, range).unwrap();
    let mut g = c.benchmark_group("spectral_averaging");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| spectral_averaging_experiment(&omega, 64, range, &p, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, lyapunov, averaging);
criterion_main!(benches);
