use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use superhet::doppler::{average_harmonics, DopplerSpec};
use superhet::estimation::optimize_local_mw;
use superhet::floquet::{solve_time_domain_with, solve_truncated};
use superhet::model::harmonics_first_order;
use superhet::units::{khz, mhz};
use superhet::{AtomSystem, DriveConfig, TimeDomainOptions};

fn setup() -> (AtomSystem, DriveConfig, DopplerSpec) {
    let atom = AtomSystem::default().with_dephasing(mhz(2.76));
    let spec = DopplerSpec::for_atom(&atom).unwrap();
    let drive = DriveConfig::resonant(mhz(5.53), mhz(17.12), mhz(14.08), mhz(1e-3), mhz(2.0));
    (atom, drive, spec)
}

fn kernels(c: &mut Criterion) {
    let (atom, drive, spec) = setup();
    c.bench_function("closed_form", |b| b.iter(|| harmonics_first_order(black_box(&atom), black_box(&drive))));
    for order in [1, 4, 8] {
        c.bench_function(&format!("truncated_order_{order}"), |b| {
            b.iter(|| solve_truncated(black_box(&atom), black_box(&drive), order))
        });
    }
    let opts = TimeDomainOptions::recommended(&atom, &drive);
    let mut g = c.benchmark_group("slow");
    g.sample_size(10);
    g.bench_function("time_domain", |b| b.iter(|| solve_time_domain_with(&atom, &drive, &opts)));
    g.bench_function("doppler_average", |b| b.iter(|| average_harmonics(&atom, black_box(&drive), &spec)));
    g.bench_function("optimize_local", |b| {
        b.iter(|| optimize_local_mw(&atom, &drive, &spec, khz(100.0), (khz(10.0), mhz(1000.0))))
    });
    g.finish();
}

criterion_group!(benches, kernels);
criterion_main!(benches);
