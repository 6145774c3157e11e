use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use qsd_lab::killed_sim::{noise_len, step};
use qsd_lab::lyapunov::{drift_ratio, select_params, LyapunovFamily, SelectOptions};
use qsd_lab::qsd_estimate::{grid_oracle_kl_1d, Binning, Counts, OracleGrid};
use qsd_lab::rng;
use qsd_lab::{Family, InteractionSpec, PotentialSpec, ProcessSpec, State};

fn euler_step(c: &mut Criterion) {
    let kl = ProcessSpec::new(Family::KineticLangevin, 1.0, PotentialSpec::quadratic(1, 1.0, 1.0));
    let s = State::new(vec![0.3], vec![0.1], vec![]);
    let mut noise = vec![0.0; noise_len(&kl)];
    rng::fill_normal(&mut rng::stream(1, "bench", 0), &mut noise);
    c.bench_function("step/kl-1d-harmonic", |b| b.iter(|| step(&kl, black_box(&s), 1e-3, &noise).unwrap()));

    let lj = PotentialSpec::singular(2, 3, 1.0, InteractionSpec::lennard_jones(1.0, 1.0), None);
    let gl = ProcessSpec::generalized(1.0, 1.0, 1.0, lj);
    let s = State::new(vec![0.0, 0.0, 1.2, 0.0, 0.0, 1.3], vec![0.1; 6], vec![0.0; 6]);
    let mut noise = vec![0.0; noise_len(&gl)];
    rng::fill_normal(&mut rng::stream(1, "bench", 1), &mut noise);
    c.bench_function("step/gl-lj-3x2d", |b| b.iter(|| step(&gl, black_box(&s), 1e-3, &noise).unwrap()));
}

fn lyapunov_ratio(c: &mut Criterion) {
    let proc = ProcessSpec::generalized(1.0, 1.0, 1.0, PotentialSpec::poly(1, 4.0, 1.0, 1.0));
    let p = select_params(LyapunovFamily::GlRegular, &proc, 0.8, &SelectOptions::default()).unwrap();
    let s = State::new(vec![1.7], vec![-2.0], vec![0.5]);
    c.bench_function("drift_ratio/gl-regular", |b| b.iter(|| drift_ratio(&p, &proc, black_box(&s)).unwrap()));

    let nh = ProcessSpec::new(Family::NoseHoover, 1.0, PotentialSpec::poly(1, 4.0, 1.0, 1.0));
    let p = select_params(LyapunovFamily::NoseHoover, &nh, 1.0, &SelectOptions::default()).unwrap();
    let s = State::new(vec![1.7], vec![-2.0], vec![-3.0]);
    c.bench_function("drift_ratio/nose-hoover", |b| b.iter(|| drift_ratio(&p, &nh, black_box(&s)).unwrap()));
}

fn histogram(c: &mut Criterion) {
    let xs: Vec<f64> = (0..10_000).map(|i| ((i * 7919) % 10_000) as f64 / 5000.0 - 1.0).collect();
    c.bench_function("histogram/10k", |b| {
        b.iter(|| {
            let mut h = Counts::new(Binning::new(-1.0, 1.0, 20));
            for &x in &xs {
                h.add(x);
            }
            h.histogram()
        })
    });
}

fn oracle(c: &mut Criterion) {
    let pot = PotentialSpec::quadratic(1, 1.0, 1.0);
    let grid = OracleGrid { lo: -1.0, hi: 1.0, nx: 40, nv: 40, v_cut: 5.0 };
    let mut g = c.benchmark_group("oracle");
    g.sample_size(10);
    g.bench_function("kl-1d-40x40", |b| b.iter(|| grid_oracle_kl_1d(&pot, 1.0, black_box(&grid)).unwrap()));
    g.finish();
}

criterion_group!(kernels, euler_step, lyapunov_ratio, histogram, oracle);
criterion_main!(kernels);
