use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use num_complex::Complex64;
use scsparc::design::{BlockLayout, DenseDesign, Design, DftDesign, ScaledAdjoint, DEFAULT_DENSE_CAP_BYTES};
use scsparc::params::{BaseMatrix, CouplingParams, SparcParams};
use scsparc::MessageVector;

fn setup() -> (SparcParams, BaseMatrix) {
    let coupling = CouplingParams::new(4, 16, 0.0).unwrap();
    let base = BaseMatrix::from_coupling(&coupling, 1.0).unwrap();
    let params = SparcParams::new(19 * 64, 64, 256, &base, 0.1).unwrap();
    (params, base)
}

fn operators(c: &mut Criterion) {
    let (params, base) = setup();
    let layout = BlockLayout::sparc(&params, &base).unwrap();
    let beta = MessageVector::random(params.m, params.l, 1).to_dense();
    let scale = ScaledAdjoint::ones(base.rows(), base.cols());

    let dense = DenseDesign::<f64>::build(layout.clone(), 2, DEFAULT_DENSE_CAP_BYTES).unwrap();
    let z = dense.apply(&beta).unwrap();
    c.bench_function("dense_real_apply", |b| b.iter(|| dense.apply(black_box(&beta)).unwrap()));
    c.bench_function("dense_real_adjoint", |b| {
        b.iter(|| dense.apply_scaled_adjoint(&scale, black_box(&z)).unwrap())
    });

    let dft = DftDesign::<f64>::build(layout.clone(), 3).unwrap();
    c.bench_function("dft_real_apply", |b| b.iter(|| dft.apply(black_box(&beta)).unwrap()));
    c.bench_function("dft_real_adjoint", |b| {
        b.iter(|| dft.apply_scaled_adjoint(&scale, black_box(&z)).unwrap())
    });

    let dftc = DftDesign::<Complex64>::build(layout, 4).unwrap();
    let zc = dftc.apply_real(&beta).unwrap();
    c.bench_function("dft_complex_adjoint", |b| {
        b.iter(|| dftc.apply_scaled_adjoint(&scale, black_box(&zc)).unwrap())
    });
}

criterion_group!(benches, operators);
criterion_main!(benches);
