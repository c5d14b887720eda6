use criterion::{criterion_group, criterion_main, Criterion};
use scsparc::amp::{AmpDecoder, DecodeConfig, SeSource};
use scsparc::channel::transmit;
use scsparc::design::{BlockLayout, Design, DftDesign};
use scsparc::params::{bits_to_nats, derive_code_params, CouplingParams, LengthRounding};
use scsparc::state_evolution::{mc_expectation, SectionExpectation};
use scsparc::MessageVector;

fn decode(c: &mut Criterion) {
    let coupling = CouplingParams::new(4, 16, 0.0).unwrap();
    let (params, base) =
        derive_code_params(bits_to_nats(1.0), 64, &coupling, 512, 1.0, 1.0 / 15.0, LengthRounding::Up).unwrap();
    let design = DftDesign::<f64>::build(BlockLayout::sparc(&params, &base).unwrap(), 1).unwrap();
    let truth = MessageVector::random(params.m, params.l, 2);
    let y = transmit(&design.apply_real(&truth.to_dense()).unwrap(), params.sigma2, 3);
    let decoder = AmpDecoder::new(&design, &params, &base).unwrap();
    let cfg = DecodeConfig {
        t_max: 25,
        early_stop: None,
    };
    c.bench_function("amp_dft_online_25_iters", |b| {
        b.iter(|| decoder.decode(&y, &cfg, SeSource::Online, None).unwrap())
    });
}

fn expectation(c: &mut Criterion) {
    let e = SectionExpectation::new(512, 10_000, 1).unwrap();
    c.bench_function("section_expectation_m512", |b| b.iter(|| e.eval(0.3).unwrap()));
    c.bench_function("section_expectation_fresh_m64", |b| {
        b.iter(|| mc_expectation(0.3, 64, 2_000, 5).unwrap())
    });
}

criterion_group!(benches, decode, expectation);
criterion_main!(benches);
