use num_complex::Complex64;

use scsparc::amp::{AmpDecoder, DecodeConfig, SeSource};
use scsparc::channel::transmit;
use scsparc::design::{build_gaussian_design, DenseMatrix};
use scsparc::message::section_error_rate;
use scsparc::params::{bits_to_nats, derive_code_params};
use scsparc::state_evolution::{run_se, SeConfig};
use scsparc::{CouplingParams, Design, LengthRounding, MessageVector, Scalar};

/// Plain-loop AMP on an explicit matrix, using the decoder's own
/// `sigma`, `phi`, `tau` sequences.
struct Reference<'a, T> {
    a: &'a DenseMatrix<T>,
    nr: usize,
    nc: usize,
    m: usize,
}

impl<T: Scalar> Reference<'_, T> {
    fn step(&self, y: &[T], beta: &[f64], z_prev: &[T], upsilon: &[f64], phi: &[f64], tau: &[f64]) -> (Vec<f64>, Vec<T>) {
        let mut z = vec![T::default(); y.len()];
        for i in 0..y.len() {
            let mut ab = T::default();
            for j in 0..beta.len() {
                ab += self.a.get(i, j).scale(beta[j]);
            }
            z[i] = y[i] - ab + z_prev[i].scale(upsilon[i / self.nr]);
        }
        let mut s = beta.to_vec();
        for (j, sj) in s.iter_mut().enumerate() {
            let c = j / self.nc;
            let mut acc = T::default();
            for i in 0..y.len() {
                let r = i / self.nr;
                acc += self.a.get(i, j).conj().scale(tau[c] / phi[r]) * z[i];
            }
            *sj += acc.re();
        }
        let mut out = vec![0.0; s.len()];
        for (l, (sec, o)) in s.chunks(self.m).zip(out.chunks_mut(self.m)).enumerate() {
            let c = l * self.m / self.nc;
            let peak = sec.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b)) / tau[c];
            let w: Vec<f64> = sec.iter().map(|v| (v / tau[c] - peak).exp()).collect();
            let total: f64 = w.iter().sum();
            for (oi, wi) in o.iter_mut().zip(&w) {
                *oi = wi / total;
            }
        }
        (out, z)
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn check_against_reference<T: Scalar>(online: bool) {
    let coupling = CouplingParams::new(2, 5, 0.0).unwrap();
    let (params, base) =
        derive_code_params(bits_to_nats(1.0), 8, &coupling, 40, 1.0, 0.1, LengthRounding::Up).unwrap();
    let design = build_gaussian_design::<T>(&params, &base, 3, 1 << 30).unwrap();
    let truth = MessageVector::random(params.m, params.l, 4);
    let y = transmit(&design.apply_real(&truth.to_dense()).unwrap(), params.sigma2, 5);
    let decoder = AmpDecoder::<T, _>::new(&design, &params, &base).unwrap();
    let traj = run_se(
        decoder.model(),
        &SeConfig {
            samples: 2000,
            ..SeConfig::default()
        },
    )
    .unwrap();
    let source = if online { SeSource::Online } else { SeSource::Offline(&traj) };

    let layout = design.layout();
    let reference = Reference {
        a: design.matrix(),
        nr: layout.block_rows(),
        nc: layout.block_cols(),
        m: params.m,
    };
    let mut state = decoder.init();
    let mut prev_phi: Option<Vec<f64>> = None;
    for _ in 0..4 {
        let beta = state.beta.clone();
        let z_prev = state.z.clone();
        decoder.step(&mut state, &y, source).unwrap();
        let upsilon: Vec<f64> = match &prev_phi {
            None => vec![0.0; state.sigma.len()],
            Some(p) => state.sigma.iter().zip(p).map(|(s, p)| s / p).collect(),
        };
        let (beta_ref, z_ref) = reference.step(&y, &beta, &z_prev, &upsilon, &state.phi, &state.tau);
        let z_err = state
            .z
            .iter()
            .zip(&z_ref)
            .map(|(a, b)| (*a - *b).norm_sqr().sqrt())
            .fold(0.0, f64::max);
        assert!(z_err < 1e-9, "residual differs by {z_err} at t={}", state.t);
        let b_err = max_abs_diff(&state.beta, &beta_ref);
        assert!(b_err < 1e-9, "estimate differs by {b_err} at t={}", state.t);
        prev_phi = Some(state.phi.clone());
    }
}

#[test]
fn real_offline_iterates_match_reference() {
    check_against_reference::<f64>(false);
}

#[test]
fn real_online_iterates_match_reference() {
    check_against_reference::<f64>(true);
}

#[test]
fn complex_online_iterates_match_reference() {
    check_against_reference::<Complex64>(true);
}

#[test]
fn low_noise_decode_is_exact() {
    let coupling = CouplingParams::new(3, 8, 0.0).unwrap();
    let (params, base) =
        derive_code_params(bits_to_nats(0.8), 32, &coupling, 256, 1.0, 1e-4, LengthRounding::Up).unwrap();
    for seed in 0..3 {
        let design = build_gaussian_design::<f64>(&params, &base, seed, 1 << 30).unwrap();
        let truth = MessageVector::random(params.m, params.l, 100 + seed);
        let y = transmit(&design.apply_real(&truth.to_dense()).unwrap(), params.sigma2, 200 + seed);
        let decoder = AmpDecoder::<f64, _>::new(&design, &params, &base).unwrap();
        let out = decoder
            .decode(&y, &DecodeConfig::default(), SeSource::Online, Some(&truth))
            .unwrap();
        assert_eq!(section_error_rate(&out.message, &truth).unwrap(), 0.0, "seed {seed}");
    }
}
