//! AWGN channel simulation and E_b/N_0 bookkeeping.

use serde::{Deserialize, Serialize};

use crate::design::{Field, Scalar};
use crate::error::{Error, Result};
use crate::params::{linear_to_db, nats_to_bits};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Noise variance; for complex noise this is `E|w|^2`.
    pub sigma2: f64,
    pub power: f64,
    pub field: Field,
}

impl ChannelParams {
    pub fn new(power: f64, sigma2: f64, field: Field) -> Result<Self> {
        if !(sigma2 > 0.0) || !(power > 0.0) || !sigma2.is_finite() || !power.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "power and noise variance must be positive (P = {power}, sigma2 = {sigma2})"
            )));
        }
        Ok(Self { sigma2, power, field })
    }

    pub fn from_snr_db(power: f64, snr_db: f64, field: Field) -> Result<Self> {
        Self::new(power, power / crate::params::db_to_linear(snr_db), field)
    }

    pub fn snr(&self) -> f64 {
        self.power / self.sigma2
    }
}

/// `y = x + w` with i.i.d. zero-mean Gaussian `w` of variance `sigma2`.
pub fn transmit<T: Scalar>(x: &[T], sigma2: f64, seed: u64) -> Vec<T> {
    let mut rng = rng_from_seed(seed);
    x.iter()
        .map(|xi| *xi + T::sample_normal(&mut rng, sigma2))
        .collect()
}

/// Label of the E_b/N_0 convention written next to every reported value.
pub fn ebn0_convention(field: Field) -> &'static str {
    match field {
        Field::Real => "real: Eb/N0 = snr / (2 R_bits), R per real channel use",
        Field::Complex => "complex: Eb/N0 = snr / R_bits, R per real dimension",
    }
}

/// E_b/N_0 in dB for a rate given in nats (see [`ebn0_convention`]).
pub fn ebn0_db(rate: f64, snr: f64, field: Field) -> Result<f64> {
    if !(rate > 0.0) {
        return Err(Error::InvalidArgument(format!("rate must be positive, got {rate}")));
    }
    if !(snr > 0.0) {
        return Err(Error::InvalidArgument(format!("snr must be positive, got {snr}")));
    }
    let bits = nats_to_bits(rate);
    let ratio = match field {
        Field::Real => snr / (2.0 * bits),
        Field::Complex => snr / bits,
    };
    Ok(linear_to_db(ratio))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::bits_to_nats;
    use num_complex::Complex64;

    #[test]
    fn ebn0_examples() {
        assert!(ebn0_db(bits_to_nats(0.5), 1.0, Field::Real).unwrap().abs() < 1e-12);
        assert!((ebn0_db(bits_to_nats(1.5), 15.0, Field::Complex).unwrap() - 10.0).abs() < 1e-12);
        let a = ebn0_db(0.3, 2.0, Field::Real).unwrap();
        let b = ebn0_db(0.3, 4.0, Field::Real).unwrap();
        assert!(b > a);
        assert!(ebn0_db(0.0, 1.0, Field::Real).is_err());
    }

    #[test]
    fn tiny_noise_leaves_signal() {
        let x: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let y = transmit(&x, 1e-30, 3);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_variance_and_determinism() {
        let x = vec![0.0f64; 100_000];
        let y = transmit(&x, 0.7, 21);
        let var = y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
        assert!((var - 0.7).abs() / 0.7 < 0.02, "var = {var}");
        assert_eq!(y, transmit(&x, 0.7, 21));

        let xc = vec![Complex64::new(0.0, 0.0); 100_000];
        let yc = transmit(&xc, 0.7, 22);
        let var = yc.iter().map(|v| v.norm_sqr()).sum::<f64>() / yc.len() as f64;
        assert!((var - 0.7).abs() / 0.7 < 0.02, "var = {var}");
        let re_var = yc.iter().map(|v| v.re * v.re).sum::<f64>() / yc.len() as f64;
        assert!((re_var - 0.35).abs() / 0.35 < 0.03);
    }

    #[test]
    fn noise_uncorrelated_with_codeword() {
        // average over many trials of the normalized correlation <w, x>
        let n = 2000;
        let trials = 200;
        let mut sum = 0.0;
        for t in 0..trials {
            let x = transmit(&vec![0.0f64; n], 1.0, 1000 + t);
            let y = transmit(&x, 0.5, 5000 + t);
            let w: Vec<f64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
            let dot: f64 = w.iter().zip(&x).map(|(a, b)| a * b).sum();
            let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let nw = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            sum += dot / (nx * nw);
        }
        let mean = sum / trials as f64;
        // each correlation has sd ~ 1/sqrt(n); the mean has sd ~ 1/sqrt(n * trials)
        assert!(mean.abs() < 4.0 / ((n as u64 * trials) as f64).sqrt());
    }
}
